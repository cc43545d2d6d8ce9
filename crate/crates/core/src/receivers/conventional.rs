use num_complex::Complex64;

use super::{cancel, check_dimensions, despread, DetectionRecord};
use crate::error::{invalid, Result};
use crate::sequences::SpreadingCode;
use crate::transmitter::ReceivedFrame;

/// Correlates the derotated frame with one user's code.
pub fn matched_filter(frame: &ReceivedFrame, code: &SpreadingCode, phase: f64, user: usize) -> DetectionRecord {
    DetectionRecord::new(
        user,
        frame.symbol,
        0,
        despread(&frame.samples, phase, code.chips()),
        1.0,
    )
}

/// One parallel cancellation pass: for every user `k`, removes
/// `sum_{j != k} previous[j] * e^{-j phi_j} c_j` from the frame and despreads
/// the result with `despreaders[k]`.
pub(crate) fn cancel_and_despread(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
    despreaders: &[&[f64]],
    previous: &[f64],
) -> Vec<Complex64> {
    let n = frame.len();
    let mut own = vec![Complex64::new(0.0, 0.0); codes.len() * n];
    let mut total = vec![Complex64::new(0.0, 0.0); n];
    for (k, ((code, &phase), &amp)) in codes.iter().zip(phases).zip(previous).enumerate() {
        let rot = Complex64::from_polar(amp, -phase);
        let slot = &mut own[k * n..(k + 1) * n];
        for ((o, t), &c) in slot.iter_mut().zip(total.iter_mut()).zip(code.chips()) {
            *o = rot * c;
            *t += *o;
        }
    }
    let mut residual = vec![Complex64::new(0.0, 0.0); n];
    (0..codes.len())
        .map(|k| {
            let slot = &own[k * n..(k + 1) * n];
            for (((r, &x), &t), &o) in residual.iter_mut().zip(&frame.samples).zip(&total).zip(slot) {
                *r = x - (t - o);
            }
            despread(&residual, phases[k], despreaders[k])
        })
        .collect()
}

/// One conventional PIC stage driven by the given previous-stage estimates.
pub fn pic_stage(frame: &ReceivedFrame, codes: &[SpreadingCode], phases: &[f64], previous: &[f64]) -> Result<Vec<f64>> {
    check_dimensions(frame, codes, phases)?;
    if previous.len() != codes.len() {
        return Err(invalid(format!(
            "{} previous estimates for {} users",
            previous.len(),
            codes.len()
        )));
    }
    let chips: Vec<&[f64]> = codes.iter().map(SpreadingCode::chips).collect();
    Ok(cancel_and_despread(frame, codes, phases, &chips, previous)
        .iter()
        .map(|z| z.re)
        .collect())
}

/// Conventional multistage PIC. Stage 0 is the matched-filter bank; the
/// returned vector holds stages `0..=stages`.
pub fn conventional_pic(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
    stages: usize,
) -> Result<Vec<Vec<DetectionRecord>>> {
    check_dimensions(frame, codes, phases)?;
    if stages == 0 {
        return Err(invalid("PIC needs at least one stage"));
    }
    let chips: Vec<&[f64]> = codes.iter().map(SpreadingCode::chips).collect();
    let mut out = Vec::with_capacity(stages + 1);
    let first: Vec<DetectionRecord> = codes
        .iter()
        .zip(phases)
        .enumerate()
        .map(|(k, (c, &p))| matched_filter(frame, c, p, k))
        .collect();
    let mut previous: Vec<f64> = first.iter().map(|r| r.estimate).collect();
    out.push(first);
    for stage in 1..=stages {
        let z = cancel_and_despread(frame, codes, phases, &chips, &previous);
        out.push(
            z.iter()
                .enumerate()
                .map(|(k, &zk)| DetectionRecord::new(k, frame.symbol, stage, zk, 1.0))
                .collect(),
        );
        previous = z.iter().map(|zk| zk.re).collect();
    }
    Ok(out)
}

/// Index of the largest `|z(value)|`; ties keep the earliest entry.
pub(crate) fn strongest<T: Copy>(values: &[(usize, T)], z: impl Fn(T) -> f64) -> usize {
    let mut best = 0;
    for (i, &(_, v)) in values.iter().enumerate().skip(1) {
        if z(v).abs() > z(values[best].1).abs() {
            best = i;
        }
    }
    best
}

/// Successive cancellation with code despreading. At every stage the
/// remaining user with the largest despreader output is detected, and
/// `cancel_amplitude(user, z)` times its re-rotated code is subtracted.
///
/// Records come back in detection order; `stage` is the detection position.
pub fn successive_cancel<F>(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
    mut cancel_amplitude: F,
) -> Result<Vec<DetectionRecord>>
where
    F: FnMut(usize, f64) -> f64,
{
    check_dimensions(frame, codes, phases)?;
    let mut residual = frame.samples.clone();
    let mut remaining: Vec<usize> = (0..codes.len()).collect();
    let mut out = Vec::with_capacity(codes.len());
    let mut outputs = Vec::with_capacity(codes.len());
    for stage in 0..codes.len() {
        outputs.clear();
        outputs.extend(
            remaining
                .iter()
                .map(|&u| (u, despread(&residual, phases[u], codes[u].chips()))),
        );
        let pick = strongest(&outputs, |o: Complex64| o.re);
        let (user, output) = outputs[pick];
        let z = output.re;
        remaining.remove(pick);
        out.push(DetectionRecord::new(user, frame.symbol, stage, output, 1.0));
        cancel(&mut residual, cancel_amplitude(user, z), phases[user], &codes[user]);
    }
    Ok(out)
}

/// Conventional SIC: cancels each detected user with its own despreader output.
pub fn conventional_sic(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
) -> Result<Vec<DetectionRecord>> {
    successive_cancel(frame, codes, phases, |_, z| z)
}
