//! CMA-adapted despreaders and the blind adaptive SIC/PIC receivers built on
//! them.
//!
//! Each user owns a real weight vector initialised to its spreading code. After
//! every symbol the weights take one constant-modulus step
//!
//! ```text
//! e  = |z| - 1
//! w' = w - mu * e * sign(z) * r
//! ```
//!
//! where `r` is the frame derotated by that user's phase and `z = <r, w>`.
//! Because the weights drift in scale, despreader outputs are mapped back to
//! channel amplitude with `alpha = mean|c| / mean|w|` before they are used as
//! estimates or cancellation terms.

use super::conventional::{cancel_and_despread, strongest};
use num_complex::Complex64;

use super::{cancel, check_dimensions, derotate_into, despread, sign, DetectionRecord, DIVERGENCE_RATIO};
use crate::error::{invalid, Error, Result};
use crate::sequences::{dot, SpreadingCode};
use crate::transmitter::ReceivedFrame;

#[derive(Debug, Clone, PartialEq)]
pub struct DespreaderWeights {
    weights: Vec<f64>,
    step_size: f64,
    limit: f64,
    diverged: bool,
}

impl DespreaderWeights {
    /// Weights starting at the matched filter for `code`.
    pub fn from_code(code: &SpreadingCode, step_size: f64) -> Result<Self> {
        Self::new(code.chips().to_vec(), step_size, code.energy().sqrt())
    }

    /// Arbitrary starting weights; divergence is flagged once `||w||` exceeds
    /// `DIVERGENCE_RATIO * reference_norm`.
    pub fn new(weights: Vec<f64>, step_size: f64, reference_norm: f64) -> Result<Self> {
        if !(step_size >= 0.0 && step_size.is_finite()) {
            return Err(invalid(format!("step size must be finite and >= 0, got {step_size}")));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("weights must be finite"));
        }
        Ok(Self {
            weights,
            step_size,
            limit: DIVERGENCE_RATIO * reference_norm,
            diverged: false,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged
    }

    pub fn norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }

    pub fn mean_amplitude(&self) -> f64 {
        self.weights.iter().map(|w| w.abs()).sum::<f64>() / self.weights.len() as f64
    }

    pub fn despread(&self, derotated: &[f64]) -> f64 {
        dot(&self.weights, derotated)
    }
}

/// One CMA step on `weights` given the derotated frame and the despreader
/// output computed from it. Sets the divergence flag when the weight norm
/// leaves the allowed range.
pub fn cma_update(weights: &mut DespreaderWeights, derotated: &[f64], z: f64) {
    let e = z.abs() - 1.0;
    let g = weights.step_size * e * sign(z);
    if g != 0.0 {
        for (w, &r) in weights.weights.iter_mut().zip(derotated) {
            *w -= g * r;
        }
    }
    let norm = weights.norm();
    if !norm.is_finite() || norm > weights.limit {
        weights.diverged = true;
    }
}

/// `alpha = mean|c| / mean|w|`.
pub fn scaling_factor(weights: &DespreaderWeights, code: &SpreadingCode) -> Result<f64> {
    let mean_w = weights.mean_amplitude();
    if mean_w.is_nan() || mean_w <= 0.0 {
        return Err(Error::DegenerateWeights);
    }
    Ok(code.mean_amplitude() / mean_w)
}

/// Per-user adaptive despreaders for one receiver instance.
#[derive(Debug, Clone)]
pub struct AdaptiveBank {
    weights: Vec<DespreaderWeights>,
}

impl AdaptiveBank {
    pub fn new(codes: &[SpreadingCode], step_size: f64) -> Result<Self> {
        Ok(Self {
            weights: codes
                .iter()
                .map(|c| DespreaderWeights::from_code(c, step_size))
                .collect::<Result<_>>()?,
        })
    }

    pub fn weights(&self) -> &[DespreaderWeights] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [DespreaderWeights] {
        &mut self.weights
    }

    pub fn diverged(&self) -> bool {
        self.weights.iter().any(DespreaderWeights::is_diverged)
    }
}

fn check_bank(bank: &AdaptiveBank, codes: &[SpreadingCode]) -> Result<()> {
    if bank.weights.len() != codes.len() {
        return Err(invalid(format!(
            "{} despreaders for {} users",
            bank.weights.len(),
            codes.len()
        )));
    }
    Ok(())
}

/// Blind adaptive SIC for one symbol.
///
/// Each stage despreads the residual with every undetected user's weights,
/// detects the user with the largest output, adapts that user's weights on
/// the residual it was detected from, and cancels `alpha * z` times its code.
pub fn ba_sic(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
    bank: &mut AdaptiveBank,
) -> Result<Vec<DetectionRecord>> {
    check_dimensions(frame, codes, phases)?;
    check_bank(bank, codes)?;
    let n = frame.len();
    let k_users = codes.len();
    let mut residual = frame.samples.clone();
    let mut remaining: Vec<usize> = (0..k_users).collect();
    let mut rotated = vec![0.0; k_users * n];
    let mut outputs = Vec::with_capacity(k_users);
    let mut out = Vec::with_capacity(k_users);
    for stage in 0..k_users {
        outputs.clear();
        for &u in &remaining {
            let slot = &mut rotated[u * n..(u + 1) * n];
            derotate_into(&residual, phases[u], slot);
            outputs.push((u, bank.weights[u].despread(slot)));
        }
        let pick = strongest(&outputs, |z: f64| z);
        let (user, z) = outputs[pick];
        remaining.remove(pick);

        let w = &mut bank.weights[user];
        let q = despread(&residual, phases[user], &w.weights).im;
        cma_update(w, &rotated[user * n..(user + 1) * n], z);
        let alpha = scaling_factor(w, &codes[user])?;
        let mut rec = DetectionRecord::new(user, frame.symbol, stage, Complex64::new(z, q), alpha);
        rec.alpha = Some(alpha);
        cancel(&mut residual, rec.estimate, phases[user], &codes[user]);
        out.push(rec);
    }
    Ok(out)
}

/// Blind adaptive PIC for one symbol; returns stages `0..=stages`.
///
/// Stage 0 despreads the derotated frame with each user's weights `w(m)` and
/// adapts them to `w(m+1)`, from which `alpha` is taken. Later stages cancel
/// the other users' `alpha * z` from the previous stage and despread with
/// `w(m)` again.
pub fn ba_pic(
    frame: &ReceivedFrame,
    codes: &[SpreadingCode],
    phases: &[f64],
    bank: &mut AdaptiveBank,
    stages: usize,
) -> Result<Vec<Vec<DetectionRecord>>> {
    check_dimensions(frame, codes, phases)?;
    check_bank(bank, codes)?;
    if stages == 0 {
        return Err(invalid("BA-PIC needs at least one stage"));
    }
    let n = frame.len();
    let mut rotated = vec![0.0; n];
    let snapshot: Vec<f64> = bank.weights.iter().flat_map(|w| w.weights.iter().copied()).collect();
    let mut alphas = Vec::with_capacity(codes.len());
    let mut first = Vec::with_capacity(codes.len());
    for (k, (code, &phase)) in codes.iter().zip(phases).enumerate() {
        derotate_into(&frame.samples, phase, &mut rotated);
        let w = &mut bank.weights[k];
        let z = w.despread(&rotated);
        let q = despread(&frame.samples, phase, &w.weights).im;
        cma_update(w, &rotated, z);
        let alpha = scaling_factor(w, code)?;
        alphas.push(alpha);
        let mut rec = DetectionRecord::new(k, frame.symbol, 0, Complex64::new(z, q), alpha);
        rec.alpha = Some(alpha);
        first.push(rec);
    }
    let mut previous: Vec<f64> = first.iter().map(|r| r.estimate).collect();
    let mut out = Vec::with_capacity(stages + 1);
    out.push(first);
    let despreaders: Vec<&[f64]> = snapshot.chunks_exact(n).collect();
    for stage in 1..=stages {
        let z = cancel_and_despread(frame, codes, phases, &despreaders, &previous);
        let records: Vec<DetectionRecord> = z
            .iter()
            .zip(&alphas)
            .enumerate()
            .map(|(k, (&zk, &alpha))| {
                let mut rec = DetectionRecord::new(k, frame.symbol, stage, zk, alpha);
                rec.alpha = Some(alpha);
                rec
            })
            .collect();
        previous = records.iter().map(|r| r.estimate).collect();
        out.push(records);
    }
    Ok(out)
}
