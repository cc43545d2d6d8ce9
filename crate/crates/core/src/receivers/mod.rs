//! Multiuser detectors.
//!
//! Every detector works on one symbol period at a time. Channel phases are
//! known to the receiver; user `k`'s signal is brought onto the real axis by
//! rotating the frame with `e^{+j phi_k}` and keeping the real part, and
//! reconstructed interference is re-rotated by `e^{-j phi_j}` before it is
//! subtracted in the complex domain.

mod adaptive;
mod conventional;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::sequences::SpreadingCode;
use crate::transmitter::ReceivedFrame;

pub use adaptive::{ba_pic, ba_sic, cma_update, scaling_factor, AdaptiveBank, DespreaderWeights};
pub use conventional::{conventional_pic, conventional_sic, matched_filter, pic_stage, successive_cancel};

/// Weight norm, relative to the code norm, past which CMA is declared diverged.
pub const DIVERGENCE_RATIO: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ReceiverKind {
    Mf,
    Sic,
    Pic,
    BaSic,
    BaPic,
}

impl ReceiverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReceiverKind::Mf => "mf",
            ReceiverKind::Sic => "sic",
            ReceiverKind::Pic => "pic",
            ReceiverKind::BaSic => "ba_sic",
            ReceiverKind::BaPic => "ba_pic",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, ReceiverKind::BaSic | ReceiverKind::BaPic)
    }

    pub fn is_multistage(self) -> bool {
        matches!(self, ReceiverKind::Pic | ReceiverKind::BaPic)
    }
}

impl fmt::Display for ReceiverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReceiverKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "mf" => Ok(ReceiverKind::Mf),
            "sic" => Ok(ReceiverKind::Sic),
            "pic" => Ok(ReceiverKind::Pic),
            "ba_sic" => Ok(ReceiverKind::BaSic),
            "ba_pic" => Ok(ReceiverKind::BaPic),
            other => Err(format!("unknown receiver '{other}'")),
        }
    }
}

/// Detector selection with its stage count and CMA step size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverConfig {
    pub kind: ReceiverKind,
    /// Cancellation stages `L`; ignored by single-stage receivers.
    pub stages: usize,
    /// CMA step size; ignored by conventional receivers.
    pub step_size: f64,
}

impl ReceiverConfig {
    pub fn new(kind: ReceiverKind, stages: usize, step_size: f64) -> Result<Self> {
        let cfg = Self {
            kind,
            stages,
            step_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind.is_multistage() && self.stages == 0 {
            return Err(invalid(format!("{} needs at least one stage", self.kind)));
        }
        if self.kind.is_adaptive() && !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!(
                "{} needs a positive step size, got {}",
                self.kind, self.step_size
            )));
        }
        Ok(())
    }

    /// Number of output stages (`L + 1` for PIC kinds, otherwise 1).
    pub fn output_stages(&self) -> usize {
        if self.kind.is_multistage() {
            self.stages + 1
        } else {
            1
        }
    }
}

/// One user's detector output for one symbol at one stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub user: usize,
    pub symbol: usize,
    pub stage: usize,
    /// Decision variable.
    pub z: f64,
    /// Joint channel and data estimate `g_hat * b`.
    pub estimate: f64,
    /// Quadrature part of the derotated despreader output, scaled like `estimate`.
    pub quadrature: f64,
    pub bit: i8,
    /// Amplitude scaling factor, adaptive receivers only.
    pub alpha: Option<f64>,
}

impl DetectionRecord {
    /// Record for despreader output `output`; the estimate is `scale * output.re`.
    pub(crate) fn new(user: usize, symbol: usize, stage: usize, output: Complex64, scale: f64) -> Self {
        Self {
            user,
            symbol,
            stage,
            z: output.re,
            estimate: scale * output.re,
            quadrature: scale * output.im,
            bit: decide(output.re),
            alpha: None,
        }
    }
}

/// Hard BPSK decision; zero maps to +1.
#[inline]
pub fn decide(z: f64) -> i8 {
    if z < 0.0 {
        -1
    } else {
        1
    }
}

#[inline]
pub(crate) fn sign(z: f64) -> f64 {
    f64::from(decide(z))
}

/// Real part of `e^{+j phase}`-rotated samples.
pub fn derotate(samples: &[Complex64], phase: f64) -> Vec<f64> {
    let mut out = vec![0.0; samples.len()];
    derotate_into(samples, phase, &mut out);
    out
}

pub fn derotate_into(samples: &[Complex64], phase: f64, out: &mut [f64]) {
    let (s, c) = phase.sin_cos();
    for (o, x) in out.iter_mut().zip(samples) {
        *o = c * x.re - s * x.im;
    }
}

/// `<e^{+j phase} samples, weights>`; the real part equals
/// `<derotate(samples, phase), weights>`.
#[inline]
pub(crate) fn despread(samples: &[Complex64], phase: f64, weights: &[f64]) -> Complex64 {
    let (s, c) = phase.sin_cos();
    let (mut re, mut im) = (0.0, 0.0);
    for (x, w) in samples.iter().zip(weights) {
        re += (c * x.re - s * x.im) * w;
        im += (s * x.re + c * x.im) * w;
    }
    Complex64::new(re, im)
}

/// Subtracts `amplitude * e^{-j phase} * code` from `residual`.
pub(crate) fn cancel(residual: &mut [Complex64], amplitude: f64, phase: f64, code: &SpreadingCode) {
    let rot = Complex64::from_polar(amplitude, -phase);
    for (r, &c) in residual.iter_mut().zip(code.chips()) {
        *r -= rot * c;
    }
}

pub(crate) fn check_dimensions(frame: &ReceivedFrame, codes: &[SpreadingCode], phases: &[f64]) -> Result<()> {
    if codes.is_empty() {
        return Err(invalid("at least one user is required"));
    }
    if codes.len() != phases.len() {
        return Err(invalid(format!(
            "{} codes but {} channel phases",
            codes.len(),
            phases.len()
        )));
    }
    if let Some(c) = codes.iter().find(|c| c.len() != frame.len()) {
        return Err(crate::error::Error::LengthMismatch(c.len(), frame.len()));
    }
    Ok(())
}

/// A configured detector together with any adaptive state it carries
/// between symbols.
#[derive(Debug, Clone)]
pub struct Detector {
    config: ReceiverConfig,
    bank: Option<AdaptiveBank>,
}

impl Detector {
    pub fn new(config: ReceiverConfig, codes: &[SpreadingCode]) -> Result<Self> {
        config.validate()?;
        let bank = if config.kind.is_adaptive() {
            Some(AdaptiveBank::new(codes, config.step_size)?)
        } else {
            None
        };
        Ok(Self { config, bank })
    }

    pub fn config(&self) -> &ReceiverConfig {
        &self.config
    }

    pub fn bank(&self) -> Option<&AdaptiveBank> {
        self.bank.as_ref()
    }

    pub fn diverged(&self) -> bool {
        self.bank.as_ref().is_some_and(AdaptiveBank::diverged)
    }

    /// Runs the detector on one frame. The outer vector is indexed by stage;
    /// single-stage receivers return one entry.
    pub fn process(
        &mut self,
        frame: &ReceivedFrame,
        codes: &[SpreadingCode],
        phases: &[f64],
    ) -> Result<Vec<Vec<DetectionRecord>>> {
        let stages = self.config.stages;
        match (self.config.kind, self.bank.as_mut()) {
            (ReceiverKind::Mf, _) => {
                check_dimensions(frame, codes, phases)?;
                Ok(vec![codes
                    .iter()
                    .zip(phases)
                    .enumerate()
                    .map(|(k, (c, &p))| matched_filter(frame, c, p, k))
                    .collect()])
            }
            (ReceiverKind::Sic, _) => Ok(vec![conventional_sic(frame, codes, phases)?]),
            (ReceiverKind::Pic, _) => conventional_pic(frame, codes, phases, stages),
            (ReceiverKind::BaSic, Some(bank)) => Ok(vec![ba_sic(frame, codes, phases, bank)?]),
            (ReceiverKind::BaPic, Some(bank)) => ba_pic(frame, codes, phases, bank, stages),
            (kind, None) => unreachable!("adaptive receiver {kind} built without weights"),
        }
    }
}
