//! Sweep execution: trial realization, per-symbol detection, aggregation and
//! CSV output.
//!
//! A work unit is one (Eb/N0, trial) pair. Every receiver in the unit sees the
//! same fading, data and noise draws, and the draws do not depend on Eb/N0
//! (noise is drawn at unit variance and scaled), so cells differ only by
//! receiver and noise level. Units are executed on a worker pool and merged
//! in (Eb/N0, trial) order, which makes the output independent of the worker
//! count.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::SimConfig;
use crate::channel::{ebn0_to_n0, rayleigh_trace, NoiseSpec};
use crate::error::{invalid, Result};
use crate::metrics::{
    doppler_correlation, ergodic_capacity, predicted_variance_ba_pic_stage_l, sum_rate, GenieTruth, Kappa,
    MetricAccumulator, MetricRow, ModulusErrorStats,
};
use crate::receivers::{DetectionRecord, Detector, ReceiverKind};
use crate::sequences::{correlation_matrix, default_preferred_pair, gold_family, CodeFamily, SpreadingCode};
use crate::transmitter::{compose_received, modulate_bpsk, random_bits, UserFrame};

/// Random streams within one trial. User `k` adds `k` to the per-user bases.
pub const FADING_STREAM: u64 = 0;
pub const BITS_STREAM: u64 = 1 << 32;
pub const NOISE_STREAM: u64 = 2 << 32;

/// Cells whose share of diverged trials exceeds this are marked invalid.
pub const MAX_DIVERGED_FRACTION: f64 = 0.1;

pub fn version_tag() -> String {
    format!("mudsim {}", env!("CARGO_PKG_VERSION"))
}

/// Seed of trial `trial`: the first word of ChaCha8 stream `trial` keyed by
/// the master seed. Depends only on `(master, trial)`.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

pub fn stream_rng(trial_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(stream);
    rng
}

pub fn code_family(cfg: &SimConfig) -> Result<CodeFamily> {
    gold_family(cfg.degree, default_preferred_pair(cfg.degree)?)
}

/// Fading traces (with the configured phase model) and BPSK data for every
/// user of one trial.
pub fn realize_users(cfg: &SimConfig, codes: &[SpreadingCode], trial_seed: u64) -> Result<Vec<UserFrame>> {
    codes
        .iter()
        .enumerate()
        .map(|(k, code)| {
            let mut fading = stream_rng(trial_seed, FADING_STREAM + k as u64);
            let trace = rayleigh_trace(k, cfg.symbols, cfg.fd_tb, &mut fading)?.with_phase_model(cfg.phase_model);
            let mut bits = stream_rng(trial_seed, BITS_STREAM + k as u64);
            let symbols = modulate_bpsk(&random_bits(cfg.symbols, &mut bits));
            UserFrame::new(symbols, code.clone(), trace)
        })
        .collect()
}

#[derive(Debug, Clone)]
struct CellStats {
    acc: MetricAccumulator,
    modulus: ModulusErrorStats,
}

#[derive(Debug, Clone)]
struct UnitResult {
    /// Indexed by receiver, then output stage.
    cells: Vec<Vec<CellStats>>,
    diverged: Vec<bool>,
}

type RecordSink<'a> = &'a mut dyn FnMut(ReceiverKind, &[Vec<DetectionRecord>]) -> Result<()>;

fn run_unit(
    cfg: &SimConfig,
    codes: &[SpreadingCode],
    ebno_db: f64,
    seed: u64,
    mut sink: Option<RecordSink<'_>>,
) -> Result<UnitResult> {
    let users = realize_users(cfg, codes, seed)?;
    let truth = GenieTruth::from_users(&users)?;
    let noise: NoiseSpec = ebn0_to_n0(ebno_db, 1, 1.0)?;
    let mut noise_rng = stream_rng(seed, NOISE_STREAM);
    let mut detectors: Vec<Detector> = cfg
        .receivers
        .iter()
        .map(|r| Detector::new(r.receiver_config(cfg.step_size)?, codes))
        .collect::<Result<_>>()?;
    let mut cells: Vec<Vec<CellStats>> = cfg
        .receivers
        .iter()
        .map(|r| {
            vec![
                CellStats {
                    acc: MetricAccumulator::new(codes.len()),
                    modulus: ModulusErrorStats::default(),
                };
                r.output_stages()
            ]
        })
        .collect();
    let mut diverged = vec![false; detectors.len()];

    for m in 0..cfg.symbols {
        let frame = compose_received(&users, &noise, m, &mut noise_rng)?;
        let phases = truth.phases_at(m);
        for (i, det) in detectors.iter_mut().enumerate() {
            if diverged[i] {
                continue;
            }
            let stages = det.process(&frame, codes, &phases)?;
            if det.diverged() {
                diverged[i] = true;
                continue;
            }
            let kind = det.config().kind;
            for (cell, records) in cells[i].iter_mut().zip(&stages) {
                for r in records {
                    cell.acc.push(r, &truth)?;
                }
            }
            if kind == ReceiverKind::BaPic {
                for r in &stages[0] {
                    cells[i][0].modulus.push(r.z.abs() - 1.0, cfg.step_size);
                }
            }
            if let Some(sink) = sink.as_mut() {
                sink(kind, &stages)?;
            }
        }
    }
    Ok(UnitResult { cells, diverged })
}

/// Per-cell diagnostics written next to the main CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub receiver: ReceiverKind,
    pub stage: usize,
    pub ebno_db: f64,
    pub diverged_trials: usize,
    pub valid: bool,
    /// Mean over users of the SINR residual power `E{(estimate - g b)^2 + quadrature^2}`.
    pub residual_variance: f64,
    /// Heuristic BA-PIC variance prediction; BA-PIC cells only.
    pub predicted_variance: Option<f64>,
    /// `(K/N)` times the mean over users of `log2(1 + SINR_k)`.
    pub ergodic_rate: f64,
}

impl DiagnosticRow {
    pub const CSV_HEADER: &'static str =
        "receiver,stage,ebno_db,diverged_trials,valid,residual_variance,predicted_variance,ergodic_rate_bps_hz";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.9e},{},{:.6}",
            self.receiver,
            self.stage,
            self.ebno_db,
            self.diverged_trials,
            self.valid,
            self.residual_variance,
            self.predicted_variance.map(|v| format!("{v:.9e}")).unwrap_or_default(),
            self.ergodic_rate
        )
    }
}

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: SimConfig,
    pub code_fingerprint: String,
    pub trial_seeds: Vec<u64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        Ok(Self {
            config: cfg.clone(),
            code_fingerprint: code_family(cfg)?.fingerprint(),
            trial_seeds: (0..cfg.trials).map(|t| trial_seed(cfg.seed, t)).collect(),
            version: version_tag(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}", self.version);
        let _ = writeln!(s, "# code_fingerprint = {}", self.code_fingerprint);
        let _ = writeln!(
            s,
            "# trial_seeds = {}",
            self.trial_seeds
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(", ")
        );
        s.push_str(&self.config.to_config_text());
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<MetricRow>,
    pub diagnostics: Vec<DiagnosticRow>,
    pub manifest: RunManifest,
}

impl SweepResult {
    pub fn row(&self, receiver: ReceiverKind, stage: usize, ebno_db: f64) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.receiver == receiver && r.stage == stage && r.ebno_db == ebno_db)
    }

    pub fn diagnostic(&self, receiver: ReceiverKind, stage: usize, ebno_db: f64) -> Option<&DiagnosticRow> {
        self.diagnostics
            .iter()
            .find(|r| r.receiver == receiver && r.stage == stage && r.ebno_db == ebno_db)
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(MetricRow::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }

    pub fn diagnostics_csv(&self) -> String {
        let mut s = String::from(DiagnosticRow::CSV_HEADER);
        s.push('\n');
        for r in &self.diagnostics {
            s.push_str(&r.to_csv());
            s.push('\n');
        }
        s
    }
}

/// Runs every (receiver, stage, Eb/N0) cell of `cfg` on `workers` threads.
pub fn run_sweep(cfg: &SimConfig, workers: usize) -> Result<SweepResult> {
    cfg.validate()?;
    if workers == 0 {
        return Err(invalid("at least one worker is required"));
    }
    let manifest = RunManifest::new(cfg)?;
    let family = code_family(cfg)?;
    let codes = family.first(cfg.users)?;
    let units: Vec<(usize, usize)> = (0..cfg.ebno_db.len())
        .flat_map(|e| (0..cfg.trials).map(move |t| (e, t)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<UnitResult> = pool.install(|| {
        units
            .par_iter()
            .map(|&(e, t)| run_unit(cfg, codes, cfg.ebno_db[e], manifest.trial_seeds[t], None))
            .collect::<Result<_>>()
    })?;

    let k = cfg.users;
    let n = cfg.spreading_factor();
    let rho = correlation_matrix(codes)?;
    let doppler = doppler_correlation(cfg.fd_tb);
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for (e, &ebno_db) in cfg.ebno_db.iter().enumerate() {
        let unit_results = &results[e * cfg.trials..(e + 1) * cfg.trials];
        for (i, spec) in cfg.receivers.iter().enumerate() {
            let diverged_trials = unit_results.iter().filter(|u| u.diverged[i]).count();
            let valid = diverged_trials as f64 <= MAX_DIVERGED_FRACTION * cfg.trials as f64;
            let mut previous: Option<(Vec<f64>, f64)> = None;
            for stage in 0..spec.output_stages() {
                let mut acc = MetricAccumulator::new(k);
                let mut modulus = ModulusErrorStats::default();
                for u in unit_results.iter().filter(|u| !u.diverged[i]) {
                    acc.merge(&u.cells[i][stage].acc)?;
                    modulus.merge(&u.cells[i][stage].modulus);
                }
                let trials = cfg.trials - diverged_trials;
                let (mse, sinr, ber, residual, per_user_mse, ergodic) = if trials > 0 {
                    let report = acc.sinr()?;
                    let finite: Vec<f64> = report.per_user.iter().copied().filter(|g| g.is_finite()).collect();
                    let ergodic = if finite.is_empty() {
                        f64::INFINITY
                    } else {
                        k as f64 / n as f64 * ergodic_capacity(&finite, 1.0)?
                    };
                    (
                        acc.mse()?,
                        report.mean,
                        acc.ber()?,
                        acc.residual_power()?,
                        acc.per_user_mse()?,
                        ergodic,
                    )
                } else {
                    (f64::NAN, f64::NAN, f64::NAN, f64::NAN, vec![f64::NAN; k], f64::NAN)
                };
                let predicted = match (spec.kind, stage, &previous) {
                    (ReceiverKind::BaPic, 0, _) if trials > 0 => Some(modulus.predicted_variance(k, n, doppler)?),
                    (ReceiverKind::BaPic, _, Some((prev_mse, prev_var))) if trials > 0 => {
                        let mut total = 0.0;
                        for user in 0..k {
                            total +=
                                predicted_variance_ba_pic_stage_l(user, prev_mse, &rho, Kappa::DesiredUser, *prev_var)?;
                        }
                        Some(total / k as f64)
                    }
                    _ => None,
                };
                previous = Some((per_user_mse, residual));
                let sum_rate = if sinr.is_finite() { sum_rate(sinr, k, n)? } else { sinr };
                rows.push(MetricRow {
                    receiver: spec.kind,
                    stage,
                    ebno_db,
                    mse,
                    sinr_mean: sinr,
                    sum_rate,
                    ber,
                    symbols: cfg.symbols,
                    trials,
                    seed: cfg.seed,
                });
                diagnostics.push(DiagnosticRow {
                    receiver: spec.kind,
                    stage,
                    ebno_db,
                    diverged_trials,
                    valid,
                    residual_variance: residual,
                    predicted_variance: predicted,
                    ergodic_rate: ergodic,
                });
            }
        }
    }
    Ok(SweepResult {
        rows,
        diagnostics,
        manifest,
    })
}

/// `<stem>.<suffix>` next to `path`.
pub fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Writes the metrics CSV to `path` and the diagnostics CSV and manifest
/// beside it. Returns the three paths.
pub fn write_outputs(result: &SweepResult, path: &Path) -> Result<[PathBuf; 3]> {
    let diagnostics = sidecar_path(path, "diagnostics.csv");
    let manifest = sidecar_path(path, "manifest.txt");
    std::fs::write(path, result.metrics_csv())?;
    std::fs::write(&diagnostics, result.diagnostics_csv())?;
    std::fs::write(&manifest, result.manifest.to_text())?;
    Ok([path.to_path_buf(), diagnostics, manifest])
}

pub const RECORDS_HEADER: &str = "receiver,stage,user,m,z,est,bit";

/// Streams every detection record of one trial at one Eb/N0 to `out`.
pub fn dump_records<W: Write>(cfg: &SimConfig, ebno_db: f64, trial: usize, out: &mut W) -> Result<()> {
    cfg.validate()?;
    let family = code_family(cfg)?;
    let codes = family.first(cfg.users)?;
    writeln!(out, "{RECORDS_HEADER}")?;
    let mut sink = |kind: ReceiverKind, stages: &[Vec<DetectionRecord>]| -> Result<()> {
        for (stage, records) in stages.iter().enumerate() {
            for r in records {
                writeln!(
                    out,
                    "{kind},{stage},{},{},{:.12e},{:.12e},{}",
                    r.user, r.symbol, r.z, r.estimate, r.bit
                )?;
            }
        }
        Ok(())
    };
    run_unit(cfg, codes, ebno_db, trial_seed(cfg.seed, trial), Some(&mut sink))?;
    Ok(())
}
