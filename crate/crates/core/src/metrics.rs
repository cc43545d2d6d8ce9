//! Channel-estimation MSE, empirical SINR, BER, capacity and sum rate, plus
//! the analytical BA-PIC variance predictors used as diagnostics.
//!
//! Metrics are computed against genie truth. Per-user sums are kept in
//! [`MetricAccumulator`], which merges associatively so trials can be reduced
//! in any grouping and finished in a fixed order.

use crate::channel::clarke_autocorrelation;
use crate::error::{invalid, Error, Result};
use crate::receivers::{DetectionRecord, ReceiverKind};
use crate::transmitter::UserFrame;

/// True amplitude `g`, phase `phi` and BPSK symbol `b` per user and symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct GenieTruth {
    amplitudes: Vec<Vec<f64>>,
    phases: Vec<Vec<f64>>,
    symbols: Vec<Vec<f64>>,
}

impl GenieTruth {
    pub fn new(amplitudes: Vec<Vec<f64>>, phases: Vec<Vec<f64>>, symbols: Vec<Vec<f64>>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(invalid("genie truth needs at least one user"));
        }
        if phases.len() != amplitudes.len() || symbols.len() != amplitudes.len() {
            return Err(invalid("genie truth user counts differ"));
        }
        let m = amplitudes[0].len();
        for ((a, p), s) in amplitudes.iter().zip(&phases).zip(&symbols) {
            if a.len() != m || p.len() != m || s.len() != m {
                return Err(invalid("genie truth symbol counts differ"));
            }
        }
        Ok(Self {
            amplitudes,
            phases,
            symbols,
        })
    }

    pub fn from_users(users: &[UserFrame]) -> Result<Self> {
        Self::new(
            users
                .iter()
                .map(|u| (0..u.trace.len()).map(|m| u.trace.amplitude(m)).collect())
                .collect(),
            users
                .iter()
                .map(|u| (0..u.trace.len()).map(|m| u.trace.phase(m)).collect())
                .collect(),
            users.iter().map(|u| u.symbols.clone()).collect(),
        )
    }

    pub fn users(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn symbols(&self) -> usize {
        self.amplitudes[0].len()
    }

    pub fn amplitude(&self, user: usize, m: usize) -> f64 {
        self.amplitudes[user][m]
    }

    pub fn phase(&self, user: usize, m: usize) -> f64 {
        self.phases[user][m]
    }

    pub fn symbol(&self, user: usize, m: usize) -> f64 {
        self.symbols[user][m]
    }

    /// Every user's phase at symbol `m`.
    pub fn phases_at(&self, m: usize) -> Vec<f64> {
        self.phases.iter().map(|p| p[m]).collect()
    }
}

/// Running per-user sums for one (receiver, stage) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UserStats {
    pub count: u64,
    /// Sum of `(|estimate| - g)^2`.
    pub squared_error: f64,
    /// Sum of `(g b)^2`.
    pub signal: f64,
    /// Sum of `(estimate - g b)^2 + quadrature^2`.
    pub residual: f64,
    pub bit_errors: u64,
}

impl UserStats {
    /// Adds one symbol; the residual counts the quadrature part of the
    /// despreader output so that noise enters with its full power `N0`.
    pub fn push(&mut self, estimate: f64, quadrature: f64, bit: i8, g: f64, b: f64) {
        let gb = g * b;
        self.count += 1;
        self.squared_error += (estimate.abs() - g).powi(2);
        self.signal += gb * gb;
        self.residual += (estimate - gb).powi(2) + quadrature * quadrature;
        if f64::from(bit) != b {
            self.bit_errors += 1;
        }
    }

    pub fn merge(&mut self, other: &UserStats) {
        self.count += other.count;
        self.squared_error += other.squared_error;
        self.signal += other.signal;
        self.residual += other.residual;
        self.bit_errors += other.bit_errors;
    }

    pub fn mse(&self) -> f64 {
        self.squared_error / self.count as f64
    }

    /// Mean residual power `I_k`.
    pub fn residual_power(&self) -> f64 {
        self.residual / self.count as f64
    }

    /// `S_k / I_k`, infinite when the residual is exactly zero.
    pub fn sinr(&self) -> f64 {
        if self.residual == 0.0 {
            f64::INFINITY
        } else {
            self.signal / self.residual
        }
    }
}

/// Per-user SINR values and their mean over users with finite SINR.
#[derive(Debug, Clone, PartialEq)]
pub struct SinrReport {
    pub per_user: Vec<f64>,
    /// Mean over finite entries; infinite if every user is.
    pub mean: f64,
    /// Users left out of the mean because their residual was zero.
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricAccumulator {
    users: Vec<UserStats>,
}

impl MetricAccumulator {
    pub fn new(users: usize) -> Self {
        Self {
            users: vec![UserStats::default(); users],
        }
    }

    pub fn users(&self) -> &[UserStats] {
        &self.users
    }

    pub fn push(&mut self, record: &DetectionRecord, truth: &GenieTruth) -> Result<()> {
        if record.user >= truth.users() || record.user >= self.users.len() || record.symbol >= truth.symbols() {
            return Err(invalid(format!(
                "record for user {} symbol {} outside truth of {} users x {} symbols",
                record.user,
                record.symbol,
                truth.users(),
                truth.symbols()
            )));
        }
        self.users[record.user].push(
            record.estimate,
            record.quadrature,
            record.bit,
            truth.amplitude(record.user, record.symbol),
            truth.symbol(record.user, record.symbol),
        );
        Ok(())
    }

    pub fn merge(&mut self, other: &MetricAccumulator) -> Result<()> {
        if other.users.len() != self.users.len() {
            return Err(Error::LengthMismatch(self.users.len(), other.users.len()));
        }
        for (a, b) in self.users.iter_mut().zip(&other.users) {
            a.merge(b);
        }
        Ok(())
    }

    pub fn total(&self) -> UserStats {
        let mut t = UserStats::default();
        for u in &self.users {
            t.merge(u);
        }
        t
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.users.is_empty() || self.users.iter().any(|u| u.count == 0) {
            return Err(Error::EmptyRecords);
        }
        Ok(())
    }

    /// Average over users of the per-user MSE.
    pub fn mse(&self) -> Result<f64> {
        self.ensure_nonempty()?;
        Ok(self.users.iter().map(UserStats::mse).sum::<f64>() / self.users.len() as f64)
    }

    pub fn per_user_mse(&self) -> Result<Vec<f64>> {
        self.ensure_nonempty()?;
        Ok(self.users.iter().map(UserStats::mse).collect())
    }

    pub fn sinr(&self) -> Result<SinrReport> {
        self.ensure_nonempty()?;
        let per_user: Vec<f64> = self.users.iter().map(UserStats::sinr).collect();
        let finite: Vec<f64> = per_user.iter().copied().filter(|g| g.is_finite()).collect();
        let mean = if finite.is_empty() {
            f64::INFINITY
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        Ok(SinrReport {
            excluded: per_user.len() - finite.len(),
            per_user,
            mean,
        })
    }

    pub fn ber(&self) -> Result<f64> {
        self.ensure_nonempty()?;
        let t = self.total();
        Ok(t.bit_errors as f64 / t.count as f64)
    }

    /// Mean over users of the residual power `I_k`.
    pub fn residual_power(&self) -> Result<f64> {
        self.ensure_nonempty()?;
        Ok(self.users.iter().map(UserStats::residual_power).sum::<f64>() / self.users.len() as f64)
    }
}

fn accumulate(records: &[DetectionRecord], truth: &GenieTruth) -> Result<MetricAccumulator> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut acc = MetricAccumulator::new(truth.users());
    for r in records {
        acc.push(r, truth)?;
    }
    Ok(acc)
}

/// Mean over users of `E{(|g_hat b| - g)^2}`.
pub fn mse_channel_estimation(records: &[DetectionRecord], truth: &GenieTruth) -> Result<f64> {
    accumulate(records, truth)?.mse()
}

pub fn empirical_sinr(records: &[DetectionRecord], truth: &GenieTruth) -> Result<SinrReport> {
    accumulate(records, truth)?.sinr()
}

pub fn ber(records: &[DetectionRecord], truth: &GenieTruth) -> Result<f64> {
    accumulate(records, truth)?.ber()
}

/// Sample mean of `B log2(1 + gamma)`.
pub fn ergodic_capacity(sinr_samples: &[f64], bandwidth: f64) -> Result<f64> {
    if sinr_samples.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if let Some(bad) = sinr_samples.iter().find(|g| g.is_nan() || **g < 0.0) {
        return Err(invalid(format!("SINR sample {bad} is negative")));
    }
    Ok(bandwidth * sinr_samples.iter().map(|g| g.ln_1p()).sum::<f64>()
        / std::f64::consts::LN_2
        / sinr_samples.len() as f64)
}

/// `(K/N) log2(1 + mean_sinr)`; by Jensen an upper bound on the ergodic rate.
pub fn sum_rate(mean_sinr: f64, users: usize, spreading_factor: usize) -> Result<f64> {
    if mean_sinr.is_nan() || mean_sinr < 0.0 {
        return Err(invalid(format!("mean SINR {mean_sinr} is negative")));
    }
    if spreading_factor == 0 {
        return Err(invalid("spreading factor must be positive"));
    }
    Ok(users as f64 / spreading_factor as f64 * mean_sinr.ln_1p() / std::f64::consts::LN_2)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Symbol-spaced fading correlation `J0(2 pi fd Tb)`.
pub fn doppler_correlation(fd_tb: f64) -> f64 {
    clarke_autocorrelation(fd_tb, 1.0)
}

/// Running `sum (e + mu)^2` of one user's stage-0 modulus errors `e = |z| - 1`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ModulusErrorStats {
    pub count: u64,
    pub sum_squared: f64,
}

impl ModulusErrorStats {
    pub fn push(&mut self, error: f64, step_size: f64) {
        self.count += 1;
        self.sum_squared += (error + step_size).powi(2);
    }

    pub fn merge(&mut self, other: &ModulusErrorStats) {
        self.count += other.count;
        self.sum_squared += other.sum_squared;
    }

    /// Stage-0 interference variance predicted from the accumulated errors.
    pub fn predicted_variance(&self, users: usize, spreading_factor: usize, doppler_corr: f64) -> Result<f64> {
        if self.count == 0 {
            return Err(Error::EmptyRecords);
        }
        if doppler_corr.is_nan() || doppler_corr <= 0.0 || spreading_factor == 0 {
            return Err(invalid("correlation and spreading factor must be positive"));
        }
        Ok(users as f64 / (self.count as f64 * doppler_corr) * self.sum_squared / spreading_factor as f64)
    }
}

/// Stage-0 BA-PIC interference variance `K/(M R) sum_m (e(m) + mu)^2 / N`,
/// with `M` the number of modulus errors supplied.
///
/// Heuristic; intended for comparison against the measured variance only.
pub fn predicted_variance_ba_pic_stage0(
    users: usize,
    spreading_factor: usize,
    step_size: f64,
    doppler_corr: f64,
    errors: &[f64],
) -> Result<f64> {
    let mut stats = ModulusErrorStats::default();
    for &e in errors {
        stats.push(e, step_size);
    }
    stats.predicted_variance(users, spreading_factor, doppler_corr)
}

/// Binding of the free index `i` in the stage-`l` variance predictor, where
/// `kappa_ji = 1` if `i = j` and `-1` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kappa {
    /// `i` is the desired user `k`, so every term carries `rho_kj^2 + 1`.
    #[default]
    DesiredUser,
    /// The bracket is summed over all `i != k`.
    SumOverUsers,
}

/// Stage-`l` BA-PIC variance for user `k`:
/// `eps_k^2 + sum_{j != k} eps_j^2 (rho_kj^2 - kappa_ji rho_ki^2) var_prev`.
pub fn predicted_variance_ba_pic_stage_l(
    user: usize,
    mse_per_user: &[f64],
    rho: &[Vec<f64>],
    kappa: Kappa,
    previous_variance: f64,
) -> Result<f64> {
    let k_users = mse_per_user.len();
    if user >= k_users {
        return Err(invalid(format!("user {user} outside {k_users} users")));
    }
    if rho.len() != k_users || rho.iter().any(|row| row.len() != k_users) {
        return Err(invalid("correlation matrix must be K x K"));
    }
    for (i, row) in rho.iter().enumerate() {
        if (row[i] - 1.0).abs() > 1e-12 {
            return Err(invalid("correlation matrix must have a unit diagonal"));
        }
        for (j, &r) in row.iter().enumerate().take(i) {
            if (r - rho[j][i]).abs() > 1e-12 {
                return Err(invalid("correlation matrix must be symmetric"));
            }
        }
    }
    let k = user;
    let mut total = 0.0;
    for j in (0..k_users).filter(|&j| j != k) {
        let coefficient = match kappa {
            Kappa::DesiredUser => rho[k][j].powi(2) + rho[k][k].powi(2),
            Kappa::SumOverUsers => (0..k_users)
                .filter(|&i| i != k)
                .map(|i| {
                    let kappa_ji = if i == j { 1.0 } else { -1.0 };
                    rho[k][j].powi(2) - kappa_ji * rho[k][i].powi(2)
                })
                .sum(),
        };
        total += mse_per_user[j] * coefficient * previous_variance;
    }
    Ok(mse_per_user[k] + total)
}

/// One aggregated result row.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub receiver: ReceiverKind,
    pub stage: usize,
    pub ebno_db: f64,
    pub mse: f64,
    /// Mean SINR, linear.
    pub sinr_mean: f64,
    pub sum_rate: f64,
    pub ber: f64,
    pub symbols: usize,
    pub trials: usize,
    pub seed: u64,
}

impl MetricRow {
    pub const CSV_HEADER: &'static str =
        "receiver,stage,ebno_db,mse,sinr_mean_db,sum_rate_bps_hz,ber,symbols,trials,seed";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.9e},{:.6},{:.6},{:.9e},{},{},{}",
            self.receiver,
            self.stage,
            self.ebno_db,
            self.mse,
            to_db(self.sinr_mean),
            self.sum_rate,
            self.ber,
            self.symbols,
            self.trials,
            self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn truth(g: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> GenieTruth {
        let phases = g.iter().map(|row| vec![0.0; row.len()]).collect();
        GenieTruth::new(g, phases, b).unwrap()
    }

    fn record(user: usize, symbol: usize, estimate: f64) -> DetectionRecord {
        DetectionRecord::new(user, symbol, 0, Complex64::new(estimate, 0.0), 1.0)
    }

    #[test]
    fn perfect_estimates_have_zero_mse_and_infinite_sinr() {
        let t = truth(vec![vec![0.5, 1.2]], vec![vec![1.0, -1.0]]);
        let recs = [record(0, 0, 0.5), record(0, 1, -1.2)];
        assert_eq!(mse_channel_estimation(&recs, &t).unwrap(), 0.0);
        let s = empirical_sinr(&recs, &t).unwrap();
        assert!(s.mean.is_infinite());
        assert_eq!(s.excluded, 1);
        assert_eq!(ber(&recs, &t).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_counts_toward_residual_but_not_mse() {
        let t = truth(vec![vec![1.0, 2.0]], vec![vec![1.0, -1.0]]);
        let recs = [
            DetectionRecord::new(0, 0, 0, Complex64::new(1.0, 0.5), 1.0),
            DetectionRecord::new(0, 1, 0, Complex64::new(-1.0, -1.0), 2.0),
        ];
        assert_eq!(mse_channel_estimation(&recs, &t).unwrap(), 0.0);
        // S = (1 + 4) / 2, I = (0.25 + 4) / 2
        assert_eq!(empirical_sinr(&recs, &t).unwrap().mean, 5.0 / 4.25);
        assert_eq!(recs[1].estimate, -2.0);
        assert_eq!(recs[1].quadrature, -2.0);
    }

    #[test]
    fn constant_bias_mse() {
        let g = vec![vec![0.3, 0.7, 1.1], vec![0.9, 0.2, 1.5]];
        let b = vec![vec![1.0, -1.0, 1.0], vec![-1.0, -1.0, 1.0]];
        let t = truth(g.clone(), b.clone());
        let mut recs = Vec::new();
        for k in 0..2 {
            for m in 0..3 {
                recs.push(record(k, m, (g[k][m] + 0.1) * b[k][m]));
            }
        }
        assert!((mse_channel_estimation(&recs, &t).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn flipped_decisions_give_unit_ber() {
        let t = truth(vec![vec![1.0, 1.0]], vec![vec![1.0, -1.0]]);
        let recs = [record(0, 0, -0.2), record(0, 1, 0.4)];
        assert_eq!(ber(&recs, &t).unwrap(), 1.0);
    }

    #[test]
    fn empty_and_out_of_range_records_rejected() {
        let t = truth(vec![vec![1.0]], vec![vec![1.0]]);
        assert!(matches!(mse_channel_estimation(&[], &t), Err(Error::EmptyRecords)));
        assert!(mse_channel_estimation(&[record(1, 0, 1.0)], &t).is_err());
        assert!(mse_channel_estimation(&[record(0, 3, 1.0)], &t).is_err());
    }

    #[test]
    fn mse_invariant_under_relabeling() {
        let g = vec![vec![0.3, 0.8], vec![1.4, 0.6], vec![0.9, 1.1]];
        let b = vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![1.0, 1.0]];
        let est = [[0.25, -0.9], [-1.3, 0.65], [1.0, 1.2]];
        let perm = [2, 0, 1];
        let mut recs = Vec::new();
        let mut relabeled = Vec::new();
        for (k, row) in est.iter().enumerate() {
            for (m, &e) in row.iter().enumerate() {
                recs.push(record(k, m, e));
                relabeled.push(record(perm[k], m, e));
            }
        }
        let mut pg = vec![vec![]; 3];
        let mut pb = vec![vec![]; 3];
        for k in 0..3 {
            pg[perm[k]] = g[k].clone();
            pb[perm[k]] = b[k].clone();
        }
        let a = mse_channel_estimation(&recs, &truth(g, b)).unwrap();
        let c = mse_channel_estimation(&relabeled, &truth(pg, pb)).unwrap();
        assert!((a - c).abs() < 1e-15);
    }

    #[test]
    fn accumulators_merge_like_a_single_pass() {
        let t = truth(vec![vec![0.4, 0.9, 1.3, 0.2]], vec![vec![1.0, -1.0, -1.0, 1.0]]);
        let recs: Vec<_> = [0.5, -0.7, 1.1, 0.1]
            .iter()
            .enumerate()
            .map(|(m, &e)| record(0, m, e))
            .collect();
        let whole = accumulate(&recs, &t).unwrap();
        let mut left = accumulate(&recs[..2], &t).unwrap();
        left.merge(&accumulate(&recs[2..], &t).unwrap()).unwrap();
        assert_eq!(whole.total().count, left.total().count);
        assert!((whole.mse().unwrap() - left.mse().unwrap()).abs() < 1e-15);
        assert!((whole.sinr().unwrap().mean - left.sinr().unwrap().mean).abs() < 1e-12);
        assert!(left.merge(&MetricAccumulator::new(2)).is_err());
    }

    #[test]
    fn capacity_trivial_values() {
        assert_eq!(ergodic_capacity(&[1.0, 1.0, 1.0], 1.0).unwrap(), 1.0);
        assert_eq!(ergodic_capacity(&[0.0, 0.0], 1.0).unwrap(), 0.0);
        assert!(ergodic_capacity(&[], 1.0).is_err());
        assert!(ergodic_capacity(&[-1.0], 1.0).is_err());
    }

    #[test]
    fn sum_rate_values() {
        assert!((sum_rate(1.0, 20, 31).unwrap() - 20.0 / 31.0).abs() < 1e-12);
        assert_eq!(sum_rate(0.0, 20, 31).unwrap(), 0.0);
        assert!(sum_rate(-0.1, 20, 31).is_err());
        assert!(sum_rate(3.0, 20, 31).unwrap() < sum_rate(3.1, 20, 31).unwrap());
        assert!((sum_rate(7.0, 10, 31).unwrap() * 2.0 - sum_rate(7.0, 20, 31).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn stage0_predictor_examples() {
        assert_eq!(
            predicted_variance_ba_pic_stage0(20, 31, 0.0, 1.0, &[0.0; 10]).unwrap(),
            0.0
        );
        let v = predicted_variance_ba_pic_stage0(1, 31, 1e-4, 1.0, &[0.9]).unwrap();
        assert!((v - 0.9001f64.powi(2) / 31.0).abs() < 1e-15);
        assert!((v - 0.02613).abs() < 1e-5);
        assert!(predicted_variance_ba_pic_stage0(1, 31, 1e-4, 0.0, &[0.9]).is_err());
        assert!(predicted_variance_ba_pic_stage0(1, 31, 1e-4, 1.0, &[]).is_err());
    }

    #[test]
    fn stage_l_predictor_validates_matrix() {
        let rho = vec![vec![1.0, 0.2], vec![0.3, 1.0]];
        assert!(predicted_variance_ba_pic_stage_l(0, &[0.1, 0.1], &rho, Kappa::DesiredUser, 0.1).is_err());
        let rho = vec![vec![1.0, 0.2], vec![0.2, 0.9]];
        assert!(predicted_variance_ba_pic_stage_l(0, &[0.1, 0.1], &rho, Kappa::DesiredUser, 0.1).is_err());
        let rho = vec![vec![1.0, 0.2], vec![0.2, 1.0]];
        assert!(predicted_variance_ba_pic_stage_l(2, &[0.1, 0.1], &rho, Kappa::DesiredUser, 0.1).is_err());
        assert_eq!(
            predicted_variance_ba_pic_stage_l(0, &[0.0, 0.0], &rho, Kappa::DesiredUser, 0.1).unwrap(),
            0.0
        );
    }

    #[test]
    fn csv_row_format() {
        let row = MetricRow {
            receiver: ReceiverKind::BaPic,
            stage: 1,
            ebno_db: 30.0,
            mse: 0.002,
            sinr_mean: 100.0,
            sum_rate: 4.5,
            ber: 0.0,
            symbols: 1000,
            trials: 2,
            seed: 7,
        };
        let line = row.to_csv();
        assert!(line.starts_with("ba_pic,1,30,"));
        assert_eq!(line.split(',').count(), MetricRow::CSV_HEADER.split(',').count());
        assert!(line.contains(",20.000000,"));
    }
}
