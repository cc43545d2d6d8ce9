//! Rayleigh flat fading and AWGN.
//!
//! Fading gains come from a sum-of-sinusoids Clarke model: 64 arrival angles
//! spaced evenly around the circle (offset by a quarter bin so that no two
//! angles share a Doppler frequency), each with an independent uniform phase.
//! One gain is drawn per symbol; the channel is constant over the chips of a
//! symbol.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

/// Number of sinusoids summed per fading process.
pub const SINUSOIDS: usize = 64;
const ANGLE_OFFSET: f64 = 0.25;
// Phasors advance by complex rotation and are recomputed exactly at this cadence.
const REANCHOR_INTERVAL: usize = 1024;

/// How the fading phase of each user reaches the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseModel {
    /// All users arrive co-phased with real gain `g_k = |beta_k|`; interferers
    /// add to the decision statistic with their full amplitude.
    Aligned,
    /// Each user keeps the phase of its complex gain; receivers derotate by
    /// the desired user's phase.
    Random,
}

impl PhaseModel {
    pub fn apply(self, gain: Complex64) -> Complex64 {
        match self {
            PhaseModel::Aligned => Complex64::new(gain.norm(), 0.0),
            PhaseModel::Random => gain,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseModel::Aligned => "aligned",
            PhaseModel::Random => "random",
        }
    }
}

impl std::str::FromStr for PhaseModel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "aligned" => Ok(PhaseModel::Aligned),
            "random" => Ok(PhaseModel::Random),
            other => Err(format!("unknown phase model '{other}' (expected aligned or random)")),
        }
    }
}

/// Per-user sequence of complex channel gains `beta(m) = g(m) e^{-j phi(m)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FadingTrace {
    pub user: usize,
    /// Normalized Doppler `f_d T_b`; zero for a static trace.
    pub doppler: f64,
    pub gains: Vec<Complex64>,
}

impl FadingTrace {
    /// Static channel holding `gain` for `symbols` symbols.
    pub fn constant(user: usize, gain: Complex64, symbols: usize) -> Self {
        Self {
            user,
            doppler: 0.0,
            gains: vec![gain; symbols],
        }
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn amplitude(&self, m: usize) -> f64 {
        self.gains[m].norm()
    }

    /// Channel phase `phi` under the `e^{-j phi}` convention.
    pub fn phase(&self, m: usize) -> f64 {
        -self.gains[m].arg()
    }

    pub fn with_phase_model(&self, model: PhaseModel) -> Self {
        Self {
            user: self.user,
            doppler: self.doppler,
            gains: self.gains.iter().map(|&g| model.apply(g)).collect(),
        }
    }
}

/// Streaming sum-of-sinusoids fading generator.
#[derive(Debug, Clone)]
pub struct SosFader {
    omegas: Vec<f64>,
    offsets: Vec<f64>,
    phasors: Vec<Complex64>,
    steps: Vec<Complex64>,
    t: usize,
    scale: f64,
}

impl SosFader {
    pub fn new<R: Rng + ?Sized>(fd_tb: f64, rng: &mut R) -> Result<Self> {
        if !(fd_tb > 0.0 && fd_tb < 0.5) {
            return Err(invalid(format!("normalized Doppler must lie in (0, 0.5), got {fd_tb}")));
        }
        let omegas: Vec<f64> = (0..SINUSOIDS)
            .map(|n| {
                let angle = 2.0 * PI * (n as f64 + ANGLE_OFFSET) / SINUSOIDS as f64;
                2.0 * PI * fd_tb * angle.cos()
            })
            .collect();
        let offsets: Vec<f64> = (0..SINUSOIDS).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
        let steps = omegas.iter().map(|&w| Complex64::from_polar(1.0, w)).collect();
        let mut fader = Self {
            omegas,
            offsets,
            phasors: vec![Complex64::new(0.0, 0.0); SINUSOIDS],
            steps,
            t: 0,
            scale: 1.0 / (SINUSOIDS as f64).sqrt(),
        };
        fader.reanchor();
        Ok(fader)
    }

    fn reanchor(&mut self) {
        let t = self.t as f64;
        for ((p, &w), &off) in self.phasors.iter_mut().zip(&self.omegas).zip(&self.offsets) {
            *p = Complex64::from_polar(1.0, w * t + off);
        }
    }

    /// Gain for the next symbol.
    pub fn next_gain(&mut self) -> Complex64 {
        if self.t.is_multiple_of(REANCHOR_INTERVAL) {
            self.reanchor();
        }
        let sum: Complex64 = self.phasors.iter().sum();
        for (p, s) in self.phasors.iter_mut().zip(&self.steps) {
            *p *= s;
        }
        self.t += 1;
        sum * self.scale
    }
}

/// Rayleigh fading trace of `symbols` gains at normalized Doppler `fd_tb`.
pub fn rayleigh_trace<R: Rng + ?Sized>(user: usize, symbols: usize, fd_tb: f64, rng: &mut R) -> Result<FadingTrace> {
    if symbols == 0 {
        return Err(invalid("fading trace needs at least one symbol"));
    }
    let mut fader = SosFader::new(fd_tb, rng)?;
    Ok(FadingTrace {
        user,
        doppler: fd_tb,
        gains: (0..symbols).map(|_| fader.next_gain()).collect(),
    })
}

/// Noise power spectral density; each complex sample carries `n0/2` per component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    n0: f64,
}

impl NoiseSpec {
    pub fn new(n0: f64) -> Result<Self> {
        if !(n0 >= 0.0 && n0.is_finite()) {
            return Err(invalid(format!("noise density must be finite and >= 0, got {n0}")));
        }
        Ok(Self { n0 })
    }

    pub fn off() -> Self {
        Self { n0: 0.0 }
    }

    pub fn n0(&self) -> f64 {
        self.n0
    }

    /// Standard deviation per real component.
    pub fn sigma(&self) -> f64 {
        (self.n0 / 2.0).sqrt()
    }
}

/// `N0 = Es / (bits_per_symbol * 10^(ebn0/10))`.
pub fn ebn0_to_n0(ebn0_db: f64, bits_per_symbol: u32, symbol_energy: f64) -> Result<NoiseSpec> {
    if symbol_energy.is_nan() || symbol_energy <= 0.0 || bits_per_symbol == 0 {
        return Err(invalid("symbol energy and bits per symbol must be positive"));
    }
    NoiseSpec::new(symbol_energy / (f64::from(bits_per_symbol) * 10f64.powf(ebn0_db / 10.0)))
}

/// Adds complex AWGN to `samples` in place.
///
/// Normals are drawn even when `n0 = 0`, so a stream consumed at different
/// noise levels stays aligned.
pub fn add_awgn<R: Rng + ?Sized>(noise: &NoiseSpec, samples: &mut [Complex64], rng: &mut R) {
    let sigma = noise.sigma();
    for s in samples {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *s += Complex64::new(re * sigma, im * sigma);
    }
}

pub fn awgn_frame<R: Rng + ?Sized>(noise: &NoiseSpec, len: usize, rng: &mut R) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); len];
    add_awgn(noise, &mut v, rng);
    v
}

/// Clarke autocorrelation `J0(2 pi f_d T_b tau)`.
pub fn clarke_autocorrelation(fd_tb: f64, lag: f64) -> f64 {
    libm::j0(2.0 * PI * fd_tb * lag)
}

/// Summary statistics of a fading trace against the Rayleigh/Clarke model.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStatistics {
    /// Mean of `|beta|^2`, the variance of the zero-mean complex gain.
    pub power: f64,
    /// Sample variance of `|beta|^2` (1 for unit-power Rayleigh).
    pub power_variance: f64,
    pub mean: Complex64,
    /// Worst `|R(tau) - J0(2 pi f_d T_b tau)|` over `tau <= max_lag`.
    pub max_autocorrelation_error: f64,
    /// Kolmogorov-Smirnov distance of `|beta|` from Rayleigh with `sigma^2 = 1/2`.
    pub ks_rayleigh: f64,
}

/// Normalized empirical autocorrelation `Re{sum beta(m+tau) beta*(m)} / (M - tau)`,
/// divided by the lag-0 value.
pub fn empirical_autocorrelation(gains: &[Complex64], max_lag: usize) -> Vec<f64> {
    let m = gains.len();
    let raw: Vec<f64> = (0..=max_lag.min(m.saturating_sub(1)))
        .map(|tau| {
            let s: f64 = gains[tau..].iter().zip(gains).map(|(a, b)| (a * b.conj()).re).sum();
            s / (m - tau) as f64
        })
        .collect();
    let r0 = raw[0];
    raw.into_iter().map(|r| r / r0).collect()
}

/// Kolmogorov-Smirnov statistic of `amplitudes` against `F(x) = 1 - exp(-x^2)`.
pub fn ks_rayleigh(amplitudes: &[f64]) -> f64 {
    let mut a = amplitudes.to_vec();
    a.sort_by(f64::total_cmp);
    let n = a.len() as f64;
    a.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x * x).exp();
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

pub fn trace_statistics(trace: &FadingTrace, max_lag: usize) -> TraceStatistics {
    let m = trace.len() as f64;
    let powers: Vec<f64> = trace.gains.iter().map(|g| g.norm_sqr()).collect();
    let power = powers.iter().sum::<f64>() / m;
    let power_variance = powers.iter().map(|p| (p - power).powi(2)).sum::<f64>() / (m - 1.0).max(1.0);
    let mean = trace.gains.iter().sum::<Complex64>() / m;
    let acf = empirical_autocorrelation(&trace.gains, max_lag);
    let max_autocorrelation_error = acf
        .iter()
        .enumerate()
        .map(|(tau, r)| (r - clarke_autocorrelation(trace.doppler, tau as f64)).abs())
        .fold(0.0, f64::max);
    let amplitudes: Vec<f64> = trace.gains.iter().map(|g| g.norm()).collect();
    TraceStatistics {
        power,
        power_variance,
        mean,
        max_autocorrelation_error,
        ks_rayleigh: ks_rayleigh(&amplitudes),
    }
}

/// Normalized magnitude of the zero-lag cross-correlation of two traces.
pub fn trace_cross_correlation(a: &FadingTrace, b: &FadingTrace) -> f64 {
    let num: Complex64 = a.gains.iter().zip(&b.gains).map(|(x, y)| x * y.conj()).sum();
    let ea: f64 = a.gains.iter().map(|g| g.norm_sqr()).sum();
    let eb: f64 = b.gains.iter().map(|g| g.norm_sqr()).sum();
    num.norm() / (ea * eb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ebn0_conversion() {
        assert!((ebn0_to_n0(0.0, 1, 1.0).unwrap().n0() - 1.0).abs() < 1e-15);
        assert!((ebn0_to_n0(30.0, 1, 1.0).unwrap().n0() - 0.001).abs() < 1e-15);
        assert!((ebn0_to_n0(10.0, 1, 1.0).unwrap().n0() - 0.1).abs() < 1e-15);
        assert!(ebn0_to_n0(10.0, 1, 0.0).is_err());
    }

    #[test]
    fn noise_spec_rejects_negative() {
        assert!(NoiseSpec::new(-1.0).is_err());
        assert!(NoiseSpec::new(f64::NAN).is_err());
    }

    #[test]
    fn zero_noise_is_zero() {
        let v = awgn_frame(&NoiseSpec::off(), 31, &mut rng(1));
        assert!(v.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn noise_component_variance() {
        let v = awgn_frame(&NoiseSpec::new(2.0).unwrap(), 1_000_000, &mut rng(2));
        let n = v.len() as f64;
        let var_re = v.iter().map(|s| s.re * s.re).sum::<f64>() / n;
        let var_im = v.iter().map(|s| s.im * s.im).sum::<f64>() / n;
        assert!((var_re - 1.0).abs() < 0.02, "{var_re}");
        assert!((var_im - 1.0).abs() < 0.02, "{var_im}");
    }

    #[test]
    fn noise_is_reproducible() {
        let spec = NoiseSpec::new(0.5).unwrap();
        assert_eq!(awgn_frame(&spec, 64, &mut rng(3)), awgn_frame(&spec, 64, &mut rng(3)));
    }

    #[test]
    fn trace_rejects_bad_doppler() {
        assert!(rayleigh_trace(0, 10, 0.0, &mut rng(1)).is_err());
        assert!(rayleigh_trace(0, 10, -0.1, &mut rng(1)).is_err());
        assert!(rayleigh_trace(0, 10, 0.5, &mut rng(1)).is_err());
        assert!(rayleigh_trace(0, 0, 0.003, &mut rng(1)).is_err());
    }

    #[test]
    fn trace_is_deterministic() {
        let a = rayleigh_trace(0, 5000, 0.003, &mut rng(9)).unwrap();
        let b = rayleigh_trace(0, 5000, 0.003, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reanchoring_keeps_phasors_exact() {
        let mut fader = SosFader::new(0.01, &mut rng(4)).unwrap();
        let gains: Vec<Complex64> = (0..3000).map(|_| fader.next_gain()).collect();
        for &t in &[0usize, 1023, 1024, 2999] {
            let direct: Complex64 = fader
                .omegas
                .iter()
                .zip(&fader.offsets)
                .map(|(w, o)| Complex64::from_polar(1.0, w * t as f64 + o))
                .sum::<Complex64>()
                * fader.scale;
            assert!((direct - gains[t]).norm() < 1e-9);
        }
    }

    #[test]
    fn phase_convention() {
        let trace = FadingTrace::constant(0, Complex64::from_polar(0.8, -0.3), 2);
        assert!((trace.amplitude(0) - 0.8).abs() < 1e-15);
        assert!((trace.phase(1) - 0.3).abs() < 1e-15);
        let aligned = trace.with_phase_model(PhaseModel::Aligned);
        assert_eq!(aligned.phase(0), 0.0);
        assert!((aligned.amplitude(0) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn coherence_drops_with_doppler() {
        let lag = 20;
        let slow = rayleigh_trace(0, 100_000, 0.002, &mut rng(5)).unwrap();
        let fast = rayleigh_trace(0, 100_000, 0.01, &mut rng(5)).unwrap();
        let r_slow = empirical_autocorrelation(&slow.gains, lag)[lag];
        let r_fast = empirical_autocorrelation(&fast.gains, lag)[lag];
        assert!(r_slow > r_fast, "{r_slow} <= {r_fast}");
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 10_000;
        let amps: Vec<f64> = (0..n)
            .map(|i| {
                let p = (i as f64 + 0.5) / n as f64;
                (-(1.0 - p).ln()).sqrt()
            })
            .collect();
        assert!(ks_rayleigh(&amps) <= 0.5 / n as f64 + 1e-12);
    }
}
