#![allow(dead_code)]

use mudsim::channel::FadingTrace;
use mudsim::sequences::SpreadingCode;
use mudsim::transmitter::{ReceivedFrame, UserFrame};
use num_complex::Complex64;

/// `J0(x)` from its power series; accurate to ~1e-15 for `|x| < 10`.
pub fn j0_series(x: f64) -> f64 {
    let q = -(x * x) / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

/// Coherent BPSK bit error rate in Rayleigh fading at mean SNR per bit `snr`.
pub fn rayleigh_bpsk_ber(snr: f64) -> f64 {
    0.5 * (1.0 - (snr / (1.0 + snr)).sqrt())
}

/// `int_0^inf log2(1 + x) e^{-x/mean} / mean dx` by composite Simpson after
/// substituting `x = -mean ln(1 - u)`, which maps the tail onto `[0, 1)`.
pub fn exponential_capacity_quadrature(mean: f64) -> f64 {
    let n = 200_000;
    let h = 1.0 / n as f64;
    let f = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let x = -mean * (1.0 - u).ln();
        (1.0 + x).log2()
    };
    let mut s = f(0.0) + f(1.0 - 1e-15);
    for i in 1..n {
        let u = i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(u);
    }
    s * h / 3.0
}

/// Noise-free frame `sum_k g_k e^{-j phi_k} b_k c_k`, built chip by chip.
pub fn clean_frame(
    codes: &[SpreadingCode],
    amplitudes: &[f64],
    phases: &[f64],
    bits: &[f64],
    symbol: usize,
) -> ReceivedFrame {
    let n = codes[0].len();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..codes.len() {
        let beta = Complex64::from_polar(amplitudes[k], -phases[k]);
        for (s, &c) in samples.iter_mut().zip(codes[k].chips()) {
            *s += beta * bits[k] * c;
        }
    }
    ReceivedFrame { symbol, samples }
}

/// A user with a constant channel over `symbols.len()` symbols.
pub fn static_user(code: &SpreadingCode, gain: Complex64, symbols: Vec<f64>) -> UserFrame {
    let m = symbols.len();
    UserFrame::new(symbols, code.clone(), FadingTrace::constant(0, gain, m)).unwrap()
}

/// Length-4 Walsh codes as spreading codes.
pub fn walsh4() -> Vec<SpreadingCode> {
    [[1, 1, 1, 1], [1, -1, 1, -1], [1, 1, -1, -1], [1, -1, -1, 1]]
        .iter()
        .map(|s| SpreadingCode::from_bipolar(s).unwrap())
        .collect()
}
