//! BPSK data, spreading and the composite chip-rate received signal.

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{add_awgn, FadingTrace, NoiseSpec};
use crate::error::{invalid, Error, Result};
use crate::sequences::SpreadingCode;

/// Maps bit 0 to +1 and bit 1 to -1.
pub fn modulate_bpsk(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&b| bpsk_symbol(b)).collect()
}

#[inline]
pub fn bpsk_symbol(bit: u8) -> f64 {
    if bit & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `m` equiprobable bits.
pub fn random_bits<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<u8> {
    (0..m).map(|_| u8::from(rng.random::<bool>())).collect()
}

/// One user's transmitted symbols together with its code and channel.
#[derive(Debug, Clone)]
pub struct UserFrame {
    pub symbols: Vec<f64>,
    pub code: SpreadingCode,
    pub trace: FadingTrace,
}

impl UserFrame {
    pub fn new(symbols: Vec<f64>, code: SpreadingCode, trace: FadingTrace) -> Result<Self> {
        if symbols.len() != trace.len() {
            return Err(Error::LengthMismatch(symbols.len(), trace.len()));
        }
        Ok(Self { symbols, code, trace })
    }
}

/// Chip-rate samples of one symbol period.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub symbol: usize,
    pub samples: Vec<Complex64>,
}

impl ReceivedFrame {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Writes `sum_k gain_k * symbol_k * c_k` into `out`.
pub fn superpose(codes: &[&SpreadingCode], gains: &[Complex64], symbols: &[f64], out: &mut [Complex64]) {
    out.fill(Complex64::new(0.0, 0.0));
    for ((code, &gain), &b) in codes.iter().zip(gains).zip(symbols) {
        let amp = gain * b;
        for (o, &c) in out.iter_mut().zip(code.chips()) {
            *o += amp * c;
        }
    }
}

/// Received frame for symbol `m`: every user's faded, spread symbol plus AWGN.
pub fn compose_received<R: Rng + ?Sized>(
    users: &[UserFrame],
    noise: &NoiseSpec,
    m: usize,
    rng: &mut R,
) -> Result<ReceivedFrame> {
    let first = users.first().ok_or_else(|| invalid("at least one user is required"))?;
    let n = first.code.len();
    for u in users {
        if u.code.len() != n {
            return Err(Error::LengthMismatch(n, u.code.len()));
        }
        if m >= u.symbols.len() {
            return Err(invalid(format!(
                "symbol index {m} beyond frame of {} symbols",
                u.symbols.len()
            )));
        }
    }
    let codes: Vec<&SpreadingCode> = users.iter().map(|u| &u.code).collect();
    let gains: Vec<Complex64> = users.iter().map(|u| u.trace.gains[m]).collect();
    let symbols: Vec<f64> = users.iter().map(|u| u.symbols[m]).collect();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    superpose(&codes, &gains, &symbols, &mut samples);
    add_awgn(noise, &mut samples, rng);
    Ok(ReceivedFrame { symbol: m, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::rayleigh_trace;
    use crate::sequences::{gold_family, DEFAULT_PAIR_DEGREE_5};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn static_user(code: &SpreadingCode, gain: f64, symbols: Vec<f64>) -> UserFrame {
        let m = symbols.len();
        UserFrame::new(
            symbols,
            code.clone(),
            FadingTrace::constant(0, Complex64::new(gain, 0.0), m),
        )
        .unwrap()
    }

    #[test]
    fn bpsk_mapping() {
        assert_eq!(modulate_bpsk(&[0, 1, 0]), vec![1.0, -1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = modulate_bpsk(&random_bits(1000, &mut rng));
        let power = s.iter().map(|x| x * x).sum::<f64>() / s.len() as f64;
        assert_eq!(power, 1.0);
        let again = modulate_bpsk(&random_bits(1000, &mut ChaCha8Rng::seed_from_u64(1)));
        assert_eq!(s, again);
    }

    #[test]
    fn single_user_frame_is_the_code() {
        let fam = gold_family(5, DEFAULT_PAIR_DEGREE_5).unwrap();
        let code = &fam.codes()[2];
        let user = static_user(code, 1.0, vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let frame = compose_received(&[user], &NoiseSpec::off(), 0, &mut rng).unwrap();
        for (s, c) in frame.samples.iter().zip(code.chips()) {
            assert_eq!(s.re, *c);
            assert_eq!(s.im, 0.0);
        }
    }

    #[test]
    fn opposite_symbols_on_one_code_cancel() {
        let fam = gold_family(5, DEFAULT_PAIR_DEGREE_5).unwrap();
        let code = &fam.codes()[0];
        let users = [static_user(code, 1.0, vec![1.0]), static_user(code, 1.0, vec![-1.0])];
        let frame = compose_received(&users, &NoiseSpec::off(), 0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(frame.samples.iter().all(|s| s.norm() == 0.0));
    }

    #[test]
    fn mismatched_spreading_factor_rejected() {
        let a = SpreadingCode::from_bipolar(&[1, -1, 1]).unwrap();
        let b = SpreadingCode::from_bipolar(&[1, -1, 1, 1]).unwrap();
        let users = [static_user(&a, 1.0, vec![1.0]), static_user(&b, 1.0, vec![1.0])];
        let err = compose_received(&users, &NoiseSpec::off(), 0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(err, Err(Error::LengthMismatch(3, 4))));
    }

    #[test]
    fn energy_bookkeeping_twenty_users() {
        let fam = gold_family(5, DEFAULT_PAIR_DEGREE_5).unwrap();
        let k = 20;
        let m = 20_000;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let users: Vec<UserFrame> = (0..k)
            .map(|i| {
                let trace = rayleigh_trace(i, m, 0.05, &mut rng).unwrap();
                let symbols = modulate_bpsk(&random_bits(m, &mut rng));
                UserFrame::new(symbols, fam.codes()[i].clone(), trace).unwrap()
            })
            .collect();
        let mut total = 0.0;
        for sym in 0..m {
            let f = compose_received(&users, &NoiseSpec::off(), sym, &mut rng).unwrap();
            total += f.samples.iter().map(|s| s.norm_sqr()).sum::<f64>();
        }
        let per_symbol = total / m as f64;
        assert!((per_symbol - k as f64).abs() < 0.05 * k as f64, "{per_symbol}");
        let per_chip = per_symbol / 31.0;
        assert!((per_chip - 20.0 / 31.0).abs() < 0.05 * 20.0 / 31.0);
    }
}
