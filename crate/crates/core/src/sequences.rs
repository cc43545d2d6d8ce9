//! Maximal-length and Gold spreading sequences.
//!
//! Sequences are produced by a Fibonacci LFSR. A tap set lists the nonzero
//! exponents of the connection polynomial above the constant term, so
//! `[5, 2]` stands for `x^5 + x^2 + 1` and drives the recurrence
//! `s[k+5] = s[k+2] ^ s[k]`.
//!
//! Bits map to chips as `0 -> +a`, `1 -> -a` with `a = 1/sqrt(N)`, which gives
//! every code unit energy over one symbol.

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Preferred pair used when a configuration does not name one.
pub const DEFAULT_PAIR_DEGREE_5: (&[u32], &[u32]) = (&[5, 2], &[5, 4, 3, 2]);

const MIN_DEGREE: u32 = 3;
const MAX_DEGREE: u32 = 16;

/// Known preferred pairs, keyed by register degree.
pub fn default_preferred_pair(degree: u32) -> Result<(&'static [u32], &'static [u32])> {
    let pair: (&'static [u32], &'static [u32]) = match degree {
        3 => (&[3, 1], &[3, 2]),
        5 => DEFAULT_PAIR_DEGREE_5,
        6 => (&[6, 1], &[6, 5, 2, 1]),
        7 => (&[7, 3], &[7, 3, 2, 1]),
        9 => (&[9, 4], &[9, 6, 4, 3]),
        10 => (&[10, 3], &[10, 8, 3, 2]),
        11 => (&[11, 2], &[11, 8, 5, 2]),
        _ => return Err(Error::NoDefaultPair(degree)),
    };
    Ok(pair)
}

/// A normalized antipodal spreading code.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingCode {
    signs: Vec<i8>,
    chips: Vec<f64>,
}

impl SpreadingCode {
    /// Builds a unit-energy code from a `±1` chip pattern.
    pub fn from_bipolar(signs: &[i8]) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::InvalidParameter("empty chip pattern".into()));
        }
        if let Some(bad) = signs.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::InvalidParameter(format!("chip value {bad} is not ±1")));
        }
        let amp = 1.0 / (signs.len() as f64).sqrt();
        Ok(Self {
            signs: signs.to_vec(),
            chips: signs.iter().map(|&s| f64::from(s) * amp).collect(),
        })
    }

    fn from_bits(bits: &[u8]) -> Self {
        let signs: Vec<i8> = bits.iter().map(|&b| bit_to_chip(b)).collect();
        Self::from_bipolar(&signs).expect("LFSR output is nonempty and bipolar")
    }

    /// Spreading factor N.
    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    /// Normalized chip values.
    pub fn chips(&self) -> &[f64] {
        &self.chips
    }

    /// Unnormalized `±1` chip pattern.
    pub fn signs(&self) -> &[i8] {
        &self.signs
    }

    /// Mean chip magnitude, `1/sqrt(N)` for an antipodal code.
    pub fn mean_amplitude(&self) -> f64 {
        self.chips.iter().map(|c| c.abs()).sum::<f64>() / self.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.chips.iter().map(|c| c * c).sum()
    }

    /// Periodic correlation of the `±1` patterns with `other` delayed by `shift` chips.
    pub fn bipolar_correlation(&self, other: &SpreadingCode, shift: usize) -> Result<i64> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch(self.len(), other.len()));
        }
        Ok(periodic_correlation(&self.signs, &other.signs, shift))
    }
}

/// Which construction produced a [`CodeFamily`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    Gold,
    MSequence,
}

/// An ordered set of equal-length codes.
#[derive(Debug, Clone)]
pub struct CodeFamily {
    kind: FamilyKind,
    degree: u32,
    codes: Vec<SpreadingCode>,
}

impl CodeFamily {
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn spreading_factor(&self) -> usize {
        (1usize << self.degree) - 1
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[SpreadingCode] {
        &self.codes
    }

    /// The first `k` codes in construction order.
    pub fn first(&self, k: usize) -> Result<&[SpreadingCode]> {
        if k == 0 || k > self.codes.len() {
            return Err(Error::InvalidParameter(format!(
                "requested {k} codes from a family of {}",
                self.codes.len()
            )));
        }
        Ok(&self.codes[..k])
    }

    /// SHA-256 over the chip patterns, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for code in &self.codes {
            let bytes: Vec<u8> = code.signs.iter().map(|&s| s as u8).collect();
            hasher.update(&bytes);
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[inline]
fn bit_to_chip(bit: u8) -> i8 {
    if bit == 0 {
        1
    } else {
        -1
    }
}

fn periodic_correlation(a: &[i8], b: &[i8], shift: usize) -> i64 {
    let n = a.len();
    (0..n).map(|i| i64::from(a[i]) * i64::from(b[(i + shift) % n])).sum()
}

fn feedback_mask(degree: u32, taps: &[u32]) -> Result<u32> {
    if !(MIN_DEGREE..=MAX_DEGREE).contains(&degree) {
        return Err(Error::UnsupportedDegree(degree));
    }
    let bad = || Error::InvalidTaps {
        degree,
        taps: taps.to_vec(),
    };
    if !taps.contains(&degree) {
        return Err(bad());
    }
    let mut mask = 1u32;
    for &t in taps {
        if t == 0 || t > degree {
            return Err(bad());
        }
        if t < degree {
            if mask & (1 << t) != 0 {
                return Err(bad());
            }
            mask |= 1 << t;
        }
    }
    Ok(mask)
}

/// Runs the LFSR for one full period and returns the output bits.
fn lfsr_bits(degree: u32, taps: &[u32], seed_state: u32) -> Result<Vec<u8>> {
    let mask = feedback_mask(degree, taps)?;
    let full = (1u32 << degree) - 1;
    if seed_state & full == 0 {
        return Err(Error::ZeroSeed);
    }
    let start = seed_state & full;
    let expected = full as usize;
    let mut state = start;
    let mut bits = Vec::with_capacity(expected);
    loop {
        bits.push((state & 1) as u8);
        let fb = (state & mask).count_ones() & 1;
        state = (state >> 1) | (fb << (degree - 1));
        if state == start || bits.len() > expected {
            break;
        }
    }
    if bits.len() != expected {
        return Err(Error::NonPrimitive {
            degree,
            taps: taps.to_vec(),
            period: bits.len(),
            expected,
        });
    }
    Ok(bits)
}

/// One period of the maximal-length sequence for `taps`, as `±1` chips.
///
/// Fails when the register fill is zero or when the taps do not give the
/// full period `2^degree - 1`.
pub fn m_sequence(degree: u32, taps: &[u32], seed_state: u32) -> Result<Vec<i8>> {
    Ok(lfsr_bits(degree, taps, seed_state)?
        .into_iter()
        .map(bit_to_chip)
        .collect())
}

/// Magnitude bound `t(n)` of the three-valued Gold cross-correlation spectrum.
pub fn gold_bound(degree: u32) -> i64 {
    1 + (1i64 << ((degree + 2) / 2))
}

/// Gold family: both m-sequences followed by `a XOR shift(b, s)` for every
/// cyclic shift `s` of the second sequence.
pub fn gold_family(degree: u32, preferred_pair: (&[u32], &[u32])) -> Result<CodeFamily> {
    let a = lfsr_bits(degree, preferred_pair.0, 1)?;
    let b = lfsr_bits(degree, preferred_pair.1, 1)?;
    let n = a.len();

    let t = gold_bound(degree);
    let allowed = [-t, -1, t - 2];
    let a_chips: Vec<i8> = a.iter().map(|&x| bit_to_chip(x)).collect();
    let b_chips: Vec<i8> = b.iter().map(|&x| bit_to_chip(x)).collect();
    for shift in 0..n {
        let value = periodic_correlation(&a_chips, &b_chips, shift);
        if !allowed.contains(&value) {
            return Err(Error::NotPreferredPair {
                degree,
                value,
                shift,
                allowed,
            });
        }
    }

    let mut codes = Vec::with_capacity(n + 2);
    codes.push(SpreadingCode::from_bits(&a));
    codes.push(SpreadingCode::from_bits(&b));
    for shift in 0..n {
        let product: Vec<u8> = (0..n).map(|i| a[i] ^ b[(i + shift) % n]).collect();
        codes.push(SpreadingCode::from_bits(&product));
    }
    Ok(CodeFamily {
        kind: FamilyKind::Gold,
        degree,
        codes,
    })
}

/// All cyclic shifts of one m-sequence.
pub fn msequence_family(degree: u32, taps: &[u32]) -> Result<CodeFamily> {
    let bits = lfsr_bits(degree, taps, 1)?;
    let n = bits.len();
    let codes = (0..n)
        .map(|shift| {
            let rotated: Vec<u8> = (0..n).map(|i| bits[(i + shift) % n]).collect();
            SpreadingCode::from_bits(&rotated)
        })
        .collect();
    Ok(CodeFamily {
        kind: FamilyKind::MSequence,
        degree,
        codes,
    })
}

/// Zero-lag normalized cross-correlation `<a, b>`.
pub fn cross_correlation(a: &SpreadingCode, b: &SpreadingCode) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(dot(a.chips(), b.chips()))
}

/// `K x K` matrix of zero-lag correlations.
pub fn correlation_matrix(codes: &[SpreadingCode]) -> Result<Vec<Vec<f64>>> {
    codes
        .iter()
        .map(|a| codes.iter().map(|b| cross_correlation(a, b)).collect())
        .collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
