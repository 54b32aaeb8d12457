//! Threshold-set recommendation protocols and the arithmetic they share.
//!
//! A prediction is carried as the integer `x·θ + y` with `0 ≤ y < θ`, where
//! `x` counts tenths of a star. The reduction phase lets the user learn
//! `x + ε` behind a mask, where the carry `ε ∈ {0, 1}` is 1 with
//! probability `y/θ`. The evaluation phase then tests that value against
//! the public set `{V_1, .., V_T}`.

pub mod noproxy;
pub mod proxy;
mod codec;
mod rekey;

pub use rekey::{rekey_mask, rekey_masked, rekey_proxy, rekey_unmask, RekeyOutcome};

use std::collections::BTreeSet;

use rand::RngCore;
use rug::Integer;
use thiserror::Error;

use crate::khprf::PrfError;
use crate::paillier::{Ciphertext, PaillierError, PublicKey};
use crate::rng::random_u128_bits;
use crate::swhe::SwheError;

/// Statistical masking parameter, in bits.
pub const LAMBDA: u32 = 40;
/// Most thresholds per query; keeps the membership product at depth 2.
pub const MAX_THRESHOLDS: usize = 4;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("decryption size anomaly at item {item}")]
    SizeAnomaly { item: usize },
    #[error("unexpected message: {0}")]
    Unexpected(String),
    #[error("session mismatch")]
    SessionMismatch,
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("malformed payload: {0}")]
    Malformed(String),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Swhe(#[from] SwheError),
    #[error(transparent)]
    Prf(#[from] PrfError),
}

impl ProtocolError {
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            ProtocolError::Config(_)
                | ProtocolError::Swhe(SwheError::InvalidParams(_))
                | ProtocolError::Swhe(SwheError::DepthExceeded { .. })
        )
    }
}

/// `x·θ + y` encoding. `x` is in units of `1/granularity` stars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPointSpec {
    pub theta: u64,
    pub granularity: u32,
    /// Predictions are clamped to `[0, r_max + 1]` before encoding.
    pub r_max: u8,
}

impl Default for FixedPointSpec {
    fn default() -> Self {
        Self {
            theta: 1000,
            granularity: 10,
            r_max: 5,
        }
    }
}

impl FixedPointSpec {
    pub fn with_theta(theta: u64) -> Self {
        Self {
            theta,
            ..Self::default()
        }
    }

    /// Total scale `S = θ · granularity`.
    pub fn scale(&self) -> u128 {
        self.theta as u128 * self.granularity as u128
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        if self.theta < 2 {
            return Err(ProtocolError::Config("θ must be at least 2".into()));
        }
        if self.granularity == 0 {
            return Err(ProtocolError::Config("granularity must be positive".into()));
        }
        Ok(())
    }

    /// `(x, y)` with `x·θ + y = round(estimate · S)`.
    pub fn encode_prediction(&self, estimate: f64) -> Result<(i64, u64), ProtocolError> {
        if estimate.is_nan() {
            return Err(ProtocolError::Config("prediction is NaN".into()));
        }
        let clamped = estimate.clamp(0.0, self.r_max as f64 + 1.0);
        // scale in two steps so θ up to 10^15 keeps the integer part exact
        let g = self.granularity as f64;
        let tenths = clamped * g;
        let whole = tenths.floor();
        let frac = ((tenths - whole) * self.theta as f64).round() as u128;
        let v = whole as u128 * self.theta as u128 + frac;
        let theta = self.theta as u128;
        Ok(((v / theta) as i64, (v % theta) as u64))
    }
}

/// Public thresholds in x-units, distinct and in descending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdSet {
    values: Vec<i64>,
}

impl ThresholdSet {
    pub fn new(mut values: Vec<i64>) -> Result<Self, ProtocolError> {
        values.sort_unstable_by(|a, b| b.cmp(a));
        values.dedup();
        if values.is_empty() || values.len() > MAX_THRESHOLDS {
            return Err(ProtocolError::Config(format!(
                "need 1..={MAX_THRESHOLDS} distinct thresholds, got {}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v < 0) {
            return Err(ProtocolError::Config("thresholds must be non-negative".into()));
        }
        Ok(Self { values })
    }

    /// Parses `5.0,4.9` at the granularity of `spec`.
    pub fn parse(text: &str, spec: &FixedPointSpec) -> Result<Self, ProtocolError> {
        let g = spec.granularity as f64;
        let values = text
            .split(',')
            .map(|part| {
                let part = part.trim();
                let stars: f64 = part
                    .parse()
                    .map_err(|_| ProtocolError::Config(format!("bad threshold '{part}'")))?;
                let units = stars * g;
                if !units.is_finite() || (units - units.round()).abs() > 1e-6 {
                    return Err(ProtocolError::Config(format!(
                        "threshold '{part}' is not a multiple of 1/{}",
                        spec.granularity
                    )));
                }
                Ok(units.round() as i64)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(values)
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn contains(&self, x: i64) -> bool {
        self.values.contains(&x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskSign {
    /// `⊕ (r1·θ + r2)`, proxy-free protocol.
    Plus,
    /// `⊕ ((L − r1)·θ + r2)` with the public lift `L = 2^λ`, proxy protocol.
    Minus,
}

/// RecSys-private masks for one item.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReductionEntry {
    pub r1: u64,
    pub r2: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReductionRecord {
    pub entries: Vec<ReductionEntry>,
}

pub fn lift() -> Integer {
    Integer::from(1) << LAMBDA
}

/// Samples masks: `r1` with `λ` bits, `r2` uniform in `[0, θ)`.
pub fn sample_masks<R: RngCore + ?Sized, S: RngCore + ?Sized>(
    m: usize,
    theta: u64,
    r1_rng: &mut R,
    r2_rng: &mut S,
) -> ReductionRecord {
    let entries = (0..m)
        .map(|_| ReductionEntry {
            r1: random_u128_bits(r1_rng, LAMBDA) as u64,
            r2: sample_below(r2_rng, theta),
        })
        .collect();
    ReductionRecord { entries }
}

fn sample_below<R: RngCore + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// The additive mask as a signed integer.
pub fn mask_value(entry: &ReductionEntry, theta: u64, sign: MaskSign) -> Integer {
    let theta = Integer::from(theta);
    let r1 = match sign {
        MaskSign::Plus => Integer::from(entry.r1),
        MaskSign::Minus => lift() - entry.r1,
    };
    r1 * theta + entry.r2
}

/// Checks that masked plaintexts stay far from wrapping mod `n`.
pub fn check_guard(pk: &PublicKey, theta: u64, x_bits: u32) -> Result<(), ProtocolError> {
    let theta_bits = 64 - theta.leading_zeros();
    let need = LAMBDA + 2 + x_bits + theta_bits + LAMBDA;
    if need + 2 > pk.bits() {
        return Err(ProtocolError::Config(format!(
            "masked values need {need} bits, Paillier modulus has {}",
            pk.bits()
        )));
    }
    Ok(())
}

/// `ct ⊕ mask`; the result decrypts to `(x ± r1 [+ L])·θ + y + r2`.
pub fn mask_for_reduction(
    pk: &PublicKey,
    ct: &Ciphertext,
    entry: &ReductionEntry,
    theta: u64,
    sign: MaskSign,
) -> Result<Ciphertext, ProtocolError> {
    Ok(pk.add_plain_signed(ct, &mask_value(entry, theta, sign))?)
}

/// `⌊α / θ⌋`, also for negative `α`.
pub fn unmask_round(alpha: &Integer, theta: u64) -> Integer {
    let (q, _) = alpha.clone().div_rem_floor(Integer::from(theta));
    q
}

/// `1` iff `y + r2 ≥ θ`.
pub fn carry(y: u64, r2: u64, theta: u64) -> u8 {
    (y as u128 + r2 as u128 >= theta as u128) as u8
}

/// Bound on `|α|` outside of which the user aborts.
pub fn alpha_bound(theta: u64) -> Integer {
    Integer::from(theta) << (LAMBDA + 12)
}

/// `{ j unrated : x_j + ε_j ∈ V }`.
pub fn oracle_recommend(
    x: &[i64],
    rated: &[bool],
    thresholds: &ThresholdSet,
    eps: &[u8],
) -> BTreeSet<usize> {
    (0..x.len())
        .filter(|&j| !rated[j] && thresholds.contains(x[j] + eps[j] as i64))
        .collect()
}

/// Whether `output` lies between the certain and the possible sets.
pub fn sandwich_holds(
    x: &[i64],
    rated: &[bool],
    thresholds: &ThresholdSet,
    output: &BTreeSet<usize>,
) -> bool {
    (0..x.len()).filter(|&j| !rated[j]).all(|j| {
        let lo = thresholds.contains(x[j]);
        let hi = thresholds.contains(x[j] + 1);
        let inside = output.contains(&j);
        !(lo && hi && !inside) && !(inside && !(lo || hi))
    }) && output.iter().all(|&j| j < x.len() && !rated[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;

    #[test]
    fn encode_examples() {
        let s = FixedPointSpec::default();
        assert_eq!(s.encode_prediction(4.93).unwrap(), (49, 300));
        assert_eq!(s.encode_prediction(5.0).unwrap(), (50, 0));
        assert_eq!(s.encode_prediction(0.0).unwrap(), (0, 0));
        assert_eq!(s.encode_prediction(-1.0).unwrap(), (0, 0));
        assert_eq!(s.encode_prediction(9.0).unwrap(), (60, 0));
        assert!(s.encode_prediction(f64::NAN).is_err());
        let wide = FixedPointSpec::with_theta(1_000_000_000_000_000);
        assert_eq!(wide.encode_prediction(4.25).unwrap(), (42, 500_000_000_000_000));
    }

    #[test]
    fn thresholds_parse() {
        let s = FixedPointSpec::default();
        let t = ThresholdSet::parse("4.9, 5.0", &s).unwrap();
        assert_eq!(t.values(), &[50, 49]);
        assert!(ThresholdSet::parse("4.95", &s).is_err());
        assert!(ThresholdSet::parse("x", &s).is_err());
        assert!(ThresholdSet::parse("1,2,3,4,5", &s).is_err());
        assert!(ThresholdSet::new(vec![]).is_err());
    }

    #[test]
    fn reduction_arithmetic() {
        let theta = 1000u64;
        let e = ReductionEntry { r1: 7, r2: theta - 1 };
        let alpha = Integer::from(50 * theta) + mask_value(&e, theta, MaskSign::Plus);
        assert_eq!(alpha, 57 * 1000 + 999);
        assert_eq!(unmask_round(&alpha, theta), 57);
        assert_eq!(carry(0, e.r2, theta), 0);

        let y = 300;
        let e = ReductionEntry { r1: 11, r2: theta - y };
        let alpha = Integer::from(50 * theta + y) + mask_value(&e, theta, MaskSign::Plus);
        assert_eq!(carry(y, e.r2, theta), 1);
        assert_eq!(unmask_round(&alpha, theta), 50 + 11 + 1);

        let e = ReductionEntry { r1: 0, r2: 0 };
        let alpha = Integer::from(42 * theta + 5) + mask_value(&e, theta, MaskSign::Plus);
        assert_eq!(unmask_round(&alpha, theta), 42);

        let e = ReductionEntry { r1: 9, r2: 10 };
        let alpha = Integer::from(50 * theta + 995) + mask_value(&e, theta, MaskSign::Minus);
        assert_eq!(unmask_round(&alpha, theta), lift() + 50 - 9 + 1);

        assert_eq!(unmask_round(&Integer::from(0), theta), 0);
        assert_eq!(unmask_round(&Integer::from(999), theta), 0);
        assert_eq!(unmask_round(&Integer::from(-1), theta), -1);
    }

    #[test]
    fn oracle_examples() {
        let v = ThresholdSet::new(vec![50, 49]).unwrap();
        let x = [50, 49, 48];
        let got = oracle_recommend(&x, &[false; 3], &v, &[0, 0, 1]);
        assert_eq!(got.into_iter().collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(oracle_recommend(&x, &[true; 3], &v, &[0, 0, 1]).is_empty());
        let v50 = ThresholdSet::new(vec![50]).unwrap();
        assert!(oracle_recommend(&[0, 0], &[false; 2], &v50, &[0, 1]).is_empty());
    }

    #[test]
    fn masks_in_range() {
        let mut a = derive_rng(1, "r1");
        let mut b = derive_rng(1, "r2");
        let rec = sample_masks(500, 1000, &mut a, &mut b);
        assert!(rec.entries.iter().all(|e| e.r1 < 1 << LAMBDA && e.r2 < 1000));
    }
}
