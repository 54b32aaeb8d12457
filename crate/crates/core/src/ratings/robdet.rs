//! Robustness screening of rating profiles before training.
//!
//! Any detector that maps a rating matrix to one accept/reject bit per
//! profile can gate the training set. The default flags profiles that sit
//! far from the per-item consensus or that rate unusually many items, the
//! two signatures of injected shilling profiles.

use super::{RatingMatrix, RatingsError};

/// One bit per profile: `true` = accept, `false` = reject.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RobDetVerdict {
    bits: Vec<bool>,
}

impl RobDetVerdict {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn accept_all(num_users: u32) -> Self {
        Self {
            bits: vec![true; num_users as usize],
        }
    }

    pub fn accepted(&self, user: u32) -> bool {
        self.bits.get(user as usize).copied().unwrap_or(false)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn accepted_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

pub trait ProfileDetector {
    fn name(&self) -> &'static str;
    fn verdict(&self, matrix: &RatingMatrix) -> RobDetVerdict;
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub name: String,
    /// Reject when the mean absolute deviation from item means exceeds this.
    pub deviation_threshold: f64,
    /// Reject when the filler-size z-score exceeds this.
    pub filler_z_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            name: DeviationDetector::NAME.to_string(),
            deviation_threshold: 1.5,
            filler_z_threshold: 3.0,
        }
    }
}

/// Per-profile statistics used by [`DeviationDetector`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileScore {
    pub mean_abs_deviation: f64,
    pub filler_z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationDetector {
    pub deviation_threshold: f64,
    pub filler_z_threshold: f64,
}

impl DeviationDetector {
    pub const NAME: &'static str = "deviation";

    pub fn scores(matrix: &RatingMatrix) -> Vec<ProfileScore> {
        let nu = matrix.num_users() as usize;
        if nu == 0 {
            return Vec::new();
        }
        let ni = matrix.num_items() as usize;
        let mut item_sum = vec![0f64; ni];
        let mut item_cnt = vec![0u32; ni];
        for r in matrix.entries() {
            item_sum[r.item as usize] += r.value as f64;
            item_cnt[r.item as usize] += 1;
        }
        let item_mean: Vec<f64> = item_sum
            .iter()
            .zip(&item_cnt)
            .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
            .collect();

        let sizes: Vec<f64> = (0..nu as u32)
            .map(|u| matrix.user_ratings(u).len() as f64)
            .collect();
        let mean_size = sizes.iter().sum::<f64>() / nu as f64;
        let var = sizes.iter().map(|s| (s - mean_size).powi(2)).sum::<f64>() / nu as f64;
        let sd = var.sqrt();

        (0..nu as u32)
            .map(|u| {
                let row = matrix.user_ratings(u);
                let mad = if row.is_empty() {
                    0.0
                } else {
                    row.iter()
                        .map(|r| (r.value as f64 - item_mean[r.item as usize]).abs())
                        .sum::<f64>()
                        / row.len() as f64
                };
                let z = if sd > 0.0 {
                    (sizes[u as usize] - mean_size) / sd
                } else {
                    0.0
                };
                ProfileScore {
                    mean_abs_deviation: mad,
                    filler_z: z,
                }
            })
            .collect()
    }
}

impl ProfileDetector for DeviationDetector {
    fn name(&self) -> &'static str {
        Self::NAME
    }

    fn verdict(&self, matrix: &RatingMatrix) -> RobDetVerdict {
        let bits = Self::scores(matrix)
            .into_iter()
            .map(|s| {
                s.mean_abs_deviation <= self.deviation_threshold
                    && s.filler_z <= self.filler_z_threshold
            })
            .collect();
        RobDetVerdict { bits }
    }
}

/// Accepts every profile.
#[derive(Debug, Clone, Copy, Default)]
pub struct AcceptAll;

impl ProfileDetector for AcceptAll {
    fn name(&self) -> &'static str {
        "accept-all"
    }

    fn verdict(&self, matrix: &RatingMatrix) -> RobDetVerdict {
        RobDetVerdict::accept_all(matrix.num_users())
    }
}

fn build_detector(config: &DetectorConfig) -> Result<Box<dyn ProfileDetector>, RatingsError> {
    match config.name.as_str() {
        DeviationDetector::NAME => {
            if config.deviation_threshold.is_nan() || config.filler_z_threshold.is_nan() {
                return Err(RatingsError::InvalidDetectorConfig(
                    "thresholds must be numbers".into(),
                ));
            }
            Ok(Box::new(DeviationDetector {
                deviation_threshold: config.deviation_threshold,
                filler_z_threshold: config.filler_z_threshold,
            }))
        }
        "accept-all" => Ok(Box::new(AcceptAll)),
        other => Err(RatingsError::UnknownDetector(other.to_string())),
    }
}

pub fn robdet_filter(
    matrix: &RatingMatrix,
    config: &DetectorConfig,
) -> Result<RobDetVerdict, RatingsError> {
    Ok(build_detector(config)?.verdict(matrix))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Honest users rate a random 40% of items near a per-item mean drawn
    /// around 3; `attackers` extra users rate every item 5.
    fn population(seed: u64, honest: u32, items: u32, attackers: u32) -> RatingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<i32> = (0..items).map(|_| rng.gen_range(2..=4)).collect();
        let mut cells = Vec::new();
        for u in 0..honest {
            for j in 0..items {
                if rng.gen_bool(0.4) {
                    let r = (centers[j as usize] + rng.gen_range(-1..=1)).clamp(1, 5);
                    cells.push((u, j, r as u8));
                }
            }
        }
        for a in 0..attackers {
            for j in 0..items {
                cells.push((honest + a, j, 5));
            }
        }
        RatingMatrix::from_entries(honest + attackers, items, 5, cells).unwrap()
    }

    #[test]
    fn injected_max_profile_rejected() {
        let m = population(1, 60, 30, 1);
        let scores = DeviationDetector::scores(&m);
        // independent recomputation of the attacker's statistic
        let mut item_mean = vec![(0.0, 0); 30];
        for r in m.entries() {
            item_mean[r.item as usize].0 += r.value as f64;
            item_mean[r.item as usize].1 += 1;
        }
        let mad: f64 = (0..30)
            .map(|j| (5.0 - item_mean[j].0 / item_mean[j].1 as f64).abs())
            .sum::<f64>()
            / 30.0;
        assert!((scores[60].mean_abs_deviation - mad).abs() < 1e-12);
        assert!(mad > 1.5);

        let v = robdet_filter(&m, &DetectorConfig::default()).unwrap();
        assert!(!v.accepted(60));
    }

    #[test]
    fn honest_population_accepted() {
        let m = population(2, 60, 30, 0);
        let scores = DeviationDetector::scores(&m);
        assert!(scores
            .iter()
            .all(|s| s.mean_abs_deviation <= 1.5 && s.filler_z <= 3.0));
        let v = robdet_filter(&m, &DetectorConfig::default()).unwrap();
        assert_eq!(v.accepted_count(), 60);
    }

    #[test]
    fn empty_profile_set() {
        let m = RatingMatrix::from_entries(0, 3, 5, []).unwrap();
        assert!(robdet_filter(&m, &DetectorConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn unknown_detector() {
        let m = population(3, 5, 5, 0);
        let cfg = DetectorConfig {
            name: "nope".into(),
            ..DetectorConfig::default()
        };
        assert!(matches!(
            robdet_filter(&m, &cfg),
            Err(RatingsError::UnknownDetector(n)) if n == "nope"
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn deterministic_and_monotone(seed in 0u64..1000, low in 0.2f64..1.5, bump in 0.0f64..1.0) {
            let m = population(seed, 25, 12, 2);
            let cfg = |t: f64| DetectorConfig { deviation_threshold: t, ..DetectorConfig::default() };
            let a = robdet_filter(&m, &cfg(low)).unwrap();
            prop_assert_eq!(&a, &robdet_filter(&m, &cfg(low)).unwrap());
            let b = robdet_filter(&m, &cfg(low + bump)).unwrap();
            for u in 0..m.num_users() {
                prop_assert!(!a.accepted(u) || b.accepted(u));
            }
        }
    }
}
