use std::collections::BTreeMap;
use std::fmt::Write;

use crate::expert::{ExpertError, ExpertModel};
use crate::ratings::RatingMatrix;

/// Prediction counts keyed by tenths of a star.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Histogram {
    pub buckets: BTreeMap<i64, u64>,
    /// Number of (user, unrated item) pairs evaluated.
    pub pairs: u64,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.buckets.values().sum()
    }
}

/// Predicts every unrated item of every user in `dataset` and buckets the
/// estimate rounded to one decimal.
pub fn histogram(model: &ExpertModel, dataset: &RatingMatrix) -> Result<Histogram, ExpertError> {
    let m = model.num_items();
    if dataset.num_items() as usize != m {
        return Err(ExpertError::DimensionMismatch {
            expected: m,
            got: dataset.num_items() as usize,
        });
    }
    let mut h = Histogram::default();
    for u in 0..dataset.num_users() {
        let row = dataset.dense_row(u);
        let rated = dataset.user_ratings(u);
        let mean = if rated.is_empty() {
            model.global_mean
        } else {
            rated.iter().map(|r| r.value as f64).sum::<f64>() / rated.len() as f64
        };
        let preds = model.predict_external_all(&row, mean)?;
        for (j, p) in preds.into_iter().enumerate() {
            if row[j] != 0 {
                continue;
            }
            *h.buckets.entry((p * 10.0).round() as i64).or_default() += 1;
            h.pairs += 1;
        }
    }
    Ok(h)
}

/// `value,count` with one-decimal values.
pub fn histogram_csv(h: &Histogram) -> String {
    let mut out = String::from("value,count\n");
    for (&k, &c) in &h.buckets {
        let sign = if k < 0 { "-" } else { "" };
        let a = k.unsigned_abs();
        writeln!(out, "{sign}{}.{},{c}", a / 10, a % 10).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_format() {
        let mut h = Histogram::default();
        h.buckets.insert(49, 3);
        h.buckets.insert(-3, 1);
        h.buckets.insert(0, 2);
        assert_eq!(histogram_csv(&h), "value,count\n-0.3,1\n0.0,2\n4.9,3\n");
    }
}
