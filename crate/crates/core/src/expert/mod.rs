//! Expert-based latent factor model.
//!
//! For an expert `t` with rating row `R_t` the model predicts
//!
//! ```text
//! r̂(t, j) = μ + b_t + b_j + b*_t + b*_j + (R_t A) q_jᵀ
//! ```
//!
//! where `μ`, `b_t`, `b_j` are frozen statistics of the (accepted) expert
//! set and `A`, `Q`, `b*` are fitted by SGD. An outside user `i` gets
//!
//! ```text
//! r̂(i, j) = mean(R_i) + b_j + avg_t(b*_t) + b*_j + (R_i A) q_jᵀ
//! ```

mod encrypted;
mod snapshot;

pub use encrypted::{encrypt_profile, EncryptedProfile, EncryptedScaling};
pub use snapshot::{read_model, write_model};

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::paillier::PaillierError;
use crate::ratings::{compute_stats, RatingMatrix, RatingsError, RobDetVerdict};
use crate::rng::derive_rng;

#[derive(Debug, Error)]
pub enum ExpertError {
    #[error("no accepted expert profiles to train on")]
    EmptyTrainingSet,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown expert {0}")]
    UnknownExpert(usize),
    #[error("unknown item {0}")]
    UnknownItem(usize),
    #[error("rating vector has {got} entries, model has {expected} items")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training diverged in epoch {0}")]
    Diverged(usize),
    #[error("scaled prediction may exceed the Paillier plaintext space")]
    ScalingOverflow,
    #[error("model snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Ratings(#[from] RatingsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight on `‖A‖²` and `‖b*_t‖²`.
    pub reg_user: f64,
    /// Weight on `‖Q‖²` and `‖b*_j‖²`.
    pub reg_item: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            k: 16,
            learning_rate: 0.005,
            epochs: 30,
            reg_user: 0.02,
            reg_item: 0.02,
            init_scale: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ExpertError> {
        let bad = |m: &str| Err(ExpertError::InvalidConfig(m.to_string()));
        if self.k == 0 {
            return bad("k must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.reg_user > 0.0 && self.reg_item > 0.0) {
            return bad("regularization weights must be positive");
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init scale must be non-negative");
        }
        Ok(())
    }
}

/// Trained parameters plus the expert data they were fitted on.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertModel {
    pub k: usize,
    /// `M × k`, row-major.
    pub a: Vec<f64>,
    /// `M × k`, row-major; row `j` is `q_j`.
    pub q: Vec<f64>,
    pub user_bias_star: Vec<f64>,
    pub item_bias_star: Vec<f64>,
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub avg_user_bias_star: f64,
    pub experts: RatingMatrix,
}

/// Gradient of [`ExpertModel::loss`], same layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGradient {
    pub a: Vec<f64>,
    pub q: Vec<f64>,
    pub user_bias_star: Vec<f64>,
    pub item_bias_star: Vec<f64>,
}

impl ModelGradient {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend(&self.q);
        v.extend(&self.user_bias_star);
        v.extend(&self.item_bias_star);
        v
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Objective after each epoch.
    pub epoch_loss: Vec<f64>,
    /// Training RMSE after each epoch.
    pub epoch_rmse: Vec<f64>,
}

impl ExpertModel {
    /// Zero factors and star biases over the given experts; statistics are
    /// computed from `experts`.
    pub fn zeroed(experts: RatingMatrix, k: usize) -> Result<Self, ExpertError> {
        let stats = compute_stats(&experts)?;
        let m = experts.num_items() as usize;
        let n = experts.num_users() as usize;
        Ok(Self {
            k,
            a: vec![0.0; m * k],
            q: vec![0.0; m * k],
            user_bias_star: vec![0.0; n],
            item_bias_star: vec![0.0; m],
            global_mean: stats.global_mean,
            user_bias: (0..n as u32).map(|u| stats.user_bias(u)).collect(),
            item_bias: (0..m as u32).map(|j| stats.item_bias(j)).collect(),
            avg_user_bias_star: 0.0,
            experts,
        })
    }

    pub fn num_items(&self) -> usize {
        self.item_bias.len()
    }

    pub fn num_experts(&self) -> usize {
        self.user_bias.len()
    }

    pub fn recompute_average(&mut self) {
        let n = self.user_bias_star.len();
        self.avg_user_bias_star = if n == 0 {
            0.0
        } else {
            self.user_bias_star.iter().sum::<f64>() / n as f64
        };
    }

    fn row_a(&self, l: usize) -> &[f64] {
        &self.a[l * self.k..(l + 1) * self.k]
    }

    fn row_q(&self, j: usize) -> &[f64] {
        &self.q[j * self.k..(j + 1) * self.k]
    }

    /// `R A` for a dense rating row.
    pub fn interaction(&self, ratings: &[u8]) -> Result<Vec<f64>, ExpertError> {
        if ratings.len() != self.num_items() {
            return Err(ExpertError::DimensionMismatch {
                expected: self.num_items(),
                got: ratings.len(),
            });
        }
        let mut p = vec![0.0; self.k];
        for (l, &r) in ratings.iter().enumerate() {
            if r != 0 {
                for (pk, ak) in p.iter_mut().zip(self.row_a(l)) {
                    *pk += r as f64 * ak;
                }
            }
        }
        Ok(p)
    }

    fn expert_interaction(&self, t: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.k];
        for r in self.experts.user_ratings(t as u32) {
            for (pk, ak) in p.iter_mut().zip(self.row_a(r.item as usize)) {
                *pk += r.value as f64 * ak;
            }
        }
        p
    }

    fn dot_q(&self, p: &[f64], j: usize) -> f64 {
        p.iter().zip(self.row_q(j)).map(|(x, y)| x * y).sum()
    }

    pub fn predict_expert(&self, t: usize, j: usize) -> Result<f64, ExpertError> {
        if t >= self.num_experts() {
            return Err(ExpertError::UnknownExpert(t));
        }
        if j >= self.num_items() {
            return Err(ExpertError::UnknownItem(j));
        }
        let p = self.expert_interaction(t);
        Ok(self.global_mean
            + self.user_bias[t]
            + self.item_bias[j]
            + self.user_bias_star[t]
            + self.item_bias_star[j]
            + self.dot_q(&p, j))
    }

    /// Item-only part of the external prediction: `b_j + avg(b*_t) + b*_j`.
    pub fn item_constant(&self, j: usize) -> f64 {
        self.item_bias[j] + self.avg_user_bias_star + self.item_bias_star[j]
    }

    pub fn predict_external(&self, ratings: &[u8], mean: f64, j: usize) -> Result<f64, ExpertError> {
        if j >= self.num_items() {
            return Err(ExpertError::UnknownItem(j));
        }
        let p = self.interaction(ratings)?;
        Ok(mean + self.item_constant(j) + self.dot_q(&p, j))
    }

    /// External predictions for every item.
    pub fn predict_external_all(&self, ratings: &[u8], mean: f64) -> Result<Vec<f64>, ExpertError> {
        let p = self.interaction(ratings)?;
        Ok((0..self.num_items())
            .map(|j| mean + self.item_constant(j) + self.dot_q(&p, j))
            .collect())
    }

    /// `½ Σ_R e² + ½ λ (‖A‖² + ‖b*_t‖²) + ½ μ (‖Q‖² + ‖b*_j‖²)` over the experts.
    pub fn loss(&self, reg_user: f64, reg_item: f64) -> f64 {
        let (sse, _) = self.squared_error();
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        0.5 * sse
            + 0.5 * reg_user * (sq(&self.a) + sq(&self.user_bias_star))
            + 0.5 * reg_item * (sq(&self.q) + sq(&self.item_bias_star))
    }

    fn squared_error(&self) -> (f64, usize) {
        let mut sse = 0.0;
        for t in 0..self.num_experts() {
            let p = self.expert_interaction(t);
            for r in self.experts.user_ratings(t as u32) {
                let j = r.item as usize;
                let pred = self.global_mean
                    + self.user_bias[t]
                    + self.item_bias[j]
                    + self.user_bias_star[t]
                    + self.item_bias_star[j]
                    + self.dot_q(&p, j);
                let e = r.value as f64 - pred;
                sse += e * e;
            }
        }
        (sse, self.experts.len())
    }

    pub fn training_rmse(&self) -> f64 {
        let (sse, n) = self.squared_error();
        if n == 0 {
            0.0
        } else {
            (sse / n as f64).sqrt()
        }
    }

    /// Full-batch gradient of [`Self::loss`].
    pub fn gradient(&self, reg_user: f64, reg_item: f64) -> ModelGradient {
        let k = self.k;
        let mut g = ModelGradient {
            a: self.a.iter().map(|x| reg_user * x).collect(),
            q: self.q.iter().map(|x| reg_item * x).collect(),
            user_bias_star: self.user_bias_star.iter().map(|x| reg_user * x).collect(),
            item_bias_star: self.item_bias_star.iter().map(|x| reg_item * x).collect(),
        };
        for t in 0..self.num_experts() {
            let row = self.experts.user_ratings(t as u32);
            let p = self.expert_interaction(t);
            for r in row {
                let j = r.item as usize;
                let pred = self.global_mean
                    + self.user_bias[t]
                    + self.item_bias[j]
                    + self.user_bias_star[t]
                    + self.item_bias_star[j]
                    + self.dot_q(&p, j);
                let e = r.value as f64 - pred;
                g.user_bias_star[t] -= e;
                g.item_bias_star[j] -= e;
                for c in 0..k {
                    g.q[j * k + c] -= e * p[c];
                }
                for s in row {
                    let l = s.item as usize;
                    for c in 0..k {
                        g.a[l * k + c] -= e * s.value as f64 * self.q[j * k + c];
                    }
                }
            }
        }
        g
    }

    /// Trainable parameters flattened in [`ModelGradient::to_vec`] order.
    pub fn params_vec(&self) -> Vec<f64> {
        let mut v = self.a.clone();
        v.extend(&self.q);
        v.extend(&self.user_bias_star);
        v.extend(&self.item_bias_star);
        v
    }

    pub fn set_params_vec(&mut self, v: &[f64]) {
        let (ma, mq) = (self.a.len(), self.q.len());
        let nu = self.user_bias_star.len();
        self.a.copy_from_slice(&v[..ma]);
        self.q.copy_from_slice(&v[ma..ma + mq]);
        self.user_bias_star.copy_from_slice(&v[ma + mq..ma + mq + nu]);
        self.item_bias_star.copy_from_slice(&v[ma + mq + nu..]);
    }
}

/// Fits the model on the profiles accepted by `verdict`.
pub fn train(
    matrix: &RatingMatrix,
    verdict: &RobDetVerdict,
    config: &TrainConfig,
) -> Result<ExpertModel, ExpertError> {
    train_with_report(matrix, verdict, config).map(|(m, _)| m)
}

pub fn train_with_report(
    matrix: &RatingMatrix,
    verdict: &RobDetVerdict,
    config: &TrainConfig,
) -> Result<(ExpertModel, TrainReport), ExpertError> {
    config.validate()?;
    if verdict.len() != matrix.num_users() as usize {
        return Err(ExpertError::DimensionMismatch {
            expected: matrix.num_users() as usize,
            got: verdict.len(),
        });
    }
    let experts = matrix.restrict_users(verdict);
    if experts.is_empty() {
        return Err(ExpertError::EmptyTrainingSet);
    }
    let k = config.k;
    let mut model = ExpertModel::zeroed(experts, k)?;
    let mut rng = derive_rng(config.seed, "expert-sgd");
    let s = config.init_scale;
    for x in model.a.iter_mut().chain(model.q.iter_mut()) {
        *x = if s > 0.0 { rng.gen_range(-s..=s) } else { 0.0 };
    }

    let mut order: Vec<usize> = (0..model.experts.len()).collect();
    let mut report = TrainReport::default();
    let (eta, lu, li) = (config.learning_rate, config.reg_user, config.reg_item);
    let mut p_cache: Vec<Vec<f64>> = Vec::new();
    let mut err_q = vec![0.0; k];
    // A steps are divided by ‖R_t‖² so that p_t moves like a plain factor
    // step; unscaled updates blow up on long profiles.
    let row_norm: Vec<f64> = (0..model.num_experts())
        .map(|t| {
            let n: f64 = model.experts.user_ratings(t as u32).iter().map(|s| (s.value as f64).powi(2)).sum();
            n.max(1.0)
        })
        .collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        p_cache.clear();
        p_cache.extend((0..model.num_experts()).map(|t| model.expert_interaction(t)));
        for &idx in &order {
            let r = model.experts.entries()[idx];
            let (t, j) = (r.user as usize, r.item as usize);
            let p = &mut p_cache[t];
            let pred = model.global_mean
                + model.user_bias[t]
                + model.item_bias[j]
                + model.user_bias_star[t]
                + model.item_bias_star[j]
                + p.iter().zip(&model.q[j * k..(j + 1) * k]).map(|(x, y)| x * y).sum::<f64>();
            let e = r.value as f64 - pred;

            model.user_bias_star[t] += eta * (e - lu * model.user_bias_star[t]);
            model.item_bias_star[j] += eta * (e - li * model.item_bias_star[j]);
            for c in 0..k {
                err_q[c] = e * model.q[j * k + c];
            }
            for c in 0..k {
                let qc = model.q[j * k + c];
                model.q[j * k + c] += eta * (e * p[c] - li * qc);
            }
            // a_l for every item l rated by t, keeping p_t = R_t A in sync
            let row = model.experts.user_ratings(t as u32);
            let eta_a = eta / row_norm[t];
            for s in row {
                let l = s.item as usize;
                let rv = s.value as f64;
                for c in 0..k {
                    let old = model.a[l * k + c];
                    let new = old + eta_a * (rv * err_q[c] - lu * old);
                    model.a[l * k + c] = new;
                    p[c] += rv * (new - old);
                }
            }
        }
        let loss = model.loss(lu, li);
        if !loss.is_finite() {
            return Err(ExpertError::Diverged(epoch));
        }
        report.epoch_loss.push(loss);
        report.epoch_rmse.push(model.training_rmse());
    }
    model.recompute_average();
    Ok((model, report))
}
