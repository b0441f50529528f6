//! Latent regularisers, the approximate-MRR authentication loss and the composite loss.

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::layers::sigmoid;
use crate::dissimilarity::{CombinedKind, LossValue, ReconstructionLoss};
use crate::error::{Error, Result};
use crate::seed::Rng;

/// Gaussian posterior emitted by the encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentDistribution {
    pub mean: Vec<f64>,
    pub log_variance: Vec<f64>,
}

impl LatentDistribution {
    pub fn new(mean: Vec<f64>, log_variance: Vec<f64>) -> Result<Self> {
        if mean.len() != log_variance.len() || mean.is_empty() {
            return Err(Error::Shape(format!("mean {} vs log-variance {}", mean.len(), log_variance.len())));
        }
        Ok(Self { mean, log_variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_variance).all(|v| v.is_finite())
    }
}

/// `z = mean + exp(log_variance / 2) * eps`.
pub fn reparameterize(dist: &LatentDistribution, eps: &[f64]) -> Vec<f64> {
    dist.mean
        .iter()
        .zip(&dist.log_variance)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// Draws standard-normal noise from `rng` and reparameterises.
pub fn sample_latent(dist: &LatentDistribution, rng: &mut Rng) -> Vec<f64> {
    let eps: Vec<f64> = (0..dist.dim()).map(|_| StandardNormal.sample(rng)).collect();
    reparameterize(dist, &eps)
}

/// Mean over latent dimensions of `-0.5 (1 + lv - mu^2 - exp(lv))`.
///
/// The gradient has two rows: with respect to the mean, then the log-variance.
pub fn kl_loss(dist: &LatentDistribution) -> LossValue {
    let d = dist.dim();
    let mut grad = Array2::zeros((2, d));
    let mut value = 0.0;
    for i in 0..d {
        let (m, lv) = (dist.mean[i], dist.log_variance[i]);
        let e = lv.exp();
        value += -0.5 * (1.0 + lv - m * m - e);
        grad[[0, i]] = m / d as f64;
        grad[[1, i]] = -0.5 * (1.0 - e) / d as f64;
    }
    LossValue { value: value / d as f64, gradient: grad }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Kernel-free WAE penalty between encoded means and Gaussian draws (both `n x d`).
///
/// Gradient is with respect to the means.
pub fn wae_loss(means: ArrayView2<f64>, draws: ArrayView2<f64>) -> Result<LossValue> {
    let (n, d) = means.dim();
    if draws.dim() != (n, d) {
        return Err(Error::Shape(format!("means {:?} vs draws {:?}", means.dim(), draws.dim())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("WAE penalty needs a batch of at least 2".into()));
    }
    let row = |m: &ArrayView2<f64>, i: usize| m.row(i).to_vec();
    let e: Vec<Vec<f64>> = (0..n).map(|i| row(&means, i)).collect();
    let z: Vec<Vec<f64>> = (0..n).map(|i| row(&draws, i)).collect();
    let nf = n as f64;
    let pair = 1.0 / (nf * (nf - 1.0));
    let cross = 2.0 / (nf * nf);
    let (mut ee, mut zz, mut ez) = (0.0, 0.0, 0.0);
    let mut grad = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                ee += sq_dist(&e[i], &e[j]);
                zz += sq_dist(&z[i], &z[j]);
                for k in 0..d {
                    // (i, j) and (j, i) both contribute 2 (e_i - e_j)
                    grad[[i, k]] += pair * 4.0 * (e[i][k] - e[j][k]);
                }
            }
            ez += sq_dist(&e[i], &z[j]);
            for k in 0..d {
                grad[[i, k]] -= cross * 2.0 * (e[i][k] - z[j][k]);
            }
        }
    }
    Ok(LossValue { value: pair * ee + pair * zz - cross * ez, gradient: grad })
}

/// `1 - mean(1 / r)` with the smoothed rank `r = 1 + sum_{j != t} sigmoid((s_j - s_t) / tau)`.
pub fn approx_mrr_loss(scores: ArrayView2<f64>, true_users: &[usize], tau: f64) -> Result<LossValue> {
    let (b, k) = scores.dim();
    if b == 0 || true_users.len() != b {
        return Err(Error::Shape(format!("{b} score rows for {} labels", true_users.len())));
    }
    if tau <= 0.0 {
        return Err(Error::InvalidArgument("temperature must be positive".into()));
    }
    let mut grad = Array2::zeros((b, k));
    let mut total = 0.0;
    for (i, &t) in true_users.iter().enumerate() {
        if t >= k {
            return Err(Error::InvalidArgument(format!("true user {t} outside {k} scores")));
        }
        let st = scores[[i, t]];
        let mut rank = 1.0;
        for j in 0..k {
            if j != t {
                rank += sigmoid((scores[[i, j]] - st) / tau);
            }
        }
        total += 1.0 / rank;
        // d(1 - 1/r)/dr = 1/r^2, scaled by 1/b for the batch mean
        let outer = 1.0 / (rank * rank * b as f64);
        for j in 0..k {
            if j != t {
                let s = sigmoid((scores[[i, j]] - st) / tau);
                let ds = outer * s * (1.0 - s) / tau;
                grad[[i, j]] += ds;
                grad[[i, t]] -= ds;
            }
        }
    }
    Ok(LossValue { value: 1.0 - total / b as f64, gradient: grad })
}

/// Mean reciprocal rank of the true user, ties at the mid-rank.
pub fn hard_mrr(scores: ArrayView2<f64>, true_users: &[usize]) -> f64 {
    let b = scores.nrows();
    let mut total = 0.0;
    for (i, &t) in true_users.iter().enumerate() {
        let st = scores[[i, t]];
        let row = scores.row(i);
        let above = row.iter().filter(|&&s| s > st).count() as f64;
        let tied = row.iter().filter(|&&s| s == st).count() as f64 - 1.0;
        total += 1.0 / (1.0 + above + tied / 2.0);
    }
    total / b as f64
}

/// Mean of `1 / r` with the smoothed rank, i.e. `1 - approx_mrr_loss`.
pub fn approx_mrr(scores: ArrayView2<f64>, true_users: &[usize], tau: f64) -> Result<f64> {
    Ok(1.0 - approx_mrr_loss(scores, true_users, tau)?.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Kl,
    Wae,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconstructionKind {
    Mse,
    SoftDtw,
    KlbMod,
    Feature,
    MseFeature,
    KlbModFeature,
}

/// Scalar weights of the composite training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    /// Regulariser weight.
    pub beta: f64,
    /// Authentication-loss weight.
    pub alpha: f64,
    /// Soft-DTW smoothing (used only by `ReconstructionKind::SoftDtw`).
    pub gamma: f64,
    /// Feature-loss weight inside the combined reconstruction losses.
    pub feature_mix: f64,
    /// Temperature of the smoothed rank.
    pub tau: f64,
    pub reconstruction: ReconstructionKind,
    pub regularizer: Regularizer,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta: 1e-4,
            alpha: 1e-2,
            gamma: 0.1,
            feature_mix: 0.01,
            tau: 1.0,
            reconstruction: ReconstructionKind::KlbModFeature,
            regularizer: Regularizer::Kl,
        }
    }
}

impl LossWeights {
    /// Defaults with `kind` as the reconstruction loss and its customary feature weight.
    pub fn for_reconstruction(kind: ReconstructionKind) -> Self {
        let feature_mix = match kind {
            ReconstructionKind::MseFeature => CombinedKind::MseFeature.default_feature_weight(),
            _ => CombinedKind::KlbModFeature.default_feature_weight(),
        };
        Self { reconstruction: kind, feature_mix, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.alpha >= 0.0 && self.feature_mix >= 0.0) {
            return Err(Error::InvalidArgument("beta, alpha and feature_mix must be >= 0".into()));
        }
        if !(self.gamma > 0.0 && self.tau > 0.0) {
            return Err(Error::InvalidArgument("gamma and tau must be > 0".into()));
        }
        Ok(())
    }

    pub fn reconstruction_loss(&self) -> ReconstructionLoss {
        match self.reconstruction {
            ReconstructionKind::Mse => ReconstructionLoss::Mse,
            ReconstructionKind::SoftDtw => ReconstructionLoss::SoftDtw { gamma: self.gamma },
            ReconstructionKind::KlbMod => ReconstructionLoss::KlbMod,
            ReconstructionKind::Feature => ReconstructionLoss::Feature,
            ReconstructionKind::MseFeature => {
                ReconstructionLoss::Combined { kind: CombinedKind::MseFeature, feature_weight: self.feature_mix }
            }
            ReconstructionKind::KlbModFeature => {
                ReconstructionLoss::Combined { kind: CombinedKind::KlbModFeature, feature_weight: self.feature_mix }
            }
        }
    }
}

/// The three unweighted terms and the weighted total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub reconstruction: f64,
    pub regularization: f64,
    pub auth: f64,
}

/// Gradients of the batch total with respect to every per-sample quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalGrad {
    pub reconstruction: Vec<Array2<f64>>,
    /// `n x d`
    pub mean: Array2<f64>,
    /// `n x d`
    pub log_variance: Array2<f64>,
    /// `n x users`
    pub scores: Array2<f64>,
}

/// One training item: real window, its reconstruction, posterior, head scores and user index.
pub struct LossItem<'a> {
    pub x: ArrayView2<'a, f64>,
    pub reconstruction: ArrayView2<'a, f64>,
    pub dist: &'a LatentDistribution,
    pub scores: &'a [f64],
    pub true_user: usize,
}

/// Batch-mean reconstruction + `beta` * regulariser + `alpha` * batch-mean auth loss.
///
/// `draws` (Gaussian samples, `n x d`) is required for the WAE regulariser.
pub fn total_loss_batch(items: &[LossItem<'_>], weights: &LossWeights, draws: Option<ArrayView2<f64>>) -> Result<(LossTerms, TotalGrad)> {
    let n = items.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let d = items[0].dist.dim();
    let users = items[0].scores.len();
    let recon_loss = weights.reconstruction_loss();
    let nf = n as f64;

    let mut recon_value = 0.0;
    let mut recon_grads = Vec::with_capacity(n);
    for it in items {
        let lv = recon_loss.evaluate(it.x, it.reconstruction)?;
        recon_value += lv.value / nf;
        recon_grads.push(lv.gradient / nf);
    }

    let mut g_mean = Array2::zeros((n, d));
    let mut g_lv = Array2::zeros((n, d));
    let reg_value = match weights.regularizer {
        Regularizer::Kl => {
            let mut v = 0.0;
            for (i, it) in items.iter().enumerate() {
                let kl = kl_loss(it.dist);
                v += kl.value / nf;
                for k in 0..d {
                    g_mean[[i, k]] += weights.beta * kl.gradient[[0, k]] / nf;
                    g_lv[[i, k]] += weights.beta * kl.gradient[[1, k]] / nf;
                }
            }
            v
        }
        Regularizer::Wae => {
            let draws = draws.ok_or_else(|| Error::InvalidArgument("WAE needs Gaussian draws".into()))?;
            let means = Array2::from_shape_fn((n, d), |(i, k)| items[i].dist.mean[k]);
            let w = wae_loss(means.view(), draws)?;
            g_mean.scaled_add(weights.beta, &w.gradient);
            w.value
        }
    };

    let scores = Array2::from_shape_fn((n, users), |(i, j)| items[i].scores[j]);
    let labels: Vec<usize> = items.iter().map(|it| it.true_user).collect();
    let auth = approx_mrr_loss(scores.view(), &labels, weights.tau)?;
    let g_scores = auth.gradient * weights.alpha;

    let terms = LossTerms {
        total: recon_value + weights.beta * reg_value + weights.alpha * auth.value,
        reconstruction: recon_value,
        regularization: reg_value,
        auth: auth.value,
    };
    Ok((terms, TotalGrad { reconstruction: recon_grads, mean: g_mean, log_variance: g_lv, scores: g_scores }))
}

/// Single-sample composite loss with the KL regulariser.
pub fn total_loss(
    x: ArrayView2<f64>,
    reconstruction: ArrayView2<f64>,
    dist: &LatentDistribution,
    scores: &[f64],
    true_user: usize,
    weights: &LossWeights,
) -> Result<(LossTerms, TotalGrad)> {
    if weights.regularizer != Regularizer::Kl {
        return Err(Error::InvalidArgument("single-sample loss supports the KL regulariser only".into()));
    }
    let item = LossItem { x, reconstruction, dist, scores, true_user };
    total_loss_batch(&[item], weights, None)
}
