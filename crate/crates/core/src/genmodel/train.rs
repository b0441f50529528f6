//! Mini-batch Adam training with early stopping on the validation total loss.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::losses::{hard_mrr, total_loss_batch, LatentDistribution, LossItem, LossTerms, LossWeights, Regularizer};
use super::network::{Architecture, AuthCache, DecoderCache, EncoderCache};
use super::Model;
use crate::data::{ChannelStats, GestureWindow};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validation_fraction: f64,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Layer sizes; `None` uses the standard architecture. The user count is always
    /// taken from the training data.
    pub architecture: Option<Architecture>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            patience: 150,
            max_epochs: 2000,
            batch_size: 64,
            validation_fraction: 0.2,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
            architecture: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patience < 1 || self.max_epochs < 1 || self.batch_size < 1 {
            return Err(Error::InvalidArgument("patience, max_epochs and batch_size must be >= 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument("validation_fraction must be in (0, 1)".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

/// Seeded random subset of `0..n` of size `round(n * fraction)` (at least 1, at most n - 1), sorted.
pub fn validation_indices(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    if n < 2 {
        return Vec::new();
    }
    let k = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, "validation-split", 0));
    let mut v = idx[..k].to_vec();
    v.sort_unstable();
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_reconstruction: f64,
    pub val_regularization: f64,
    pub val_auth: f64,
    pub val_approx_mrr: f64,
    pub val_hard_mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Stops once `patience` epochs pass without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: f64::INFINITY, best_epoch: 0 }
    }

    /// Records `loss` for `epoch` (1-based); returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch >= self.best_epoch + self.patience
    }
}

pub(crate) struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl Adam {
    pub(crate) fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            b1: cfg.adam_beta1,
            b2: cfg.adam_beta2,
            eps: cfg.adam_epsilon,
        }
    }

    pub(crate) fn step(&mut self, p: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..p.len() {
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g[i];
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g[i] * g[i];
            let update = self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
            // parameters stay f32-representable so checkpoints are exact
            p[i] = (p[i] - update) as f32 as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    pub curves: TrainingCurves,
}

/// Per-sample state kept between the forward and backward passes.
struct Forward {
    enc: EncoderCache,
    dec: DecoderCache,
    auth: AuthCache,
    dist: LatentDistribution,
    eps: Option<Vec<f64>>,
}

struct Prepared {
    /// Normalised values, flat and as a matrix.
    flat: Vec<f64>,
    matrix: Array2<f64>,
    user: usize,
}

fn forward(model: &Model, s: &Prepared, eps: Option<Vec<f64>>) -> Forward {
    let net = model.network();
    let d = model.arch.latent_dim;
    let enc = net.encode(&model.params, &s.flat);
    let dist = LatentDistribution { mean: enc.out[..d].to_vec(), log_variance: enc.out[d..].to_vec() };
    let z = match &eps {
        Some(e) => super::losses::reparameterize(&dist, e),
        None => dist.mean.clone(),
    };
    let dec = net.decode(&model.params, &z);
    let auth = net.auth(&model.params, &z);
    Forward { enc, dec, auth, dist, eps }
}

fn batch_terms(
    model: &Model,
    samples: &[&Prepared],
    fwd: &[Forward],
    draws: Option<&Array2<f64>>,
) -> Result<(LossTerms, super::losses::TotalGrad)> {
    let (l, c) = (model.arch.input_len, model.arch.channels);
    let recon: Vec<ArrayView2<f64>> =
        fwd.iter().map(|f| ArrayView2::from_shape((l, c), &f.dec.out[..]).expect("decoder output shape")).collect();
    let items: Vec<LossItem<'_>> = samples
        .iter()
        .zip(fwd)
        .zip(&recon)
        .map(|((s, f), r)| LossItem {
            x: s.matrix.view(),
            reconstruction: r.view(),
            dist: &f.dist,
            scores: &f.auth.scores,
            true_user: s.user,
        })
        .collect();
    total_loss_batch(&items, &model.weights, draws.map(|d| d.view()))
}

fn gaussian_draws(n: usize, d: usize, rng: &mut seed::Rng) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| StandardNormal.sample(rng))
}

/// Splits `windows` into training and validation parts and trains.
pub fn train(windows: &[GestureWindow], cfg: &TrainConfig, weights: &LossWeights) -> Result<TrainOutcome> {
    cfg.validate()?;
    let val_idx = validation_indices(windows.len(), cfg.validation_fraction, cfg.seed);
    let mut train_set = Vec::new();
    let mut val_set = Vec::new();
    let mut vi = val_idx.iter().peekable();
    for (i, w) in windows.iter().enumerate() {
        if vi.peek() == Some(&&i) {
            vi.next();
            val_set.push(w.clone());
        } else {
            train_set.push(w.clone());
        }
    }
    train_with_validation(&train_set, &val_set, cfg, weights)
}

/// Trains on `train_set`, selecting parameters by the validation total loss.
///
/// Windows are in sensor units; normalisation statistics are fitted on train + validation.
pub fn train_with_validation(
    train_set: &[GestureWindow],
    val_set: &[GestureWindow],
    cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    weights.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InsufficientData("training and validation sets must be non-empty".into()));
    }
    let stats = ChannelStats::fit(train_set.iter().chain(val_set))?;
    let mut users: BTreeMap<u32, usize> = BTreeMap::new();
    for w in train_set.iter().chain(val_set) {
        users.insert(w.user_id, 0);
    }
    if users.len() < 2 {
        return Err(Error::InsufficientData("training needs at least 2 users".into()));
    }
    for (i, v) in users.values_mut().enumerate() {
        *v = i;
    }
    let roster: Vec<u32> = users.keys().copied().collect();
    let mut arch = cfg.architecture.clone().unwrap_or_else(|| Architecture::new(roster.len()));
    arch.n_users = roster.len();
    let mut model = Model::new(arch, roster, *weights, cfg.seed)?;
    model.stats = Some(stats);

    let prepare = |w: &GestureWindow| -> Result<Prepared> {
        if w.values.dim() != (model.arch.input_len, model.arch.channels) {
            return Err(Error::Shape(format!("window {:?}", w.values.dim())));
        }
        let matrix = stats.normalize_values(&w.values);
        Ok(Prepared { flat: matrix.iter().copied().collect(), matrix, user: users[&w.user_id] })
    };
    let train_data = train_set.iter().map(prepare).collect::<Result<Vec<_>>>()?;
    let val_data = val_set.iter().map(prepare).collect::<Result<Vec<_>>>()?;

    let wae = weights.regularizer == Regularizer::Wae;
    if wae && (train_data.len() < 2 || val_data.len() < 2) {
        return Err(Error::InsufficientData("WAE training needs at least 2 training and 2 validation windows".into()));
    }
    let d = model.arch.latent_dim;
    let val_draws = wae.then(|| gaussian_draws(val_data.len(), d, &mut seed::rng(cfg.seed, "validation-draws", 0)));

    let mut adam = Adam::new(model.params.len(), cfg);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params.clone();
    let mut curves = TrainingCurves { epochs: Vec::new(), best_epoch: 0, stopped_early: false };
    let mut grad = vec![0.0; model.params.len()];

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_data.len()).collect();
        order.shuffle(&mut seed::rng(cfg.seed, "epoch-order", epoch as u64));
        let mut batches: Vec<Vec<usize>> = order.chunks(cfg.batch_size).map(|c| c.to_vec()).collect();
        if wae && batches.len() > 1 && batches.last().map_or(false, |b| b.len() < 2) {
            let tail = batches.pop().unwrap();
            batches.last_mut().unwrap().extend(tail);
        }
        let mut rng = seed::rng(cfg.seed, "epoch-noise", epoch as u64);
        let mut train_loss = 0.0;
        for (bi, batch) in batches.iter().enumerate() {
            let samples: Vec<&Prepared> = batch.iter().map(|&i| &train_data[i]).collect();
            let fwd: Vec<Forward> = samples
                .iter()
                .map(|s| {
                    let eps = (!wae).then(|| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect());
                    forward(&model, s, eps)
                })
                .collect();
            let draws = wae.then(|| gaussian_draws(samples.len(), d, &mut rng));
            let (terms, tg) = batch_terms(&model, &samples, &fwd, draws.as_ref())?;
            if !terms.total.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, loss: terms.total });
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            let net = model.network();
            for (i, f) in fwd.iter().enumerate() {
                let mut dz = net.auth_backward(&model.params, &mut grad, &f.auth, tg.scores.row(i).as_slice().unwrap());
                let drecon: Vec<f64> = tg.reconstruction[i].iter().copied().collect();
                for (a, b) in dz.iter_mut().zip(net.decode_backward(&model.params, &mut grad, &f.dec, &drecon)) {
                    *a += b;
                }
                let mut dout = vec![0.0; 2 * d];
                for k in 0..d {
                    dout[k] = dz[k] + tg.mean[[i, k]];
                    dout[d + k] = tg.log_variance[[i, k]];
                    if let Some(e) = &f.eps {
                        dout[d + k] += dz[k] * e[k] * 0.5 * (0.5 * f.dist.log_variance[k]).exp();
                    }
                }
                net.encode_backward(&model.params, &mut grad, &f.enc, &dout);
            }
            if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: bi, loss: *g });
            }
            adam.step(&mut model.params, &grad);
            train_loss += terms.total * batch.len() as f64 / train_data.len() as f64;
        }

        let record = evaluate(&model, &val_data, val_draws.as_ref(), epoch, train_loss)?;
        if !record.val_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: batches.len(), loss: record.val_loss });
        }
        if stopper.observe(epoch, record.val_loss) {
            best_params.clone_from(&model.params);
        }
        curves.epochs.push(record);
        if stopper.should_stop(epoch) {
            curves.stopped_early = true;
            break;
        }
    }
    curves.best_epoch = stopper.best_epoch;
    model.params = best_params;
    model.trained = true;
    Ok(TrainOutcome { model, curves })
}

fn evaluate(
    model: &Model,
    data: &[Prepared],
    draws: Option<&Array2<f64>>,
    epoch: usize,
    train_loss: f64,
) -> Result<EpochRecord> {
    let samples: Vec<&Prepared> = data.iter().collect();
    let fwd: Vec<Forward> = samples.iter().map(|s| forward(model, s, None)).collect();
    let (terms, _) = batch_terms(model, &samples, &fwd, draws)?;
    let scores = Array2::from_shape_fn((fwd.len(), model.arch.n_users), |(i, j)| fwd[i].auth.scores[j]);
    let labels: Vec<usize> = samples.iter().map(|s| s.user).collect();
    Ok(EpochRecord {
        epoch,
        train_loss,
        val_loss: terms.total,
        val_reconstruction: terms.reconstruction,
        val_regularization: terms.regularization,
        val_auth: terms.auth,
        val_approx_mrr: 1.0 - terms.auth,
        val_hard_mrr: hard_mrr(scores.view(), &labels),
    })
}
