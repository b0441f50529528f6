//! Conv+GRU binary classifier: the generative model's encoder with a single sigmoid output.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::layers::{sigmoid, ParamAlloc};
use super::network::{Architecture, Encoder};
use super::train::{Adam, TrainConfig};
use crate::data::{ChannelStats, GestureWindow};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Encoder sizes; the latent and head fields are ignored.
    pub architecture: Architecture,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 30, batch_size: 32, seed: 0, architecture: Architecture::new(2) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureClassifier {
    encoder: Encoder,
    params: Vec<f64>,
    stats: ChannelStats,
}

impl GestureClassifier {
    /// Fits with binary cross-entropy on `positive` (label 1) and `negative` (label 0).
    pub fn fit(positive: &[GestureWindow], negative: &[GestureWindow], cfg: &ClassifierConfig) -> Result<Self> {
        if positive.is_empty() || negative.is_empty() {
            return Err(Error::InsufficientData("classifier needs both classes".into()));
        }
        if cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::InvalidArgument("epochs, batch_size and learning_rate must be positive".into()));
        }
        cfg.architecture.validate()?;
        let stats = ChannelStats::fit(positive.iter().chain(negative))?;
        let mut alloc = ParamAlloc::default();
        let encoder = Encoder::new(&mut alloc, &cfg.architecture, 1);
        let mut params = alloc.init(&mut seed::rng(cfg.seed, "classifier-init", 0));
        let data: Vec<(Vec<f64>, f64)> = positive
            .iter()
            .map(|w| (w, 1.0))
            .chain(negative.iter().map(|w| (w, 0.0)))
            .map(|(w, y)| (stats.normalize_values(&w.values).iter().copied().collect(), y))
            .collect();
        let expected = cfg.architecture.input_len * cfg.architecture.channels;
        if data.iter().any(|(x, _)| x.len() != expected) {
            return Err(Error::Shape("classifier input does not match the architecture".into()));
        }
        let tc = TrainConfig { learning_rate: cfg.learning_rate, ..TrainConfig::default() };
        let mut adam = Adam::new(params.len(), &tc);
        let mut grad = vec![0.0; params.len()];
        for epoch in 0..cfg.epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            order.shuffle(&mut seed::rng(cfg.seed, "classifier-order", epoch as u64));
            for batch in order.chunks(cfg.batch_size) {
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in batch {
                    let (x, y) = &data[i];
                    let cache = encoder.forward(&params, x);
                    // d(BCE)/d(logit) = sigmoid(logit) - y
                    let dlogit = (sigmoid(cache.out[0]) - y) / batch.len() as f64;
                    encoder.backward(&params, &mut grad, &cache, &[dlogit]);
                }
                if grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite("classifier gradient".into()));
                }
                adam.step(&mut params, &grad);
            }
        }
        Ok(Self { encoder, params, stats })
    }

    /// Probability that `window` belongs to the positive class.
    pub fn predict_proba(&self, window: &GestureWindow) -> Result<f64> {
        let x: Vec<f64> = self.stats.normalize_values(&window.values).iter().copied().collect();
        if x.len() != self.params_input_len() {
            return Err(Error::Shape(format!("window {:?}", window.values.dim())));
        }
        Ok(sigmoid(self.encoder.forward(&self.params, &x).out[0]))
    }

    fn params_input_len(&self) -> usize {
        let a = self.encoder.arch();
        a.input_len * a.channels
    }
}
