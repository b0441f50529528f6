//! Regularised Conv+GRU autoencoder with a latent authentication head.

pub mod checkpoint;
mod classifier;
mod layers;
mod losses;
mod network;
mod train;

use ndarray::Array2;

pub use classifier::{ClassifierConfig, GestureClassifier};
pub use losses::{
    approx_mrr, approx_mrr_loss, hard_mrr, kl_loss, reparameterize, sample_latent, total_loss, total_loss_batch,
    wae_loss, LatentDistribution, LossItem, LossTerms, LossWeights, ReconstructionKind, Regularizer, TotalGrad,
};
pub use network::Architecture;
pub use train::{train, validation_indices, train_with_validation, EarlyStopping, EpochRecord, TrainConfig, TrainingCurves, TrainOutcome};

use crate::data::{ChannelStats, GestureWindow};
use crate::error::{Error, Result};
use crate::seed;
use network::Network;

/// Trainable generative model: parameters plus everything needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub arch: Architecture,
    /// Flat parameters, always exactly representable as `f32`.
    pub params: Vec<f64>,
    pub seed: u64,
    pub weights: LossWeights,
    /// Normalisation statistics of the training partition.
    pub stats: Option<ChannelStats>,
    /// User ids in authentication-head order.
    pub roster: Vec<u32>,
    pub trained: bool,
    net: Network,
}

impl Model {
    /// Freshly initialised (untrained) model.
    pub fn new(arch: Architecture, roster: Vec<u32>, weights: LossWeights, seed: u64) -> Result<Self> {
        if arch.n_users != roster.len() {
            return Err(Error::InvalidArgument(format!(
                "architecture has {} users, roster {}",
                arch.n_users,
                roster.len()
            )));
        }
        weights.validate()?;
        let net = Network::new(&arch)?;
        let params = net.init_params(&mut seed::rng(seed, "model-init", 0));
        Ok(Self { arch, params, seed, weights, stats: None, roster, trained: false, net })
    }

    pub(crate) fn from_parts(
        arch: Architecture,
        params: Vec<f64>,
        seed: u64,
        weights: LossWeights,
        stats: Option<ChannelStats>,
        roster: Vec<u32>,
        trained: bool,
    ) -> Result<Self> {
        let net = Network::new(&arch)?;
        if params.len() != net.n_params {
            return Err(Error::Checkpoint(format!("expected {} parameters, found {}", net.n_params, params.len())));
        }
        Ok(Self { arch, params, seed, weights, stats, roster, trained, net })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub(crate) fn network(&self) -> &Network {
        &self.net
    }

    fn check_input(&self, values: &Array2<f64>) -> Result<()> {
        if values.dim() != (self.arch.input_len, self.arch.channels) {
            return Err(Error::Shape(format!(
                "expected {}x{}, got {:?}",
                self.arch.input_len,
                self.arch.channels,
                values.dim()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("encoder input".into()));
        }
        Ok(())
    }

    /// Posterior of an already normalised window.
    pub fn encode(&self, values: &Array2<f64>) -> Result<LatentDistribution> {
        self.check_input(values)?;
        let flat: Vec<f64> = values.iter().copied().collect();
        let out = self.net.encode(&self.params, &flat).out;
        let d = self.arch.latent_dim;
        LatentDistribution::new(out[..d].to_vec(), out[d..].to_vec())
    }

    fn stats(&self) -> Result<&ChannelStats> {
        self.stats.as_ref().ok_or_else(|| Error::InvalidArgument("model has no normalisation statistics".into()))
    }

    /// Posterior of a window in sensor units, normalised with the stored statistics.
    pub fn encode_window(&self, window: &GestureWindow) -> Result<LatentDistribution> {
        self.encode(&self.stats()?.normalize_values(&window.values))
    }

    /// Decoded window in normalised units.
    pub fn decode(&self, z: &[f64]) -> Result<Array2<f64>> {
        if z.len() != self.arch.latent_dim {
            return Err(Error::Shape(format!("latent vector of length {}, expected {}", z.len(), self.arch.latent_dim)));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent vector".into()));
        }
        let out = self.net.decode(&self.params, z).out;
        Ok(Array2::from_shape_vec((self.arch.input_len, self.arch.channels), out).expect("decoder output shape"))
    }

    /// Decoded window in sensor units.
    pub fn decode_denormalized(&self, z: &[f64]) -> Result<Array2<f64>> {
        let y = self.decode(z)?;
        Ok(self.stats()?.denormalize_values(&y))
    }

    /// Deterministic reconstruction (decoded posterior mean) in sensor units.
    pub fn reconstruct(&self, window: &GestureWindow) -> Result<Array2<f64>> {
        let d = self.encode_window(window)?;
        self.decode_denormalized(&d.mean)
    }

    /// Authentication-head scores for a latent vector, one per roster user.
    pub fn auth_scores(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.arch.latent_dim {
            return Err(Error::Shape(format!("latent vector of length {}", z.len())));
        }
        Ok(self.net.auth(&self.params, z).scores)
    }

    pub fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::Untrained)
        }
    }
}
