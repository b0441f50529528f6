//! Time-series dissimilarities and differentiable reconstruction losses.
//!
//! Multichannel inputs are `timesteps x channels` matrices. Every loss returns its value
//! together with the gradient with respect to the *second* argument (the reconstruction).
//! DTW-family measures are applied channel by channel and summed.

mod dtw;
mod feature_loss;
mod keogh;
mod mse;
mod soft_dtw;

use ndarray::{Array, Array2, ArrayView2, Dimension, Ix2};
use serde::{Deserialize, Serialize};

pub use dtw::dtw;
pub use feature_loss::feature_loss;
pub use keogh::{envelope, keogh_lb, klb_mod, klb_mod_with_envelopes, Envelope, KlbEnvelopes, KLB_WIDTHS};
pub use mse::mse;
pub use soft_dtw::{soft_dtw, soft_dtw_series, SoftDtwConfig};

use crate::error::{Error, Result};

/// A loss value and its gradient with respect to the second argument.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<D: Dimension = Ix2> {
    pub value: f64,
    pub gradient: Array<f64, D>,
}

impl<D: Dimension> LossValue<D> {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

impl LossValue<Ix2> {
    pub fn zeros(shape: (usize, usize)) -> Self {
        Self { value: 0.0, gradient: Array2::zeros(shape) }
    }

    /// `self + weight * other`.
    pub fn add_scaled(mut self, other: &LossValue<Ix2>, weight: f64) -> Self {
        self.value += weight * other.value;
        self.gradient.scaled_add(weight, &other.gradient);
        self
    }
}

pub(crate) fn check_same_shape(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Shape(format!("{:?} vs {:?}", x.dim(), y.dim())));
    }
    if x.is_empty() {
        return Err(Error::Shape("empty series".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinedKind {
    /// `mse + w * feature_loss`, default `w = 0.1`.
    MseFeature,
    /// `klb_mod + w * feature_loss`, default `w = 0.01`.
    KlbModFeature,
}

impl CombinedKind {
    pub fn default_feature_weight(self) -> f64 {
        match self {
            CombinedKind::MseFeature => 0.1,
            CombinedKind::KlbModFeature => 0.01,
        }
    }
}

/// Reconstruction losses available to the autoencoder trainer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "snake_case")]
pub enum ReconstructionLoss {
    Mse,
    SoftDtw { gamma: f64 },
    KlbMod,
    Feature,
    Combined { kind: CombinedKind, feature_weight: f64 },
}

impl Default for ReconstructionLoss {
    fn default() -> Self {
        ReconstructionLoss::Combined { kind: CombinedKind::KlbModFeature, feature_weight: 0.01 }
    }
}

impl ReconstructionLoss {
    pub fn evaluate(&self, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<LossValue> {
        match *self {
            ReconstructionLoss::Mse => mse(x, y),
            ReconstructionLoss::SoftDtw { gamma } => soft_dtw(x, y, SoftDtwConfig::new(gamma)?),
            ReconstructionLoss::KlbMod => klb_mod(x, y),
            ReconstructionLoss::Feature => feature_loss(x, y),
            ReconstructionLoss::Combined { kind, feature_weight } => {
                combined_loss_weighted(kind, x, y, feature_weight)
            }
        }
    }
}

/// Combined loss with the default feature weight for `kind`.
pub fn combined_loss(kind: CombinedKind, x: ArrayView2<f64>, y: ArrayView2<f64>) -> Result<LossValue> {
    combined_loss_weighted(kind, x, y, kind.default_feature_weight())
}

pub fn combined_loss_weighted(
    kind: CombinedKind,
    x: ArrayView2<f64>,
    y: ArrayView2<f64>,
    feature_weight: f64,
) -> Result<LossValue> {
    let base = match kind {
        CombinedKind::MseFeature => mse(x, y)?,
        CombinedKind::KlbModFeature => klb_mod(x, y)?,
    };
    if feature_weight == 0.0 {
        return Ok(base);
    }
    Ok(base.add_scaled(&feature_loss(x, y)?, feature_weight))
}
