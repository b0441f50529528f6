//! Latent sampling around a target user's embeddings, and decoding into synthetic gestures.
//!
//! Every sample uses its own child generator, so sample `i` is independent of `count`.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{GestureWindow, Label};
use crate::error::{Error, Result};
use crate::genmodel::{LatentDistribution, Model};
use crate::seed::{self, Rng};

pub const ADVERSARIAL_TARGET_WEIGHT: f64 = 0.85;
pub const DEFAULT_SELF_MIXED_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    pub dist: LatentDistribution,
    pub terminal_id: Option<u8>,
}

/// Posterior of every enrolled gesture of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserEmbeddings {
    pub user_id: u32,
    pub entries: Vec<EmbeddingEntry>,
}

impl UserEmbeddings {
    pub fn new(user_id: u32, entries: Vec<EmbeddingEntry>) -> Result<Self> {
        let Some(first) = entries.first() else {
            return Err(Error::InsufficientData(format!("user {user_id} has no embeddings")));
        };
        let d = first.dist.dim();
        if entries.iter().any(|e| e.dist.dim() != d) {
            return Err(Error::Shape("embeddings of mixed dimension".into()));
        }
        Ok(Self { user_id, entries })
    }

    /// Embeds `windows` (sensor units) with `model`.
    pub fn from_windows(model: &Model, user_id: u32, windows: &[GestureWindow]) -> Result<Self> {
        let entries = windows
            .iter()
            .map(|w| Ok(EmbeddingEntry { dist: model.encode_window(w)?, terminal_id: w.terminal_id }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(user_id, entries)
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dist.dim()
    }

    fn mean(&self, i: usize) -> &[f64] {
        &self.entries[i].dist.mean
    }

    fn pick(&self, rng: &mut Rng) -> usize {
        rng.random_range(0..self.entries.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Neighbourhood,
    SelfMixed,
    Adversarial,
    SameUser,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Neighbourhood, Strategy::SelfMixed, Strategy::Adversarial, Strategy::SameUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Neighbourhood => "neighbourhood",
            Strategy::SelfMixed => "self_mixed",
            Strategy::Adversarial => "adversarial",
            Strategy::SameUser => "same_user",
        }
    }

    /// Whether the strategy needs other users' embeddings.
    pub fn needs_others(self) -> bool {
        matches!(self, Strategy::Adversarial | Strategy::SameUser)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == norm || (norm == "neighborhood" && *st == Strategy::Neighbourhood))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sampling strategy `{s}`")))
    }
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be >= 1".into()));
    }
    Ok(())
}

fn check_others(target: &UserEmbeddings, others: &[UserEmbeddings]) -> Result<()> {
    if others.is_empty() {
        return Err(Error::InsufficientData("strategy needs at least one other user".into()));
    }
    if others.iter().any(|o| o.dim() != target.dim()) {
        return Err(Error::Shape("other users' embeddings differ in dimension".into()));
    }
    Ok(())
}

fn child(seed: u64, strategy: Strategy, i: usize) -> Rng {
    seed::rng(seed, strategy.as_str(), i as u64)
}

/// Pick an entry uniformly, then draw each coordinate from N(mean, variance).
pub fn sample_neighbourhood(emb: &UserEmbeddings, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_count(count)?;
    Ok((0..count)
        .map(|i| {
            let mut rng = child(seed, Strategy::Neighbourhood, i);
            let dist = &emb.entries[emb.pick(&mut rng)].dist;
            dist.mean
                .iter()
                .zip(&dist.log_variance)
                .map(|(m, lv)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + (0.5 * lv).exp() * e
                })
                .collect()
        })
        .collect())
}

/// Convex combination with Dirichlet(1) weights of `k` distinct entry means.
pub fn sample_self_mixed(emb: &UserEmbeddings, count: usize, k: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    check_count(count)?;
    let n = emb.entries.len();
    if n < 2 || k < 2 || k > n {
        return Err(Error::InvalidArgument(format!("self-mixed sampling needs 2 <= k <= entries, got k={k}, entries={n}")));
    }
    Ok((0..count)
        .map(|i| {
            let mut rng = child(seed, Strategy::SelfMixed, i);
            let chosen = index::sample(&mut rng, n, k).into_vec();
            let raw: Vec<f64> = (0..k).map(|_| Exp1.sample(&mut rng)).collect();
            let total: f64 = raw.iter().sum();
            let means: Vec<&[f64]> = chosen.iter().map(|&j| emb.mean(j)).collect();
            convex(&means, &raw.iter().map(|r| r / total).collect::<Vec<_>>())
        })
        .collect())
}

/// `0.85 * target mean + 0.15 * other mean`; the other user is uniform over users, then entries.
pub fn sample_adversarial(
    target: &UserEmbeddings,
    others: &[UserEmbeddings],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_count(count)?;
    check_others(target, others)?;
    Ok((0..count)
        .map(|i| {
            let mut rng = child(seed, Strategy::Adversarial, i);
            let t = target.mean(target.pick(&mut rng));
            let other = &others[rng.random_range(0..others.len())];
            let o = other.mean(other.pick(&mut rng));
            convex(&[t, o], &[ADVERSARIAL_TARGET_WEIGHT, 1.0 - ADVERSARIAL_TARGET_WEIGHT])
        })
        .collect())
}

/// Keeps the leading half of a target mean and takes the rest from another user's mean.
pub fn sample_same_user(
    target: &UserEmbeddings,
    others: &[UserEmbeddings],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    check_count(count)?;
    check_others(target, others)?;
    let keep = target.dim() / 2;
    Ok((0..count)
        .map(|i| {
            let mut rng = child(seed, Strategy::SameUser, i);
            let t = target.mean(target.pick(&mut rng));
            let other = &others[rng.random_range(0..others.len())];
            let o = other.mean(other.pick(&mut rng));
            t[..keep].iter().chain(&o[keep..]).copied().collect()
        })
        .collect())
}

/// Weighted sum, clamped coordinatewise to the inputs' range so rounding never leaves the hull.
fn convex(points: &[&[f64]], weights: &[f64]) -> Vec<f64> {
    (0..points[0].len())
        .map(|c| {
            let v: f64 = points.iter().zip(weights).map(|(p, w)| w * p[c]).sum();
            let lo = points.iter().map(|p| p[c]).fold(f64::INFINITY, f64::min);
            let hi = points.iter().map(|p| p[c]).fold(f64::NEG_INFINITY, f64::max);
            v.clamp(lo, hi)
        })
        .collect()
}

/// Latent points for `strategy`. `k` is used only by the self-mixed strategy.
pub fn sample(
    strategy: Strategy,
    target: &UserEmbeddings,
    others: &[UserEmbeddings],
    count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    match strategy {
        Strategy::Neighbourhood => sample_neighbourhood(target, count, seed),
        Strategy::SelfMixed => sample_self_mixed(target, count, k, seed),
        Strategy::Adversarial => sample_adversarial(target, others, count, seed),
        Strategy::SameUser => sample_same_user(target, others, count, seed),
    }
}

/// Decodes latent points into gestures of `user_id`, in sensor units.
pub fn decode_points(model: &Model, user_id: u32, points: &[Vec<f64>]) -> Result<Vec<GestureWindow>> {
    model.require_trained()?;
    points
        .iter()
        .enumerate()
        .map(|(i, z)| GestureWindow::new(model.decode_denormalized(z)?, user_id, None, Label::Gesture, i as u64))
        .collect()
}

/// Samples with `strategy` and decodes: `count` synthetic gestures attributed to the target user.
pub fn generate(
    model: &Model,
    strategy: Strategy,
    target: &UserEmbeddings,
    others: &[UserEmbeddings],
    count: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<GestureWindow>> {
    model.require_trained()?;
    let points = sample(strategy, target, others, count, k, seed)?;
    decode_points(model, target.user_id, &points)
}
