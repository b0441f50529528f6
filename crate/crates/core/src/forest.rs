//! Random-forest authenticator over fixed-length feature vectors.
//!
//! Class weighting is done in the bootstrap: each tree draws `positive_weight * n_pos`
//! positives and `n_neg` negatives with replacement, so a tree always sees both classes.

use std::io::{Read, Write};

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const MAGIC: &[u8; 4] = b"UBRF";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Bootstrap multiplier for the positive class.
    pub positive_weight: usize,
    /// Features examined per node; `None` means `ceil(sqrt(d))`.
    pub max_features: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, positive_weight: 4, max_features: None, min_samples_split: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Node {
    Leaf { positive: bool },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { positive } => return positive,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub feature_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub depth: usize,
    pub nodes: usize,
    pub leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSummary {
    pub seed: u64,
    pub feature_count: usize,
    pub trees: Vec<TreeSummary>,
}

struct Builder<'a, R: AsRef<[f64]>> {
    rows: &'a [R],
    labels: &'a [bool],
    max_features: usize,
    min_samples_split: usize,
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

impl<R: AsRef<[f64]>> Builder<'_, R> {
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.rows[sample].as_ref()[feature]
    }

    /// Best split among `features`: (weighted child impurity, feature, threshold).
    fn best_split(&self, samples: &[usize], features: &[usize]) -> Option<(f64, usize, f64)> {
        let n = samples.len();
        let total_pos = samples.iter().filter(|&&s| self.labels[s]).count();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, bool)> = Vec::with_capacity(n);
        for &f in features {
            order.clear();
            order.extend(samples.iter().map(|&s| (self.value(s, f), self.labels[s])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_pos = 0;
            for i in 0..n - 1 {
                left_pos += order[i].1 as usize;
                let (a, b) = (order[i].0, order[i + 1].0);
                if a == b {
                    continue;
                }
                let nl = i + 1;
                let impurity = (nl as f64 * gini(left_pos, nl)
                    + (n - nl) as f64 * gini(total_pos - left_pos, n - nl))
                    / n as f64;
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                // strict comparison keeps the lowest feature, then the lowest threshold
                if best.is_none_or(|(bi, _, _)| impurity < bi) {
                    best = Some((impurity, f, threshold));
                }
            }
        }
        best
    }

    fn grow(&self, samples: Vec<usize>, rng: &mut seed::Rng, nodes: &mut Vec<Node>) -> usize {
        let id = nodes.len();
        let pos = samples.iter().filter(|&&s| self.labels[s]).count();
        let leaf = Node::Leaf { positive: 2 * pos >= samples.len() };
        nodes.push(leaf);
        if pos == 0 || pos == samples.len() || samples.len() < self.min_samples_split {
            return id;
        }
        let d = self.rows[0].as_ref().len();
        let mut drawn = index::sample(rng, d, self.max_features.min(d)).into_vec();
        drawn.sort_unstable();
        let mut split = self.best_split(&samples, &drawn);
        if split.is_none() {
            let rest: Vec<usize> = (0..d).filter(|f| !drawn.contains(f)).collect();
            split = self.best_split(&samples, &rest);
        }
        let Some((_, feature, threshold)) = split else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) =
            samples.into_iter().partition(|&s| self.value(s, feature) <= threshold);
        let left = self.grow(l, rng, nodes);
        let right = self.grow(r, rng, nodes);
        nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

/// Trains a forest on `rows` (all the same length) with binary `labels` (true = genuine user).
pub fn fit<R: AsRef<[f64]> + Sync>(rows: &[R], labels: &[bool], cfg: &ForestConfig, seed: u64) -> Result<Forest> {
    fit_parallel(rows, labels, cfg, seed, 1)
}

/// As [`fit`], spreading trees over `jobs` threads. The result does not depend on `jobs`.
pub fn fit_parallel<R: AsRef<[f64]> + Sync>(
    rows: &[R],
    labels: &[bool],
    cfg: &ForestConfig,
    seed: u64,
    jobs: usize,
) -> Result<Forest> {
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
    }
    let positives: Vec<usize> = (0..rows.len()).filter(|&i| labels[i]).collect();
    let negatives: Vec<usize> = (0..rows.len()).filter(|&i| !labels[i]).collect();
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::InsufficientData("forest needs both classes".into()));
    }
    if cfg.n_trees == 0 || cfg.positive_weight == 0 {
        return Err(Error::InvalidArgument("n_trees and positive_weight must be >= 1".into()));
    }
    let d = rows[0].as_ref().len();
    if d == 0 || rows.iter().any(|r| r.as_ref().len() != d) {
        return Err(Error::Shape("feature rows must share a non-zero length".into()));
    }
    if rows.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("feature matrix".into()));
    }
    let builder = Builder {
        rows,
        labels,
        max_features: cfg.max_features.unwrap_or((d as f64).sqrt().ceil() as usize).max(1),
        min_samples_split: cfg.min_samples_split.max(2),
    };
    let build = |t: usize| {
        let mut rng = seed::rng(seed, "forest-tree", t as u64);
        let mut samples = Vec::with_capacity(cfg.positive_weight * positives.len() + negatives.len());
        for _ in 0..cfg.positive_weight * positives.len() {
            samples.push(positives[rng.random_range(0..positives.len())]);
        }
        for _ in 0..negatives.len() {
            samples.push(negatives[rng.random_range(0..negatives.len())]);
        }
        let mut nodes = Vec::new();
        builder.grow(samples, &mut rng, &mut nodes);
        Tree { nodes }
    };
    let jobs = jobs.clamp(1, cfg.n_trees);
    let trees = if jobs == 1 {
        (0..cfg.n_trees).map(build).collect()
    } else {
        let mut slots: Vec<Option<Tree>> = vec![None; cfg.n_trees];
        std::thread::scope(|s| {
            for (j, chunk) in slots.chunks_mut(cfg.n_trees.div_ceil(jobs)).enumerate() {
                let build = &build;
                let offset = j * cfg.n_trees.div_ceil(jobs);
                s.spawn(move || {
                    for (k, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(build(offset + k));
                    }
                });
            }
        });
        slots.into_iter().map(|t| t.expect("every tree built")).collect()
    };
    Ok(Forest { trees, feature_count: d, seed })
}

impl Forest {
    /// Fraction of trees voting positive.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if self.trees.is_empty() {
            return Err(Error::Untrained);
        }
        if x.len() != self.feature_count {
            return Err(Error::Shape(format!("expected {} features, got {}", self.feature_count, x.len())));
        }
        Ok(self.votes(x) as f64 / self.trees.len() as f64)
    }

    pub fn votes(&self, x: &[f64]) -> usize {
        self.trees.iter().filter(|t| t.predict(x)).count()
    }

    pub fn summary(&self) -> ForestSummary {
        ForestSummary {
            seed: self.seed,
            feature_count: self.feature_count,
            trees: self
                .trees
                .iter()
                .map(|t| TreeSummary {
                    depth: t.depth(),
                    nodes: t.nodes.len(),
                    leaves: t.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count(),
                })
                .collect(),
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.feature_count as u32).to_le_bytes())?;
        w.write_all(&(self.trees.len() as u32).to_le_bytes())?;
        for t in &self.trees {
            w.write_all(&(t.nodes.len() as u32).to_le_bytes())?;
            for n in &t.nodes {
                match *n {
                    Node::Leaf { positive } => w.write_all(&[0, positive as u8])?,
                    Node::Split { feature, threshold, left, right } => {
                        w.write_all(&[1])?;
                        w.write_all(&(feature as u32).to_le_bytes())?;
                        w.write_all(&threshold.to_le_bytes())?;
                        w.write_all(&(left as u32).to_le_bytes())?;
                        w.write_all(&(right as u32).to_le_bytes())?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a forest checkpoint".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported forest version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        let feature_count = read_u32(&mut r)? as usize;
        let n_trees = read_u32(&mut r)? as usize;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let n = read_u32(&mut r)? as usize;
            let mut nodes = Vec::with_capacity(n);
            for _ in 0..n {
                let mut tag = [0u8; 1];
                r.read_exact(&mut tag)?;
                nodes.push(match tag[0] {
                    0 => {
                        r.read_exact(&mut tag)?;
                        Node::Leaf { positive: tag[0] != 0 }
                    }
                    1 => {
                        let feature = read_u32(&mut r)? as usize;
                        r.read_exact(&mut b8)?;
                        let threshold = f64::from_le_bytes(b8);
                        let left = read_u32(&mut r)? as usize;
                        let right = read_u32(&mut r)? as usize;
                        if feature >= feature_count || left >= n || right >= n {
                            return Err(Error::Checkpoint("node index out of range".into()));
                        }
                        Node::Split { feature, threshold, left, right }
                    }
                    t => return Err(Error::Checkpoint(format!("unknown node tag {t}"))),
                });
            }
            if nodes.is_empty() {
                return Err(Error::Checkpoint("empty tree".into()));
            }
            trees.push(Tree { nodes });
        }
        Ok(Self { trees, feature_count, seed })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable(n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let rows = (0..n).map(|i| vec![i as f64, ((i * 7) % 5) as f64, 1.0]).collect();
        let labels = (0..n).map(|i| i >= n / 2).collect();
        (rows, labels)
    }

    #[test]
    fn separable_data_is_fit_exactly() {
        let (rows, labels) = separable(40);
        let f = fit(&rows, &labels, &ForestConfig::default(), 3).unwrap();
        for (r, &l) in rows.iter().zip(&labels) {
            assert_eq!(f.predict_proba(r).unwrap() >= 0.5, l);
        }
    }

    #[test]
    fn two_points_give_single_split_trees() {
        let rows = vec![vec![0.0, 5.0], vec![1.0, 5.0]];
        let labels = vec![false, true];
        let f = fit(&rows, &labels, &ForestConfig::default(), 11).unwrap();
        for t in &f.trees {
            assert_eq!(t.nodes.len(), 3);
            assert!(matches!(t.nodes[0], Node::Split { feature: 0, threshold, .. } if threshold == 0.5));
        }
        assert_eq!(f.predict_proba(&rows[1]).unwrap(), 1.0);
        assert_eq!(f.predict_proba(&rows[0]).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_and_independent_of_jobs() {
        let (rows, labels) = separable(30);
        let a = fit(&rows, &labels, &ForestConfig::default(), 5).unwrap();
        let b = fit(&rows, &labels, &ForestConfig::default(), 5).unwrap();
        let c = fit_parallel(&rows, &labels, &ForestConfig::default(), 5, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn single_class_is_rejected() {
        let rows = vec![vec![0.0], vec![1.0]];
        assert!(fit(&rows, &[true, true], &ForestConfig::default(), 0).is_err());
    }

    #[test]
    fn unfitted_forest_errors() {
        assert!(matches!(Forest::default().predict_proba(&[0.0]), Err(Error::Untrained)));
    }

    #[test]
    fn votes_match_per_tree_tally() {
        let (rows, labels) = separable(24);
        let f = fit(&rows, &labels, &ForestConfig { n_trees: 37, ..Default::default() }, 2).unwrap();
        let probe = vec![11.5, 2.0, 1.0];
        let mut tally = 0;
        for t in &f.trees {
            if t.predict(&probe) {
                tally += 1;
            }
        }
        assert_eq!(f.predict_proba(&probe).unwrap(), tally as f64 / 37.0);
    }

    #[test]
    fn checkpoint_round_trips() {
        let (rows, labels) = separable(20);
        let f = fit(&rows, &labels, &ForestConfig { n_trees: 10, ..Default::default() }, 9).unwrap();
        let mut buf = Vec::new();
        f.save(&mut buf).unwrap();
        assert_eq!(Forest::load(buf.as_slice()).unwrap(), f);
        assert!(Forest::load(&b"nope"[..]).is_err());
        assert_eq!(f.summary().trees.len(), 10);
    }
}
