//! Per-user chronological train/test split with a seeded validation subset of the train pool.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GestureWindow, Label, WindowKey};
use crate::error::{Error, Result};
use crate::genmodel::validation_indices;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    /// Chronological fraction of each user's windows kept for training.
    pub train_fraction: f64,
    /// Random fraction of the training pool held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 2.0 / 3.0, validation_fraction: 0.2, seed: 0 }
    }
}

/// Window ids of each partition, stored in dataset manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub spec: SplitSpec,
    pub train: Vec<WindowKey>,
    pub validation: Vec<WindowKey>,
    pub test: Vec<WindowKey>,
}

impl SplitRecord {
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for k in self.train.iter().chain(&self.validation).chain(&self.test) {
            if !seen.insert(*k) {
                return Err(Error::InvalidArgument(format!("window {k:?} appears in two partitions")));
            }
        }
        Ok(())
    }
}

/// Train pool = `train` + `validation`. Every partition holds gestures and non-gestures.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Vec<GestureWindow>,
    pub validation: Vec<GestureWindow>,
    pub test: Vec<GestureWindow>,
    pub record: SplitRecord,
}

impl Split {
    /// Gestures and non-gestures available for training, ordered by user then order index.
    pub fn train_pool(&self) -> Vec<&GestureWindow> {
        let mut v: Vec<&GestureWindow> = self.train.iter().chain(&self.validation).collect();
        v.sort_by_key(|w| (w.user_id, w.label, w.order_index));
        v
    }

    pub fn user_ids(&self) -> Vec<u32> {
        let mut ids: Vec<u32> = self.train.iter().chain(&self.validation).chain(&self.test).map(|w| w.user_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }
}

fn n_train(n: usize, fraction: f64) -> usize {
    // the epsilon keeps 30 * (2/3) at 20 despite rounding
    ((n as f64 * fraction + 1e-9).floor() as usize).min(n)
}

pub fn temporal_split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::InvalidArgument("train_fraction must be in (0, 1)".into()));
    }
    if !(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0) {
        return Err(Error::InvalidArgument("validation_fraction must be in (0, 1)".into()));
    }
    let mut groups: BTreeMap<(u32, Label), Vec<&GestureWindow>> = BTreeMap::new();
    for w in &dataset.windows {
        groups.entry((w.user_id, w.label)).or_default().push(w);
    }
    let mut pool = Vec::new();
    let mut test = Vec::new();
    for ((user, label), mut ws) in groups {
        ws.sort_by_key(|w| w.order_index);
        if ws.windows(2).any(|p| p[0].order_index == p[1].order_index) {
            return Err(Error::User { user_id: user, reason: "duplicate order_index".into() });
        }
        if label == Label::Gesture && ws.len() < 3 {
            return Err(Error::User { user_id: user, reason: format!("only {} gestures, need at least 3", ws.len()) });
        }
        let k = n_train(ws.len(), spec.train_fraction);
        pool.extend(ws[..k].iter().map(|w| (*w).clone()));
        test.extend(ws[k..].iter().map(|w| (*w).clone()));
    }
    let val_idx: HashSet<usize> = validation_indices(pool.len(), spec.validation_fraction, spec.seed).into_iter().collect();
    let (mut train, mut validation) = (Vec::new(), Vec::new());
    for (i, w) in pool.into_iter().enumerate() {
        if val_idx.contains(&i) {
            validation.push(w);
        } else {
            train.push(w);
        }
    }
    let keys = |ws: &[GestureWindow]| ws.iter().map(|w| w.key()).collect::<Vec<_>>();
    let record = SplitRecord { spec: spec.clone(), train: keys(&train), validation: keys(&validation), test: keys(&test) };
    record.check_disjoint()?;
    Ok(Split { train, validation, test, record })
}

/// Rebuilds a split from stored window ids.
pub fn apply_record(dataset: &Dataset, record: &SplitRecord) -> Result<Split> {
    record.check_disjoint()?;
    let by_key: BTreeMap<WindowKey, &GestureWindow> = dataset.windows.iter().map(|w| (w.key(), w)).collect();
    let fetch = |keys: &[WindowKey]| {
        keys.iter()
            .map(|k| {
                by_key
                    .get(k)
                    .map(|w| (*w).clone())
                    .ok_or_else(|| Error::InvalidArgument(format!("split refers to missing window {k:?}")))
            })
            .collect::<Result<Vec<_>>>()
    };
    Ok(Split {
        train: fetch(&record.train)?,
        validation: fetch(&record.validation)?,
        test: fetch(&record.test)?,
        record: record.clone(),
    })
}
