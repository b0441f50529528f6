//! Leave-one-user-out authentication with synthetic enrolment data, and the enrolment-burden sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::split::Split;
use crate::data::{GestureWindow, Label};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::forest::{self, ForestConfig};
use crate::genmodel::{train_with_validation, LossWeights, Model, TrainConfig, TrainingCurves};
use crate::metrics::{mean_summary, sweep, EvalReport, MetricSummary, ScoreSet};
use crate::sampling::{generate, Strategy, UserEmbeddings, DEFAULT_SELF_MIXED_K};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    /// Reconstructions of the other users' gestures.
    Reconstructions,
    /// Reconstructions plus the other users' real gestures.
    ReconstructionsPlusReal,
}

impl NegativeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NegativeMode::Reconstructions => "reconstructions",
            NegativeMode::ReconstructionsPlusReal => "reconstructions_plus_real",
        }
    }
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "reconstructions" => Ok(NegativeMode::Reconstructions),
            "reconstructions_plus_real" => Ok(NegativeMode::ReconstructionsPlusReal),
            other => Err(Error::InvalidArgument(format!("unknown negative class mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub held_out_user: u32,
    pub real_gestures_per_terminal: usize,
    pub synthetic_count: usize,
    pub strategy: Strategy,
    pub negative_class_mode: NegativeMode,
    pub self_mixed_k: usize,
    pub forest: ForestConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            held_out_user: 0,
            real_gestures_per_terminal: 2,
            synthetic_count: 500,
            strategy: Strategy::Adversarial,
            negative_class_mode: NegativeMode::Reconstructions,
            self_mixed_k: DEFAULT_SELF_MIXED_K,
            forest: ForestConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.real_gestures_per_terminal < 1 {
            return Err(Error::InvalidArgument("real_gestures_per_terminal must be >= 1".into()));
        }
        Ok(())
    }

    /// The real-data-only arm: no synthetic gestures, no generative model.
    pub fn is_baseline(&self) -> bool {
        self.synthetic_count == 0
    }
}

/// One user's result for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserReport {
    pub user_id: u32,
    pub arm: String,
    pub strategy: Option<Strategy>,
    pub negative_class_mode: Option<NegativeMode>,
    pub real_gestures_per_terminal: usize,
    pub enrolment_gestures: usize,
    pub synthetic_gestures: usize,
    pub negative_training_windows: usize,
    pub summary: MetricSummary,
    pub report: EvalReport,
}

pub const ARM_SYNTHETIC: &str = "with_synthetic";
pub const ARM_BASELINE: &str = "real_only";

fn gestures_of<'a>(ws: impl IntoIterator<Item = &'a GestureWindow>, pred: impl Fn(u32) -> bool) -> Vec<GestureWindow> {
    ws.into_iter().filter(|w| w.label == Label::Gesture && pred(w.user_id)).cloned().collect()
}

/// The `k` chronologically earliest gestures for every terminal. `None` if any terminal has fewer.
pub fn enrolment_set(gestures: &[GestureWindow], k: usize) -> Option<Vec<GestureWindow>> {
    let mut by_terminal: BTreeMap<Option<u8>, Vec<&GestureWindow>> = BTreeMap::new();
    for g in gestures {
        by_terminal.entry(g.terminal_id).or_default().push(g);
    }
    if by_terminal.is_empty() {
        return None;
    }
    let mut out = Vec::new();
    for ws in by_terminal.values_mut() {
        if ws.len() < k {
            return None;
        }
        ws.sort_by_key(|w| w.order_index);
        out.extend(ws[..k].iter().map(|w| (*w).clone()));
    }
    Some(out)
}

/// Largest `k` for which [`enrolment_set`] succeeds.
pub fn max_per_terminal(gestures: &[GestureWindow]) -> usize {
    let mut counts: BTreeMap<Option<u8>, usize> = BTreeMap::new();
    for g in gestures {
        *counts.entry(g.terminal_id).or_default() += 1;
    }
    counts.values().copied().min().unwrap_or(0)
}

fn features(ws: &[GestureWindow]) -> Vec<Vec<f64>> {
    ws.iter().map(|w| extract(w).values).collect()
}

/// Deterministic reconstructions (decoded posterior means) in sensor units.
pub fn reconstructions(model: &Model, ws: &[GestureWindow]) -> Result<Vec<GestureWindow>> {
    ws.iter()
        .map(|w| {
            let mut r = w.clone();
            r.values = model.reconstruct(w)?;
            Ok(r)
        })
        .collect()
}

/// Trains the forest for `cfg.held_out_user` and scores the held-out test data.
///
/// The baseline arm uses real gestures of the other users as negatives and never touches `model`.
pub fn tstr_authentication(cfg: &ExperimentConfig, split: &Split, model: Option<&Model>) -> Result<UserReport> {
    cfg.validate()?;
    let user = cfg.held_out_user;
    let pool = split.train_pool();
    let own = gestures_of(pool.iter().copied(), |u| u == user);
    let others = gestures_of(pool.iter().copied(), |u| u != user);
    if own.is_empty() {
        return Err(Error::User { user_id: user, reason: "no training gestures".into() });
    }
    if others.is_empty() {
        return Err(Error::InsufficientData("no other users to act as negatives".into()));
    }
    let enrol = enrolment_set(&own, cfg.real_gestures_per_terminal).ok_or_else(|| Error::User {
        user_id: user,
        reason: format!("fewer than {} gestures at some terminal", cfg.real_gestures_per_terminal),
    })?;
    let fold_seed = seed::derive(cfg.seed, "fold", user as u64);

    let mut positives = enrol.clone();
    let negatives = if cfg.is_baseline() {
        others
    } else {
        let model = model.ok_or_else(|| Error::InvalidArgument("synthetic arm needs a generative model".into()))?;
        model.require_trained()?;
        if model.roster.contains(&user) {
            return Err(Error::User { user_id: user, reason: "generative model was trained on the held-out user".into() });
        }
        let target = UserEmbeddings::from_windows(model, user, &enrol)?;
        let mut by_user: BTreeMap<u32, Vec<GestureWindow>> = BTreeMap::new();
        for g in &others {
            by_user.entry(g.user_id).or_default().push(g.clone());
        }
        let other_emb = by_user
            .iter()
            .map(|(&u, ws)| UserEmbeddings::from_windows(model, u, ws))
            .collect::<Result<Vec<_>>>()?;
        if cfg.strategy.needs_others() && other_emb.is_empty() {
            return Err(Error::InsufficientData(format!("{} sampling needs other users", cfg.strategy)));
        }
        positives.extend(generate(
            model,
            cfg.strategy,
            &target,
            &other_emb,
            cfg.synthetic_count,
            cfg.self_mixed_k,
            seed::derive(fold_seed, "synthetic", 0),
        )?);
        let mut neg = reconstructions(model, &others)?;
        if cfg.negative_class_mode == NegativeMode::ReconstructionsPlusReal {
            neg.extend(others);
        }
        neg
    };

    let mut rows = features(&positives);
    rows.extend(features(&negatives));
    let labels: Vec<bool> = (0..rows.len()).map(|i| i < positives.len()).collect();
    let forest = forest::fit(&rows, &labels, &cfg.forest, seed::derive(fold_seed, "forest", 0))?;

    let test_pos = gestures_of(&split.test, |u| u == user);
    let test_neg = gestures_of(&split.test, |u| u != user);
    let score = |ws: &[GestureWindow]| features(ws).iter().map(|f| forest.predict_proba(f)).collect::<Result<Vec<_>>>();
    let report = sweep(&ScoreSet::new(score(&test_pos)?, score(&test_neg)?))?;
    Ok(UserReport {
        user_id: user,
        arm: if cfg.is_baseline() { ARM_BASELINE } else { ARM_SYNTHETIC }.into(),
        strategy: (!cfg.is_baseline()).then_some(cfg.strategy),
        negative_class_mode: (!cfg.is_baseline()).then_some(cfg.negative_class_mode),
        real_gestures_per_terminal: cfg.real_gestures_per_terminal,
        enrolment_gestures: enrol.len(),
        synthetic_gestures: positives.len() - enrol.len(),
        negative_training_windows: negatives.len(),
        summary: MetricSummary::from(&report),
        report,
    })
}

/// Trains the generative model on every user except `held_out`, with the split's own validation set.
pub fn train_fold_model(
    split: &Split,
    held_out: u32,
    train_cfg: &TrainConfig,
    weights: &LossWeights,
) -> Result<(Model, TrainingCurves)> {
    let train = gestures_of(&split.train, |u| u != held_out);
    let val = gestures_of(&split.validation, |u| u != held_out);
    let cfg = TrainConfig { seed: seed::derive(train_cfg.seed, "fold-model", held_out as u64), ..train_cfg.clone() };
    let out = train_with_validation(&train, &val, &cfg, weights)?;
    Ok((out.model, out.curves))
}

/// Runs `f` for every user on up to `jobs` threads; results come back in user order.
pub fn per_user<T: Send>(users: &[u32], jobs: usize, f: impl Fn(u32) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.max(1).min(users.len().max(1));
    if jobs == 1 {
        return users.iter().map(|&u| f(u)).collect();
    }
    let chunk = users.len().div_ceil(jobs);
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = users.chunks(chunk).map(|c| s.spawn(move || c.iter().map(|&u| f(u)).collect::<Vec<_>>())).collect();
        let mut out = Vec::with_capacity(users.len());
        for h in handles {
            out.extend(h.join().expect("worker thread panicked"));
        }
        out.into_iter().collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LouoResult {
    pub per_user: Vec<UserReport>,
    pub aggregate: MetricSummary,
}

impl LouoResult {
    pub fn from_reports(per_user: Vec<UserReport>) -> Result<Self> {
        let summaries: Vec<MetricSummary> = per_user.iter().map(|r| r.summary).collect();
        let aggregate = mean_summary(&summaries).ok_or_else(|| Error::InsufficientData("no user reports".into()))?;
        Ok(Self { per_user, aggregate })
    }
}

/// Leave-one-user-out evaluation with one pre-trained model per held-out user.
pub fn leave_one_user_out(
    base: &ExperimentConfig,
    split: &Split,
    models: &BTreeMap<u32, Model>,
    jobs: usize,
) -> Result<LouoResult> {
    let users = split.user_ids();
    let reports = per_user(&users, jobs, |u| {
        let cfg = ExperimentConfig { held_out_user: u, ..base.clone() };
        tstr_authentication(&cfg, split, models.get(&u))
    })?;
    LouoResult::from_reports(reports)
}

/// One cell of the sweep table. Metrics are `None` when some user lacks enough real gestures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub real_gestures_per_terminal: usize,
    pub arm: String,
    pub available: bool,
    pub users: usize,
    pub summary: Option<MetricSummary>,
}

/// Both arms for every grid value, averaged over users.
pub fn enrolment_burden_sweep(
    split: &Split,
    models: &BTreeMap<u32, Model>,
    base: &ExperimentConfig,
    grid: &[usize],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    let users = split.user_ids();
    let pool = split.train_pool();
    let capacity: Vec<usize> =
        users.iter().map(|&u| max_per_terminal(&gestures_of(pool.iter().copied(), |x| x == u))).collect();
    let mut rows = Vec::new();
    for &count in grid {
        let available = count >= 1 && capacity.iter().all(|&c| c >= count);
        for (arm, synthetic) in [(ARM_SYNTHETIC, base.synthetic_count.max(1)), (ARM_BASELINE, 0)] {
            let summary = if available {
                let cfg = ExperimentConfig { real_gestures_per_terminal: count, synthetic_count: synthetic, ..base.clone() };
                Some(leave_one_user_out(&cfg, split, models, jobs)?.aggregate)
            } else {
                None
            };
            rows.push(SweepRow { real_gestures_per_terminal: count, arm: arm.into(), available, users: users.len(), summary });
        }
    }
    Ok(rows)
}

/// CSV with one row per user per arm.
pub fn write_user_reports_csv<W: std::io::Write>(out: W, reports: &[UserReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "user_id",
        "arm",
        "strategy",
        "negative_class_mode",
        "real_gestures_per_terminal",
        "enrolment_gestures",
        "synthetic_gestures",
        "far_at_zero",
        "eer_low",
        "eer_high",
        "auroc",
    ])?;
    for r in reports {
        w.write_record([
            r.user_id.to_string(),
            r.arm.clone(),
            r.strategy.map(|s| s.to_string()).unwrap_or_default(),
            r.negative_class_mode.map(|m| m.to_string()).unwrap_or_default(),
            r.real_gestures_per_terminal.to_string(),
            r.enrolment_gestures.to_string(),
            r.synthetic_gestures.to_string(),
            r.summary.far_at_zero.to_string(),
            r.summary.eer_low.to_string(),
            r.summary.eer_high.to_string(),
            r.summary.auroc.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["real_gestures_per_terminal", "arm", "available", "users", "far_at_zero", "eer_low", "eer_high", "auroc"])?;
    for r in rows {
        let m = |f: fn(&MetricSummary) -> f64| r.summary.as_ref().map(|s| f(s).to_string()).unwrap_or_default();
        w.write_record([
            r.real_gestures_per_terminal.to_string(),
            r.arm.clone(),
            r.available.to_string(),
            r.users.to_string(),
            m(|s| s.far_at_zero),
            m(|s| s.eer_low),
            m(|s| s.eer_high),
            m(|s| s.auroc),
        ])?;
    }
    w.flush()?;
    Ok(())
}
