//! Subcommand configurations and their implementations.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use userboost::data::{
    csvio, filter_dataset, generate_mini_dataset_with, ingest, load_dataset_dir, normalize, save_dataset_dir,
    ChannelStats, Dataset, DatasetManifest, FilterSpec, GestureWindow, Label, MiniDatasetConfig,
};
use userboost::features::extract;
use userboost::forest::{self, Forest, ForestConfig};
use userboost::genmodel::checkpoint::{curves_path, save_curves};
use userboost::genmodel::{LossWeights, Model, TrainConfig};
use userboost::harness::{
    apply_record, enrolment_burden_sweep, enrolment_set, leave_one_user_out, per_user, temporal_split,
    train_fold_model, tstr_gesture_recognition, write_sweep_csv, write_user_reports_csv, ExperimentConfig,
    RecognitionConfig, Split, SplitSpec, SweepRow, UserReport,
};
use userboost::metrics::{sweep, MetricSummary, ScoreSet};
use userboost::plot;
use userboost::sampling::{generate, Strategy, UserEmbeddings, DEFAULT_SELF_MIXED_K};

use crate::manifest::{manifest_path, RunManifest};
use crate::{CliError, Context};

type Res<T = ()> = Result<T, CliError>;

fn require(path: &str, what: &str) -> Res<PathBuf> {
    if path.trim().is_empty() {
        return Err(CliError::Usage(format!("missing required setting `{what}`")));
    }
    Ok(PathBuf::from(path))
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Res {
    fs::write(path, serde_json::to_vec_pretty(v).map_err(userboost::Error::from)?).map_err(userboost::Error::from)?;
    Ok(())
}

fn create(path: &Path) -> Res<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(userboost::Error::from)?;
    }
    Ok(BufWriter::new(File::create(path).map_err(userboost::Error::from)?))
}

fn finish(mut m: RunManifest, out: &Path, is_dir: bool) -> Res {
    let p = manifest_path(out, is_dir);
    m.output(&p);
    write_json(&p, &m)
}

fn load_split(data: &Path, spec: &SplitSpec) -> Res<(Dataset, Split)> {
    let (ds, manifest) = load_dataset_dir(data)?;
    let split = match &manifest.split {
        Some(record) => apply_record(&ds, record)?,
        None => temporal_split(&ds, spec)?,
    };
    Ok((ds, split))
}

fn gestures(ws: &[&GestureWindow], pred: impl Fn(u32) -> bool) -> Vec<GestureWindow> {
    ws.iter().filter(|w| w.label == Label::Gesture && pred(w.user_id)).map(|w| (*w).clone()).collect()
}

fn user_gestures(split: &Split, user: u32, per_terminal: Option<usize>) -> Res<Vec<GestureWindow>> {
    let own = gestures(&split.train_pool(), |u| u == user);
    if own.is_empty() {
        return Err(userboost::Error::User { user_id: user, reason: "no training gestures".into() }.into());
    }
    match per_terminal {
        None => Ok(own),
        Some(k) => enrolment_set(&own, k).ok_or_else(|| {
            userboost::Error::User { user_id: user, reason: format!("fewer than {k} gestures at some terminal") }.into()
        }),
    }
}

// ---------------------------------------------------------------- synth-dataset

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub dataset: MiniDatasetConfig,
    pub out: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { dataset: MiniDatasetConfig::new(4, 40, 0), out: String::new() }
    }
}

pub fn synth_dataset(ctx: &Context, cfg: SynthConfig, canon: Value) -> Res {
    let out = require(&cfg.out, "out")?;
    if cfg.dataset.n_users < 2 || cfg.dataset.gestures_per_user < 1 {
        return Err(CliError::Usage("need at least 2 users and 1 gesture per user".into()));
    }
    if ctx.dry_run {
        return Ok(());
    }
    let ds = generate_mini_dataset_with(&cfg.dataset)?;
    let mut m = RunManifest::new("synth-dataset", &canon);
    m.seed("dataset", cfg.dataset.seed);
    for p in save_dataset_dir(&out, &ds, &DatasetManifest::new())? {
        m.output(&p);
    }
    finish(m, &out, true)
}

// ---------------------------------------------------------------- ingest

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub input: String,
    pub out: String,
}

pub fn ingest_cmd(ctx: &Context, cfg: IngestConfig, canon: Value) -> Res {
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let rows = csvio::read_raw_rows(BufReader::new(File::open(&input).map_err(userboost::Error::from)?))?;
    let ds = ingest(&rows)?;
    let mut m = RunManifest::new("ingest", &canon);
    m.input(&input);
    for p in save_dataset_dir(&out, &ds, &DatasetManifest::new())? {
        m.output(&p);
    }
    finish(m, &out, true)
}

// ---------------------------------------------------------------- preprocess

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub data: String,
    pub out: String,
    pub filter: FilterSpec,
    pub normalize: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self { data: String::new(), out: String::new(), filter: FilterSpec::default(), normalize: true }
    }
}

pub fn preprocess(ctx: &Context, cfg: PreprocessConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    cfg.filter.validate()?;
    if ctx.dry_run {
        return Ok(());
    }
    let (ds, mut manifest) = load_dataset_dir(&data_dir)?;
    let mut ds = filter_dataset(&ds, &cfg.filter)?;
    manifest.filter = Some(cfg.filter);
    if cfg.normalize {
        // statistics come from the training partition only when a split is recorded
        let stats = match &manifest.split {
            Some(record) => {
                let split = apply_record(&ds, record)?;
                ChannelStats::fit(split.train.iter().chain(&split.validation).filter(|w| w.label == Label::Gesture))?
            }
            None => ChannelStats::fit(ds.gestures())?,
        };
        ds.stats = Some(stats);
        ds = normalize(&ds)?;
        manifest.channel_stats = Some(stats);
    }
    let mut m = RunManifest::new("preprocess", &canon);
    m.input(&data_dir);
    for p in save_dataset_dir(&out, &ds, &manifest)? {
        m.output(&p);
    }
    finish(m, &out, true)
}

// ---------------------------------------------------------------- split

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub data: String,
    /// Defaults to `data`.
    pub out: String,
    pub split: SplitSpec,
}

pub fn split_cmd(ctx: &Context, cfg: SplitConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = if cfg.out.is_empty() { data_dir.clone() } else { PathBuf::from(&cfg.out) };
    if ctx.dry_run {
        return Ok(());
    }
    let (ds, mut manifest) = load_dataset_dir(&data_dir)?;
    let split = temporal_split(&ds, &cfg.split)?;
    manifest.split = Some(split.record.clone());
    let mut m = RunManifest::new("split", &canon);
    m.seed("split", cfg.split.seed);
    m.input(&data_dir);
    for p in save_dataset_dir(&out, &ds, &manifest)? {
        m.output(&p);
    }
    finish(m, &out, true)
}

// ---------------------------------------------------------------- train-ae

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainAeConfig {
    pub data: String,
    pub out: String,
    /// Leave this user out of training.
    pub exclude_user: Option<u32>,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub weights: LossWeights,
}

pub fn train_ae(ctx: &Context, cfg: TrainAeConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    cfg.train.validate()?;
    cfg.weights.validate()?;
    if ctx.dry_run {
        return Ok(());
    }
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    let keep = |u: u32| Some(u) != cfg.exclude_user;
    let train: Vec<GestureWindow> = gestures(&split.train.iter().collect::<Vec<_>>(), keep);
    let val: Vec<GestureWindow> = gestures(&split.validation.iter().collect::<Vec<_>>(), keep);
    let outcome = userboost::genmodel::train_with_validation(&train, &val, &cfg.train, &cfg.weights)?;
    let mut m = RunManifest::new("train-ae", &canon);
    m.seed("train", cfg.train.seed);
    m.seed("split", cfg.split.seed);
    m.input(&data_dir);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(userboost::Error::from)?;
    }
    outcome.model.save(&out)?;
    let curves = curves_path(&out);
    save_curves(&curves, &outcome.curves)?;
    m.output(&out);
    m.output(&curves);
    finish(m, &out, false)
}

// ---------------------------------------------------------------- embed

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub model: String,
    pub data: String,
    pub out: String,
}

pub fn embed(ctx: &Context, cfg: EmbedConfig, canon: Value) -> Res {
    let model_path = require(&cfg.model, "model")?;
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let model = Model::load(&model_path)?;
    let (ds, _) = load_dataset_dir(&data_dir)?;
    let d = model.arch.latent_dim;
    let mut w = csv::Writer::from_writer(create(&out)?);
    let mut header: Vec<String> = ["user_id", "terminal_id", "label", "order_index"].map(String::from).to_vec();
    header.extend((0..d).map(|i| format!("mu_{i}")));
    header.extend((0..d).map(|i| format!("log_var_{i}")));
    w.write_record(&header).map_err(userboost::Error::from)?;
    for win in &ds.windows {
        let dist = model.encode_window(win)?;
        let mut rec = vec![
            win.user_id.to_string(),
            win.terminal_id.map(|t| t.to_string()).unwrap_or_default(),
            win.label.as_str().to_string(),
            win.order_index.to_string(),
        ];
        rec.extend(dist.mean.iter().chain(&dist.log_variance).map(|v| format!("{v:?}")));
        w.write_record(&rec).map_err(userboost::Error::from)?;
    }
    w.flush().map_err(userboost::Error::from)?;
    let mut m = RunManifest::new("embed", &canon);
    m.input(&model_path);
    m.input(&data_dir);
    m.output(&out);
    finish(m, &out, false)
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerateConfig {
    pub model: String,
    pub data: String,
    pub out: String,
    pub user: u32,
    pub strategy: Strategy,
    pub count: usize,
    /// Embed only the earliest `k` gestures per terminal; all training gestures if unset.
    pub per_terminal: Option<usize>,
    pub self_mixed_k: usize,
    pub split: SplitSpec,
    pub seed: u64,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            model: String::new(),
            data: String::new(),
            out: String::new(),
            user: 0,
            strategy: Strategy::Adversarial,
            count: 500,
            per_terminal: None,
            self_mixed_k: DEFAULT_SELF_MIXED_K,
            split: SplitSpec::default(),
            seed: 0,
        }
    }
}

pub fn generate_cmd(ctx: &Context, cfg: GenerateConfig, canon: Value) -> Res {
    let model_path = require(&cfg.model, "model")?;
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    if cfg.count == 0 {
        return Err(CliError::Usage("count must be >= 1".into()));
    }
    if ctx.dry_run {
        return Ok(());
    }
    let model = Model::load(&model_path)?;
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    let target = UserEmbeddings::from_windows(&model, cfg.user, &user_gestures(&split, cfg.user, cfg.per_terminal)?)?;
    let others = other_embeddings(&model, &split, cfg.user)?;
    let synthetic = generate(&model, cfg.strategy, &target, &others, cfg.count, cfg.self_mixed_k, cfg.seed)?;
    csvio::write_windows(create(&out)?, &synthetic, true)?;
    let mut m = RunManifest::new("generate", &canon);
    m.seed("generate", cfg.seed);
    m.input(&model_path);
    m.input(&data_dir);
    m.output(&out);
    finish(m, &out, false)
}

fn other_embeddings(model: &Model, split: &Split, user: u32) -> Res<Vec<UserEmbeddings>> {
    let mut by_user: BTreeMap<u32, Vec<GestureWindow>> = BTreeMap::new();
    for g in gestures(&split.train_pool(), |u| u != user) {
        by_user.entry(g.user_id).or_default().push(g);
    }
    Ok(by_user.iter().map(|(&u, ws)| UserEmbeddings::from_windows(model, u, ws)).collect::<Result<Vec<_>, _>>()?)
}

// ---------------------------------------------------------------- train-auth

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainAuthConfig {
    pub data: String,
    pub out: String,
    pub user: u32,
    /// Canonical CSV of synthetic gestures added to the positive class.
    pub synthetic: Option<String>,
    pub per_terminal: Option<usize>,
    pub forest: ForestConfig,
    pub split: SplitSpec,
    pub seed: u64,
}

pub fn train_auth(ctx: &Context, cfg: TrainAuthConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    let mut positives = user_gestures(&split, cfg.user, cfg.per_terminal)?;
    let mut m = RunManifest::new("train-auth", &canon);
    m.input(&data_dir);
    if let Some(s) = &cfg.synthetic {
        let p = PathBuf::from(s);
        let synth = csvio::read_windows(BufReader::new(File::open(&p).map_err(userboost::Error::from)?))?;
        positives.extend(synth.into_iter().map(|w| GestureWindow { user_id: cfg.user, ..w }));
        m.input(&p);
    }
    let negatives = gestures(&split.train_pool(), |u| u != cfg.user);
    let rows: Vec<Vec<f64>> = positives.iter().chain(&negatives).map(|w| extract(w).values).collect();
    let labels: Vec<bool> = (0..rows.len()).map(|i| i < positives.len()).collect();
    let f = forest::fit_parallel(&rows, &labels, &cfg.forest, cfg.seed, ctx.jobs)?;
    f.save(create(&out)?)?;
    let mut summary = out.as_os_str().to_owned();
    summary.push(".summary.json");
    let summary = PathBuf::from(summary);
    write_json(&summary, &f.summary())?;
    m.seed("forest", cfg.seed);
    m.output(&out);
    m.output(&summary);
    finish(m, &out, false)
}

// ---------------------------------------------------------------- eval

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub forest: String,
    pub data: String,
    pub out: String,
    pub user: u32,
    pub curve_csv: Option<String>,
    pub split: SplitSpec,
}

pub fn eval(ctx: &Context, cfg: EvalConfig, canon: Value) -> Res {
    let forest_path = require(&cfg.forest, "forest")?;
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let f = Forest::load(BufReader::new(File::open(&forest_path).map_err(userboost::Error::from)?))?;
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    let test: Vec<&GestureWindow> = split.test.iter().collect();
    let score = |ws: Vec<GestureWindow>| ws.iter().map(|w| f.predict_proba(&extract(w).values)).collect::<Result<Vec<_>, _>>();
    let report = sweep(&ScoreSet::new(score(gestures(&test, |u| u == cfg.user))?, score(gestures(&test, |u| u != cfg.user))?))?;
    write_json(&out, &report)?;
    let mut m = RunManifest::new("eval", &canon);
    m.input(&forest_path);
    m.input(&data_dir);
    m.output(&out);
    if let Some(c) = &cfg.curve_csv {
        let p = PathBuf::from(c);
        report.write_curve_csv(create(&p)?)?;
        m.output(&p);
    }
    finish(m, &out, false)
}

// ---------------------------------------------------------------- tstr-recognition

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RecognitionCmdConfig {
    pub model: String,
    pub data: String,
    pub out: String,
    pub recognition: RecognitionConfig,
    pub split: SplitSpec,
}

pub fn tstr_recognition(ctx: &Context, cfg: RecognitionCmdConfig, canon: Value) -> Res {
    let model_path = require(&cfg.model, "model")?;
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let model = Model::load(&model_path)?;
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    let report = tstr_gesture_recognition(&model, &split, &cfg.recognition)?;
    write_json(&out, &report)?;
    let mut m = RunManifest::new("tstr-recognition", &canon);
    m.seed("recognition", cfg.recognition.seed);
    m.input(&model_path);
    m.input(&data_dir);
    m.output(&out);
    finish(m, &out, false)
}

// ---------------------------------------------------------------- tstr-auth / burden-sweep

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TstrAuthConfig {
    pub data: String,
    /// Output directory.
    pub out: String,
    /// Per-user checkpoints `user_<id>.ckpt`; missing ones are trained and saved here.
    pub models_dir: String,
    pub experiment: ExperimentConfig,
    /// Also run the real-data-only arm.
    pub baseline: bool,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub weights: LossWeights,
}

impl Default for TstrAuthConfig {
    fn default() -> Self {
        Self {
            data: String::new(),
            out: String::new(),
            models_dir: String::new(),
            experiment: ExperimentConfig::default(),
            baseline: true,
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

fn fold_models(
    ctx: &Context,
    split: &Split,
    dir: &Path,
    train: &TrainConfig,
    weights: &LossWeights,
    m: &mut RunManifest,
) -> Res<BTreeMap<u32, Model>> {
    fs::create_dir_all(dir).map_err(userboost::Error::from)?;
    let users = split.user_ids();
    let loaded = per_user(&users, ctx.jobs, |u| {
        let path = dir.join(format!("user_{u}.ckpt"));
        if path.exists() {
            let model = Model::load(&path)?;
            if model.roster.contains(&u) {
                return Err(userboost::Error::User { user_id: u, reason: format!("{} was trained on this user", path.display()) });
            }
            Ok((model, path, false))
        } else {
            let (model, curves) = train_fold_model(split, u, train, weights)?;
            model.save(&path)?;
            save_curves(&curves_path(&path), &curves)?;
            Ok((model, path, true))
        }
    })?;
    let mut models = BTreeMap::new();
    for (u, (model, path, fresh)) in users.into_iter().zip(loaded) {
        if fresh {
            m.output(&path);
            m.output(&curves_path(&path));
        } else {
            m.input(&path);
        }
        m.seed(&format!("fold_model_{u}"), model.seed);
        models.insert(u, model);
    }
    Ok(models)
}

#[derive(Serialize)]
struct Aggregate<'a> {
    strategy: Strategy,
    negative_class_mode: String,
    real_gestures_per_terminal: usize,
    synthetic_count: usize,
    with_synthetic: MetricSummary,
    real_only: Option<MetricSummary>,
    per_user: &'a [UserReport],
}

pub fn tstr_auth(ctx: &Context, cfg: TstrAuthConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    let models_dir = if cfg.models_dir.is_empty() { out.join("models") } else { PathBuf::from(&cfg.models_dir) };
    cfg.experiment.validate()?;
    cfg.train.validate()?;
    cfg.weights.validate()?;
    if cfg.experiment.synthetic_count == 0 {
        return Err(CliError::Usage("synthetic_count must be >= 1 (the real-only arm runs via `baseline`)".into()));
    }
    if ctx.dry_run {
        return Ok(());
    }
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    fs::create_dir_all(&out).map_err(userboost::Error::from)?;
    let mut m = RunManifest::new("tstr-auth", &canon);
    m.input(&data_dir);
    m.seed("experiment", cfg.experiment.seed);
    m.seed("train", cfg.train.seed);
    let models = fold_models(ctx, &split, &models_dir, &cfg.train, &cfg.weights, &mut m)?;
    let with = leave_one_user_out(&cfg.experiment, &split, &models, ctx.jobs)?;
    let mut rows = with.per_user.clone();
    let baseline = if cfg.baseline {
        let b = ExperimentConfig { synthetic_count: 0, ..cfg.experiment.clone() };
        let r = leave_one_user_out(&b, &split, &models, ctx.jobs)?;
        rows.extend(r.per_user.iter().cloned());
        Some(r.aggregate)
    } else {
        None
    };
    let csv_path = out.join("per_user.csv");
    write_user_reports_csv(create(&csv_path)?, &rows)?;
    let agg_path = out.join("aggregate.json");
    write_json(
        &agg_path,
        &Aggregate {
            strategy: cfg.experiment.strategy,
            negative_class_mode: cfg.experiment.negative_class_mode.to_string(),
            real_gestures_per_terminal: cfg.experiment.real_gestures_per_terminal,
            synthetic_count: cfg.experiment.synthetic_count,
            with_synthetic: with.aggregate,
            real_only: baseline,
            per_user: &rows,
        },
    )?;
    let svg = out.join("far_by_user.svg");
    fs::write(&svg, plot::far_by_user(&with.per_user)).map_err(userboost::Error::from)?;
    for p in [&csv_path, &agg_path, &svg] {
        m.output(p);
    }
    finish(m, &out, true)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub data: String,
    pub out: String,
    pub models_dir: String,
    pub grid: Vec<usize>,
    pub experiment: ExperimentConfig,
    pub split: SplitSpec,
    pub train: TrainConfig,
    pub weights: LossWeights,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            data: String::new(),
            out: String::new(),
            models_dir: String::new(),
            grid: vec![2, 4, 9, 16],
            experiment: ExperimentConfig::default(),
            split: SplitSpec::default(),
            train: TrainConfig::default(),
            weights: LossWeights::default(),
        }
    }
}

pub fn burden_sweep(ctx: &Context, cfg: SweepConfig, canon: Value) -> Res {
    let data_dir = require(&cfg.data, "data")?;
    let out = require(&cfg.out, "out")?;
    let models_dir = if cfg.models_dir.is_empty() { out.join("models") } else { PathBuf::from(&cfg.models_dir) };
    if cfg.grid.is_empty() || cfg.grid.contains(&0) {
        return Err(CliError::Usage("grid must be a non-empty list of positive counts".into()));
    }
    cfg.train.validate()?;
    cfg.weights.validate()?;
    if ctx.dry_run {
        return Ok(());
    }
    let (_, split) = load_split(&data_dir, &cfg.split)?;
    fs::create_dir_all(&out).map_err(userboost::Error::from)?;
    let mut m = RunManifest::new("burden-sweep", &canon);
    m.input(&data_dir);
    m.seed("experiment", cfg.experiment.seed);
    m.seed("train", cfg.train.seed);
    let models = fold_models(ctx, &split, &models_dir, &cfg.train, &cfg.weights, &mut m)?;
    let rows = enrolment_burden_sweep(&split, &models, &cfg.experiment, &cfg.grid, ctx.jobs)?;
    let csv_path = out.join("sweep.csv");
    write_sweep_csv(create(&csv_path)?, &rows)?;
    let json_path = out.join("sweep.json");
    write_json(&json_path, &rows)?;
    let svg = out.join("sweep.svg");
    fs::write(&svg, plot::sweep_curves(&rows)).map_err(userboost::Error::from)?;
    for p in [&csv_path, &json_path, &svg] {
        m.output(p);
    }
    finish(m, &out, true)
}

// ---------------------------------------------------------------- plot

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    #[default]
    FarByUser,
    Sweep,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotConfig {
    pub input: String,
    pub out: String,
    pub kind: PlotKind,
    /// Arm shown by the per-user chart.
    pub arm: Option<String>,
}

fn read_csv(path: &Path) -> Res<Vec<BTreeMap<String, String>>> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path).map_err(userboost::Error::from)?));
    let headers = r.headers().map_err(userboost::Error::from)?.clone();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(userboost::Error::from)?;
        rows.push(headers.iter().zip(rec.iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect());
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(row: &BTreeMap<String, String>, key: &str) -> Res<T> {
    row.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| userboost::Error::InvalidArgument(format!("results CSV lacks a valid `{key}` column")).into())
}

pub fn plot_cmd(ctx: &Context, cfg: PlotConfig, canon: Value) -> Res {
    let input = require(&cfg.input, "input")?;
    let out = require(&cfg.out, "out")?;
    if ctx.dry_run {
        return Ok(());
    }
    let rows = read_csv(&input)?;
    let svg = match cfg.kind {
        PlotKind::FarByUser => {
            let arm = cfg.arm.clone().unwrap_or_else(|| userboost::harness::ARM_SYNTHETIC.to_string());
            let chosen: Vec<&BTreeMap<String, String>> = rows.iter().filter(|r| r.get("arm") == Some(&arm)).collect();
            let labels = chosen.iter().map(|r| field::<String>(r, "user_id")).collect::<Res<Vec<_>>>()?;
            let values = chosen.iter().map(|r| field::<f64>(r, "far_at_zero")).collect::<Res<Vec<_>>>()?;
            plot::bar_chart(&format!("FAR@0 per user ({arm})"), "FAR@0", &labels, &values)
        }
        PlotKind::Sweep => {
            let parsed = rows
                .iter()
                .map(|r| {
                    let available: bool = field(r, "available")?;
                    Ok(SweepRow {
                        real_gestures_per_terminal: field(r, "real_gestures_per_terminal")?,
                        arm: field(r, "arm")?,
                        available,
                        users: field(r, "users")?,
                        summary: if available {
                            Some(MetricSummary {
                                far_at_zero: field(r, "far_at_zero")?,
                                eer_low: field(r, "eer_low")?,
                                eer_high: field(r, "eer_high")?,
                                auroc: field(r, "auroc")?,
                            })
                        } else {
                            None
                        },
                    })
                })
                .collect::<Res<Vec<_>>>()?;
            plot::sweep_curves(&parsed)
        }
    };
    let mut w = create(&out)?;
    std::io::Write::write_all(&mut w, svg.as_bytes()).map_err(userboost::Error::from)?;
    let mut m = RunManifest::new("plot", &canon);
    m.input(&input);
    m.output(&out);
    finish(m, &out, false)
}
