//! `userboost` command-line pipeline.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for data errors.

mod commands;
pub mod config;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use config::{resolve, Layers};

pub use commands::*;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(userboost::Error),
}

impl From<userboost::Error> for CliError {
    fn from(e: userboost::Error) -> Self {
        match e {
            userboost::Error::InvalidArgument(msg) => CliError::Usage(msg),
            other => CliError::Data(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "error: {e}"),
        }
    }
}

/// Options shared by every subcommand.
pub struct Context {
    pub dry_run: bool,
    pub jobs: usize,
}

#[derive(Parser, Debug)]
#[command(name = "userboost", version, about = "Synthetic gesture generation and enrolment-burden experiments")]
struct Cli {
    /// JSON config file (a run manifest also works)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.max_epochs=50`; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Validate and print the resolved config without writing anything
    #[arg(long, global = true)]
    dry_run: bool,
    /// Worker threads for per-user folds and forest fitting
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Build canonical windows from raw sensor rows
    Ingest(IngestArgs),
    /// Low-pass filter and normalise a dataset directory
    Preprocess(PreprocessArgs),
    /// Write the seeded synthetic mini-dataset
    SynthDataset(SynthArgs),
    /// Record a chronological train/validation/test split in the dataset manifest
    Split(SplitArgs),
    /// Train the generative autoencoder
    TrainAe(TrainAeArgs),
    /// Export latent embeddings as CSV
    Embed(EmbedArgs),
    /// Sample and decode synthetic gestures for one user
    Generate(GenerateArgs),
    /// Fit the random-forest authenticator for one user
    TrainAuth(TrainAuthArgs),
    /// Score a fitted forest on the test split
    Eval(EvalArgs),
    /// Gesture recognition trained on reconstructions, tested on real data
    TstrRecognition(RecognitionArgs),
    /// Leave-one-user-out authentication with synthetic enrolment data
    TstrAuth(TstrAuthArgs),
    /// Both arms across a grid of real gestures per terminal
    BurdenSweep(SweepArgs),
    /// Render a results CSV as SVG
    Plot(PlotArgs),
}

type Flags = Vec<(String, Value)>;

fn put<T: Serialize>(flags: &mut Flags, key: &str, v: &Option<T>) {
    if let Some(v) = v {
        flags.push((key.to_string(), serde_json::to_value(v).expect("flag serialises")));
    }
}

trait FlagSet {
    fn flags(&self) -> Flags;
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl FlagSet for IngestArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "input", &self.input);
        put(&mut f, "out", &self.out);
        f
    }
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    cutoff_hz: Option<f64>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    normalize: Option<bool>,
}

impl FlagSet for PreprocessArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "filter.cutoff_hz", &self.cutoff_hz);
        put(&mut f, "filter.order", &self.order);
        put(&mut f, "normalize", &self.normalize);
        f
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    gestures: Option<usize>,
    #[arg(long)]
    non_gestures: Option<usize>,
    #[arg(long)]
    separation: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<String>,
}

impl FlagSet for SynthArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "dataset.n_users", &self.users);
        put(&mut f, "dataset.gestures_per_user", &self.gestures);
        // follow the gesture count unless given explicitly
        let ng = self.non_gestures.or(self.gestures.map(|g| g.div_ceil(2)));
        put(&mut f, "dataset.non_gestures_per_user", &ng);
        put(&mut f, "dataset.separation", &self.separation);
        put(&mut f, "dataset.seed", &self.seed);
        put(&mut f, "out", &self.out);
        f
    }
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl FlagSet for SplitArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "split.seed", &self.seed);
        f
    }
}

#[derive(Args, Debug)]
struct TrainAeArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    exclude_user: Option<u32>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// `kl` or `wae`
    #[arg(long)]
    regularizer: Option<String>,
}

impl FlagSet for TrainAeArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "weights.beta", &self.beta);
        put(&mut f, "weights.alpha", &self.alpha);
        put(&mut f, "train.seed", &self.seed);
        put(&mut f, "exclude_user", &self.exclude_user);
        put(&mut f, "train.max_epochs", &self.max_epochs);
        put(&mut f, "train.patience", &self.patience);
        put(&mut f, "train.batch_size", &self.batch_size);
        put(&mut f, "train.learning_rate", &self.learning_rate);
        put(&mut f, "weights.regularizer", &self.regularizer);
        f
    }
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
}

impl FlagSet for EmbedArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "model", &self.model);
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        f
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    user: Option<u32>,
    /// neighbourhood, self_mixed, adversarial or same_user
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    per_terminal: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl FlagSet for GenerateArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "model", &self.model);
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "user", &self.user);
        put(&mut f, "strategy", &self.strategy.as_deref().map(normalise_name));
        put(&mut f, "count", &self.count);
        put(&mut f, "per_terminal", &self.per_terminal);
        put(&mut f, "seed", &self.seed);
        f
    }
}

#[derive(Args, Debug)]
struct TrainAuthArgs {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    user: Option<u32>,
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long)]
    per_terminal: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl FlagSet for TrainAuthArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "user", &self.user);
        put(&mut f, "synthetic", &self.synthetic);
        put(&mut f, "per_terminal", &self.per_terminal);
        put(&mut f, "seed", &self.seed);
        f
    }
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    forest: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    user: Option<u32>,
    #[arg(long)]
    curve_csv: Option<String>,
}

impl FlagSet for EvalArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "forest", &self.forest);
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "user", &self.user);
        put(&mut f, "curve_csv", &self.curve_csv);
        f
    }
}

#[derive(Args, Debug)]
struct RecognitionArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// rf100 or conv_gru
    #[arg(long)]
    classifier: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

impl FlagSet for RecognitionArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "model", &self.model);
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "recognition.classifier", &self.classifier.as_deref().map(normalise_name));
        put(&mut f, "recognition.seed", &self.seed);
        f
    }
}

#[derive(Args, Debug)]
struct ExperimentFlags {
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    models_dir: Option<String>,
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    real_per_terminal: Option<usize>,
    #[arg(long)]
    synthetic_count: Option<usize>,
    /// reconstructions or reconstructions_plus_real
    #[arg(long)]
    negative_mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
}

impl ExperimentFlags {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "data", &self.data);
        put(&mut f, "out", &self.out);
        put(&mut f, "models_dir", &self.models_dir);
        put(&mut f, "experiment.strategy", &self.strategy.as_deref().map(normalise_name));
        put(&mut f, "experiment.real_gestures_per_terminal", &self.real_per_terminal);
        put(&mut f, "experiment.synthetic_count", &self.synthetic_count);
        put(&mut f, "experiment.negative_class_mode", &self.negative_mode.as_deref().map(normalise_name));
        put(&mut f, "experiment.seed", &self.seed);
        put(&mut f, "train.seed", &self.seed);
        put(&mut f, "train.max_epochs", &self.max_epochs);
        f
    }
}

#[derive(Args, Debug)]
struct TstrAuthArgs {
    #[command(flatten)]
    common: ExperimentFlags,
    #[arg(long)]
    baseline: Option<bool>,
}

impl FlagSet for TstrAuthArgs {
    fn flags(&self) -> Flags {
        let mut f = self.common.flags();
        put(&mut f, "baseline", &self.baseline);
        f
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: ExperimentFlags,
    /// Comma-separated real gestures per terminal, e.g. 2,4,9,16
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<usize>>,
}

impl FlagSet for SweepArgs {
    fn flags(&self) -> Flags {
        let mut f = self.common.flags();
        put(&mut f, "grid", &self.grid);
        f
    }
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    out: Option<String>,
    /// far_by_user or sweep
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    arm: Option<String>,
}

impl FlagSet for PlotArgs {
    fn flags(&self) -> Flags {
        let mut f = Flags::new();
        put(&mut f, "input", &self.input);
        put(&mut f, "out", &self.out);
        put(&mut f, "kind", &self.kind.as_deref().map(normalise_name));
        put(&mut f, "arm", &self.arm);
        f
    }
}

/// `self-mixed` and `self_mixed` are both accepted on the command line.
fn normalise_name(s: &str) -> String {
    let s = s.trim().to_ascii_lowercase().replace('-', "_");
    if s == "neighborhood" {
        "neighbourhood".into()
    } else {
        s
    }
}

struct Runner {
    file: Option<Value>,
    env: Vec<(String, String)>,
    sets: Vec<String>,
    ctx: Context,
}

impl Runner {
    fn go<T, F>(&self, flags: Flags, f: F) -> Result<(), CliError>
    where
        T: Serialize + DeserializeOwned + Default,
        F: FnOnce(&Context, T, Value) -> Result<(), CliError>,
    {
        let (cfg, canon) =
            resolve::<T>(Layers { file: self.file.clone(), env: self.env.clone(), flags, sets: &self.sets })?;
        if self.ctx.dry_run {
            println!("{}", serde_json::to_string_pretty(&canon).expect("config serialises"));
        }
        f(&self.ctx, cfg, canon)
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be >= 1".into()));
    }
    let file = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
            Some(serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?)
        }
        None => None,
    };
    let env: Vec<(String, String)> = std::env::vars().filter(|(k, _)| k.starts_with(config::ENV_PREFIX)).collect();
    let r = Runner { file, env, sets: cli.set, ctx: Context { dry_run: cli.dry_run, jobs: cli.jobs } };
    match cli.cmd {
        Cmd::Ingest(a) => r.go(a.flags(), commands::ingest_cmd),
        Cmd::Preprocess(a) => r.go(a.flags(), commands::preprocess),
        Cmd::SynthDataset(a) => r.go(a.flags(), commands::synth_dataset),
        Cmd::Split(a) => r.go(a.flags(), commands::split_cmd),
        Cmd::TrainAe(a) => r.go(a.flags(), commands::train_ae),
        Cmd::Embed(a) => r.go(a.flags(), commands::embed),
        Cmd::Generate(a) => r.go(a.flags(), commands::generate_cmd),
        Cmd::TrainAuth(a) => r.go(a.flags(), commands::train_auth),
        Cmd::Eval(a) => r.go(a.flags(), commands::eval),
        Cmd::TstrRecognition(a) => r.go(a.flags(), commands::tstr_recognition),
        Cmd::TstrAuth(a) => r.go(a.flags(), commands::tstr_auth),
        Cmd::BurdenSweep(a) => r.go(a.flags(), commands::burden_sweep),
        Cmd::Plot(a) => r.go(a.flags(), commands::plot_cmd),
    }
}

/// Parses `args` (including the program name), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
