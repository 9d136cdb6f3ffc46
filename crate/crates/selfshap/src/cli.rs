//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use crate::config::{Backbone, LinkChoice, OracleMethod, Sweep};

#[derive(Debug, Parser)]
#[command(name = "selfshap", version, about = "Self-explaining tabular models with Shapley-value attributions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a dataset manifest.
    Train(RunArgs),
    /// Score rows with a trained model.
    Predict(RunArgs),
    /// Write the model's own attributions for rows.
    Explain(RunArgs),
    /// Estimate ground-truth Shapley values of a trained model.
    Oracle(RunArgs),
    /// Compare the model's attributions to oracle estimates.
    EvalFidelity(RunArgs),
    /// Inclusion and exclusion curves.
    Curves(RunArgs),
    /// Time amortized explanations against the sampling oracle.
    Benchmark(RunArgs),
    /// Train a grid of models varying one setting.
    Ablate(AblateArgs),
    /// Write a synthetic binary task and its manifest.
    Synth(SynthArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Train(_) => "train",
            Command::Predict(_) => "predict",
            Command::Explain(_) => "explain",
            Command::Oracle(_) => "oracle",
            Command::EvalFidelity(_) => "eval-fidelity",
            Command::Curves(_) => "curves",
            Command::Benchmark(_) => "benchmark",
            Command::Ablate(_) => "ablate",
            Command::Synth(_) => "synth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ValueFn {
    Baseline,
    Marginal,
}

/// Flags shared by every model command. Anything left unset falls back to
/// the config file, then to the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// JSON file of settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Table to score instead of the manifest's test split.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Model container (default: <out>/model.bin).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score at most this many rows.
    #[arg(long)]
    pub rows: Option<usize>,
    #[arg(long, value_enum)]
    pub backbone: Option<Backbone>,
    /// Hidden widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub coalitions: Option<usize>,
    #[arg(long, value_enum)]
    pub link: Option<LinkChoice>,
    /// Add a free output bias outside the attributions.
    #[arg(long)]
    pub relaxed: bool,
    #[arg(long, value_enum)]
    pub efficiency: Option<OnOff>,
    #[arg(long, value_enum)]
    pub value_fn: Option<ValueFn>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for oracle and evaluation work (0 = all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long, value_enum)]
    pub oracle_method: Option<OracleMethod>,
    #[arg(long)]
    pub oracle_instances: Option<usize>,
    #[arg(long)]
    pub oracle_tolerance: Option<f64>,
    #[arg(long)]
    pub oracle_max_samples: Option<usize>,
    /// Also rank curves by oracle attributions.
    #[arg(long)]
    pub curve_oracle: bool,
    #[arg(long)]
    pub timing_instances: Option<usize>,
    #[arg(long)]
    pub timing_oracle_instances: Option<usize>,
    #[arg(long)]
    pub timing_repeats: Option<usize>,
}

fn put<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), serde_json::to_value(v).expect("flag values serialize"));
    }
}

impl RunArgs {
    /// The flags that were actually given, keyed like the config file.
    pub fn to_map(&self) -> Map<String, Value> {
        let mut m = Map::new();
        put(&mut m, "data", self.data.as_ref());
        put(&mut m, "input", self.input.as_ref());
        put(&mut m, "model", self.model.as_ref());
        put(&mut m, "out", self.out.as_ref());
        put(&mut m, "rows", self.rows);
        put(&mut m, "backbone", self.backbone);
        put(&mut m, "hidden", self.hidden.as_ref());
        put(&mut m, "beta", self.beta);
        put(&mut m, "coalitions", self.coalitions);
        put(&mut m, "link", self.link);
        put(&mut m, "relaxed", self.relaxed.then_some(true));
        put(&mut m, "efficiency", self.efficiency.map(|e| e == OnOff::On));
        put(
            &mut m,
            "value_fn",
            self.value_fn.map(|v| match v {
                ValueFn::Baseline => "baseline",
                ValueFn::Marginal => "marginal",
            }),
        );
        put(&mut m, "seed", self.seed);
        put(&mut m, "threads", self.threads);
        put(&mut m, "max_epochs", self.max_epochs);
        put(&mut m, "batch_size", self.batch_size);
        put(&mut m, "patience", self.patience);
        put(&mut m, "learning_rate", self.learning_rate);
        put(&mut m, "oracle_method", self.oracle_method);
        put(&mut m, "oracle_instances", self.oracle_instances);
        put(&mut m, "oracle_tolerance", self.oracle_tolerance);
        put(&mut m, "oracle_max_samples", self.oracle_max_samples);
        put(&mut m, "curve_oracle", self.curve_oracle.then_some(true));
        put(&mut m, "timing_instances", self.timing_instances);
        put(&mut m, "timing_oracle_instances", self.timing_oracle_instances);
        put(&mut m, "timing_repeats", self.timing_repeats);
        m
    }
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    /// Setting to vary.
    #[arg(long, value_enum)]
    pub sweep: Sweep,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "data")]
    pub out: PathBuf,
}
