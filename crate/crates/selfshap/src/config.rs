//! Run configuration: defaults, overridden by a JSON file, overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use selfshap_core::data::Task;
use selfshap_core::network::DEFAULT_HIDDEN;
use selfshap_core::optim::AdamConfig;
use selfshap_core::shapley::{KernelShapOptions, ValueFunctionKind};
use selfshap_core::train::{ShapleyOutputs, TrainConfig};
use selfshap_core::{BackboneKind, Link, NetworkSpec};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Backbone {
    KanSpline,
    KanRbf,
    Mlp,
    MlpMatched,
}

impl From<Backbone> for BackboneKind {
    fn from(b: Backbone) -> Self {
        match b {
            Backbone::KanSpline => BackboneKind::KanSpline,
            Backbone::KanRbf => BackboneKind::KanRbf,
            Backbone::Mlp => BackboneKind::Mlp,
            Backbone::MlpMatched => BackboneKind::MlpMatched,
        }
    }
}

/// `auto` picks sigmoid, softmax or identity from the task; `none` always
/// uses the identity (trained with squared error).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LinkChoice {
    Auto,
    None,
}

impl LinkChoice {
    pub fn resolve(self, task: Task) -> Link {
        match self {
            LinkChoice::Auto => task.default_link(),
            LinkChoice::None => Link::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleMethod {
    /// Unbiased KernelSHAP, run to convergence.
    Kernel,
    /// Full enumeration (at most 20 features).
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Sweep {
    Beta,
    Coalitions,
    Link,
    Efficiency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    /// Dataset manifest.
    pub data: Option<PathBuf>,
    /// Table to score instead of the manifest's test split (same columns as
    /// the training table).
    pub input: Option<PathBuf>,
    /// Model container; defaults to `<out>/model.bin`.
    pub model: Option<PathBuf>,
    pub out: PathBuf,
    /// Cap on the rows scored by predict, explain and curves.
    pub rows: Option<usize>,
    pub threads: usize,

    pub backbone: Backbone,
    pub hidden: Vec<usize>,
    pub link: LinkChoice,
    pub relaxed: bool,

    pub beta: f64,
    pub coalitions: usize,
    pub value_fn: ValueFunctionKind,
    pub background_size: usize,
    pub efficiency: bool,
    pub shapley_loss_outputs: ShapleyOutputs,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub oversample_minority: bool,

    pub oracle_method: OracleMethod,
    pub oracle_instances: usize,
    pub oracle_batch: usize,
    pub oracle_tolerance: f64,
    pub oracle_max_samples: usize,

    pub curve_fractions: Vec<f64>,
    /// Also draw curves ranked by oracle attributions.
    pub curve_oracle: bool,

    pub timing_instances: usize,
    pub timing_repeats: usize,
    /// Instances actually run through the oracle during timing; the total is
    /// extrapolated to `timing_instances`.
    pub timing_oracle_instances: usize,

    pub sweep: Option<Sweep>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let oracle = KernelShapOptions::default();
        Self {
            command: String::new(),
            data: None,
            input: None,
            model: None,
            out: PathBuf::from("out"),
            rows: None,
            threads: 0,
            backbone: Backbone::KanSpline,
            hidden: DEFAULT_HIDDEN.to_vec(),
            link: LinkChoice::Auto,
            relaxed: false,
            beta: train.beta,
            coalitions: train.coalitions,
            value_fn: train.value_fn,
            background_size: train.background_size,
            efficiency: train.efficiency_normalization,
            shapley_loss_outputs: train.shapley_loss_outputs,
            batch_size: train.batch_size,
            max_epochs: train.max_epochs,
            patience: train.patience,
            learning_rate: train.adam.learning_rate,
            seed: train.seed,
            oversample_minority: train.oversample_minority,
            oracle_method: OracleMethod::Kernel,
            oracle_instances: 100,
            oracle_batch: oracle.batch,
            oracle_tolerance: oracle.tolerance,
            oracle_max_samples: oracle.max_samples,
            curve_fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            curve_oracle: false,
            timing_instances: 1000,
            timing_repeats: 5,
            timing_oracle_instances: 20,
            sweep: None,
        }
    }
}

fn defaults_map() -> Map<String, Value> {
    match serde_json::to_value(RunConfig::default()) {
        Ok(Value::Object(map)) => map,
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

pub fn valid_keys() -> Vec<String> {
    defaults_map().keys().cloned().collect()
}

fn check_keys(source: &str, values: &Map<String, Value>) -> Result<()> {
    let valid = defaults_map();
    if let Some(bad) = values.keys().find(|k| !valid.contains_key(*k)) {
        let list: Vec<&str> = valid.keys().map(String::as_str).collect();
        return Err(Error::Config(format!("{source}: unknown key `{bad}`; valid keys: {}", list.join(", "))));
    }
    // type-check key by key so the message names the offending key
    for (key, value) in values {
        let mut probe = valid.clone();
        probe.insert(key.clone(), value.clone());
        if let Err(e) = serde_json::from_value::<RunConfig>(Value::Object(probe)) {
            return Err(Error::Config(format!("{source}: key `{key}`: {e}")));
        }
    }
    Ok(())
}

/// Parses a config file body; it must be a JSON object.
pub fn parse_config_text(source: &str, text: &str) -> Result<Map<String, Value>> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Config(format!("{source}: parse error at line {} column {}: {e}", e.line(), e.column()))
    })?;
    match value {
        Value::Object(map) => {
            check_keys(source, &map)?;
            Ok(map)
        }
        _ => Err(Error::Config(format!("{source}: expected a JSON object of settings"))),
    }
}

/// Resolves a config: defaults, then `file`, then `flags`.
pub fn parse_config(file: Option<&Path>, flags: Map<String, Value>) -> Result<RunConfig> {
    let mut merged = defaults_map();
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        merged.extend(parse_config_text(&path.display().to_string(), &text)?);
    }
    check_keys("flags", &flags)?;
    merged.extend(flags);
    let cfg: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.oracle_instances == 0 || self.timing_instances == 0 || self.timing_repeats == 0 {
            return bad("oracle_instances, timing_instances and timing_repeats must be positive");
        }
        if self.timing_oracle_instances == 0 {
            return bad("timing_oracle_instances must be positive");
        }
        if !(self.oracle_tolerance > 0.0) || self.oracle_batch == 0 || self.oracle_max_samples == 0 {
            return bad("oracle tolerance, batch and max samples must be positive");
        }
        if self.curve_fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return bad("curve fractions must lie in [0, 1]");
        }
        self.train_config().validate()?;
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            beta: self.beta,
            coalitions: self.coalitions,
            value_fn: self.value_fn,
            background_size: self.background_size,
            efficiency_normalization: self.efficiency,
            shapley_loss_outputs: self.shapley_loss_outputs,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed,
            oversample_minority: self.oversample_minority,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
        }
    }

    pub fn network_spec(&self, task: Task, feature_names: Vec<String>, output_labels: Vec<String>) -> NetworkSpec {
        let mut spec = NetworkSpec::new(
            self.backbone.into(),
            feature_names.len(),
            task.n_outputs(),
            self.link.resolve(task),
        )
        .with_hidden(&self.hidden);
        spec.relaxed = self.relaxed;
        spec.feature_names = feature_names;
        if output_labels.len() == spec.n_outputs {
            spec.output_labels = output_labels;
        }
        spec
    }

    pub fn kernel_options(&self) -> KernelShapOptions {
        KernelShapOptions {
            batch: self.oracle_batch,
            tolerance: self.oracle_tolerance,
            max_samples: self.oracle_max_samples,
            paired: true,
        }
    }

    pub fn model_path(&self) -> PathBuf {
        self.model.clone().unwrap_or_else(|| self.out.join("model.bin"))
    }

    /// Writes the resolved config as `config.json` in the output directory.
    pub fn echo(&self) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join("config.json");
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
