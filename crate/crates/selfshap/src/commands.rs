//! Subcommand implementations.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use serde::Serialize;
use serde_json::json;

use selfshap_core::data::{DatasetSchema, FeatureMatrix, Task};
use selfshap_core::link::stable_link;
use selfshap_core::metrics::{explained_output, inclusion_exclusion_curve, predicted_class, FidelityReport};
use selfshap_core::shapley::{ShapleyEstimate, ValueFunction};
use selfshap_core::synthetic::synthetic_binary;
use selfshap_core::train::{local_accuracy_gap, train, TrainData, TrainOutcome};
use selfshap_core::ShapNetwork;

use crate::cli::{Cli, Command, RunArgs, SynthArgs};
use crate::config::{parse_config, LinkChoice, RunConfig, Sweep};
use crate::container::{load_model, save_model, ModelBundle};
use crate::evaluate::{fidelity_against_oracle, predictive, Predictive};
use crate::manifest::{Dataset, DatasetManifest};
use crate::oracle::{explain_rows, OracleSettings};
use crate::report::{
    write_attributions, write_curves, write_epochs, write_json, write_oracle, write_predictions, write_timing, write_tsv,
};
use crate::table::{read_table, write_table};
use crate::timing::{benchmark_timing, TimingOptions};

/// Largest tolerated `|logit - Σφ - δ|` on held-out rows.
pub const LOCAL_ACCURACY_TOLERANCE: f64 = 1e-6;

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let name = cli.command.name();
    match cli.command {
        Command::Synth(args) => synth(&args),
        Command::Ablate(args) => {
            let mut cfg = resolve(name, &args.run)?;
            cfg.sweep = Some(args.sweep);
            cfg.echo()?;
            ablate(&cfg)
        }
        Command::Train(args) => with_config(name, &args, train_command),
        Command::Predict(args) => with_config(name, &args, predict),
        Command::Explain(args) => with_config(name, &args, explain),
        Command::Oracle(args) => with_config(name, &args, oracle),
        Command::EvalFidelity(args) => with_config(name, &args, eval_fidelity),
        Command::Curves(args) => with_config(name, &args, curves),
        Command::Benchmark(args) => with_config(name, &args, benchmark),
    }
}

fn resolve(command: &str, args: &RunArgs) -> anyhow::Result<RunConfig> {
    let mut flags = args.to_map();
    flags.insert("command".into(), command.into());
    Ok(parse_config(args.config.as_deref(), flags)?)
}

fn with_config(command: &str, args: &RunArgs, f: fn(&RunConfig) -> anyhow::Result<()>) -> anyhow::Result<()> {
    let cfg = resolve(command, args)?;
    cfg.echo()?;
    f(&cfg)
}

fn load_dataset(cfg: &RunConfig) -> anyhow::Result<Dataset> {
    let path = cfg.data.as_deref().context("no dataset: pass --data <manifest.json>")?;
    let manifest = DatasetManifest::load(path)?;
    Ok(manifest.prepare().with_context(|| format!("preparing {}", manifest.csv.display()))?)
}

fn output_labels(schema: &DatasetSchema) -> Vec<String> {
    match schema.task {
        Task::Binary => schema.classes.get(1).cloned().into_iter().collect(),
        Task::Multiclass { .. } => schema.classes.clone(),
        Task::Regression => vec![schema.columns[schema.label_index].name.clone()],
    }
}

/// Trains on a prepared dataset and checks local accuracy on its test split.
pub fn fit(cfg: &RunConfig, ds: &Dataset) -> anyhow::Result<TrainOutcome> {
    let task = ds.task();
    let spec = cfg.network_spec(task, ds.data.preprocessor.feature_names(), output_labels(&ds.schema));
    let data = TrainData {
        train: &ds.data.train,
        valid: &ds.data.valid,
        task,
    };
    let outcome = train(data, spec, &cfg.train_config())?;
    let gap = local_accuracy_gap(&outcome.network, &ds.data.test.to_tensor())?;
    if gap > LOCAL_ACCURACY_TOLERANCE {
        bail!("local accuracy violated on the test split: max gap {gap:e}");
    }
    Ok(outcome)
}

#[derive(Serialize)]
struct TrainMetrics<'a> {
    task: Task,
    best_epoch: usize,
    epochs: usize,
    local_accuracy_gap: f64,
    train: &'a Predictive,
    valid: &'a Predictive,
    test: &'a Predictive,
    preprocessing_warnings: &'a [String],
}

fn train_command(cfg: &RunConfig) -> anyhow::Result<()> {
    let ds = load_dataset(cfg)?;
    let outcome = fit(cfg, &ds)?;
    let net = &outcome.network;
    let bundle = ModelBundle {
        network: net.clone(),
        preprocessor: Some(ds.data.preprocessor.clone()),
        value_function: outcome.value_function.clone(),
        train_config: Some(cfg.train_config()),
    };
    save_model(&cfg.model_path(), &bundle)?;
    write_epochs(&cfg.out.join("epochs.tsv"), &outcome.history)?;
    let task = ds.task();
    let metrics = TrainMetrics {
        task,
        best_epoch: outcome.best_epoch,
        epochs: outcome.history.len(),
        local_accuracy_gap: local_accuracy_gap(net, &ds.data.test.to_tensor())?,
        train: &predictive(net, &ds.data.train, task)?,
        valid: &predictive(net, &ds.data.valid, task)?,
        test: &predictive(net, &ds.data.test, task)?,
        preprocessing_warnings: &ds.data.preprocessor.warnings,
    };
    write_json(&cfg.out.join("metrics.json"), &metrics)?;
    Ok(())
}

fn load_bundle(cfg: &RunConfig) -> anyhow::Result<ModelBundle> {
    let path = cfg.model_path();
    if !path.exists() {
        bail!("no model at {}; run `selfshap train` first or pass --model", path.display());
    }
    Ok(load_model(&path).with_context(|| format!("loading {}", path.display()))?)
}

/// Rows to score: `--input` transformed with the model's preprocessing, or
/// else the manifest's test split. Returns source row numbers too.
fn scoring_rows(cfg: &RunConfig, bundle: &ModelBundle, cap: Option<usize>) -> anyhow::Result<(Vec<usize>, FeatureMatrix)> {
    let pre = bundle.preprocessor.as_ref();
    let (ids, data) = if let Some(input) = &cfg.input {
        let pre = pre.context("the model carries no preprocessing; score a manifest with --data instead")?;
        let raw = read_table(input)?;
        for c in &pre.columns {
            if raw.headers.get(c.source) != Some(&c.name) {
                bail!("{}: column #{} should be `{}` as in the training table", input.display(), c.source + 1, c.name);
            }
        }
        let ids: Vec<usize> = (0..raw.rows.len()).collect();
        let data = pre.transform(&raw, &ids)?;
        (ids, data)
    } else {
        let ds = load_dataset(cfg)?;
        let data = match pre {
            Some(p) => p.transform(&ds.raw, &ds.splits.test)?,
            None => ds.data.test.clone(),
        };
        (ds.splits.test.clone(), data)
    };
    if data.n_features() != bundle.network.n_features() {
        bail!("data has {} features, model expects {}", data.n_features(), bundle.network.n_features());
    }
    let keep = cap.map_or(ids.len(), |c| c.min(ids.len()));
    let rows: Vec<usize> = (0..keep).collect();
    Ok((ids[..keep].to_vec(), data.select(&rows)))
}

fn predict(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let net = &bundle.network;
    let (ids, data) = scoring_rows(cfg, &bundle, cfg.rows)?;
    let logits = net.logits_eval(&data.to_tensor())?;
    let task = bundle.preprocessor.as_ref().map(|p| p.task);
    let classes: Option<Vec<usize>> = task
        .filter(|t| t.is_classification())
        .map(|_| (0..logits.rows()).map(|r| predicted_class(logits.row(r), net.link())).collect());
    let outputs = stable_link(&logits, net.link());
    write_predictions(&cfg.out.join("predictions.tsv"), net.spec(), &ids, &outputs, classes.as_deref())?;
    if let Some(task) = task {
        write_json(&cfg.out.join("metrics.json"), &predictive(net, &data, task)?)?;
    }
    Ok(())
}

fn explain(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let (ids, data) = scoring_rows(cfg, &bundle, cfg.rows)?;
    let x = data.to_tensor();
    let phi = bundle.attributions(&x)?;
    write_attributions(&cfg.out.join("attributions.tsv"), bundle.network.spec(), &ids, &phi)?;
    let gap = local_accuracy_gap(&bundle.network, &x)?;
    let summary = json!({
        "rows": ids.len(),
        "efficiency_normalized": bundle.efficiency(),
        "local_accuracy_gap": gap,
    });
    write_json(&cfg.out.join("metrics.json"), &summary)?;
    Ok(())
}

fn oracle_settings(cfg: &RunConfig) -> OracleSettings {
    OracleSettings {
        method: cfg.oracle_method,
        options: cfg.kernel_options(),
        seed: cfg.seed,
    }
}

fn oracle_cap(cfg: &RunConfig) -> usize {
    cfg.rows.map_or(cfg.oracle_instances, |r| r.min(cfg.oracle_instances))
}

fn explained_outputs(net: &ShapNetwork, data: &FeatureMatrix) -> anyhow::Result<Vec<usize>> {
    let logits = net.logits_eval(&data.to_tensor())?;
    Ok((0..data.rows()).map(|r| explained_output(logits.row(r), net.link())).collect())
}

#[derive(Serialize)]
struct OracleSummary {
    instances: usize,
    converged: usize,
    mean_samples: f64,
    max_samples: usize,
}

fn summarize_oracle(estimates: &[ShapleyEstimate]) -> OracleSummary {
    OracleSummary {
        instances: estimates.len(),
        converged: estimates.iter().filter(|e| e.converged).count(),
        mean_samples: estimates.iter().map(|e| e.samples as f64).sum::<f64>() / estimates.len().max(1) as f64,
        max_samples: estimates.iter().map(|e| e.samples).max().unwrap_or(0),
    }
}

fn oracle(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let net = &bundle.network;
    let (ids, data) = scoring_rows(cfg, &bundle, Some(oracle_cap(cfg)))?;
    let estimates = explain_rows(net, &bundle.value_function, &data, &oracle_settings(cfg), cfg.threads)?;
    write_oracle(&cfg.out.join("oracle.tsv"), net.spec(), &ids, &explained_outputs(net, &data)?, &estimates)?;
    write_json(&cfg.out.join("metrics.json"), &summarize_oracle(&estimates))?;
    Ok(())
}

/// Mean and standard deviation only; per-instance values go to the TSV.
fn fidelity_summary(report: &FidelityReport) -> serde_json::Value {
    let m = |r: &selfshap_core::metrics::MetricReport| json!({ "mean": r.mean, "std": r.std, "dropped": r.dropped });
    json!({
        "cosine": m(&report.cosine),
        "spearman": m(&report.spearman),
        "r_squared": m(&report.r_squared),
        "unconverged": report.unconverged,
    })
}

fn eval_fidelity(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let net = &bundle.network;
    let (ids, data) = scoring_rows(cfg, &bundle, Some(oracle_cap(cfg)))?;
    let (report, estimates) =
        fidelity_against_oracle(net, &bundle.value_function, bundle.efficiency(), &data, &oracle_settings(cfg), cfg.threads)?;
    write_oracle(&cfg.out.join("oracle.tsv"), net.spec(), &ids, &explained_outputs(net, &data)?, &estimates)?;
    let mut summary = fidelity_summary(&report);
    summary["instances"] = json!(ids.len());
    summary["oracle"] = serde_json::to_value(summarize_oracle(&estimates))?;
    write_json(&cfg.out.join("metrics.json"), &summary)?;
    Ok(())
}

/// Baseline used for masked features in curves: the value function's
/// reference row, or the transformed-space origin for marginal removal.
fn curve_baseline(vf: &ValueFunction, n: usize) -> Vec<f64> {
    match vf {
        ValueFunction::Baseline { baseline } => baseline.clone(),
        ValueFunction::Marginal { .. } => vec![0.0; n],
    }
}

fn curves(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let net = &bundle.network;
    let task = bundle
        .preprocessor
        .as_ref()
        .map(|p| p.task)
        .context("curves need the task recorded with the model's preprocessing")?;
    let (_, data) = scoring_rows(cfg, &bundle, cfg.rows)?;
    let baseline = curve_baseline(&bundle.value_function, net.n_features());
    let own = |data: &FeatureMatrix| -> anyhow::Result<_> {
        let phi = bundle.attributions(&data.to_tensor())?;
        let ranking: Vec<Vec<f64>> = (0..data.rows()).map(|r| phi.row(r).to_vec()).collect();
        Ok(inclusion_exclusion_curve(net, data, task, &cfg.curve_fractions, &baseline, Some(&ranking))?)
    };
    let mut all = vec![("viashap", own(&data)?)];
    if cfg.curve_oracle {
        let sub = data.head(oracle_cap(cfg));
        let estimates = explain_rows(net, &bundle.value_function, &sub, &oracle_settings(cfg), cfg.threads)?;
        let (n, d) = (net.n_features(), net.n_outputs());
        let outputs = explained_outputs(net, &sub)?;
        let ranking: Vec<Vec<f64>> = estimates
            .iter()
            .zip(&outputs)
            .map(|(e, &j)| {
                let mut full = vec![0.0; n * d];
                for i in 0..n {
                    full[i * d + j] = e.values[i * e.d + if e.d == 1 { 0 } else { j }];
                }
                full
            })
            .collect();
        let oracle = inclusion_exclusion_curve(net, &sub, task, &cfg.curve_fractions, &baseline, Some(&ranking))?;
        all = vec![("viashap", own(&sub)?), ("kernelshap", oracle)];
    }
    let refs: Vec<(&str, &_)> = all.iter().map(|(k, c)| (*k, c)).collect();
    write_curves(&cfg.out.join("curves.tsv"), &refs)?;
    write_json(&cfg.out.join("metrics.json"), &all.iter().map(|(k, c)| json!({ "explainer": k, "curves": c })).collect::<Vec<_>>())?;
    Ok(())
}

fn benchmark(cfg: &RunConfig) -> anyhow::Result<()> {
    let bundle = load_bundle(cfg)?;
    let (_, data) = scoring_rows(cfg, &bundle, None)?;
    if data.is_empty() {
        bail!("no rows to time");
    }
    // cycle through the available rows up to the requested count
    let rows: Vec<usize> = (0..cfg.timing_instances).map(|k| k % data.rows()).collect();
    let instances = data.select(&rows);
    let options = TimingOptions {
        repeats: cfg.timing_repeats,
        oracle_instances: cfg.timing_oracle_instances,
    };
    let report = benchmark_timing(&bundle.network, &bundle.value_function, &instances, &oracle_settings(cfg), &options)?;
    write_timing(&cfg.out.join("timing.tsv"), &report)?;
    write_json(&cfg.out.join("metrics.json"), &report)?;
    Ok(())
}

/// Grid values for a sweep, as config overrides.
pub fn sweep_cells(sweep: Sweep) -> Vec<(String, serde_json::Value)> {
    match sweep {
        Sweep::Beta => [0.1, 1.0, 10.0, 100.0].iter().map(|b| ("beta".into(), json!(b))).collect(),
        Sweep::Coalitions => (0..8).map(|s| ("coalitions".into(), json!(1usize << s))).collect(),
        Sweep::Link => [LinkChoice::Auto, LinkChoice::None]
            .iter()
            .map(|l| ("link".into(), serde_json::to_value(l).expect("serializable")))
            .collect(),
        Sweep::Efficiency => [true, false].iter().map(|e| ("efficiency".into(), json!(e))).collect(),
    }
}

#[derive(Serialize)]
struct AblationCell {
    key: String,
    value: serde_json::Value,
    best_epoch: usize,
    test: Predictive,
    fidelity: serde_json::Value,
}

fn ablate(cfg: &RunConfig) -> anyhow::Result<()> {
    let sweep = cfg.sweep.context("ablate needs --sweep")?;
    let ds = load_dataset(cfg)?;
    let rows = ds.data.test.head(oracle_cap(cfg));
    let mut cells = Vec::new();
    for (key, value) in sweep_cells(sweep) {
        let mut map = match serde_json::to_value(cfg)? {
            serde_json::Value::Object(m) => m,
            _ => unreachable!("config is an object"),
        };
        map.insert(key.clone(), value.clone());
        let cell_cfg: RunConfig = serde_json::from_value(serde_json::Value::Object(map))?;
        log::info!("ablate: {key} = {value}");
        let outcome = fit(&cell_cfg, &ds)?;
        let (report, _) = fidelity_against_oracle(
            &outcome.network,
            &outcome.value_function,
            cell_cfg.efficiency,
            &rows,
            &oracle_settings(&cell_cfg),
            cfg.threads,
        )?;
        cells.push(AblationCell {
            key,
            value,
            best_epoch: outcome.best_epoch,
            test: predictive(&outcome.network, &ds.data.test, ds.task())?,
            fidelity: fidelity_summary(&report),
        });
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    write_tsv(
        &cfg.out.join("ablation.tsv"),
        &["setting", "value", "best_epoch", "score", "auc", "cosine", "spearman", "r_squared", "unconverged"],
        cells.iter().map(|c| {
            let f = &c.fidelity;
            vec![
                c.key.clone(),
                c.value.to_string().trim_matches('"').to_string(),
                c.best_epoch.to_string(),
                c.test.score.to_string(),
                fmt(c.test.auc),
                fmt(f["cosine"]["mean"].as_f64()),
                fmt(f["spearman"]["mean"].as_f64()),
                fmt(f["r_squared"]["mean"].as_f64()),
                f["unconverged"].to_string(),
            ]
        }),
    )?;
    write_json(&cfg.out.join("metrics.json"), &cells)?;
    Ok(())
}

/// Writes `synthetic.csv` and `manifest.json` into `args.out`.
fn synth(args: &SynthArgs) -> anyhow::Result<()> {
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_synthetic(&args.out, args.rows, args.seed)?;
    Ok(())
}

/// Synthetic binary task as a CSV plus manifest; returns the manifest path.
pub fn write_synthetic(dir: &Path, rows: usize, seed: u64) -> anyhow::Result<std::path::PathBuf> {
    let data = synthetic_binary(rows, seed)?;
    let mut headers = data.feature_names().to_vec();
    headers.push("label".into());
    let csv_path = dir.join("synthetic.csv");
    write_table(
        &csv_path,
        &headers,
        (0..data.rows()).map(|r| {
            let mut cells: Vec<String> = data.row(r).iter().map(f64::to_string).collect();
            cells.push((data.label(r) as u8).to_string());
            cells
        }),
    )?;
    let mut manifest = DatasetManifest::new("synthetic.csv", "label");
    manifest.seed = seed;
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}
