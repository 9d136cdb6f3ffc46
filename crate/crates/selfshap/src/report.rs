//! Tab-separated and JSON outputs.
//!
//! Floats are written in Rust's shortest round-trip form, so equal values
//! always produce equal text.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use selfshap_core::metrics::Curves;
use selfshap_core::shapley::ShapleyEstimate;
use selfshap_core::train::EpochReport;
use selfshap_core::{NetworkSpec, Tensor};

use crate::error::{Error, Result};
use crate::timing::TimingReport;

/// Writes a header and rows as tab-separated text.
pub fn write_tsv<R, I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "{}", header.join("\t")).map_err(io)?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().collect();
        writeln!(w, "{}", cells.join("\t")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// `epochs.tsv`: one line per epoch with both splits' losses.
pub fn write_epochs(path: &Path, history: &[EpochReport]) -> Result<()> {
    let header = [
        "epoch",
        "train_prediction",
        "train_shapley",
        "train_total",
        "valid_prediction",
        "valid_shapley",
        "valid_total",
    ];
    write_tsv(
        path,
        &header,
        history.iter().map(|e| {
            [
                e.epoch.to_string(),
                e.train.prediction.to_string(),
                e.train.shapley.to_string(),
                e.train.total.to_string(),
                e.valid.prediction.to_string(),
                e.valid.shapley.to_string(),
                e.valid.total.to_string(),
            ]
        }),
    )
}

/// `attributions.tsv`: one line per instance holding its `n x d` matrix,
/// columns named `<feature>:<output>`.
pub fn write_attributions(path: &Path, spec: &NetworkSpec, rows: &[usize], phi: &Tensor) -> Result<()> {
    let (n, d) = (spec.n_features, spec.n_outputs);
    let names: Vec<String> = (0..n)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| format!("{}:{}", spec.feature_name(i), spec.output_label(j)))
        .collect();
    let mut header = vec!["row"];
    header.extend(names.iter().map(String::as_str));
    write_tsv(
        path,
        &header,
        rows.iter().enumerate().map(|(k, row)| {
            std::iter::once(row.to_string()).chain(phi.row(k).iter().map(f64::to_string))
        }),
    )
}

/// `predictions.tsv`: the link applied to the logits, plus the predicted
/// class for classifiers.
pub fn write_predictions(path: &Path, spec: &NetworkSpec, rows: &[usize], outputs: &Tensor, classes: Option<&[usize]>) -> Result<()> {
    let labels: Vec<String> = (0..spec.n_outputs).map(|j| spec.output_label(j)).collect();
    let mut header = vec!["row"];
    header.extend(labels.iter().map(String::as_str));
    if classes.is_some() {
        header.push("predicted");
    }
    write_tsv(
        path,
        &header,
        rows.iter().enumerate().map(|(k, row)| {
            let mut cells = vec![row.to_string()];
            cells.extend(outputs.row(k).iter().map(f64::to_string));
            if let Some(c) = classes {
                cells.push(c[k].to_string());
            }
            cells
        }),
    )
}

/// `oracle.tsv`: one line per (instance, feature, output) with the estimate,
/// its standard error, the coalitions evaluated and whether the run met the
/// tolerance. `output` is the explained output's label.
pub fn write_oracle(path: &Path, spec: &NetworkSpec, rows: &[usize], outputs: &[usize], estimates: &[ShapleyEstimate]) -> Result<()> {
    let header = ["row", "feature", "output", "estimate", "std_error", "samples", "converged"];
    let mut lines = Vec::new();
    for ((row, &out), est) in rows.iter().zip(outputs).zip(estimates) {
        for i in 0..est.n {
            for j in 0..est.d {
                let label = if est.d == 1 { out } else { j };
                lines.push(vec![
                    row.to_string(),
                    spec.feature_name(i),
                    spec.output_label(label),
                    est.values[i * est.d + j].to_string(),
                    est.std_errors[i * est.d + j].to_string(),
                    est.samples.to_string(),
                    est.converged.to_string(),
                ]);
            }
        }
    }
    write_tsv(path, &header, lines)
}

/// `curves.tsv`: one line per (explainer, fraction).
pub fn write_curves(path: &Path, curves: &[(&str, &Curves)]) -> Result<()> {
    let mut lines = Vec::new();
    for (name, c) in curves {
        for (k, f) in c.fractions.iter().enumerate() {
            lines.push(vec![
                name.to_string(),
                f.to_string(),
                c.inclusion[k].to_string(),
                c.exclusion[k].to_string(),
            ]);
        }
    }
    write_tsv(path, &["explainer", "fraction", "inclusion", "exclusion"], lines)
}

/// `timing.tsv`: one line per method.
pub fn write_timing(path: &Path, report: &TimingReport) -> Result<()> {
    let header = ["method", "instances", "measured", "total_seconds", "per_instance_seconds"];
    write_tsv(
        path,
        &header,
        [&report.network, &report.oracle].map(|m| {
            vec![
                m.method.clone(),
                m.instances.to_string(),
                m.measured.to_string(),
                m.total_seconds.to_string(),
                m.per_instance_seconds.to_string(),
            ]
        }),
    )
}
