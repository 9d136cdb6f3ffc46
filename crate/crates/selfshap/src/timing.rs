//! Wall-clock comparison of amortized and oracle explanations.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use selfshap_core::data::FeatureMatrix;
use selfshap_core::shapley::ValueFunction;
use selfshap_core::ShapNetwork;

use crate::config::OracleMethod;
use crate::error::Result;
use crate::oracle::{explain_instance, OracleSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingOptions {
    /// Timed repetitions; the median is reported.
    pub repeats: usize,
    /// Instances actually explained by the oracle; the total is scaled up
    /// to the full instance count.
    pub oracle_instances: usize,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            oracle_instances: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTiming {
    pub method: String,
    /// Instances the total refers to.
    pub instances: usize,
    /// Instances actually timed.
    pub measured: usize,
    pub total_seconds: f64,
    pub per_instance_seconds: f64,
    /// Every repetition's total, before taking the median.
    pub runs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub network: MethodTiming,
    pub oracle: MethodTiming,
    /// Oracle total over network total.
    pub speedup: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn timed(mut f: impl FnMut() -> Result<()>) -> Result<Duration> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed())
}

fn summarize(method: &str, instances: usize, measured: usize, runs: Vec<Duration>) -> MethodTiming {
    let scale = instances as f64 / measured as f64;
    let runs: Vec<f64> = runs.iter().map(|d| d.as_secs_f64() * scale).collect();
    let total = median(runs.clone());
    MethodTiming {
        method: method.to_string(),
        instances,
        measured,
        total_seconds: total,
        per_instance_seconds: total / instances as f64,
        runs,
    }
}

/// Times one forward pass per instance through `net` against the sampling
/// oracle on the same model. Runs single-threaded after a warm-up pass.
pub fn benchmark_timing(
    net: &ShapNetwork,
    vf: &ValueFunction,
    instances: &FeatureMatrix,
    settings: &OracleSettings,
    options: &TimingOptions,
) -> Result<TimingReport> {
    let rows = instances.rows();
    let oracle_rows = options.oracle_instances.clamp(1, rows.max(1));
    let forward_all = || -> Result<()> {
        for r in 0..rows {
            std::hint::black_box(net.forward(instances.row(r))?);
        }
        Ok(())
    };
    let oracle_all = || -> Result<()> {
        for r in 0..oracle_rows {
            std::hint::black_box(explain_instance(net, vf, instances.row(r), r as u64, settings)?);
        }
        Ok(())
    };

    forward_all()?;
    explain_instance(net, vf, instances.row(0), 0, settings)?;

    let mut net_runs = Vec::with_capacity(options.repeats);
    let mut oracle_runs = Vec::with_capacity(options.repeats);
    for _ in 0..options.repeats.max(1) {
        net_runs.push(timed(forward_all)?);
        oracle_runs.push(timed(oracle_all)?);
    }
    let network = summarize("network", rows, rows, net_runs);
    let name = match settings.method {
        OracleMethod::Kernel => "unbiased_kernelshap",
        OracleMethod::Exact => "exact_shapley",
    };
    let oracle = summarize(name, rows, oracle_rows, oracle_runs);
    Ok(TimingReport {
        speedup: oracle.total_seconds / network.total_seconds,
        network,
        oracle,
    })
}
