//! Ground-truth Shapley values for many instances, computed in parallel.
//!
//! Every instance draws from its own seeded stream, so results do not
//! depend on the thread count.

use rayon::prelude::*;

use selfshap_core::data::FeatureMatrix;
use selfshap_core::metrics::explained_output;
use selfshap_core::rng::{domain, Rng};
use selfshap_core::shapley::{
    exact_shapley, unbiased_kernelshap, CachedGame, KernelShapOptions, ModelGame, OutputSelection, ShapleyEstimate,
    ValueFunction,
};
use selfshap_core::ShapNetwork;

use crate::config::OracleMethod;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub method: OracleMethod,
    pub options: KernelShapOptions,
    pub seed: u64,
}

/// Runs `f` on a pool of `threads` workers (0 = one per core).
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))?;
    Ok(pool.install(f))
}

/// Oracle for one instance. The game pays out the output the network's
/// explanation is read from: the predicted class for multi-output models.
pub fn explain_instance(
    net: &ShapNetwork,
    vf: &ValueFunction,
    x: &[f64],
    row: u64,
    settings: &OracleSettings,
) -> Result<ShapleyEstimate> {
    let outputs = if net.n_outputs() == 1 {
        OutputSelection::All
    } else {
        OutputSelection::One(explained_output(&net.forward(x)?.logits, net.link()))
    };
    let game = ModelGame::new(net, x, vf, outputs)?;
    let n = net.n_features();
    match settings.method {
        OracleMethod::Exact => {
            let values = exact_shapley(&game)?;
            Ok(ShapleyEstimate {
                n,
                d: values.len() / n,
                std_errors: vec![0.0; values.len()],
                values,
                samples: 1 << n,
                converged: true,
            })
        }
        OracleMethod::Kernel => {
            // paired sampling revisits coalitions, and small games repeat them often
            let cached = CachedGame::new(game);
            let rng = Rng::stream(settings.seed, domain::ORACLE, row, 0);
            Ok(unbiased_kernelshap(&cached, &settings.options, rng, |_| {})?)
        }
    }
}

/// Oracle estimates for every row of `data`, in row order.
pub fn explain_rows(
    net: &ShapNetwork,
    vf: &ValueFunction,
    data: &FeatureMatrix,
    settings: &OracleSettings,
    threads: usize,
) -> Result<Vec<ShapleyEstimate>> {
    with_threads(threads, || {
        (0..data.rows())
            .into_par_iter()
            .map(|r| explain_instance(net, vf, data.row(r), r as u64, settings))
            .collect::<Result<Vec<_>>>()
    })?
}
