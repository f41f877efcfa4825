//! Grid evaluation of the analytic solution.

use rayon::prelude::*;

use crate::blockalg::NodeContext;
use crate::config::RunConfig;
use crate::error::Result;
use crate::evolve::{evaluate_node, BlockElements, NodeResult};
use crate::observables::{EvalDiagnostics, ObservableSeries, Origin};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "GRAVOJCM_THREADS";

/// Worker count from `GRAVOJCM_THREADS`, if set to a positive integer.
pub fn threads_from_env() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

pub(crate) fn pool(threads: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build().expect("thread pool")
}

/// Evaluates the analytic solution on the configured (t, p) grid. Nodes are
/// computed in parallel and reduced in (t, p) order, so results do not
/// depend on the worker count.
pub fn simulate(cfg: &RunConfig, threads: Option<usize>) -> Result<ObservableSeries> {
    let init = cfg.initial_state()?;
    let grid = &init.momentum;
    let times = cfg.time_grid();
    let np = grid.len();
    let pairs: Vec<(usize, usize)> =
        (0..times.len()).flat_map(|i| (0..np).map(move |j| (i, j))).collect();
    let params = &cfg.physical;
    let numerics = &cfg.numerics;
    let results: Vec<NodeResult> = pool(threads).install(|| {
        pairs
            .par_iter()
            .map(|&(i, j)| {
                let ctx = NodeContext::new(grid.nodes[j], times.seconds[i], params);
                evaluate_node(&ctx, &init.field_weights, numerics.mode, numerics)
            })
            .collect()
    });

    let mut series = ObservableSeries::new(Origin::Analytic);
    for (i, chunk) in results.chunks(np).enumerate() {
        let elements: Vec<BlockElements> = chunk.iter().map(|r| r.elements.clone()).collect();
        let eval = EvalDiagnostics {
            k_max_used: chunk.iter().map(|r| r.k_reached).max().unwrap_or(0),
            converged: chunk.iter().all(|r| r.converged),
            tail_estimate: chunk.iter().map(|r| r.tail_estimate).fold(0.0, f64::max),
            hermiticity_residual: chunk.iter().map(|r| r.hermiticity_residual).fold(0.0, f64::max),
        };
        series.push(
            times.lambda_t[i],
            times.seconds[i],
            &elements,
            grid,
            params,
            numerics.trace_mode,
            eval,
        );
    }
    Ok(series)
}
