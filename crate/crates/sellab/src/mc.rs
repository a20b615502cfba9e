//! Parallel replication pool and per-dataset method runs.

use std::time::Instant;

use rayon::prelude::*;
use sellab_core::simlab::{
    estimate_method, run_replication, summarize, DgpSpec, Method, MethodSettings, MonteCarloReport, ReplicationOutcome,
};
use sellab_core::stage1::sbgd_first_stage;
use sellab_core::Dataset;

use crate::report::MethodEstimate;

/// Environment variable holding the default worker count.
pub const THREADS_ENV: &str = "SELLAB_THREADS";

fn pool(threads: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build()?)
}

/// Runs `reps` replications on `threads` workers. Replication `r` always uses
/// seed `spec.seed + r`, and outcomes are aggregated in replication order, so
/// every number except the timings is independent of `threads`.
pub fn run_parallel(
    spec: &DgpSpec,
    methods: &[Method],
    reps: usize,
    settings: &MethodSettings,
    threads: usize,
) -> anyhow::Result<MonteCarloReport> {
    anyhow::ensure!(reps > 0, "at least one replication is required");
    let start = Instant::now();
    let clock = || start.elapsed().as_secs_f64();
    let outcomes: Vec<ReplicationOutcome> = pool(threads)?.install(|| {
        (0..reps)
            .into_par_iter()
            .map(|r| {
                let out = run_replication(spec, r, methods, settings, clock);
                log::debug!("replication {r} done");
                out
            })
            .collect::<sellab_core::Result<_>>()
    })?;
    Ok(summarize(spec, methods, &outcomes)?)
}

/// Runs each method on one dataset, in parallel across methods. The first
/// stage is fitted once and shared by the semiparametric methods. Results
/// come back in the order of `methods`.
pub fn estimate_all(
    data: &Dataset,
    methods: &[Method],
    settings: &MethodSettings,
    threads: usize,
) -> anyhow::Result<Vec<MethodEstimate>> {
    pool(threads)?.install(|| {
        let first = methods
            .iter()
            .any(|m| m.uses_first_stage())
            .then(|| sbgd_first_stage(data, &settings.first_stage).map_err(|e| e.to_string()));
        Ok(methods
            .par_iter()
            .map(|&method| {
                let result = match (&first, method.uses_first_stage()) {
                    (Some(Err(e)), true) => Err(format!("first stage: {e}")),
                    (Some(Ok(f)), true) => estimate_method(data, method, settings, Some(f)).map_err(|e| e.to_string()),
                    _ => estimate_method(data, method, settings, None).map_err(|e| e.to_string()),
                };
                MethodEstimate { method, result }
            })
            .collect())
    })
}
