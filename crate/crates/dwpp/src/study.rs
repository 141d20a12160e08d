//! Parallel study runner. Replicates are independent and carry their own
//! seeds, so the assembled report does not depend on the worker count.

use anyhow::{Context, Result};
use rayon::prelude::*;

use dwpp_core::montecarlo::{self, McReport, ReplicateResult, ScenarioSpec};

/// Run `scenario` on a pool of `workers` threads (0 means one per core).
pub fn run_study(scenario: &ScenarioSpec, workers: usize) -> Result<McReport> {
    run_study_with_progress(scenario, workers, |_| {})
}

pub fn run_study_with_progress<F>(scenario: &ScenarioSpec, workers: usize, progress: F) -> Result<McReport>
where
    F: Fn(&ReplicateResult) + Sync,
{
    scenario.validate().with_context(|| format!("scenario '{}'", scenario.name))?;
    let truth = montecarlo::resolve_truth(scenario).with_context(|| format!("truth for scenario '{}'", scenario.name))?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build().context("building worker pool")?;
    let results: Vec<ReplicateResult> = pool.install(|| {
        (0..scenario.replicates)
            .into_par_iter()
            .map(|r| {
                let res = montecarlo::run_replicate(scenario, r);
                progress(&res);
                res
            })
            .collect()
    });
    Ok(montecarlo::assemble(scenario, truth, results))
}

/// One-screen table of bias and MSE per method and parameter.
pub fn format_summary(report: &McReport) -> String {
    let mut out = format!(
        "scenario {} ({} replicates, {} failed fits)\n{:<20} {:<9} {:>9} {:>9} {:>9} {:>9}\n",
        report.scenario,
        report.replicates,
        report.failures.len(),
        "method",
        "parameter",
        "truth",
        "bias",
        "mse",
        "rel_bias"
    );
    for r in &report.summary {
        out.push_str(&format!(
            "{:<20} {:<9} {:>9.4} {:>9.4} {:>9.4} {:>9.4}\n",
            r.method, r.parameter, r.truth, r.stats.bias, r.stats.mse, r.stats.relative_bias
        ));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}
