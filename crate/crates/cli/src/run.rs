//! Dispatch from a resolved config to the experiment runners.

use anyhow::{Context, Result};
use bosonic_dnm::experiments::{
    run_decay_fit, run_dnm_map, run_extremal_dnm, run_memristor, run_scaling, run_simulate, run_switching,
    ExperimentResult,
};

use crate::config::{RunConfig, Spec};

pub fn run_spec(spec: &Spec) -> Result<ExperimentResult> {
    let r = match spec {
        Spec::Simulate(s) => run_simulate(s),
        Spec::DnmMap(s) => run_dnm_map(s),
        Spec::Scaling(s) => run_scaling(s),
        Spec::Extremal(s) => run_extremal_dnm(s),
        Spec::Switch(s) => run_switching(s),
        Spec::FitDecay(s) => run_decay_fit(s),
        Spec::Memristor(s) => run_memristor(s),
    };
    Ok(r?)
}

/// Runs the experiment on a pool of `config.workers` threads.
pub fn execute(config: &RunConfig) -> Result<ExperimentResult> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = config.workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().context("starting worker pool")?;
    pool.install(|| run_spec(&config.spec))
}
