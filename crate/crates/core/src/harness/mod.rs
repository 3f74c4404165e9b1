//! Experiment orchestration: configuration, artifacts and the staged pipeline.

pub mod artifacts;
pub mod campaign;
pub mod config;
pub mod curves;
pub mod data;
pub mod experiment;
pub mod report;
pub mod summary;

pub use artifacts::{Artifacts, Stamped};
pub use campaign::AnnealOutcome;
pub use config::{AnnealCampaign, ExperimentConfig, Scenario};
pub use experiment::{run_universe_experiment, ExperimentOutput, MetricTable, StrategyRecord, Universe};
pub use summary::{RegretSummary, SummaryRow};

/// Environment variable read by [`thread_pool`] when no count is given.
pub const THREADS_ENV: &str = "STEGOGEOM_THREADS";

/// A rayon pool with `threads` workers, else `STEGOGEOM_THREADS`, else one per core.
pub fn thread_pool(threads: Option<usize>) -> crate::Result<rayon::ThreadPool> {
    let n = threads
        .or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| crate::Error::InvalidParameter(format!("thread pool: {e}")))
}
