//! Configuration, orchestration and reporting for randhyp experiments.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_config, ConfigErrors, ExperimentConfig, Task, TaskParams};
pub use report::{write_report, RunReport};
pub use runner::{run_task, Outcome, Table, Verdict};

/// Runs `f` on a dedicated pool of `threads` workers (all cores when `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> anyhow::Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    Ok(builder.build()?.install(f))
}
