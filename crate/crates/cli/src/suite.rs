//! Ordered collections of runs executed on a bounded worker pool.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tscom_core::metrics::CompressionReport;

use crate::error::HarnessError;
use crate::run::{run, RunConfig, RunOutcome};

pub const WORKERS_ENV: &str = "TSCOM_WORKERS";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSuite {
    pub runs: Vec<RunConfig>,
}

impl BenchSuite {
    pub fn new(runs: Vec<RunConfig>) -> Self {
        Self { runs }
    }

    /// Hex SHA-256 of the suite's canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("suite serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Executes every run, at most `workers` at a time. Results come back in suite
    /// order regardless of scheduling.
    pub fn execute(&self, workers: usize) -> Vec<Result<RunOutcome, HarnessError>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .expect("thread pool");
        pool.install(|| self.runs.par_iter().map(run).collect())
    }
}

/// Worker count from `TSCOM_WORKERS`, else the number of CPUs.
pub fn workers_from_env() -> Result<usize, HarnessError> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::Config(format!(
                "{WORKERS_ENV} must be a positive integer, got {v:?}"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Reports of the successful runs, in suite order.
pub fn collect_reports(results: &[Result<RunOutcome, HarnessError>]) -> Vec<CompressionReport> {
    results
        .iter()
        .filter_map(|r| r.as_ref().ok()?.report.clone())
        .collect()
}
