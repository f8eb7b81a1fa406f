use std::time::{SystemTime, UNIX_EPOCH};

use evrec_core::regression::Regime;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Completed,
    Failed,
}

/// One training run. Timestamps are seconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub status: RunStatus,
    pub regimes: Vec<Regime>,
    pub seed: u64,
    pub n_splits: usize,
    pub submitted_at: u64,
    pub started_at: Option<u64>,
    pub finished_at: Option<u64>,
    /// Where the report was written, when it was.
    pub report_file: Option<String>,
    /// Ids of the averaged models produced by the run.
    pub models: Vec<String>,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn queued(run_id: impl Into<String>, regimes: Vec<Regime>, seed: u64, n_splits: usize) -> Self {
        Self {
            run_id: run_id.into(),
            status: RunStatus::Queued,
            regimes,
            seed,
            n_splits,
            submitted_at: now(),
            started_at: None,
            finished_at: None,
            report_file: None,
            models: Vec::new(),
            error: None,
        }
    }
}

pub fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}
