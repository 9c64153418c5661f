//! Task folders on disk and the JSONL results store.

mod results;
mod task;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use results::{
    best_per_task, compare, read_store, report, CheckpointLine, CompareBy, Comparison, Outcome, Report,
    ReportRow, ResultsWriter, RunInfo, StoreContents, StoreLine, SummaryLine, TaskComparison, TrialLine,
    TIE_TOLERANCE,
};
pub use task::{ingest_task, is_missing, TaskData, PIPELINES_DIR, TASK_FILE, TEST_FILE, TRAIN_FILE};

#[derive(Debug, Clone, Error)]
pub enum StoreError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: Arc<std::io::Error>,
    },
    #[error("{}: {message}", path.display())]
    TaskJson { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
    #[error("{split} split has no column {target:?}")]
    MissingTarget { split: &'static str, target: String },
    #[error("{split} split row {row} has no target value")]
    MissingTargetValue { split: &'static str, row: usize },
    #[error("{split} split row {row}: target {value:?} is not a number")]
    TargetNotNumeric { split: &'static str, row: usize, value: String },
    #[error("train and test columns differ: {train:?} vs {test:?}")]
    SchemaMismatch { train: Vec<String>, test: Vec<String> },
    #[error("{0} split has no rows")]
    EmptySplit(&'static str),
    #[error("the stores share no tasks")]
    NoSharedTasks,
}

impl StoreError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        StoreError::Io { path: path.to_path_buf(), source: Arc::new(e) }
    }
}

#[cfg(test)]
mod tests;
