//! Run orchestration: self-describing run directories, the full
//! generate-build-validate-compare loop, and ranked reports.

mod config;
mod report;
mod run;
mod rundir;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{LabeledPath, RunConfig, RunInputs};
pub use report::{
    assemble_report, compare_rows, rank_rows, render_markdown, write_report, CandidateRow, FitSummary, RowSource,
    RunReport,
};
pub use run::{annotation_cache_key, run_full, sha256_hex, RunOutcome};
pub use rundir::{file_stem, Manifest, ManifestEntry, RunDir, MANIFEST_FILE};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Input { path: PathBuf, message: String },
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("{label}: {message}")]
    Candidate { label: String, message: String },
}

impl PipelineError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.into(), source }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        PipelineError::Input { path: path.into(), message: message.to_string() }
    }
}
