//! NeuralCDM: embedding-based student and item parameters feeding a
//! monotonicity-constrained interaction network, trained from scratch with
//! Adam and scored by AUC/RMSE under repeated within-student holdout.
//!
//! Prediction for one student on one item:
//!
//! ```text
//! x  = q_row * (sigmoid(proficiency) - sigmoid(difficulty)) * sigmoid(discrimination)
//! p  = sigmoid(w3 . sigmoid(w2 . sigmoid(w1 . x + b1) + b2) + b3)
//! ```
//!
//! with w1, w2, w3 kept element-wise non-negative so `p` never decreases
//! when a required proficiency increases.

mod data;
mod metrics;
mod model;
mod train;
mod validate;

use thiserror::Error;

pub use data::{Record, Response, ResponseLog};
pub use metrics::{auc, rmse};
pub use model::{CdmConfig, CdmModel, Params};
pub use train::{train, train_records, EpochRecord, TrainedCdm};
pub use validate::{cross_validate, cross_validate_parallel, holdout_split, mean_std, FitReport, SplitResult};

#[derive(Debug, Error)]
pub enum CdmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange { what: &'static str, index: usize, len: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("response log refers to item {0:?} which is not in the Q-matrix")]
    UnknownItem(String),
    #[error("AUC undefined on the test pool of repeat {repeat}: single label class")]
    UndefinedAuc { repeat: usize },
    #[error("response log line {line}: {message}")]
    Csv { line: usize, message: String },
}
