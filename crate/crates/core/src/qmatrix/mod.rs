//! Q-matrix data model: the misconception library, binary item × attribute
//! matrices, LLM annotation sets, tier-filtered construction and comparison
//! against a reference matrix.

mod annotation;
mod confusion;
mod library;
mod matrix;

use thiserror::Error;

pub use annotation::{
    build_qmatrix, AnnotationFailure, AnnotationSet, FreeTextNote, ItemAnnotation, Label, OptionAnnotation, Provenance,
};
pub use confusion::{compare, ConfusionStats};
pub use library::{ConfidenceTier, Misconception, MisconceptionLibrary};
pub use matrix::QMatrix;

#[derive(Debug, Error)]
pub enum QMatrixError {
    #[error("misconception library is empty")]
    EmptyLibrary,
    #[error("{0} axis is empty")]
    EmptyAxis(&'static str),
    #[error("invalid id at position {position}")]
    InvalidId { position: usize },
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("expected {expected} cells, found {actual}")]
    Shape { expected: usize, actual: usize },
    #[error("row {row}, column {column:?}: cell must be 0 or 1, found {value:?}")]
    NonBinary { row: usize, column: String, value: String },
    #[error("row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("{axis} axes differ at position {position}: {left:?} vs {right:?}")]
    AxisMismatch { axis: &'static str, position: usize, left: String, right: String },
    #[error("annotation refers to unknown item {0:?}")]
    UnknownItem(String),
    #[error("annotation refers to misconception {0:?} which is not in the library")]
    UnknownAttribute(String),
    #[error("unknown confidence tier {0:?}")]
    UnknownTier(String),
    #[error("V0 annotations carry no library ids and cannot be mapped to a Q-matrix")]
    UnmappedVersion,
    #[error("malformed JSON: {0}")]
    Json(String),
}
