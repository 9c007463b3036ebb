//! Generate-and-validate toolkit for Q-matrices.
//!
//! LLMs propose item × misconception mappings ([`annotator`]), confidence
//! tiers filter them into candidate matrices ([`qmatrix`]), and a
//! monotone neural cognitive-diagnosis model ranks the candidates by
//! predictive fit on student responses ([`cdm`]). A DINA simulator
//! ([`simulator`]) provides data with a known ground truth, and
//! [`pipeline`] ties the stages together into reproducible run directories.

pub mod annotator;
pub mod cdm;
pub mod pipeline;
pub mod qmatrix;
pub mod rng;
pub mod simulator;

pub use qmatrix::{ConfidenceTier, QMatrix};
