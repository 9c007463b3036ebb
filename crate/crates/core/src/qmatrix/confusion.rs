use serde::{Deserialize, Serialize};

use super::{QMatrix, QMatrixError};

/// Cell-level agreement of a candidate Q-matrix with a reference matrix.
///
/// Ratios with a zero denominator are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub tpr: f64,
    pub tnr: f64,
    pub precision: f64,
    pub recall: f64,
    pub micro_f1: f64,
    /// Unweighted mean of the positive-class and negative-class F1.
    pub macro_f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionStats {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let recall = ratio(tp, tp + fn_);
        let pos_f1 = ratio(2 * tp, 2 * tp + fp + fn_);
        let neg_f1 = ratio(2 * tn, 2 * tn + fp + fn_);
        Self {
            tp,
            fp,
            fn_,
            tn,
            tpr: recall,
            tnr: ratio(tn, tn + fp),
            precision: ratio(tp, tp + fp),
            recall,
            micro_f1: pos_f1,
            macro_f1: (pos_f1 + neg_f1) / 2.0,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Tallies candidate against reference cell by cell. Both matrices must share
/// item and attribute axes in the same order.
pub fn compare(candidate: &QMatrix, reference: &QMatrix) -> Result<ConfusionStats, QMatrixError> {
    candidate.same_axes(reference)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0u64, 0u64, 0u64, 0u64);
    for (&c, &r) in candidate.cells().iter().zip(reference.cells()) {
        match (c, r) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok(ConfusionStats::from_counts(tp, fp, fn_, tn))
}
