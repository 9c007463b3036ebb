use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{auc, rmse, train_records, CdmConfig, CdmError, Record, ResponseLog};
use crate::qmatrix::QMatrix;
use crate::rng::{seeded, Stream};

/// Students with fewer records than this keep everything in training.
pub const MIN_RECORDS_FOR_HOLDOUT: usize = 5;
const HOLDOUT_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub repeat: usize,
    pub seed: u64,
    pub auc: f64,
    pub rmse: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Repeated-holdout fit of one Q-matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub per_split: Vec<SplitResult>,
    pub config: CdmConfig,
    /// Wall-clock time of the whole run. The only non-deterministic field.
    pub elapsed_seconds: f64,
}

impl FitReport {
    fn from_splits(per_split: Vec<SplitResult>, config: &CdmConfig, elapsed_seconds: f64) -> Self {
        let aucs: Vec<f64> = per_split.iter().map(|s| s.auc).collect();
        let rmses: Vec<f64> = per_split.iter().map(|s| s.rmse).collect();
        let (auc_mean, auc_std) = mean_std(&aucs);
        let (rmse_mean, rmse_std) = mean_std(&rmses);
        Self { auc_mean, auc_std, rmse_mean, rmse_std, per_split, config: config.clone(), elapsed_seconds }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit report serializes")
    }

    /// JSON with the wall-clock field zeroed; identical inputs give identical bytes.
    pub fn to_canonical_json(&self) -> String {
        Self { elapsed_seconds: 0.0, ..self.clone() }.to_json()
    }
}

/// Mean and sample standard deviation; the deviation of one sample is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Within-student holdout: 20% of each student's records (rounded down, at
/// least one) go to the test pool when the student has 5 or more records.
pub fn holdout_split(records: &[Record], n_students: usize, seed: u64) -> (Vec<Record>, Vec<Record>) {
    let mut by_student: Vec<Vec<Record>> = vec![Vec::new(); n_students];
    for r in records {
        by_student[r.student].push(*r);
    }
    let mut rng = seeded(seed, Stream::Split);
    let mut train = Vec::with_capacity(records.len());
    let mut test = Vec::new();
    for mut own in by_student {
        if own.len() < MIN_RECORDS_FOR_HOLDOUT {
            train.extend(own);
            continue;
        }
        own.shuffle(&mut rng);
        let n_test = ((own.len() as f64 * HOLDOUT_FRACTION).floor() as usize).max(1);
        test.extend_from_slice(&own[..n_test]);
        train.extend_from_slice(&own[n_test..]);
    }
    (train, test)
}

fn run_repeat(
    records: &[Record],
    n_students: usize,
    q: &QMatrix,
    config: &CdmConfig,
    repeat: usize,
) -> Result<SplitResult, CdmError> {
    let seed = config.seed.wrapping_add(repeat as u64);
    let (train, test) = holdout_split(records, n_students, seed);
    if test.is_empty() {
        return Err(CdmError::EmptyInput("test pool (no student has 5 or more records)"));
    }
    let cfg = CdmConfig { seed, ..config.clone() };
    let trained = train_records(&train, n_students, q, &cfg)?;
    let pairs: Vec<(f64, u8)> =
        test.iter().map(|r| (trained.model.predict_unchecked(r.student, r.item), r.score)).collect();
    Ok(SplitResult {
        repeat,
        seed,
        auc: auc(&pairs).ok_or(CdmError::UndefinedAuc { repeat })?,
        rmse: rmse(&pairs)?,
        n_train: train.len(),
        n_test: test.len(),
        best_epoch: trained.best_epoch,
        epochs_run: trained.history.len(),
    })
}

fn prepare(
    logs: &ResponseLog,
    q: &QMatrix,
    config: &CdmConfig,
    n_repeats: usize,
) -> Result<(usize, Vec<Record>), CdmError> {
    config.validate()?;
    if n_repeats == 0 {
        return Err(CdmError::Config("n_repeats must be at least 1".into()));
    }
    if logs.is_empty() {
        return Err(CdmError::EmptyInput("response log"));
    }
    let (students, records) = logs.index(q)?;
    Ok((students.len(), records))
}

/// Trains and scores `n_repeats` independent holdout splits; repeat `r` uses
/// seed `config.seed + r`.
pub fn cross_validate(
    logs: &ResponseLog,
    q: &QMatrix,
    config: &CdmConfig,
    n_repeats: usize,
) -> Result<FitReport, CdmError> {
    let start = Instant::now();
    let (n_students, records) = prepare(logs, q, config, n_repeats)?;
    let splits =
        (0..n_repeats).map(|r| run_repeat(&records, n_students, q, config, r)).collect::<Result<Vec<_>, _>>()?;
    Ok(FitReport::from_splits(splits, config, start.elapsed().as_secs_f64()))
}

/// Same result as [`cross_validate`], with repeats fanned out over threads.
pub fn cross_validate_parallel(
    logs: &ResponseLog,
    q: &QMatrix,
    config: &CdmConfig,
    n_repeats: usize,
) -> Result<FitReport, CdmError> {
    let start = Instant::now();
    let (n_students, records) = prepare(logs, q, config, n_repeats)?;
    let splits = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..n_repeats)
            .map(|r| {
                let records = &records;
                scope.spawn(move || run_repeat(records, n_students, q, config, r))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("repeat thread panicked")).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(FitReport::from_splits(splits, config, start.elapsed().as_secs_f64()))
}
