use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{auc, rmse, CdmConfig, CdmError, CdmModel, Params, Record, ResponseLog};
use crate::qmatrix::QMatrix;
use crate::rng::{seeded, Stream};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;
const VALIDATION_FRACTION: f64 = 0.1;

struct Adam {
    lr: f64,
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(lr: f64, like: &Params) -> Self {
        Self { lr, m: Params::zeros_like(like), v: Params::zeros_like(like), t: 0 }
    }

    fn step(&mut self, params: &mut Params, grads: &Params) {
        self.t += 1;
        let step = self.lr * (1.0 - BETA2.powi(self.t)).sqrt() / (1.0 - BETA1.powi(self.t));
        let eps_hat = EPS * (1.0 - BETA2.powi(self.t)).sqrt();
        let grads = grads.tables();
        let ms = self.m.tables_mut();
        let vs = self.v.tables_mut();
        for (((p, m), v), g) in params.tables_mut().into_iter().zip(ms).zip(vs).zip(grads) {
            for n in 0..p.len() {
                let gn = g[n];
                m[n] = BETA1 * m[n] + (1.0 - BETA1) * gn;
                v[n] = BETA2 * v[n] + (1.0 - BETA2) * gn * gn;
                p[n] -= step * m[n] / (v[n].sqrt() + eps_hat);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_auc: Option<f64>,
    pub val_rmse: Option<f64>,
}

/// A model restored to its best validation epoch, with the training history.
#[derive(Debug, Clone)]
pub struct TrainedCdm {
    pub model: CdmModel,
    pub student_ids: Vec<String>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// The validation slice held a single class, so AUC was undefined and
    /// early stopping monitored validation loss instead.
    pub degenerate_auc: bool,
    /// Smallest interaction weight observed after any optimizer step.
    pub min_weight_seen: f64,
}

impl TrainedCdm {
    pub fn predict(&self, record: &Record) -> Result<f64, CdmError> {
        self.model.predict(record.student, record.item)
    }
}

/// Trains on a response log. Students are indexed by first appearance.
pub fn train(logs: &ResponseLog, q: &QMatrix, config: &CdmConfig) -> Result<TrainedCdm, CdmError> {
    if logs.is_empty() {
        return Err(CdmError::EmptyInput("response log"));
    }
    let (student_ids, records) = logs.index(q)?;
    let mut trained = train_records(&records, student_ids.len(), q, config)?;
    trained.student_ids = student_ids;
    Ok(trained)
}

/// Mini-batch Adam with post-step projection of W1..W3 onto `>= 0` and early
/// stopping on a 10% validation slice of `records`.
pub fn train_records(
    records: &[Record],
    n_students: usize,
    q: &QMatrix,
    config: &CdmConfig,
) -> Result<TrainedCdm, CdmError> {
    config.validate()?;
    if records.is_empty() {
        return Err(CdmError::EmptyInput("training records"));
    }
    let mut model = CdmModel::init(config, n_students, q)?;

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut seeded(config.seed, Stream::Validation));
    let n_val = (records.len() as f64 * VALIDATION_FRACTION).floor() as usize;
    let validation: Vec<Record> = order[..n_val].iter().map(|&n| records[n]).collect();
    let mut train_set: Vec<Record> = order[n_val..].iter().map(|&n| records[n]).collect();
    if train_set.is_empty() {
        return Err(CdmError::EmptyInput("training records"));
    }

    let degenerate_auc = n_val > 0 && validation.iter().all(|r| r.score == validation[0].score);
    let mut shuffle_rng = seeded(config.seed, Stream::Shuffle);
    let mut adam = Adam::new(config.learning_rate, &model.params);
    let mut grads = Params::zeros_like(&model.params);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Params)> = None;
    let mut since_best = 0;
    let mut min_weight_seen = model.params.min_interaction_weight();

    for epoch in 1..=config.max_epochs {
        train_set.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for batch in train_set.chunks(config.batch_size) {
            let loss = model.accumulate(batch, &mut grads)?;
            adam.step(&mut model.params, &grads);
            model.params.clamp_interaction_weights();
            min_weight_seen = min_weight_seen.min(model.params.min_interaction_weight());
            loss_sum += loss * batch.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;

        let mut entry = EpochRecord { epoch, train_loss, val_loss: None, val_auc: None, val_rmse: None };
        if validation.is_empty() {
            history.push(entry);
            best = Some((0.0, epoch, model.params.clone()));
            continue;
        }
        let pairs: Vec<(f64, u8)> =
            validation.iter().map(|r| (model.predict_unchecked(r.student, r.item), r.score)).collect();
        let val_loss = model.loss(&validation)?;
        entry.val_loss = Some(val_loss);
        entry.val_auc = auc(&pairs);
        entry.val_rmse = Some(rmse(&pairs)?);
        let score = if degenerate_auc { -val_loss } else { entry.val_auc.unwrap_or(f64::NEG_INFINITY) };
        history.push(entry);

        match &best {
            Some((best_score, _, _)) if score <= *best_score => {
                since_best += 1;
                if since_best >= config.early_stop_patience {
                    break;
                }
            }
            _ => {
                best = Some((score, epoch, model.params.clone()));
                since_best = 0;
            }
        }
    }

    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    model.params = params;
    Ok(TrainedCdm { model, student_ids: Vec::new(), history, best_epoch, degenerate_auc, min_weight_seen })
}
