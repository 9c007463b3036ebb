//! DINA response simulator with a known Q-matrix and mastery profiles.
//!
//! A student answers item `j` correctly with probability `1 − s` when they
//! master every attribute the item requires and `g` otherwise.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cdm::{Response, ResponseLog};
use crate::qmatrix::QMatrix;
use crate::rng::{seeded, Stream};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Optional per-item override of slip and guess.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlipGuess {
    pub slip: f64,
    pub guess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_students: usize,
    pub slip: f64,
    pub guess: f64,
    /// Mastery probability per attribute; `None` means 0.5 everywhere.
    #[serde(default)]
    pub prevalence: Option<Vec<f64>>,
    #[serde(default)]
    pub item_params: Option<Vec<SlipGuess>>,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(n_students: usize, slip: f64, guess: f64, seed: u64) -> Self {
        Self { n_students, slip, guess, prevalence: None, item_params: None, seed }
    }

    fn check_pair(slip: f64, guess: f64) -> Result<(), SimError> {
        if !(0.0..1.0).contains(&slip) || !(0.0..1.0).contains(&guess) {
            return Err(SimError::Config(format!("slip {slip} and guess {guess} must lie in [0, 1)")));
        }
        if slip + guess >= 1.0 {
            return Err(SimError::Config(format!("slip + guess = {} must be below 1", slip + guess)));
        }
        Ok(())
    }

    pub fn validate(&self, q: &QMatrix) -> Result<(), SimError> {
        Self::check_pair(self.slip, self.guess)?;
        if let Some(p) = &self.prevalence {
            if p.len() != q.n_attributes() {
                return Err(SimError::Config(format!(
                    "prevalence has {} entries, Q-matrix has {} attributes",
                    p.len(),
                    q.n_attributes()
                )));
            }
            // 1.0 is admitted for the deterministic-mastery edge case
            if let Some(bad) = p.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
                return Err(SimError::Config(format!("prevalence {bad} outside (0, 1]")));
            }
        }
        if let Some(items) = &self.item_params {
            if items.len() != q.n_items() {
                return Err(SimError::Config(format!(
                    "item_params has {} entries, Q-matrix has {} items",
                    items.len(),
                    q.n_items()
                )));
            }
            for sg in items {
                Self::check_pair(sg.slip, sg.guess)?;
            }
        }
        Ok(())
    }

    fn prevalence_of(&self, k: usize) -> f64 {
        self.prevalence.as_ref().map_or(0.5, |p| p[k])
    }

    fn slip_guess(&self, item: usize) -> (f64, f64) {
        match &self.item_params {
            Some(v) => (v[item].slip, v[item].guess),
            None => (self.slip, self.guess),
        }
    }
}

/// Binary mastery vector of one simulated student.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudentProfile {
    pub student_id: String,
    pub mastery: Vec<u8>,
}

pub fn student_id(n: usize) -> String {
    format!("s{:05}", n + 1)
}

/// Draws mastery profiles and one response per (student, item), student-major.
pub fn simulate(q: &QMatrix, config: &SimConfig) -> Result<(Vec<StudentProfile>, ResponseLog), SimError> {
    config.validate(q)?;
    let mut rng = seeded(config.seed, Stream::Simulation);
    let k = q.n_attributes();
    let mut profiles = Vec::with_capacity(config.n_students);
    let mut records = Vec::with_capacity(config.n_students * q.n_items());
    for s in 0..config.n_students {
        let mastery: Vec<u8> = (0..k).map(|a| rng.gen_bool(config.prevalence_of(a)) as u8).collect();
        let id = student_id(s);
        for (j, item_id) in q.item_ids().iter().enumerate() {
            let eta = q.row(j).iter().zip(&mastery).all(|(&need, &has)| need == 0 || has == 1);
            let (slip, guess) = config.slip_guess(j);
            let p = if eta { 1.0 - slip } else { guess };
            records.push(Response { student_id: id.clone(), item_id: item_id.clone(), score: rng.gen_bool(p) as u8 });
        }
        profiles.push(StudentProfile { student_id: id, mastery });
    }
    let logs = ResponseLog::new(records).expect("simulated scores are binary");
    Ok((profiles, logs))
}

/// Closed-form probability of a correct answer per item: with `m` the
/// product of the required attributes' prevalences, `m * (1 - slip) + (1 - m) * guess`.
pub fn expected_accuracy(q: &QMatrix, config: &SimConfig) -> Result<Vec<f64>, SimError> {
    config.validate(q)?;
    Ok((0..q.n_items())
        .map(|j| {
            let pi_eta: f64 =
                q.row(j).iter().enumerate().filter(|(_, &c)| c == 1).map(|(k, _)| config.prevalence_of(k)).product();
            let (slip, guess) = config.slip_guess(j);
            pi_eta * (1.0 - slip) + (1.0 - pi_eta) * guess
        })
        .collect())
}

/// Moves `fraction` of the 1-cells of `q` (rounded to nearest) onto cells
/// that were 0, chosen uniformly. The ones count is preserved.
pub fn corrupt_qmatrix(q: &QMatrix, fraction: f64, seed: u64) -> QMatrix {
    let mut rng = seeded(seed, Stream::Simulation);
    let mut ones = q.one_cells();
    let k = q.n_attributes();
    let mut zeros: Vec<(usize, usize)> =
        (0..q.n_items() * k).map(|p| (p / k, p % k)).filter(|&(i, j)| !q.get(i, j)).collect();
    let n_move = ((ones.len() as f64 * fraction).round() as usize).min(zeros.len());
    ones.shuffle(&mut rng);
    zeros.shuffle(&mut rng);
    let updates: Vec<(usize, usize, bool)> = ones[..n_move]
        .iter()
        .map(|&(i, j)| (i, j, false))
        .chain(zeros[..n_move].iter().map(|&(i, j)| (i, j, true)))
        .collect();
    q.with_cells(&updates)
}

/// `student_id,<attribute ids...>` with 0/1 cells.
pub fn profiles_to_csv(profiles: &[StudentProfile], attribute_ids: &[String]) -> String {
    let mut out = String::from("student_id");
    for a in attribute_ids {
        out.push(',');
        out.push_str(a);
    }
    out.push('\n');
    for p in profiles {
        out.push_str(&p.student_id);
        for m in &p.mastery {
            let _ = write!(out, ",{m}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn certain_mastery_without_noise_scores_all_ones() {
        let q = QMatrix::from_fn(ids("q", 4), ids("A", 3), |i, k| (i + k) % 2 == 0).unwrap();
        let cfg = SimConfig { prevalence: Some(vec![1.0; 3]), ..SimConfig::new(50, 0.0, 0.0, 1) };
        let (_, logs) = simulate(&q, &cfg).unwrap();
        assert!(logs.records().iter().all(|r| r.score == 1));
    }

    #[test]
    fn closed_form_edge_cases() {
        let q = QMatrix::new(ids("q", 2), ids("A", 2), vec![0, 0, 1, 1]).unwrap();
        let p = expected_accuracy(&q, &SimConfig::new(1, 0.1, 0.2, 0)).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-15);
        let p = expected_accuracy(&q, &SimConfig::new(1, 0.0, 0.0, 0)).unwrap();
        assert!((p[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        let q = QMatrix::new(ids("q", 1), ids("A", 2), vec![1, 0]).unwrap();
        assert!(SimConfig::new(1, 0.6, 0.5, 0).validate(&q).is_err());
        assert!(SimConfig::new(1, 1.0, 0.0, 0).validate(&q).is_err());
        let wrong_len = SimConfig { prevalence: Some(vec![0.5]), ..SimConfig::new(1, 0.1, 0.1, 0) };
        assert!(wrong_len.validate(&q).is_err());
        let zero = SimConfig { prevalence: Some(vec![0.0, 0.5]), ..SimConfig::new(1, 0.1, 0.1, 0) };
        assert!(zero.validate(&q).is_err());
    }

    #[test]
    fn shape_and_determinism() {
        let q = QMatrix::from_fn(ids("q", 26), ids("A", 5), |i, k| i % 5 == k).unwrap();
        let cfg = SimConfig::new(614, 0.1, 0.1, 7);
        let (p1, l1) = simulate(&q, &cfg).unwrap();
        let (p2, l2) = simulate(&q, &cfg).unwrap();
        assert_eq!(l1.len(), 614 * 26);
        assert_eq!(p1.len(), 614);
        assert_eq!(l1.to_csv(), l2.to_csv());
        assert_eq!(profiles_to_csv(&p1, q.attribute_ids()), profiles_to_csv(&p2, q.attribute_ids()));
    }

    #[test]
    fn corruption_moves_the_requested_share() {
        let q = QMatrix::from_fn(ids("q", 10), ids("A", 6), |i, k| (i + k) % 4 == 0).unwrap();
        let bad = corrupt_qmatrix(&q, 0.3, 5);
        assert_eq!(bad.ones(), q.ones());
        let moved = q.cells().iter().zip(bad.cells()).filter(|(a, b)| **a == 1 && **b == 0).count();
        assert_eq!(moved, (q.ones() as f64 * 0.3).round() as usize);
        assert_eq!(corrupt_qmatrix(&q, 0.3, 5), bad);
    }

    #[test]
    fn per_item_override_is_used() {
        let q = QMatrix::new(ids("q", 2), ids("A", 1), vec![1, 1]).unwrap();
        let cfg = SimConfig {
            item_params: Some(vec![SlipGuess { slip: 0.0, guess: 0.0 }, SlipGuess { slip: 0.3, guess: 0.2 }]),
            ..SimConfig::new(1, 0.1, 0.1, 0)
        };
        let p = expected_accuracy(&q, &cfg).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15);
        assert!((p[1] - (0.5 * 0.7 + 0.5 * 0.2)).abs() < 1e-15);
    }
}
