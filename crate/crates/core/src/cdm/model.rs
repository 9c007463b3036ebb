use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{CdmError, Record};
use crate::qmatrix::QMatrix;
use crate::rng::{seeded, Stream};

const PROB_CLAMP: f64 = 1e-7;

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CdmConfig {
    pub hidden_sizes: [usize; 2],
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for CdmConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: [64, 32],
            learning_rate: 0.002,
            batch_size: 32,
            max_epochs: 50,
            early_stop_patience: 5,
            seed: 0,
        }
    }
}

impl CdmConfig {
    pub fn validate(&self) -> Result<(), CdmError> {
        let bad = |m: &str| Err(CdmError::Config(m.to_string()));
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return bad("batch_size, max_epochs and early_stop_patience must be positive");
        }
        if self.early_stop_patience > self.max_epochs {
            return bad("early_stop_patience must not exceed max_epochs");
        }
        Ok(())
    }
}

/// Every trainable table of the model, stored flat and row-major. The same
/// layout carries gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// students × attributes
    pub proficiency: Vec<f64>,
    /// items × attributes
    pub difficulty: Vec<f64>,
    /// items
    pub discrimination: Vec<f64>,
    /// attributes × h1
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// h1 × h2
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    /// h2
    pub w3: Vec<f64>,
    pub b3: Vec<f64>,
}

impl Params {
    pub fn zeros_like(other: &Params) -> Params {
        Params {
            proficiency: vec![0.0; other.proficiency.len()],
            difficulty: vec![0.0; other.difficulty.len()],
            discrimination: vec![0.0; other.discrimination.len()],
            w1: vec![0.0; other.w1.len()],
            b1: vec![0.0; other.b1.len()],
            w2: vec![0.0; other.w2.len()],
            b2: vec![0.0; other.b2.len()],
            w3: vec![0.0; other.w3.len()],
            b3: vec![0.0; other.b3.len()],
        }
    }

    pub fn tables(&self) -> [&Vec<f64>; 9] {
        [
            &self.proficiency,
            &self.difficulty,
            &self.discrimination,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
            &self.w3,
            &self.b3,
        ]
    }

    pub fn tables_mut(&mut self) -> [&mut Vec<f64>; 9] {
        [
            &mut self.proficiency,
            &mut self.difficulty,
            &mut self.discrimination,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn fill(&mut self, v: f64) {
        for t in self.tables_mut() {
            t.iter_mut().for_each(|x| *x = v);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for t in self.tables_mut() {
            t.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Smallest entry across the interaction weights W1, W2, W3.
    pub fn min_interaction_weight(&self) -> f64 {
        self.w1.iter().chain(&self.w2).chain(&self.w3).copied().fold(f64::INFINITY, f64::min)
    }

    /// Projects the interaction weights onto the non-negative orthant.
    pub fn clamp_interaction_weights(&mut self) {
        for w in [&mut self.w1, &mut self.w2, &mut self.w3] {
            for x in w.iter_mut() {
                if *x < 0.0 {
                    *x = 0.0;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// NeuralCDM: per-student proficiency, per-item difficulty and
/// discrimination, and a three-layer monotone interaction network.
#[derive(Debug, Clone, PartialEq)]
pub struct CdmModel {
    pub n_students: usize,
    pub n_items: usize,
    pub n_attributes: usize,
    pub hidden: [usize; 2],
    pub params: Params,
    q: QMatrix,
    support: Vec<Vec<usize>>,
}

/// Intermediate activations for one record.
struct Forward {
    h_s: Vec<f64>,
    h_d: Vec<f64>,
    h_e: f64,
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    p: f64,
}

fn fan_uniform(rng: &mut impl Rng, fan_in: usize, fan_out: usize, n: usize) -> Vec<f64> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

/// Sets the second and output biases so that each unit starts near the
/// middle of its logistic range when its inputs sit at 0.5. Without this the
/// all-positive weights put the initial prediction close to 1.
fn center_biases(p: &mut Params, h1: usize, h2: usize) {
    for o in 0..h2 {
        p.b2[o] = -0.5 * (0..h1).map(|m| p.w2[m * h2 + o]).sum::<f64>();
    }
    p.b3[0] = -0.5 * p.w3.iter().sum::<f64>();
}

impl CdmModel {
    /// Draws a fresh model. Embeddings are uniform in the symmetric fan-based
    /// range; interaction weights take the absolute value of the same draw.
    pub fn init(config: &CdmConfig, n_students: usize, q: &QMatrix) -> Result<Self, CdmError> {
        config.validate()?;
        if n_students == 0 {
            return Err(CdmError::Config("n_students must be at least 1".into()));
        }
        let (i, k) = (q.n_items(), q.n_attributes());
        let [h1, h2] = config.hidden_sizes;
        let mut rng = seeded(config.seed, Stream::Init);
        let abs = |v: Vec<f64>| v.into_iter().map(f64::abs).collect::<Vec<_>>();
        let mut params = Params {
            proficiency: fan_uniform(&mut rng, k, n_students, n_students * k),
            difficulty: fan_uniform(&mut rng, k, i, i * k),
            discrimination: fan_uniform(&mut rng, 1, i, i),
            w1: abs(fan_uniform(&mut rng, k, h1, k * h1)),
            b1: vec![0.0; h1],
            w2: abs(fan_uniform(&mut rng, h1, h2, h1 * h2)),
            b2: vec![0.0; h2],
            w3: abs(fan_uniform(&mut rng, h2, 1, h2)),
            b3: vec![0.0; 1],
        };
        center_biases(&mut params, h1, h2);
        Ok(Self::with_params(n_students, q, config.hidden_sizes, params))
    }

    pub fn with_params(n_students: usize, q: &QMatrix, hidden: [usize; 2], params: Params) -> Self {
        let support = (0..q.n_items())
            .map(|j| q.row(j).iter().enumerate().filter(|(_, &c)| c == 1).map(|(k, _)| k).collect())
            .collect();
        Self { n_students, n_items: q.n_items(), n_attributes: q.n_attributes(), hidden, params, q: q.clone(), support }
    }

    pub fn q(&self) -> &QMatrix {
        &self.q
    }

    fn check(&self, student: usize, item: usize) -> Result<(), CdmError> {
        if student >= self.n_students {
            return Err(CdmError::IndexOutOfRange { what: "student", index: student, len: self.n_students });
        }
        if item >= self.n_items {
            return Err(CdmError::IndexOutOfRange { what: "item", index: item, len: self.n_items });
        }
        Ok(())
    }

    fn forward(&self, student: usize, item: usize) -> Forward {
        let k = self.n_attributes;
        let [h1, h2] = self.hidden;
        let p = &self.params;
        let sup = &self.support[item];

        let h_e = logistic(p.discrimination[item]);
        let mut h_s = Vec::with_capacity(sup.len());
        let mut h_d = Vec::with_capacity(sup.len());
        let mut x = Vec::with_capacity(sup.len());
        let mut z1 = p.b1.clone();
        for &a in sup {
            let s = logistic(p.proficiency[student * k + a]);
            let d = logistic(p.difficulty[item * k + a]);
            let xa = (s - d) * h_e;
            h_s.push(s);
            h_d.push(d);
            x.push(xa);
            let row = &p.w1[a * h1..(a + 1) * h1];
            for (z, w) in z1.iter_mut().zip(row) {
                *z += xa * w;
            }
        }
        let a1: Vec<f64> = z1.into_iter().map(logistic).collect();

        let mut z2 = p.b2.clone();
        for (m, &am) in a1.iter().enumerate() {
            let row = &p.w2[m * h2..(m + 1) * h2];
            for (z, w) in z2.iter_mut().zip(row) {
                *z += am * w;
            }
        }
        let a2: Vec<f64> = z2.into_iter().map(logistic).collect();

        let z3 = p.b3[0] + a2.iter().zip(&p.w3).map(|(a, w)| a * w).sum::<f64>();
        Forward { h_s, h_d, h_e, x, a1, a2, p: logistic(z3) }
    }

    /// Probability that `student` answers `item` correctly, in (0, 1).
    pub fn predict(&self, student: usize, item: usize) -> Result<f64, CdmError> {
        self.check(student, item)?;
        Ok(self.forward(student, item).p)
    }

    pub(crate) fn predict_unchecked(&self, student: usize, item: usize) -> f64 {
        self.forward(student, item).p
    }

    /// Mean clamped binary cross-entropy over `batch` and its gradient with
    /// respect to every parameter table.
    pub fn loss_and_gradients(&self, batch: &[Record]) -> Result<(f64, Params), CdmError> {
        let mut grads = Params::zeros_like(&self.params);
        let loss = self.accumulate(batch, &mut grads)?;
        Ok((loss, grads))
    }

    /// Writes mean-batch gradients into `grads` (which is zeroed first) and
    /// returns the mean loss.
    pub(crate) fn accumulate(&self, batch: &[Record], grads: &mut Params) -> Result<f64, CdmError> {
        if batch.is_empty() {
            return Err(CdmError::EmptyInput("batch"));
        }
        for r in batch {
            self.check(r.student, r.item)?;
        }
        grads.fill(0.0);
        let k = self.n_attributes;
        let [h1, h2] = self.hidden;
        let p = &self.params;
        let mut total = 0.0;
        let mut dz2 = vec![0.0; h2];
        let mut dz1 = vec![0.0; h1];

        for r in batch {
            let f = self.forward(r.student, r.item);
            let y = r.score as f64;
            let pc = f.p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
            // d loss / d z3; zero where the clamp is active
            let dz3 = if f.p == pc { f.p - y } else { 0.0 };
            if dz3 == 0.0 {
                continue;
            }

            grads.b3[0] += dz3;
            for (m, d) in dz2.iter_mut().enumerate() {
                grads.w3[m] += dz3 * f.a2[m];
                *d = dz3 * p.w3[m] * f.a2[m] * (1.0 - f.a2[m]);
                grads.b2[m] += *d;
            }
            for (l, &al) in f.a1.iter().enumerate() {
                let row = &p.w2[l * h2..(l + 1) * h2];
                let grow = &mut grads.w2[l * h2..(l + 1) * h2];
                let mut da1 = 0.0;
                for m in 0..h2 {
                    grow[m] += al * dz2[m];
                    da1 += row[m] * dz2[m];
                }
                dz1[l] = da1 * al * (1.0 - al);
                grads.b1[l] += dz1[l];
            }

            let sup = &self.support[r.item];
            let mut de = 0.0;
            for (n, &a) in sup.iter().enumerate() {
                let row = &p.w1[a * h1..(a + 1) * h1];
                let grow = &mut grads.w1[a * h1..(a + 1) * h1];
                let mut dx = 0.0;
                for l in 0..h1 {
                    grow[l] += f.x[n] * dz1[l];
                    dx += row[l] * dz1[l];
                }
                let (s, d) = (f.h_s[n], f.h_d[n]);
                grads.proficiency[r.student * k + a] += dx * f.h_e * s * (1.0 - s);
                grads.difficulty[r.item * k + a] -= dx * f.h_e * d * (1.0 - d);
                de += dx * (s - d);
            }
            grads.discrimination[r.item] += de * f.h_e * (1.0 - f.h_e);
        }

        let n = batch.len() as f64;
        grads.scale(1.0 / n);
        Ok(total / n)
    }

    /// Mean clamped cross-entropy without gradients.
    pub fn loss(&self, batch: &[Record]) -> Result<f64, CdmError> {
        if batch.is_empty() {
            return Err(CdmError::EmptyInput("batch"));
        }
        let mut total = 0.0;
        for r in batch {
            self.check(r.student, r.item)?;
            let pc = self.forward(r.student, r.item).p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let y = r.score as f64;
            total -= y * pc.ln() + (1.0 - y) * (1.0 - pc).ln();
        }
        Ok(total / batch.len() as f64)
    }
}
