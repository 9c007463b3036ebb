use qmatrix_core::cdm::{CdmConfig, CdmModel, Record};
use qmatrix_core::QMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-4;
const TOL: f64 = 1e-4;
// partials that vanish exactly (attributes an item does not use) are
// compared in absolute terms below this magnitude
const FLOOR: f64 = 1e-8;

fn ids(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn random_case(rng: &mut ChaCha8Rng) -> (CdmModel, Vec<Record>) {
    let k = rng.gen_range(2..=5);
    let q = QMatrix::from_fn(ids("q", 3), ids("A", k), |_, _| rng.gen_bool(0.5)).unwrap();
    let hidden = [rng.gen_range(2..=8), rng.gen_range(2..=6)];
    let config = CdmConfig { hidden_sizes: hidden, seed: rng.gen(), ..CdmConfig::default() };
    let mut model = CdmModel::init(&config, 4, &q).unwrap();
    for t in model.params.tables_mut() {
        for v in t.iter_mut() {
            *v += rng.gen_range(-0.5..0.5);
        }
    }
    let mut records = Vec::new();
    for student in 0..4 {
        for item in 0..3 {
            if rng.gen_bool(0.8) {
                records.push(Record { student, item, score: rng.gen_bool(0.5) as u8 });
            }
        }
    }
    if records.is_empty() {
        records.push(Record { student: 0, item: 0, score: 1 });
    }
    (model, records)
}

fn numeric_gradient(model: &CdmModel, batch: &[Record], table: usize, index: usize) -> f64 {
    let mut plus = model.clone();
    plus.params.tables_mut()[table][index] += STEP;
    let mut minus = model.clone();
    minus.params.tables_mut()[table][index] -= STEP;
    (plus.loss(batch).unwrap() - minus.loss(batch).unwrap()) / (2.0 * STEP)
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[test]
fn analytic_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for _ in 0..60 {
        let (model, batch) = random_case(&mut rng);
        let (_, grads) = model.loss_and_gradients(&batch).unwrap();
        for (t, table) in grads.tables().iter().enumerate() {
            for (i, &g) in table.iter().enumerate() {
                let err = relative_error(g, numeric_gradient(&model, &batch, t, i));
                worst = worst.max(err);
                checked += 1;
            }
        }
    }
    println!("checked {checked} partials, worst relative error {worst:.3e}");
    assert!(worst < TOL, "worst relative error {worst:e}");
}
