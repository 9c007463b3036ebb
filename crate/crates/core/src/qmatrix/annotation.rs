use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ConfidenceTier, MisconceptionLibrary, QMatrix, QMatrixError};
use crate::annotator::PromptVersion;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub misconception_id: String,
    pub confidence: ConfidenceTier,
    #[serde(default)]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionAnnotation {
    pub option_id: String,
    #[serde(default)]
    pub labels: Vec<Label>,
}

/// Free-text misconception proposed by a library-less (V0) prompt. Kept for
/// inspection only; never mapped onto matrix columns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreeTextNote {
    pub option_id: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemAnnotation {
    pub item_id: String,
    #[serde(default)]
    pub options: Vec<OptionAnnotation>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub free_text: Vec<FreeTextNote>,
}

impl ItemAnnotation {
    /// Collapses repeated `(option, misconception)` labels onto the highest
    /// tier, keeping first-appearance order.
    pub fn normalize(&mut self) {
        for option in &mut self.options {
            let mut out: Vec<Label> = Vec::with_capacity(option.labels.len());
            let mut at: HashMap<String, usize> = HashMap::new();
            for label in option.labels.drain(..) {
                match at.get(&label.misconception_id) {
                    Some(&pos) => {
                        if label.confidence > out[pos].confidence {
                            out[pos] = label;
                        }
                    }
                    None => {
                        at.insert(label.misconception_id.clone(), out.len());
                        out.push(label);
                    }
                }
            }
            option.labels = out;
        }
    }

    pub fn label_count(&self) -> usize {
        self.options.iter().map(|o| o.labels.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub model_name: String,
    pub prompt_version: PromptVersion,
    pub endpoint_label: String,
    pub temperature: f64,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub item_id: String,
    pub attempts: u32,
    pub error: String,
}

/// Per-item, per-option misconception labels returned by one model under one
/// prompt version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub provenance: Provenance,
    pub items: Vec<ItemAnnotation>,
    #[serde(default)]
    pub failures: Vec<AnnotationFailure>,
}

impl AnnotationSet {
    pub fn from_json(text: &str) -> Result<Self, QMatrixError> {
        let mut set: AnnotationSet = serde_json::from_str(text).map_err(|e| QMatrixError::Json(e.to_string()))?;
        set.normalize();
        Ok(set)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("annotation set serializes")
    }

    pub fn normalize(&mut self) {
        for item in &mut self.items {
            item.normalize();
        }
    }

    /// Item and failure content, ignoring provenance (which carries a timestamp).
    pub fn same_content(&self, other: &AnnotationSet) -> bool {
        self.items == other.items && self.failures == other.failures
    }
}

/// Builds the item-level Q-matrix keeping every label at or above `threshold`.
///
/// A cell is 1 when any option of the item carries the misconception at a
/// sufficient tier. Columns follow library order, rows follow `item_ids`.
pub fn build_qmatrix(
    annotations: &AnnotationSet,
    threshold: ConfidenceTier,
    library: &MisconceptionLibrary,
    item_ids: &[String],
) -> Result<QMatrix, QMatrixError> {
    if item_ids.is_empty() {
        return Err(QMatrixError::EmptyAxis("item"));
    }
    if annotations.provenance.prompt_version == PromptVersion::V0 {
        return Err(QMatrixError::UnmappedVersion);
    }
    let rows: HashMap<&str, usize> = item_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let k = library.len();
    let mut cells = vec![0u8; item_ids.len() * k];
    for item in &annotations.items {
        let row = *rows.get(item.item_id.as_str()).ok_or_else(|| QMatrixError::UnknownItem(item.item_id.clone()))?;
        for label in item.options.iter().flat_map(|o| &o.labels) {
            let col = library
                .position(&label.misconception_id)
                .ok_or_else(|| QMatrixError::UnknownAttribute(label.misconception_id.clone()))?;
            if label.confidence >= threshold {
                cells[row * k + col] = 1;
            }
        }
    }
    QMatrix::new(item_ids.to_vec(), library.ids(), cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qmatrix::Misconception;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn library(n: usize) -> MisconceptionLibrary {
        MisconceptionLibrary::new(
            (1..=n).map(|i| Misconception { id: format!("A{i}"), description: String::new() }).collect(),
        )
        .unwrap()
    }

    fn provenance() -> Provenance {
        Provenance {
            model_name: "m".into(),
            prompt_version: PromptVersion::V1,
            endpoint_label: "e".into(),
            temperature: 0.0,
            timestamp: "t".into(),
        }
    }

    fn label(id: &str, tier: ConfidenceTier) -> Label {
        Label { misconception_id: id.into(), confidence: tier, rationale: String::new() }
    }

    fn random_set(rng: &mut ChaCha8Rng, n_items: usize, n_attrs: usize) -> AnnotationSet {
        let tiers = ConfidenceTier::ALL;
        let items = (0..n_items)
            .map(|i| ItemAnnotation {
                item_id: format!("q{}", i + 1),
                options: ["a", "b", "c"]
                    .iter()
                    .map(|o| OptionAnnotation {
                        option_id: o.to_string(),
                        labels: (0..rng.gen_range(0..4))
                            .map(|_| label(&format!("A{}", rng.gen_range(1..=n_attrs)), *tiers.choose(rng).unwrap()))
                            .collect(),
                    })
                    .collect(),
                free_text: vec![],
            })
            .collect();
        AnnotationSet { provenance: provenance(), items, failures: vec![] }
    }

    fn item_ids(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("q{i}")).collect()
    }

    #[test]
    fn low_only_labels_at_high_threshold_give_zero_matrix() {
        let set = AnnotationSet {
            provenance: provenance(),
            items: vec![ItemAnnotation {
                item_id: "q1".into(),
                options: vec![OptionAnnotation {
                    option_id: "a".into(),
                    labels: vec![label("A1", ConfidenceTier::Low), label("A2", ConfidenceTier::Low)],
                }],
                free_text: vec![],
            }],
            failures: vec![],
        };
        let m = build_qmatrix(&set, ConfidenceTier::High, &library(2), &item_ids(2)).unwrap();
        assert_eq!(m.ones(), 0);
        assert_eq!(m.degenerate_items().len(), 2);
    }

    #[test]
    fn matches_brute_force_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let set = random_set(&mut rng, 3, 2);
            for threshold in ConfidenceTier::ALL {
                let m = build_qmatrix(&set, threshold, &library(2), &item_ids(3)).unwrap();
                for i in 0..3 {
                    for k in 0..2 {
                        let want = set.items.iter().any(|it| {
                            it.item_id == format!("q{}", i + 1)
                                && it.options.iter().any(|o| {
                                    o.labels.iter().any(|l| {
                                        l.misconception_id == format!("A{}", k + 1) && l.confidence >= threshold
                                    })
                                })
                        });
                        assert_eq!(m.get(i, k), want);
                    }
                }
            }
        }
    }

    #[test]
    fn unknown_item_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let set = random_set(&mut rng, 3, 2);
        match build_qmatrix(&set, ConfidenceTier::Low, &library(2), &item_ids(2)) {
            Err(QMatrixError::UnknownItem(id)) => assert_eq!(id, "q3"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(build_qmatrix(&set, ConfidenceTier::Low, &library(2), &[]), Err(QMatrixError::EmptyAxis(_))));
    }

    #[test]
    fn v0_sets_are_not_mapped() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = random_set(&mut rng, 2, 2);
        set.provenance.prompt_version = PromptVersion::V0;
        assert!(matches!(
            build_qmatrix(&set, ConfidenceTier::Low, &library(2), &item_ids(2)),
            Err(QMatrixError::UnmappedVersion)
        ));
    }

    #[test]
    fn duplicates_collapse_to_highest_tier() {
        let mut item = ItemAnnotation {
            item_id: "q1".into(),
            options: vec![OptionAnnotation {
                option_id: "b".into(),
                labels: vec![
                    label("A1", ConfidenceTier::Low),
                    label("A2", ConfidenceTier::Medium),
                    label("A1", ConfidenceTier::High),
                    label("A1", ConfidenceTier::Medium),
                ],
            }],
            free_text: vec![],
        };
        item.normalize();
        assert_eq!(
            item.options[0].labels,
            vec![label("A1", ConfidenceTier::High), label("A2", ConfidenceTier::Medium)]
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn tiers_are_nested(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, 5, 4);
            let lib = library(4);
            let ids = item_ids(5);
            let high = build_qmatrix(&set, ConfidenceTier::High, &lib, &ids).unwrap();
            let med = build_qmatrix(&set, ConfidenceTier::Medium, &lib, &ids).unwrap();
            let low = build_qmatrix(&set, ConfidenceTier::Low, &lib, &ids).unwrap();
            for (a, b) in high.cells().iter().zip(med.cells()) { prop_assert!(a <= b); }
            for (a, b) in med.cells().iter().zip(low.cells()) { prop_assert!(a <= b); }
        }

        #[test]
        fn label_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let set = random_set(&mut rng, 4, 3);
            let mut shuffled = set.clone();
            shuffled.items.shuffle(&mut rng);
            for item in &mut shuffled.items {
                item.options.shuffle(&mut rng);
                for o in &mut item.options { o.labels.shuffle(&mut rng); }
            }
            for t in ConfidenceTier::ALL {
                prop_assert_eq!(
                    build_qmatrix(&set, t, &library(3), &item_ids(4)).unwrap(),
                    build_qmatrix(&shuffled, t, &library(3), &item_ids(4)).unwrap()
                );
            }
        }
    }
}
