use serde::{Deserialize, Serialize};

use super::{AnnotatorError, AssessmentItem, PromptVersion};
use crate::qmatrix::{FreeTextNote, ItemAnnotation, Label, MisconceptionLibrary, OptionAnnotation};

/// Something dropped or adjusted while parsing a model payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    UnknownMisconception { option_id: String, misconception_id: String },
    UnknownOption { option_id: String },
    ItemIdMismatch { expected: String, found: String },
}

#[derive(Deserialize)]
struct RawPayload {
    item_id: String,
    options: Vec<RawOption>,
}

#[derive(Deserialize)]
struct RawOption {
    option_id: String,
    #[serde(default)]
    labels: Vec<RawLabel>,
}

#[derive(Deserialize)]
struct RawLabel {
    misconception_id: Option<String>,
    description: Option<String>,
    confidence: Option<String>,
    #[serde(default)]
    rationale: String,
}

/// Strips a surrounding markdown code fence, if any.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else { return t };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Parses a model payload for `item` into a normalized annotation.
///
/// Labels naming a misconception outside the library, or an option the item
/// does not have, are dropped with a warning. V0 payloads carry free-text
/// descriptions, which land in the side channel only.
pub fn parse_annotation(
    raw: &str,
    library: Option<&MisconceptionLibrary>,
    version: PromptVersion,
    item: &AssessmentItem,
) -> Result<(ItemAnnotation, Vec<ParseWarning>), AnnotatorError> {
    let payload: RawPayload =
        serde_json::from_str(unfence(raw)).map_err(|e| AnnotatorError::Parse(format!("item {}: {e}", item.item_id)))?;
    let mut warnings = Vec::new();
    if payload.item_id != item.item_id {
        warnings.push(ParseWarning::ItemIdMismatch { expected: item.item_id.clone(), found: payload.item_id.clone() });
    }

    let mapped = version.features().has_library;
    let library = match (mapped, library) {
        (true, Some(lib)) => Some(lib),
        (true, None) => return Err(AnnotatorError::Prompt(format!("{version} parsing requires the library"))),
        (false, _) => None,
    };

    let mut options: Vec<OptionAnnotation> =
        item.options.iter().map(|o| OptionAnnotation { option_id: o.option_id.clone(), labels: Vec::new() }).collect();
    let mut free_text = Vec::new();

    for raw_opt in payload.options {
        let slot = options.iter().position(|o| o.option_id == raw_opt.option_id);
        if slot.is_none() {
            // still validate the shape before dropping
            for l in &raw_opt.labels {
                check_shape(l, mapped, &item.item_id)?;
            }
            if !raw_opt.labels.is_empty() {
                warnings.push(ParseWarning::UnknownOption { option_id: raw_opt.option_id.clone() });
            }
            continue;
        }
        let slot = slot.unwrap();
        for l in raw_opt.labels {
            check_shape(&l, mapped, &item.item_id)?;
            if let Some(lib) = library {
                let id = l.misconception_id.expect("checked");
                let confidence = l.confidence.expect("checked").parse().map_err(|_| {
                    AnnotatorError::Parse(format!("item {}: confidence must be High, Medium or Low", item.item_id))
                })?;
                if !lib.contains(&id) {
                    warnings.push(ParseWarning::UnknownMisconception {
                        option_id: raw_opt.option_id.clone(),
                        misconception_id: id,
                    });
                    continue;
                }
                options[slot].labels.push(Label { misconception_id: id, confidence, rationale: l.rationale });
            } else {
                free_text.push(FreeTextNote {
                    option_id: raw_opt.option_id.clone(),
                    description: l.description.expect("checked"),
                    rationale: l.rationale,
                });
            }
        }
    }

    let mut annotation = ItemAnnotation { item_id: item.item_id.clone(), options, free_text };
    annotation.normalize();
    Ok((annotation, warnings))
}

fn check_shape(l: &RawLabel, mapped: bool, item_id: &str) -> Result<(), AnnotatorError> {
    let ok = if mapped {
        l.misconception_id.is_some() && matches!(l.confidence.as_deref(), Some("High" | "Medium" | "Low"))
    } else {
        l.description.is_some()
    };
    if ok {
        Ok(())
    } else if mapped {
        Err(AnnotatorError::Parse(format!(
            "item {item_id}: label needs misconception_id and confidence High, Medium or Low"
        )))
    } else {
        Err(AnnotatorError::Parse(format!("item {item_id}: label needs a description")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotator::ItemOption;
    use crate::qmatrix::{ConfidenceTier, Misconception};

    fn item() -> AssessmentItem {
        AssessmentItem {
            item_id: "q1".into(),
            stem: "s".into(),
            options: ["a", "b", "c"]
                .iter()
                .map(|o| ItemOption { option_id: o.to_string(), text: o.to_string(), is_correct: *o == "a" })
                .collect(),
        }
    }

    fn library() -> MisconceptionLibrary {
        MisconceptionLibrary::new(
            ["A1", "A2"].iter().map(|i| Misconception { id: i.to_string(), description: String::new() }).collect(),
        )
        .unwrap()
    }

    fn parse(raw: &str) -> Result<(ItemAnnotation, Vec<ParseWarning>), AnnotatorError> {
        parse_annotation(raw, Some(&library()), PromptVersion::V2, &item())
    }

    #[test]
    fn single_valid_label() {
        let raw = r#"{"item_id":"q1","options":[{"option_id":"b","labels":[{"misconception_id":"A1","confidence":"High","rationale":"r"}]}]}"#;
        let (ann, warnings) = parse(raw).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ann.label_count(), 1);
        let b = ann.options.iter().find(|o| o.option_id == "b").unwrap();
        assert_eq!(b.labels[0].misconception_id, "A1");
        assert_eq!(b.labels[0].confidence, ConfidenceTier::High);
    }

    #[test]
    fn unknown_id_is_dropped_with_warning() {
        let raw = r#"{"item_id":"q1","options":[{"option_id":"b","labels":[{"misconception_id":"Z99","confidence":"Low","rationale":""}]}]}"#;
        let (ann, warnings) = parse(raw).unwrap();
        assert_eq!(ann.label_count(), 0);
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn unknown_option_is_dropped_with_warning() {
        let raw = r#"{"item_id":"q1","options":[{"option_id":"z","labels":[{"misconception_id":"A1","confidence":"Low","rationale":""}]}]}"#;
        let (ann, warnings) = parse(raw).unwrap();
        assert_eq!(ann.label_count(), 0);
        assert_eq!(warnings, vec![ParseWarning::UnknownOption { option_id: "z".into() }]);
    }

    #[test]
    fn duplicate_collapses_to_high() {
        let raw = r#"{"item_id":"q1","options":[{"option_id":"c","labels":[
            {"misconception_id":"A1","confidence":"Low","rationale":"weak"},
            {"misconception_id":"A1","confidence":"High","rationale":"strong"}]}]}"#;
        let (ann, _) = parse(raw).unwrap();
        assert_eq!(ann.label_count(), 1);
        let c = ann.options.iter().find(|o| o.option_id == "c").unwrap();
        assert_eq!(c.labels[0].confidence, ConfidenceTier::High);
    }

    #[test]
    fn malformed_payloads_are_errors() {
        assert!(parse("not json").is_err());
        assert!(parse(r#"{"options":[]}"#).is_err());
        assert!(parse(
            r#"{"item_id":"q1","options":[{"option_id":"b","labels":[{"misconception_id":"A1","confidence":"Sure"}]}]}"#
        )
        .is_err());
        assert!(parse(r#"{"item_id":"q1","options":[{"option_id":"b","labels":[{"description":"x"}]}]}"#).is_err());
    }

    #[test]
    fn fenced_payload_and_item_mismatch() {
        let raw = "```json\n{\"item_id\":\"q7\",\"options\":[]}\n```";
        let (_, warnings) = parse(raw).unwrap();
        assert_eq!(warnings, vec![ParseWarning::ItemIdMismatch { expected: "q1".into(), found: "q7".into() }]);
    }

    #[test]
    fn v0_descriptions_go_to_side_channel() {
        let raw = r#"{"item_id":"q1","options":[{"option_id":"b","labels":[{"description":"thinks cold flows","rationale":"r"}]}]}"#;
        let (ann, warnings) = parse_annotation(raw, None, PromptVersion::V0, &item()).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ann.label_count(), 0);
        assert_eq!(ann.free_text.len(), 1);
        assert_eq!(ann.free_text[0].description, "thinks cold flows");
    }
}
