use std::collections::HashSet;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::AnnotatorError;
use crate::qmatrix::{ConfidenceTier, MisconceptionLibrary};

/// Prompt generation. Each version adds one feature on top of the previous.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PromptVersion {
    V0,
    V1,
    V2,
    V3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PromptFeatures {
    pub has_library: bool,
    pub has_confidence: bool,
    pub has_principles: bool,
    pub has_fewshot: bool,
}

impl PromptVersion {
    pub const ALL: [PromptVersion; 4] = [PromptVersion::V0, PromptVersion::V1, PromptVersion::V2, PromptVersion::V3];

    pub fn features(self) -> PromptFeatures {
        let v = self as u8;
        PromptFeatures { has_library: v >= 1, has_confidence: v >= 1, has_principles: v >= 2, has_fewshot: v >= 3 }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptVersion::V0 => "V0",
            PromptVersion::V1 => "V1",
            PromptVersion::V2 => "V2",
            PromptVersion::V3 => "V3",
        }
    }
}

impl fmt::Display for PromptVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PromptVersion {
    type Err = AnnotatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "V0" => Ok(PromptVersion::V0),
            "V1" => Ok(PromptVersion::V1),
            "V2" => Ok(PromptVersion::V2),
            "V3" => Ok(PromptVersion::V3),
            _ => Err(AnnotatorError::Prompt(format!("unknown prompt version {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemOption {
    pub option_id: String,
    pub text: String,
    pub is_correct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentItem {
    pub item_id: String,
    pub stem: String,
    pub options: Vec<ItemOption>,
}

impl AssessmentItem {
    pub fn validate(&self) -> Result<(), AnnotatorError> {
        let bad = |m: String| Err(AnnotatorError::InvalidItem { item_id: self.item_id.clone(), message: m });
        if self.item_id.is_empty() {
            return bad("empty item id".into());
        }
        if self.options.len() < 2 {
            return bad(format!("needs at least 2 options, has {}", self.options.len()));
        }
        let correct = self.options.iter().filter(|o| o.is_correct).count();
        if correct != 1 {
            return bad(format!("needs exactly one correct option, has {correct}"));
        }
        let mut seen = HashSet::new();
        for o in &self.options {
            if !seen.insert(o.option_id.as_str()) {
                return bad(format!("duplicate option id {:?}", o.option_id));
            }
        }
        Ok(())
    }

    pub fn has_option(&self, option_id: &str) -> bool {
        self.options.iter().any(|o| o.option_id == option_id)
    }

    /// Parses the items file: a JSON array of items.
    pub fn list_from_json(text: &str) -> Result<Vec<AssessmentItem>, AnnotatorError> {
        let items: Vec<AssessmentItem> =
            serde_json::from_str(text).map_err(|e| AnnotatorError::Parse(e.to_string()))?;
        let mut seen = HashSet::new();
        for item in &items {
            item.validate()?;
            if !seen.insert(item.item_id.clone()) {
                return Err(AnnotatorError::InvalidItem {
                    item_id: item.item_id.clone(),
                    message: "duplicate item id".into(),
                });
            }
        }
        Ok(items)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarLabel {
    pub option_id: String,
    pub misconception_id: String,
    pub confidence: ConfidenceTier,
}

/// An expert-annotated item rendered into the few-shot block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpertExemplar {
    pub item: AssessmentItem,
    pub labels: Vec<ExemplarLabel>,
    pub reasoning: String,
}

impl ExpertExemplar {
    pub fn list_from_json(text: &str) -> Result<Vec<ExpertExemplar>, AnnotatorError> {
        serde_json::from_str(text).map_err(|e| AnnotatorError::Parse(e.to_string()))
    }
}

/// Everything sent for one item. A pure function of its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub version: PromptVersion,
    pub item_id: String,
    pub system: String,
    pub user: String,
    pub schema: Value,
}

pub const LIBRARY_HEADING: &str = "## Misconception Library";
pub const CONFIDENCE_HEADING: &str = "## Confidence Calibration";
pub const PRINCIPLES_HEADING: &str = "## Critical Evaluation Principles";
pub const FEWSHOT_HEADING: &str = "## Expert Worked Examples";
pub const PRINCIPLE_NAMES: [&str; 3] = ["Item-Content Alignment", "Error Attribution", "Distractor Mapping"];

const ROLE: &str = "You analyse multiple-choice items from a physics concept inventory. \
For every incorrect answer option, decide which student misconceptions would make that option attractive. \
Leave an option without labels when no misconception plausibly explains choosing it.";

fn render_library(out: &mut String, library: &MisconceptionLibrary) {
    let _ = writeln!(out, "\n{LIBRARY_HEADING}");
    out.push_str("Label options only with ids from this list.\n");
    for m in library.entries() {
        let _ = writeln!(out, "{}: {}", m.id, m.description);
    }
}

fn render_confidence(out: &mut String) {
    let _ = writeln!(out, "\n{CONFIDENCE_HEADING}");
    out.push_str("Attach exactly one confidence tier to every label:\n");
    out.push_str("- High: the option is a direct expression of the misconception.\n");
    out.push_str("- Medium: the misconception is a likely but not the only route to the option.\n");
    out.push_str("- Low: the link is possible but weak or indirect.\n");
}

fn render_principles(out: &mut String) {
    let _ = writeln!(out, "\n{PRINCIPLES_HEADING}");
    out.push_str("Keep a label only if it passes all three checks:\n");
    let _ = writeln!(
        out,
        "1. {}: the concept behind the misconception is actually tested by the item, not just mentioned by a shared keyword.",
        PRINCIPLE_NAMES[0]
    );
    let _ = writeln!(
        out,
        "2. {}: holding the misconception plausibly leads a student to a wrong answer on this item.",
        PRINCIPLE_NAMES[1]
    );
    let _ = writeln!(
        out,
        "3. {}: the misconception points to this specific option rather than to the item in general.",
        PRINCIPLE_NAMES[2]
    );
}

fn render_item(out: &mut String, item: &AssessmentItem) {
    let _ = writeln!(out, "Item id: {}", item.item_id);
    let _ = writeln!(out, "Stem: {}", item.stem);
    out.push_str("Options:\n");
    for o in &item.options {
        let mark = if o.is_correct { " [correct answer]" } else { "" };
        let _ = writeln!(out, "({}) {}{}", o.option_id, o.text, mark);
    }
}

fn exemplar_output(ex: &ExpertExemplar) -> Value {
    let options: Vec<Value> = ex
        .item
        .options
        .iter()
        .map(|o| {
            let labels: Vec<Value> = ex
                .labels
                .iter()
                .filter(|l| l.option_id == o.option_id)
                .map(|l| {
                    json!({
                        "misconception_id": l.misconception_id,
                        "confidence": l.confidence.as_str(),
                        "rationale": "See expert reasoning.",
                    })
                })
                .collect();
            json!({"option_id": o.option_id, "labels": labels})
        })
        .collect();
    json!({"item_id": ex.item.item_id, "options": options})
}

fn render_fewshot(out: &mut String, exemplars: &[ExpertExemplar]) {
    let _ = writeln!(out, "\n{FEWSHOT_HEADING}");
    out.push_str("The following items were annotated by physics education researchers. Follow their standard.\n");
    for (n, ex) in exemplars.iter().enumerate() {
        let _ = writeln!(out, "\n### Example {}", n + 1);
        render_item(out, &ex.item);
        let _ = writeln!(out, "Expert reasoning: {}", ex.reasoning);
        let _ = writeln!(out, "Labelled output: {}", exemplar_output(ex));
    }
}

/// JSON schema of the expected answer, used both in the prompt text and as
/// the structured-output constraint.
pub fn output_schema(version: PromptVersion, library: Option<&MisconceptionLibrary>) -> Value {
    let label = if version.features().has_library {
        let mut id = json!({"type": "string"});
        if let Some(lib) = library {
            id["enum"] = json!(lib.ids());
        }
        json!({
            "type": "object",
            "additionalProperties": false,
            "required": ["misconception_id", "confidence", "rationale"],
            "properties": {
                "misconception_id": id,
                "confidence": {"type": "string", "enum": ConfidenceTier::ALL.map(|t| t.as_str())},
                "rationale": {"type": "string"},
            },
        })
    } else {
        json!({
            "type": "object",
            "additionalProperties": false,
            "required": ["description", "rationale"],
            "properties": {
                "description": {"type": "string"},
                "rationale": {"type": "string"},
            },
        })
    };
    json!({
        "type": "object",
        "additionalProperties": false,
        "required": ["item_id", "options"],
        "properties": {
            "item_id": {"type": "string"},
            "options": {
                "type": "array",
                "items": {
                    "type": "object",
                    "additionalProperties": false,
                    "required": ["option_id", "labels"],
                    "properties": {
                        "option_id": {"type": "string"},
                        "labels": {"type": "array", "items": label},
                    },
                },
            },
        },
    })
}

fn format_instruction(version: PromptVersion) -> &'static str {
    if version.features().has_confidence {
        "Respond with one JSON object and nothing else, in the form \
{\"item_id\": string, \"options\": [{\"option_id\": string, \"labels\": [{\"misconception_id\": string, \
\"confidence\": \"High\" | \"Medium\" | \"Low\", \"rationale\": string}]}]}. \
List every option of the item, using an empty labels array where nothing applies."
    } else {
        "Respond with one JSON object and nothing else, in the form \
{\"item_id\": string, \"options\": [{\"option_id\": string, \"labels\": [{\"description\": string, \
\"rationale\": string}]}]}. \
List every option of the item, using an empty labels array where nothing applies."
    }
}

/// Assembles system and user messages for one item.
///
/// V1 and later need the library; V3 needs at least one exemplar. Inputs a
/// version does not use are ignored.
pub fn build_prompt(
    version: PromptVersion,
    item: &AssessmentItem,
    library: Option<&MisconceptionLibrary>,
    exemplars: &[ExpertExemplar],
) -> Result<PromptBundle, AnnotatorError> {
    item.validate()?;
    let features = version.features();
    let library = if features.has_library {
        Some(library.ok_or_else(|| AnnotatorError::Prompt(format!("{version} requires a misconception library")))?)
    } else {
        None
    };
    if features.has_fewshot {
        if exemplars.is_empty() {
            return Err(AnnotatorError::Prompt(format!("{version} requires at least one expert exemplar")));
        }
        let lib = library.expect("few-shot versions carry a library");
        for ex in exemplars {
            ex.item.validate()?;
            if let Some(l) = ex.labels.iter().find(|l| !lib.contains(&l.misconception_id)) {
                return Err(AnnotatorError::Prompt(format!(
                    "exemplar {} uses misconception {:?} which is not in the library",
                    ex.item.item_id, l.misconception_id
                )));
            }
        }
    }

    let mut system = String::from(ROLE);
    system.push('\n');
    if let Some(lib) = library {
        render_library(&mut system, lib);
    }
    if features.has_confidence {
        render_confidence(&mut system);
    }
    if features.has_principles {
        render_principles(&mut system);
    }
    if features.has_fewshot {
        render_fewshot(&mut system, exemplars);
    }

    let mut user = String::new();
    render_item(&mut user, item);
    user.push('\n');
    user.push_str(format_instruction(version));
    user.push('\n');

    Ok(PromptBundle { version, item_id: item.item_id.clone(), system, user, schema: output_schema(version, library) })
}
