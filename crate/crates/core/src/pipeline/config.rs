use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::sha256_hex;
use super::PipelineError;
use crate::annotator::{AssessmentItem, EndpointConfig, ExpertExemplar, PromptVersion};
use crate::cdm::{CdmConfig, ResponseLog};
use crate::qmatrix::{AnnotationSet, ConfidenceTier, MisconceptionLibrary, QMatrix};

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_version() -> PromptVersion {
    PromptVersion::V3
}
fn default_tiers() -> Vec<ConfidenceTier> {
    ConfidenceTier::ALL.to_vec()
}
fn default_repeats() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPath {
    pub label: String,
    pub path: PathBuf,
}

/// Everything a full run needs. Paths are used as given (relative paths
/// resolve against the working directory).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run_name: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub library: PathBuf,
    pub expert_q: PathBuf,
    pub responses: PathBuf,
    /// Needed when `endpoints` is non-empty.
    #[serde(default)]
    pub items: Option<PathBuf>,
    #[serde(default)]
    pub exemplars: Option<PathBuf>,
    #[serde(default = "default_version")]
    pub prompt_version: PromptVersion,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    /// Annotation sets produced earlier, re-ranked without network access.
    #[serde(default)]
    pub annotation_files: Vec<LabeledPath>,
    /// Ready-made candidate matrices, validated as-is.
    #[serde(default)]
    pub candidate_files: Vec<LabeledPath>,
    #[serde(default = "default_tiers")]
    pub tiers: Vec<ConfidenceTier>,
    #[serde(default)]
    pub cdm: CdmConfig,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    /// Where generated annotation sets are cached; defaults to
    /// `<output_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Cross-validate candidates on parallel threads.
    #[serde(default)]
    pub parallel: bool,
}

/// Parsed inputs of a run, loaded before any network traffic.
#[derive(Debug, Clone)]
pub struct RunInputs {
    pub library: MisconceptionLibrary,
    pub expert_q: QMatrix,
    pub responses: ResponseLog,
    pub items: Option<Vec<AssessmentItem>>,
    /// sha256 of the items file bytes.
    pub items_digest: Option<String>,
    pub exemplars: Vec<ExpertExemplar>,
    pub annotation_sets: Vec<(String, AnnotationSet)>,
    pub candidates: Vec<(String, QMatrix)>,
}

fn read(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        serde_json::from_str(&read(path)?).map_err(|e| PipelineError::input(path, e))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serializes")
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.output_dir.join("cache"))
    }

    /// Checks the fields that need no file access.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.tiers.is_empty() {
            return bad("tiers must list at least one tier".into());
        }
        let mut seen = HashSet::new();
        if let Some(t) = self.tiers.iter().find(|t| !seen.insert(**t)) {
            return bad(format!("tier {t} listed twice"));
        }
        if self.n_repeats == 0 {
            return bad("n_repeats must be at least 1".into());
        }
        self.cdm.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut labels = HashSet::from(["expert".to_string()]);
        let all = self
            .endpoints
            .iter()
            .map(|e| e.label.clone())
            .chain(self.annotation_files.iter().map(|a| a.label.clone()))
            .chain(self.candidate_files.iter().map(|c| c.label.clone()));
        for label in all {
            if label.is_empty() {
                return bad("candidate labels must be non-empty".into());
            }
            if !labels.insert(label.clone()) {
                return bad(format!("label {label:?} is used twice (\"expert\" is reserved)"));
            }
        }
        if !self.endpoints.is_empty() && self.items.is_none() {
            return bad("endpoints require an items file".into());
        }
        if !self.endpoints.is_empty() && self.prompt_version.features().has_fewshot && self.exemplars.is_none() {
            return bad(format!("prompt version {} requires an exemplars file", self.prompt_version));
        }
        Ok(())
    }

    /// Reads and parses every referenced file, checking that all matrices
    /// share the library's attribute axis and the expert matrix's items.
    pub fn load_inputs(&self) -> Result<RunInputs, PipelineError> {
        self.validate()?;
        let library = MisconceptionLibrary::from_json(&read(&self.library)?)
            .map_err(|e| PipelineError::input(&self.library, e))?;
        let expert_q =
            QMatrix::parse_csv(&read(&self.expert_q)?).map_err(|e| PipelineError::input(&self.expert_q, e))?;
        if expert_q.attribute_ids() != library.ids().as_slice() {
            return Err(PipelineError::input(&self.expert_q, "attribute columns differ from the library ids"));
        }
        let responses =
            ResponseLog::parse_csv(&read(&self.responses)?).map_err(|e| PipelineError::input(&self.responses, e))?;
        if let Some(r) = responses.records().iter().find(|r| expert_q.item_index(&r.item_id).is_none()) {
            return Err(PipelineError::input(
                &self.responses,
                format!("item {:?} is not in the expert matrix", r.item_id),
            ));
        }

        let (items, items_digest) = match &self.items {
            Some(path) => {
                let text = read(path)?;
                let items = AssessmentItem::list_from_json(&text).map_err(|e| PipelineError::input(path, e))?;
                if let Some(i) = items.iter().find(|i| expert_q.item_index(&i.item_id).is_none()) {
                    return Err(PipelineError::input(
                        path,
                        format!("item {:?} is not in the expert matrix", i.item_id),
                    ));
                }
                (Some(items), Some(sha256_hex(text.as_bytes())))
            }
            None => (None, None),
        };
        let exemplars = match &self.exemplars {
            Some(path) => ExpertExemplar::list_from_json(&read(path)?).map_err(|e| PipelineError::input(path, e))?,
            None => Vec::new(),
        };

        let mut annotation_sets = Vec::new();
        for a in &self.annotation_files {
            let set = AnnotationSet::from_json(&read(&a.path)?).map_err(|e| PipelineError::input(&a.path, e))?;
            annotation_sets.push((a.label.clone(), set));
        }
        let mut candidates = Vec::new();
        for c in &self.candidate_files {
            let q = QMatrix::parse_csv(&read(&c.path)?).map_err(|e| PipelineError::input(&c.path, e))?;
            q.same_axes(&expert_q).map_err(|e| PipelineError::input(&c.path, e))?;
            candidates.push((c.label.clone(), q));
        }
        Ok(RunInputs { library, expert_q, responses, items, items_digest, exemplars, annotation_sets, candidates })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> RunConfig {
        RunConfig::from_json(r#"{"run_name":"r","library":"l.json","expert_q":"q.csv","responses":"r.csv"}"#).unwrap()
    }

    #[test]
    fn defaults_apply() {
        let c = minimal();
        assert_eq!(c.output_dir, PathBuf::from("runs"));
        assert_eq!(c.tiers, ConfidenceTier::ALL.to_vec());
        assert_eq!(c.n_repeats, 5);
        assert_eq!(c.prompt_version, PromptVersion::V3);
        assert_eq!(c.cdm, CdmConfig::default());
        assert_eq!(c.cache_dir(), PathBuf::from("runs/cache"));
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = RunConfig::from_json(r#"{"run_name":"r","library":"l","expert_q":"q","responses":"r","tier":[]}"#);
        assert!(err.is_err());
    }

    #[test]
    fn duplicate_tiers_and_labels_are_rejected() {
        let c = RunConfig { tiers: vec![ConfidenceTier::High, ConfidenceTier::High], ..minimal() };
        assert!(c.validate().is_err());
        let twice = vec![
            LabeledPath { label: "a".into(), path: "x".into() },
            LabeledPath { label: "a".into(), path: "y".into() },
        ];
        assert!(RunConfig { candidate_files: twice, ..minimal() }.validate().is_err());
        let reserved = vec![LabeledPath { label: "expert".into(), path: "x".into() }];
        assert!(RunConfig { candidate_files: reserved, ..minimal() }.validate().is_err());
    }

    #[test]
    fn endpoints_need_items_and_exemplars() {
        let ep = vec![EndpointConfig::new("e", "http://localhost:1", "m")];
        let c = RunConfig { endpoints: ep, ..minimal() };
        assert!(c.validate().is_err());
        let c = RunConfig { items: Some("i.json".into()), ..c };
        assert!(c.validate().is_err());
        let c = RunConfig { prompt_version: PromptVersion::V2, ..c };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn missing_files_name_the_path() {
        let err = minimal().load_inputs().unwrap_err().to_string();
        assert!(err.contains("l.json"), "{err}");
    }
}
