use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::report::RowSource;
use super::PipelineError;
use crate::annotator::PromptVersion;
use crate::qmatrix::ConfidenceTier;

pub const MANIFEST_FILE: &str = "candidates.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOG_FILE: &str = "log.txt";

/// One candidate registered in a run directory, with paths of its artifacts
/// relative to the run root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Unique within the run: `<label>-<tier>` for tiered candidates.
    pub name: String,
    pub label: String,
    pub source: RowSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<ConfidenceTier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_version: Option<PromptVersion>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qmatrix: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ManifestEntry {
    pub fn new(name: impl Into<String>, label: impl Into<String>, source: RowSource) -> Self {
        Self {
            name: name.into(),
            label: label.into(),
            source,
            tier: None,
            model_name: None,
            prompt_version: None,
            qmatrix: None,
            fit: None,
            comparison: None,
            error: None,
        }
    }

    /// Fills unset fields of `self` from `other`; set fields of `other` win.
    fn merge(&mut self, other: ManifestEntry) {
        macro_rules! take {
            ($($f:ident),*) => {$( if other.$f.is_some() { self.$f = other.$f; } )*};
        }
        take!(tier, model_name, prompt_version, qmatrix, fit, comparison, error);
        self.label = other.label;
        self.source = other.source;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_name: String,
    pub entries: Vec<ManifestEntry>,
}

/// Maps a label to a safe file-name stem.
pub fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' }).collect()
}

/// `runs/<name>/`: every artifact of one run plus its config echo and log.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    name: String,
}

impl RunDir {
    pub fn create(output_dir: &Path, name: &str) -> Result<Self, PipelineError> {
        if name.is_empty() || file_stem(name) != name || name.starts_with('.') {
            return Err(PipelineError::Config(format!(
                "run name {name:?} must be non-empty and use only letters, digits, '-', '_' or '.'"
            )));
        }
        let root = output_dir.join(name);
        fs::create_dir_all(&root).map_err(|e| PipelineError::io(&root, e))?;
        Ok(Self { root, name: name.to_string() })
    }

    pub fn open(root: &Path) -> Result<Self, PipelineError> {
        if !root.is_dir() {
            return Err(PipelineError::input(root, "not a run directory"));
        }
        let name = root.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(Self { root: root.to_path_buf(), name })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn write(&self, rel: &str, contents: &str) -> Result<PathBuf, PipelineError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        fs::write(&path, contents).map_err(|e| PipelineError::io(&path, e))?;
        Ok(path)
    }

    pub fn read(&self, rel: &str) -> Result<String, PipelineError> {
        let path = self.path(rel);
        fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
    }

    /// Appends a timestamped line to `log.txt`.
    pub fn log(&self, message: &str) -> Result<(), PipelineError> {
        let path = self.path(LOG_FILE);
        let mut f =
            OpenOptions::new().create(true).append(true).open(&path).map_err(|e| PipelineError::io(&path, e))?;
        let now = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true);
        writeln!(f, "{now} {message}").map_err(|e| PipelineError::io(&path, e))
    }

    /// Records the effective configuration of `command` under its key in
    /// `config.json`, keeping the entries of other commands.
    pub fn echo_config(&self, command: &str, config: &Value) -> Result<(), PipelineError> {
        let path = self.path(CONFIG_FILE);
        let mut doc = match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Value>(&text).unwrap_or_else(|_| Value::Object(Default::default())),
            Err(_) => Value::Object(Default::default()),
        };
        if !doc.is_object() {
            doc = Value::Object(Default::default());
        }
        doc[command] = config.clone();
        self.write(CONFIG_FILE, &(serde_json::to_string_pretty(&doc).expect("json value serializes") + "\n"))?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<Manifest, PipelineError> {
        let path = self.path(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Manifest { run_name: self.name.clone(), entries: Vec::new() });
        }
        let text = self.read(MANIFEST_FILE)?;
        serde_json::from_str(&text).map_err(|e| PipelineError::input(&path, e))
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<(), PipelineError> {
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes") + "\n";
        self.write(MANIFEST_FILE, &text)?;
        Ok(())
    }

    /// Adds `entry`, or merges it into the entry with the same name.
    pub fn upsert(&self, entry: ManifestEntry) -> Result<(), PipelineError> {
        let mut manifest = self.manifest()?;
        match manifest.entries.iter_mut().find(|e| e.name == entry.name) {
            Some(existing) => existing.merge(entry),
            None => manifest.entries.push(entry),
        }
        self.write_manifest(&manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_replace_unsafe_characters() {
        assert_eq!(file_stem("gpt-5/v3 high"), "gpt-5_v3_high");
        assert_eq!(file_stem("qwen3_8b.V3"), "qwen3_8b.V3");
    }

    #[test]
    fn names_with_separators_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(RunDir::create(dir.path(), "a/b").is_err());
        assert!(RunDir::create(dir.path(), "").is_err());
        assert!(RunDir::create(dir.path(), "..").is_err());
        assert!(RunDir::create(dir.path(), "ok-1").is_ok());
    }

    #[test]
    fn config_echo_keeps_other_commands() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path(), "r").unwrap();
        run.echo_config("simulate", &serde_json::json!({"students": 5})).unwrap();
        run.echo_config("validate", &serde_json::json!({"repeats": 2})).unwrap();
        let doc: Value = serde_json::from_str(&run.read(CONFIG_FILE).unwrap()).unwrap();
        assert_eq!(doc["simulate"]["students"], 5);
        assert_eq!(doc["validate"]["repeats"], 2);
    }

    #[test]
    fn upsert_merges_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path(), "r").unwrap();
        let mut a = ManifestEntry::new("x-High", "x", RowSource::Annotation);
        a.qmatrix = Some("qmatrices/x-High.csv".into());
        run.upsert(a).unwrap();
        let mut b = ManifestEntry::new("x-High", "x", RowSource::Annotation);
        b.fit = Some("fits/x-High.json".into());
        run.upsert(b).unwrap();
        let m = run.manifest().unwrap();
        assert_eq!(m.entries.len(), 1);
        assert_eq!(m.entries[0].qmatrix.as_deref(), Some("qmatrices/x-High.csv"));
        assert_eq!(m.entries[0].fit.as_deref(), Some("fits/x-High.json"));
    }
}
