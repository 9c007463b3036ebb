use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::QMatrixError;

/// One entry of the misconception library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Misconception {
    pub id: String,
    pub description: String,
}

/// Ordered set of misconceptions. The order is the canonical attribute axis
/// of every Q-matrix built from the library.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisconceptionLibrary {
    entries: Vec<Misconception>,
    index: HashMap<String, usize>,
}

impl MisconceptionLibrary {
    pub fn new(entries: Vec<Misconception>) -> Result<Self, QMatrixError> {
        if entries.is_empty() {
            return Err(QMatrixError::EmptyLibrary);
        }
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, entry) in entries.iter().enumerate() {
            if entry.id.trim().is_empty() {
                return Err(QMatrixError::InvalidId { position: pos });
            }
            if index.insert(entry.id.clone(), pos).is_some() {
                return Err(QMatrixError::DuplicateId(entry.id.clone()));
            }
        }
        Ok(Self { entries, index })
    }

    /// Parses the JSON library file: an array of `{"id", "description"}`.
    pub fn from_json(text: &str) -> Result<Self, QMatrixError> {
        let entries: Vec<Misconception> = serde_json::from_str(text).map_err(|e| QMatrixError::Json(e.to_string()))?;
        Self::new(entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("library serializes")
    }

    pub fn entries(&self) -> &[Misconception] {
        &self.entries
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.id.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }
}

/// Confidence attached to a misconception label. `High > Medium > Low`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConfidenceTier {
    Low,
    Medium,
    High,
}

impl ConfidenceTier {
    pub const ALL: [ConfidenceTier; 3] = [ConfidenceTier::High, ConfidenceTier::Medium, ConfidenceTier::Low];

    pub fn as_str(self) -> &'static str {
        match self {
            ConfidenceTier::High => "High",
            ConfidenceTier::Medium => "Medium",
            ConfidenceTier::Low => "Low",
        }
    }
}

impl fmt::Display for ConfidenceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ConfidenceTier {
    type Err = QMatrixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "High" | "high" => Ok(ConfidenceTier::High),
            "Medium" | "medium" => Ok(ConfidenceTier::Medium),
            "Low" | "low" => Ok(ConfidenceTier::Low),
            other => Err(QMatrixError::UnknownTier(other.to_string())),
        }
    }
}
