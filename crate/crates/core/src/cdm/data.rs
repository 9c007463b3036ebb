use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::CdmError;
use crate::qmatrix::QMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Response {
    pub student_id: String,
    pub item_id: String,
    pub score: u8,
}

/// A record resolved against a student universe and a Q-matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Record {
    pub student: usize,
    pub item: usize,
    pub score: u8,
}

/// `(student, item, score)` observations.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResponseLog {
    records: Vec<Response>,
}

const HEADER: &str = "student_id,item_id,score";

impl ResponseLog {
    pub fn new(records: Vec<Response>) -> Result<Self, CdmError> {
        if let Some(pos) = records.iter().position(|r| r.score > 1) {
            return Err(CdmError::Csv { line: pos + 2, message: "score must be 0 or 1".into() });
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Response] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Student ids in order of first appearance.
    pub fn students(&self) -> Vec<String> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for r in &self.records {
            if !seen.contains_key(r.student_id.as_str()) {
                seen.insert(r.student_id.as_str(), out.len());
                out.push(r.student_id.clone());
            }
        }
        out
    }

    /// Resolves ids to indices: students by first appearance, items by Q row.
    pub fn index(&self, q: &QMatrix) -> Result<(Vec<String>, Vec<Record>), CdmError> {
        let items: HashMap<&str, usize> = q.item_ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut students: HashMap<&str, usize> = HashMap::new();
        let mut student_ids = Vec::new();
        let mut out = Vec::with_capacity(self.records.len());
        for r in &self.records {
            let item = *items.get(r.item_id.as_str()).ok_or_else(|| CdmError::UnknownItem(r.item_id.clone()))?;
            let student = *students.entry(r.student_id.as_str()).or_insert_with(|| {
                student_ids.push(r.student_id.clone());
                student_ids.len() - 1
            });
            out.push(Record { student, item, score: r.score });
        }
        Ok((student_ids, out))
    }

    /// Copy of the log with every score replaced by `f(record_index)`.
    pub fn with_scores(&self, mut f: impl FnMut(usize) -> u8) -> Self {
        let records =
            self.records.iter().enumerate().map(|(n, r)| Response { score: f(n).min(1), ..r.clone() }).collect();
        Self { records }
    }

    pub fn parse_csv(text: &str) -> Result<Self, CdmError> {
        let mut lines = text.lines().map(|l| l.strip_suffix('\r').unwrap_or(l));
        match lines.next() {
            Some(HEADER) => {}
            other => {
                return Err(CdmError::Csv {
                    line: 1,
                    message: format!("expected header {HEADER:?}, found {:?}", other.unwrap_or("")),
                })
            }
        }
        let mut records = Vec::new();
        for (n, line) in lines.enumerate() {
            let line_no = n + 2;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(CdmError::Csv {
                    line: line_no,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let score = match fields[2] {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(CdmError::Csv {
                        line: line_no,
                        message: format!("score must be 0 or 1, found {other:?}"),
                    })
                }
            };
            if fields[0].is_empty() || fields[1].is_empty() {
                return Err(CdmError::Csv { line: line_no, message: "empty id".into() });
            }
            records.push(Response { student_id: fields[0].to_string(), item_id: fields[1].to_string(), score });
        }
        Ok(Self { records })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 16 + HEADER.len() + 1);
        out.push_str(HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(out, "{},{},{}", r.student_id, r.item_id, r.score);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_strict_scores() {
        let text = "student_id,item_id,score\ns1,q1,1\ns1,q2,0\ns2,q1,0\n";
        let log = ResponseLog::parse_csv(text).unwrap();
        assert_eq!(log.len(), 3);
        assert_eq!(log.to_csv(), text);
        assert_eq!(log.students(), vec!["s1", "s2"]);
        assert!(ResponseLog::parse_csv("student_id,item_id,score\ns1,q1,2\n").is_err());
        assert!(ResponseLog::parse_csv("student,item,score\n").is_err());
        assert!(ResponseLog::parse_csv("student_id,item_id,score\ns1,q1\n").is_err());
    }

    #[test]
    fn index_rejects_items_outside_q() {
        let q = QMatrix::zeros(vec!["q1".into()], vec!["A1".into()]).unwrap();
        let log = ResponseLog::parse_csv("student_id,item_id,score\ns1,q9,1\n").unwrap();
        assert!(matches!(log.index(&q), Err(CdmError::UnknownItem(id)) if id == "q9"));
    }
}
