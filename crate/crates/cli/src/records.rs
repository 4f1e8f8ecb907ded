//! The campaign record stream: one JSON object per detector decision,
//! written as JSONL. Relation and baseline records share one schema; the
//! `mr` field carries either name and the optional fields are null wherever
//! a stage has nothing to put there.

use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use planprobe_core::detector::{Comparison, RelationTag, Severity};
use planprobe_core::gridworld::Action;
use planprobe_core::planners::PlannerId;
use planprobe_core::Real;

use crate::config::FilterArm;
use crate::suite::ComplexityClass;

/// How far the record's pair got.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    /// Both episodes ran to success and were compared.
    Ok,
    /// The follow-up episode failed; nothing to compare.
    FollowupFailed,
    /// The perturbation itself could not be constructed.
    PlacementFailed,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignRecord {
    pub source_id: String,
    pub planner: PlannerId,
    /// Relation or baseline name; the two families share this field.
    pub mr: RelationTag,
    /// Selection arm for relation records; null for baselines.
    pub arm: Option<FilterArm>,
    pub complexity: ComplexityClass,
    pub status: RecordStatus,
    pub c_s: Option<Real>,
    pub c_f: Option<Real>,
    pub violated: bool,
    pub vs: Option<Real>,
    pub severity: Option<Severity>,
    /// Stage-specific payload: the follow-up case for relations, the
    /// perturbation summary for baselines.
    pub followup: serde_json::Value,
    /// Encoded initial view of the follow-up episode, when one ran.
    pub fu_view: Option<Vec<Real>>,
    /// Action sequence of the follow-up episode, when one ran.
    pub fu_actions: Option<Vec<Action>>,
}

impl CampaignRecord {
    /// Fills the comparison fields from a detector verdict.
    pub fn with_comparison(mut self, cmp: &Comparison) -> CampaignRecord {
        self.status = RecordStatus::Ok;
        self.c_s = Some(cmp.c_s);
        self.c_f = Some(cmp.c_f);
        self.violated = cmp.violated;
        self.vs = Some(cmp.vs);
        self.severity = Some(cmp.severity);
        self
    }
}

#[derive(Debug, Error)]
pub enum RecordsError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {message}")]
    Malformed { path: String, line: usize, message: String },
}

/// Reads a JSONL file of records (or suite cases — anything deserializable),
/// reporting the 1-based line number of the first malformed line.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordsError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|source| RecordsError::Io { path: display.clone(), source })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| RecordsError::Io { path: display.clone(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| RecordsError::Malformed {
            path: display.clone(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<CampaignRecord>, RecordsError> {
    read_jsonl(path)
}
