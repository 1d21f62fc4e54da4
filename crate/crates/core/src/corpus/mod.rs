//! Review ingestion, tokenization, vocabulary construction and splitting.

mod ingest;
mod split;
mod tokenize;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{ingest_reviews, write_jsonl, write_rejects, IngestFormat, IngestOutcome, Reject};
pub use split::{split_dataset, split_ids, SplitAssignment, SplitRatios};
pub use tokenize::{TokenizedDoc, Tokenizer};
pub use vocab::{build_vocab, Vocabulary};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("vocabulary is empty (min_doc_freq = {min_doc_freq})")]
    EmptyVocabulary { min_doc_freq: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("dataset has {0} records; at least 3 are required to split")]
    TooSmall(usize),
    #[error("split references unknown review id {0}")]
    UnknownId(String),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// Course completion status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Completion {
    NotStarted,
    InProgress,
    Completed,
}

impl Completion {
    pub const ALL: [Completion; 3] = [Completion::NotStarted, Completion::InProgress, Completion::Completed];

    pub fn as_str(self) -> &'static str {
        match self {
            Completion::NotStarted => "not_started",
            Completion::InProgress => "in_progress",
            Completion::Completed => "completed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// A raw behavioral signal: either an already-aggregated scalar or a
/// timestamped event log to be pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BehaviorRaw {
    Scalar(f64),
    Events(Vec<(i64, f64)>),
}

/// One course review.
///
/// `behavior` carries an entry for every feature of the configured schema;
/// `None` marks a missing signal, which is kept distinct from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub id: String,
    pub course_id: String,
    #[serde(rename = "domain")]
    pub domain_tag: String,
    pub text: String,
    pub rating: f64,
    #[serde(rename = "ts")]
    pub timestamp: i64,
    #[serde(default)]
    pub behavior: BTreeMap<String, Option<BehaviorRaw>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<Completion>,
}

impl ReviewRecord {
    pub fn behavior_value(&self, feature: &str) -> Option<&BehaviorRaw> {
        self.behavior.get(feature).and_then(Option::as_ref)
    }
}

/// An ingested collection of reviews. Immutable once built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<ReviewRecord>,
}

impl Dataset {
    pub fn new(records: Vec<ReviewRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ReviewRecord> {
        self.records.iter()
    }

    pub fn get(&self, id: &str) -> Option<&ReviewRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records keyed by id.
    pub fn by_id(&self) -> BTreeMap<&str, &ReviewRecord> {
        self.records.iter().map(|r| (r.id.as_str(), r)).collect()
    }
}

impl FromIterator<ReviewRecord> for Dataset {
    fn from_iter<I: IntoIterator<Item = ReviewRecord>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}
