//! Sentiment embeddings behind a provider boundary.
//!
//! The encoder itself lives outside this crate. What crosses the boundary is
//! one fixed-length vector per review (the encoder's classification-position
//! output), delivered by an [`EmbeddingProvider`]: a persisted store, an HTTP
//! service, or the deterministic [`TestEncoder`].

mod batch;
mod http;
mod provider;
mod store;

use std::collections::BTreeMap;

use thiserror::Error;

pub use batch::{encode_batch, RetryPolicy};
pub use http::{HttpProvider, ENDPOINT_ENV};
pub use provider::{test_encode, EmbeddingProvider, FileProvider, ProviderError, TestEncoder};
pub use store::{load_embeddings, save_embeddings, FORMAT_VERSION, MAGIC};

/// Default embedding width, matching base-size encoders.
pub const DEFAULT_DIM: usize = 768;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding for '{id}' has dimension {found}, store expects {expected}")]
    DimensionMismatch { id: String, expected: usize, found: usize },
    #[error("embedding for '{0}' has a non-finite entry")]
    NonFinite(String),
    #[error("duplicate review id '{0}'")]
    DuplicateId(String),
    #[error("dimension drift between batches: first batch {first}, later batch {later}")]
    DimensionDrift { first: usize, later: usize },
    #[error("provider returned {returned} embeddings for a batch of {requested}")]
    CountMismatch { requested: usize, returned: usize },
    #[error("{} ids unresolved after retries ({last_error}): {}", failed_ids.len(), preview(failed_ids))]
    Unresolved {
        failed_ids: Vec<String>,
        last_error: String,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("embedding file format error: {0}")]
    Format(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn preview(ids: &[String]) -> String {
    let mut s = ids.iter().take(10).cloned().collect::<Vec<_>>().join(", ");
    if ids.len() > 10 {
        s.push_str(", ...");
    }
    s
}

pub type Result<T> = std::result::Result<T, EmbedError>;

/// One sentiment vector. Entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub vector: Vec<f32>,
}

impl Embedding {
    pub fn new(vector: Vec<f32>) -> Self {
        Self { vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn is_finite(&self) -> bool {
        self.vector.iter().all(|x| x.is_finite())
    }
}

/// Review id → embedding, with a uniform dimension enforced on insert.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    provider_tag: String,
    vectors: BTreeMap<String, Embedding>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, provider_tag: impl Into<String>) -> Self {
        Self {
            dim,
            provider_tag: provider_tag.into(),
            vectors: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn provider_tag(&self) -> &str {
        &self.provider_tag
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, embedding: Embedding) -> Result<()> {
        let id = id.into();
        if embedding.dim() != self.dim {
            return Err(EmbedError::DimensionMismatch {
                id,
                expected: self.dim,
                found: embedding.dim(),
            });
        }
        if !embedding.is_finite() {
            return Err(EmbedError::NonFinite(id));
        }
        if self.vectors.contains_key(&id) {
            return Err(EmbedError::DuplicateId(id));
        }
        self.vectors.insert(id, embedding);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.vectors.get(id)
    }

    /// Splits `ids` into (found, missing).
    pub fn resolve<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> (Vec<&'a str>, Vec<&'a str>) {
        ids.into_iter().partition(|id| self.vectors.contains_key(*id))
    }

    /// Entries in id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }
}
