use rand_distr::{Distribution, StandardNormal};

use super::{Embedding, EmbeddingStore};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Worth retrying (rate limiting, server errors, dropped connections).
    Transient(String),
    Fatal(String),
}

impl std::fmt::Display for ProviderError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProviderError::Transient(m) => write!(f, "transient: {m}"),
            ProviderError::Fatal(m) => write!(f, "fatal: {m}"),
        }
    }
}

/// Anything that turns (review id, text) pairs into embeddings, in order.
/// Implementations must tolerate concurrent `embed` calls.
pub trait EmbeddingProvider: Sync {
    /// Identifies the producing encoder; persisted with the store.
    fn tag(&self) -> String;

    /// Maximum number of batches `encode_batch` keeps in flight at once.
    fn max_in_flight(&self) -> usize {
        1
    }

    fn embed(&self, batch: &[(String, String)]) -> Result<Vec<Embedding>, ProviderError>;
}

/// Serves precomputed vectors from a store, keyed by review id.
pub struct FileProvider {
    store: EmbeddingStore,
}

impl FileProvider {
    pub fn new(store: EmbeddingStore) -> Self {
        Self { store }
    }
}

impl EmbeddingProvider for FileProvider {
    fn tag(&self) -> String {
        self.store.provider_tag().to_string()
    }

    fn embed(&self, batch: &[(String, String)]) -> Result<Vec<Embedding>, ProviderError> {
        let (_, missing) = self.store.resolve(batch.iter().map(|(id, _)| id.as_str()));
        if !missing.is_empty() {
            return Err(ProviderError::Fatal(format!(
                "ids not in store: {}",
                missing.join(", ")
            )));
        }
        Ok(batch
            .iter()
            .map(|(id, _)| self.store.get(id).unwrap().clone())
            .collect())
    }
}

const BUCKETS: usize = 4096;

/// Deterministic vocabulary-free stand-in encoder: hashed token counts
/// projected through a seeded Gaussian matrix, then L2-normalized.
#[derive(Debug, Clone)]
pub struct TestEncoder {
    dim: usize,
    seed: u64,
    /// BUCKETS × dim, row-major.
    projection: Vec<f64>,
}

impl TestEncoder {
    /// Panics if `dim < 2`.
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 2, "test encoder needs dim >= 2");
        let mut rng = seed::rng(seed::derive(seed, &format!("test-encoder/{dim}")));
        let projection = (0..BUCKETS * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self { dim, seed, projection }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn bucket(token: &str) -> usize {
        (seed::fnv1a(token.as_bytes()) % BUCKETS as u64) as usize
    }

    pub fn encode(&self, text: &str) -> Embedding {
        let mut acc = vec![0.0f64; self.dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let row = &self.projection[Self::bucket(token) * self.dim..][..self.dim];
            acc.iter_mut().zip(row).for_each(|(a, r)| *a += r);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter_mut().for_each(|x| *x /= norm);
        }
        Embedding::new(acc.into_iter().map(|x| x as f32).collect())
    }
}

impl EmbeddingProvider for TestEncoder {
    fn tag(&self) -> String {
        format!("test-encoder:dim={},seed={}", self.dim, self.seed)
    }

    fn embed(&self, batch: &[(String, String)]) -> Result<Vec<Embedding>, ProviderError> {
        Ok(batch.iter().map(|(_, text)| self.encode(text)).collect())
    }
}

/// One-off encoding; builds the projection each call, so prefer a shared
/// [`TestEncoder`] for many texts.
pub fn test_encode(text: &str, dim: usize, seed: u64) -> Embedding {
    TestEncoder::new(dim, seed).encode(text)
}
