use std::time::Duration;

use super::{EmbedError, Embedding, EmbeddingProvider, EmbeddingStore, ProviderError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts per batch, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubles after each failure.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

fn with_retry(
    provider: &dyn EmbeddingProvider,
    chunk: &[(String, String)],
    policy: &RetryPolicy,
) -> std::result::Result<Vec<Embedding>, ProviderError> {
    let mut delay = policy.base_delay;
    let mut attempt = 1;
    loop {
        match provider.embed(chunk) {
            Err(ProviderError::Transient(msg)) if attempt < policy.attempts => {
                log::warn!("embedding batch attempt {attempt} failed ({msg}); retrying in {delay:?}");
                std::thread::sleep(delay);
                delay *= 2;
                attempt += 1;
            }
            other => return other,
        }
    }
}

/// Embeds every (id, text) pair through `provider`, `batch_size` texts per
/// request, with up to `provider.max_in_flight()` requests outstanding.
///
/// Either every id resolves or the error lists the ids that did not.
pub fn encode_batch(
    provider: &dyn EmbeddingProvider,
    texts: &[(String, String)],
    batch_size: usize,
    policy: &RetryPolicy,
) -> Result<EmbeddingStore> {
    if batch_size == 0 {
        return Err(EmbedError::Config("batch_size must be >= 1".into()));
    }
    let chunks: Vec<&[(String, String)]> = texts.chunks(batch_size).collect();
    let window = provider.max_in_flight().max(1);

    let mut results: Vec<std::result::Result<Vec<Embedding>, ProviderError>> = Vec::with_capacity(chunks.len());
    for wave in chunks.chunks(window) {
        if wave.len() == 1 {
            results.push(with_retry(provider, wave[0], policy));
            continue;
        }
        std::thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .map(|chunk| scope.spawn(move || with_retry(provider, chunk, policy)))
                .collect();
            for h in handles {
                results.push(
                    h.join()
                        .unwrap_or_else(|_| Err(ProviderError::Fatal("provider panicked".into()))),
                );
            }
        });
    }

    let mut failed_ids = Vec::new();
    let mut last_error = String::new();
    let mut dim: Option<usize> = None;
    let mut resolved: Vec<(&str, Embedding)> = Vec::with_capacity(texts.len());
    for (chunk, result) in chunks.iter().zip(results) {
        match result {
            Ok(embeddings) => {
                if embeddings.len() != chunk.len() {
                    return Err(EmbedError::CountMismatch {
                        requested: chunk.len(),
                        returned: embeddings.len(),
                    });
                }
                for ((id, _), emb) in chunk.iter().zip(embeddings) {
                    let first = *dim.get_or_insert(emb.dim());
                    if emb.dim() != first {
                        return Err(EmbedError::DimensionDrift {
                            first,
                            later: emb.dim(),
                        });
                    }
                    resolved.push((id, emb));
                }
            }
            Err(e) => {
                last_error = e.to_string();
                failed_ids.extend(chunk.iter().map(|(id, _)| id.clone()));
            }
        }
    }
    if !failed_ids.is_empty() {
        return Err(EmbedError::Unresolved { failed_ids, last_error });
    }

    let mut store = EmbeddingStore::new(dim.unwrap_or(0), provider.tag());
    for (id, emb) in resolved {
        store.insert(id, emb)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{FileProvider, TestEncoder};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Mutex;

    fn texts(n: usize) -> Vec<(String, String)> {
        (0..n)
            .map(|i| (format!("r{i:03}"), format!("review number {i} was good")))
            .collect()
    }

    fn fast() -> RetryPolicy {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(1),
        }
    }

    /// Fails the first `failures` calls transiently, then delegates.
    struct Flaky {
        inner: TestEncoder,
        failures: AtomicUsize,
        calls: AtomicUsize,
    }

    impl EmbeddingProvider for Flaky {
        fn tag(&self) -> String {
            "flaky".into()
        }
        fn embed(&self, batch: &[(String, String)]) -> std::result::Result<Vec<Embedding>, ProviderError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            if self
                .failures
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |f| f.checked_sub(1))
                .is_ok()
            {
                return Err(ProviderError::Transient("503".into()));
            }
            self.inner.embed(batch)
        }
    }

    #[test]
    fn file_provider_identity() {
        let mut s = EmbeddingStore::new(2, "pre");
        s.insert("a", Embedding::new(vec![0.5, 1.5])).unwrap();
        s.insert("b", Embedding::new(vec![-1.0, 2.0])).unwrap();
        let p = FileProvider::new(s.clone());
        let req = vec![("a".to_string(), String::new()), ("b".to_string(), String::new())];
        let out = encode_batch(&p, &req, 1, &fast()).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn unit_norm_test_vectors() {
        let enc = TestEncoder::new(16, 0);
        let out = encode_batch(&enc, &texts(100), 7, &fast()).unwrap();
        assert_eq!(out.len(), 100);
        for (_, e) in out.iter() {
            let n: f64 = e.vector.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let p = Flaky {
            inner: TestEncoder::new(4, 0),
            failures: AtomicUsize::new(2),
            calls: AtomicUsize::new(0),
        };
        let out = encode_batch(&p, &texts(5), 10, &fast()).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(p.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn exhausted_retries_report_failed_ids() {
        let p = Flaky {
            inner: TestEncoder::new(4, 0),
            failures: AtomicUsize::new(3),
            calls: AtomicUsize::new(0),
        };
        match encode_batch(&p, &texts(5), 3, &fast()) {
            Err(EmbedError::Unresolved { failed_ids, .. }) => {
                assert_eq!(failed_ids, vec!["r000", "r001", "r002"]);
            }
            other => panic!("expected unresolved ids, got {other:?}"),
        }
    }

    struct Drifting {
        calls: Mutex<usize>,
    }

    impl EmbeddingProvider for Drifting {
        fn tag(&self) -> String {
            "drift".into()
        }
        fn embed(&self, batch: &[(String, String)]) -> std::result::Result<Vec<Embedding>, ProviderError> {
            let mut c = self.calls.lock().unwrap();
            *c += 1;
            let dim = if *c == 1 { 3 } else { 4 };
            Ok(batch.iter().map(|_| Embedding::new(vec![0.0; dim])).collect())
        }
    }

    #[test]
    fn dimension_drift_is_fatal() {
        let p = Drifting { calls: Mutex::new(0) };
        assert!(matches!(
            encode_batch(&p, &texts(4), 2, &fast()),
            Err(EmbedError::DimensionDrift { first: 3, later: 4 })
        ));
    }

    #[test]
    fn zero_batch_size_rejected() {
        let enc = TestEncoder::new(4, 0);
        assert!(matches!(
            encode_batch(&enc, &texts(1), 0, &fast()),
            Err(EmbedError::Config(_))
        ));
    }
}
