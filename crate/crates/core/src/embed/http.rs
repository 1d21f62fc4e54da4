//! Client for an external embedding service.
//!
//! Wire protocol: `POST {base}/embed` with `{"texts": [...]}`; a 200 response
//! carries `{"dim": d, "embeddings": [[...], ...]}` in request order. 429 and
//! 5xx are retryable, any other status is fatal.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, Embedding, EmbeddingProvider, ProviderError, Result};

/// Environment variable carrying the service base URL.
pub const ENDPOINT_ENV: &str = "EMBED_ENDPOINT";

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    dim: usize,
    embeddings: Vec<Vec<f32>>,
}

pub struct HttpProvider {
    base_url: String,
    agent: ureq::Agent,
    window: usize,
}

impl HttpProvider {
    pub fn new(base_url: impl Into<String>, window: usize, timeout: Duration) -> Self {
        let base_url = base_url.into().trim_end_matches('/').to_string();
        Self {
            base_url,
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            window: window.max(1),
        }
    }

    /// Base URL from `explicit`, falling back to `EMBED_ENDPOINT`.
    pub fn from_env_or(explicit: Option<&str>, window: usize, timeout: Duration) -> Result<Self> {
        let url = match explicit {
            Some(u) => u.to_string(),
            None => std::env::var(ENDPOINT_ENV)
                .map_err(|_| EmbedError::Config(format!("no endpoint configured and {ENDPOINT_ENV} is not set")))?,
        };
        Ok(Self::new(url, window, timeout))
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }
}

impl EmbeddingProvider for HttpProvider {
    fn tag(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn max_in_flight(&self) -> usize {
        self.window
    }

    fn embed(&self, batch: &[(String, String)]) -> std::result::Result<Vec<Embedding>, ProviderError> {
        let body = EmbedRequest {
            texts: batch.iter().map(|(_, t)| t.as_str()).collect(),
        };
        let url = format!("{}/embed", self.base_url);
        let response = match self.agent.post(&url).send_json(&body) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, _)) if code == 429 || (500..600).contains(&code) => {
                return Err(ProviderError::Transient(format!("HTTP {code}")))
            }
            Err(ureq::Error::Status(code, _)) => return Err(ProviderError::Fatal(format!("HTTP {code}"))),
            Err(ureq::Error::Transport(t)) => return Err(ProviderError::Transient(t.to_string())),
        };
        if response.status() != 200 {
            return Err(ProviderError::Fatal(format!("HTTP {}", response.status())));
        }
        let parsed: EmbedResponse = response
            .into_json()
            .map_err(|e| ProviderError::Fatal(format!("malformed response: {e}")))?;
        if parsed.embeddings.len() != batch.len() {
            return Err(ProviderError::Fatal(format!(
                "{} embeddings for {} texts",
                parsed.embeddings.len(),
                batch.len()
            )));
        }
        if let Some(bad) = parsed.embeddings.iter().find(|e| e.len() != parsed.dim) {
            return Err(ProviderError::Fatal(format!(
                "vector of length {} in a response declaring dim {}",
                bad.len(),
                parsed.dim
            )));
        }
        Ok(parsed.embeddings.into_iter().map(Embedding::new).collect())
    }
}
