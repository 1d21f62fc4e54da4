//! LDA topic model fitted by collapsed Gibbs sampling, with fold-in inference
//! of per-review topic mixtures.
//!
//! Training keeps the usual count tables: document–topic counts `n_dk`,
//! word–topic counts `n_wk` and topic totals `n_k`. Each sweep resamples every
//! token's topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_wk + β) / (n_k + V·β)
//! ```
//!
//! and the topic–word matrix is the average of `(n_wk + β) / (n_k + V·β)` over
//! the thinned post-burn-in sweeps. Fold-in holds that matrix fixed and
//! samples only the new document's assignments.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::seed;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("invalid topic configuration: {0}")]
    Config(String),
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("K = {k} exceeds the total token count {tokens}")]
    TooManyTopics { k: usize, tokens: usize },
    #[error("vocabulary mismatch: model bound to {expected}, got {found}")]
    VocabMismatch { expected: String, found: String },
    #[error("token index {index} out of range for vocabulary of size {size}")]
    TokenOutOfRange { index: usize, size: usize },
    #[error("invalid topic model: {0}")]
    InvalidModel(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, TopicError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document–topic prior; `None` means `50 / K`.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            k: 6,
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            burn_in: 800,
            thin: 10,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(TopicError::Config(format!("K must be >= 2, got {}", self.k)));
        }
        if self.iterations <= self.burn_in {
            return Err(TopicError::Config(format!(
                "iterations ({}) must exceed burn_in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thin == 0 {
            return Err(TopicError::Config("thin must be >= 1".into()));
        }
        let alpha = self.alpha();
        if !(alpha > 0.0 && alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(TopicError::Config(format!(
                "priors must be positive (alpha {alpha}, beta {})",
                self.beta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldInConfig {
    pub iterations: usize,
    pub burn_in: usize,
}

impl Default for FoldInConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            burn_in: 50,
        }
    }
}

/// A point on the K-simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicDistribution {
    pub theta: Vec<f64>,
}

impl TopicDistribution {
    pub fn uniform(k: usize) -> Self {
        Self {
            theta: vec![1.0 / k as f64; k],
        }
    }

    pub fn k(&self) -> usize {
        self.theta.len()
    }

    pub fn argmax(&self) -> usize {
        self.theta
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |best, (i, &v)| if v > best.1 { (i, v) } else { best },
            )
            .0
    }
}

/// Fitted topic–word distributions, bound to a vocabulary by fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub version: u32,
    #[serde(rename = "K")]
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab_hash: String,
    /// Row-major K × V.
    pub phi: Vec<f64>,
}

impl TopicModel {
    pub fn vocab_size(&self) -> usize {
        self.phi.len() / self.k
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        let v = self.vocab_size();
        &self.phi[topic * v..(topic + 1) * v]
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_VERSION {
            return Err(TopicError::InvalidModel(format!(
                "unsupported version {}",
                self.version
            )));
        }
        if self.k < 2 || self.phi.is_empty() || !self.phi.len().is_multiple_of(self.k) {
            return Err(TopicError::InvalidModel(format!(
                "phi of length {} is not K × V with K = {}",
                self.phi.len(),
                self.k
            )));
        }
        for k in 0..self.k {
            let row = self.phi_row(k);
            if row.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
                return Err(TopicError::InvalidModel(format!(
                    "row {k} has a negative or non-finite entry"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(TopicError::InvalidModel(format!("row {k} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.fingerprint();
        if found != self.vocab_hash || vocab.len() != self.vocab_size() {
            return Err(TopicError::VocabMismatch {
                expected: self.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    /// Fold-in inference of θ for one document. The caller is responsible for
    /// having checked the vocabulary binding (see [`infer_theta`]).
    pub fn infer(&self, tokens: &[usize], cfg: &FoldInConfig, seed: u64) -> Result<TopicDistribution> {
        let v = self.vocab_size();
        if let Some(&bad) = tokens.iter().find(|&&w| w >= v) {
            return Err(TopicError::TokenOutOfRange { index: bad, size: v });
        }
        if cfg.iterations <= cfg.burn_in {
            return Err(TopicError::Config("fold-in iterations must exceed burn_in".into()));
        }
        let k = self.k;
        if tokens.is_empty() {
            return Ok(TopicDistribution::uniform(k));
        }

        let mut rng = seed::rng(seed);
        let mut counts = vec![0u32; k];
        let mut z: Vec<usize> = tokens
            .iter()
            .map(|_| {
                let t = rng.random_range(0..k);
                counts[t] += 1;
                t
            })
            .collect();
        let mut weights = vec![0.0; k];
        let mut acc = vec![0.0; k];
        let n = tokens.len() as f64;
        let denom = n + k as f64 * self.alpha;

        for it in 1..=cfg.iterations {
            for (i, &w) in tokens.iter().enumerate() {
                counts[z[i]] -= 1;
                let mut total = 0.0;
                for t in 0..k {
                    total += (counts[t] as f64 + self.alpha) * self.phi[t * v + w];
                    weights[t] = total;
                }
                let nz = draw(&mut rng, &weights, total);
                counts[nz] += 1;
                z[i] = nz;
            }
            if it > cfg.burn_in {
                for t in 0..k {
                    acc[t] += (counts[t] as f64 + self.alpha) / denom;
                }
            }
        }
        Ok(TopicDistribution { theta: normalized(acc) })
    }

    /// Σ_w log Σ_k θ_k φ_kw over the tokens of a document.
    pub fn log_likelihood(&self, tokens: &[usize], theta: &TopicDistribution) -> f64 {
        let v = self.vocab_size();
        tokens
            .iter()
            .map(|&w| {
                (0..self.k)
                    .map(|t| theta.theta[t] * self.phi[t * v + w])
                    .sum::<f64>()
                    .ln()
            })
            .sum()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec(self).map_err(|e| TopicError::InvalidModel(e.to_string()))?;
        std::fs::write(path, json).map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| TopicError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let model: Self = serde_json::from_slice(&bytes).map_err(|e| TopicError::InvalidModel(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

/// Checks the vocabulary binding, then runs fold-in inference.
pub fn infer_theta(
    model: &TopicModel,
    tokens: &[usize],
    vocab: &Vocabulary,
    cfg: &FoldInConfig,
    seed: u64,
) -> Result<TopicDistribution> {
    model.check_vocab(vocab)?;
    model.infer(tokens, cfg, seed)
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Inverse-CDF draw from unnormalized cumulative weights.
#[inline]
fn draw(rng: &mut ChaCha8Rng, cumulative: &[f64], total: f64) -> usize {
    let u = rng.random::<f64>() * total;
    cumulative.iter().position(|&c| u < c).unwrap_or(cumulative.len() - 1)
}

/// Fits LDA by collapsed Gibbs sampling. Deterministic in `seed`.
pub fn fit_lda(docs: &[Vec<usize>], vocab: &Vocabulary, cfg: &LdaConfig, seed: u64) -> Result<TopicModel> {
    let identity: Vec<usize> = (0..cfg.k).collect();
    fit_lda_relabeled(docs, vocab, cfg, seed, &identity)
}

/// As [`fit_lda`], but relabels the random initial assignment through
/// `relabel` (a permutation of `0..K`) before sampling starts.
pub fn fit_lda_relabeled(
    docs: &[Vec<usize>],
    vocab: &Vocabulary,
    cfg: &LdaConfig,
    seed: u64,
    relabel: &[usize],
) -> Result<TopicModel> {
    cfg.validate()?;
    let k = cfg.k;
    let v = vocab.len();
    let mut sorted = relabel.to_vec();
    sorted.sort_unstable();
    if sorted != (0..k).collect::<Vec<_>>() {
        return Err(TopicError::Config("relabel must be a permutation of 0..K".into()));
    }
    let total_tokens: usize = docs.iter().map(Vec::len).sum();
    if total_tokens == 0 {
        return Err(TopicError::EmptyCorpus);
    }
    if k > total_tokens {
        return Err(TopicError::TooManyTopics {
            k,
            tokens: total_tokens,
        });
    }
    if let Some(&bad) = docs.iter().flatten().find(|&&w| w >= v) {
        return Err(TopicError::TokenOutOfRange { index: bad, size: v });
    }

    let alpha = cfg.alpha();
    let beta = cfg.beta;
    let v_beta = v as f64 * beta;
    let mut rng = seed::rng(seed);

    let mut n_dk = vec![0u32; docs.len() * k];
    let mut n_wk = vec![0u32; v * k];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = Vec::with_capacity(docs.len());
    for (d, doc) in docs.iter().enumerate() {
        let zd: Vec<usize> = doc
            .iter()
            .map(|&w| {
                let t = relabel[rng.random_range(0..k)];
                n_dk[d * k + t] += 1;
                n_wk[w * k + t] += 1;
                n_k[t] += 1;
                t
            })
            .collect();
        z.push(zd);
    }

    let check_counts = cfg!(debug_assertions) && total_tokens <= 20_000;
    let mut weights = vec![0.0; k];
    let mut inv_denom = vec![0.0; k];
    let mut phi_acc = vec![0.0; k * v];
    let mut samples = 0usize;

    for it in 1..=cfg.iterations {
        for t in 0..k {
            inv_denom[t] = 1.0 / (n_k[t] as f64 + v_beta);
        }
        for (d, doc) in docs.iter().enumerate() {
            let zd = &mut z[d];
            let ndk = &mut n_dk[d * k..(d + 1) * k];
            for (i, &w) in doc.iter().enumerate() {
                let old = zd[i];
                ndk[old] -= 1;
                n_wk[w * k + old] -= 1;
                n_k[old] -= 1;
                inv_denom[old] = 1.0 / (n_k[old] as f64 + v_beta);

                let nwk = &n_wk[w * k..(w + 1) * k];
                let mut total = 0.0;
                for t in 0..k {
                    total += (ndk[t] as f64 + alpha) * (nwk[t] as f64 + beta) * inv_denom[t];
                    weights[t] = total;
                }
                let new = draw(&mut rng, &weights, total);

                ndk[new] += 1;
                n_wk[w * k + new] += 1;
                n_k[new] += 1;
                inv_denom[new] = 1.0 / (n_k[new] as f64 + v_beta);
                zd[i] = new;
            }
        }
        if check_counts {
            debug_check_counts(docs, &n_dk, &n_wk, &n_k, k);
        }
        if it > cfg.burn_in && (it - cfg.burn_in).is_multiple_of(cfg.thin) {
            accumulate_phi(&mut phi_acc, &n_wk, &n_k, k, v, beta);
            samples += 1;
        }
    }
    if samples == 0 {
        accumulate_phi(&mut phi_acc, &n_wk, &n_k, k, v, beta);
    }

    // rows normalized exactly so persisted models pass the 1e-9 check
    for t in 0..k {
        let row = &mut phi_acc[t * v..(t + 1) * v];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
    }

    Ok(TopicModel {
        version: MODEL_VERSION,
        k,
        alpha,
        beta,
        vocab_hash: vocab.fingerprint(),
        phi: phi_acc,
    })
}

fn accumulate_phi(acc: &mut [f64], n_wk: &[u32], n_k: &[u32], k: usize, v: usize, beta: f64) {
    let v_beta = v as f64 * beta;
    for t in 0..k {
        let inv = 1.0 / (n_k[t] as f64 + v_beta);
        let row = &mut acc[t * v..(t + 1) * v];
        for (w, slot) in row.iter_mut().enumerate() {
            *slot += (n_wk[w * k + t] as f64 + beta) * inv;
        }
    }
}

fn debug_check_counts(docs: &[Vec<usize>], n_dk: &[u32], n_wk: &[u32], n_k: &[u32], k: usize) {
    for (d, doc) in docs.iter().enumerate() {
        let s: u32 = n_dk[d * k..(d + 1) * k].iter().sum();
        assert_eq!(s as usize, doc.len(), "doc {d}: topic counts do not sum to its length");
    }
    for (t, &total) in n_k.iter().enumerate() {
        let s: u32 = n_wk.iter().skip(t).step_by(k).sum();
        assert_eq!(s, total, "topic {t}: word counts do not sum to n_k");
    }
}
