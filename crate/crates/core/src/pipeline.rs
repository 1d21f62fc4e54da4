//! Declarative experiment configuration and the in-memory stage functions
//! that turn a dataset into a feature table.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{default_schema, fit_norm_stats, validate_schema, BehaviorError, FeatureSpec, NormStats};
use crate::corpus::{
    build_vocab, split_ids, CorpusError, Dataset, IngestFormat, SplitAssignment, SplitRatios, Tokenizer, Vocabulary,
};
use crate::embed::{
    encode_batch, EmbedError, EmbeddingProvider, EmbeddingStore, FileProvider, HttpProvider, RetryPolicy, TestEncoder,
};
use crate::eval::{EvalError, EvalSettings, SyntheticSpec};
use crate::fusion::{build_feature_table, FeatureSources, FeatureTable, FusionError, TopicSource};
use crate::regress::{RegressError, RegressorSpec};
use crate::seed;
use crate::topics::{fit_lda, FoldInConfig, LdaConfig, TopicError, TopicModel};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Behavior(#[from] BehaviorError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl PipelineError {
    /// True when the failure stems from the configuration rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Corpus(CorpusError::Config(_))
                | PipelineError::Topic(TopicError::Config(_))
                | PipelineError::Embed(EmbedError::Config(_))
                | PipelineError::Behavior(BehaviorError::Config(_))
                | PipelineError::Regress(RegressError::Config(_))
                | PipelineError::Eval(EvalError::Config(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Input reviews for `ingest`.
    pub path: Option<PathBuf>,
    pub format: IngestFormat,
    /// Generator settings for `synth`.
    pub synthetic: SyntheticSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            format: IngestFormat::Jsonl,
            synthetic: SyntheticSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    /// Defaults to a value derived from the experiment seed.
    pub seed: Option<u64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let r = SplitRatios::default();
        Self {
            train: r.train,
            val: r.val,
            test: r.test,
            seed: None,
        }
    }
}

impl SplitConfig {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    pub k: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Concatenate training reviews per course into one document for fitting.
    pub pool_by_course: bool,
    pub min_doc_freq: usize,
    pub fold_in_iterations: usize,
    pub fold_in_burn_in: usize,
    /// Stopword file replacing the shipped list.
    pub stopwords: Option<PathBuf>,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        let lda = LdaConfig::default();
        let fold = FoldInConfig::default();
        Self {
            k: lda.k,
            alpha: lda.alpha,
            beta: lda.beta,
            iterations: lda.iterations,
            burn_in: lda.burn_in,
            thin: lda.thin,
            pool_by_course: true,
            min_doc_freq: 2,
            fold_in_iterations: fold.iterations,
            fold_in_burn_in: fold.burn_in,
            stopwords: None,
        }
    }
}

impl TopicsConfig {
    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            k: self.k,
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
        }
    }

    pub fn fold_in(&self) -> FoldInConfig {
        FoldInConfig {
            iterations: self.fold_in_iterations,
            burn_in: self.fold_in_burn_in,
        }
    }

    pub fn tokenizer(&self) -> Result<Tokenizer> {
        match &self.stopwords {
            Some(path) => Ok(Tokenizer::from_stopword_file(path)?),
            None => Ok(Tokenizer::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Test,
    File,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub provider: ProviderKind,
    /// Test-encoder output width; other providers report their own.
    pub dim: usize,
    /// Precomputed store for the `file` provider.
    pub path: Option<PathBuf>,
    /// Service base URL; falls back to `EMBED_ENDPOINT`.
    pub endpoint: Option<String>,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    pub retries: u32,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: ProviderKind::Test,
            dim: 16,
            path: None,
            endpoint: None,
            batch_size: 32,
            max_in_flight: 4,
            timeout_secs: 30,
            retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    pub features: Vec<FeatureSpec>,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        Self {
            features: default_schema(),
        }
    }
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Free-form comments; ignored.
    #[serde(rename = "_notes", default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<serde_json::Value>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub topics: TopicsConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub behavior: BehaviorConfig,
    #[serde(default = "RegressorSpec::defaults")]
    pub backbones: Vec<RegressorSpec>,
    #[serde(default)]
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.data.synthetic.validate()?;
        self.split.ratios().validate()?;
        self.topics.lda().validate()?;
        if self.topics.fold_in_iterations <= self.topics.fold_in_burn_in {
            return Err(PipelineError::Config(
                "fold_in_iterations must exceed fold_in_burn_in".into(),
            ));
        }
        if self.topics.min_doc_freq == 0 {
            return Err(PipelineError::Config("topics.min_doc_freq must be >= 1".into()));
        }
        let e = &self.embedding;
        if e.batch_size == 0 || e.max_in_flight == 0 || e.retries == 0 {
            return Err(PipelineError::Config(
                "embedding batch_size, max_in_flight and retries must be >= 1".into(),
            ));
        }
        if e.provider == ProviderKind::Test && e.dim < 2 {
            return Err(PipelineError::Config("test encoder dim must be >= 2".into()));
        }
        if e.provider == ProviderKind::File && e.path.is_none() {
            return Err(PipelineError::Config(
                "file embedding provider needs embedding.path".into(),
            ));
        }
        validate_schema(&self.behavior.features)?;
        if self.backbones.is_empty() {
            return Err(PipelineError::Config("at least one backbone is required".into()));
        }
        let mut names: Vec<&str> = self.backbones.iter().map(|b| b.name.as_str()).collect();
        names.sort();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::Config("backbone names must be unique".into()));
        }
        for b in &self.backbones {
            b.model.validate()?;
        }
        self.eval.validate()?;
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        self.split.seed.unwrap_or_else(|| seed::derive(self.seed, "split"))
    }

    pub fn behavior_names(&self) -> Vec<String> {
        self.behavior.features.iter().map(|f| f.name.clone()).collect()
    }
}

pub fn split(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<SplitAssignment> {
    Ok(split_ids(dataset, &cfg.split.ratios(), cfg.split_seed())?)
}

pub fn fit_vocab(cfg: &ExperimentConfig, train: &Dataset, tokenizer: &Tokenizer) -> Result<Vocabulary> {
    Ok(build_vocab(train, tokenizer, cfg.topics.min_doc_freq)?)
}

/// Token-id documents for topic fitting: one per review, or one per course
/// (in course-id order) when pooling.
pub fn topic_documents(
    train: &Dataset,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
    pool_by_course: bool,
) -> Vec<Vec<usize>> {
    let docs = train
        .iter()
        .map(|r| (r.course_id.as_str(), tokenizer.tokenize(&r.id, &r.text, vocab).tokens));
    if !pool_by_course {
        return docs.map(|(_, t)| t).filter(|t| !t.is_empty()).collect();
    }
    let mut pooled: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (course, tokens) in docs {
        pooled.entry(course).or_default().extend(tokens);
    }
    pooled.into_values().filter(|t| !t.is_empty()).collect()
}

pub fn fit_topics(
    cfg: &ExperimentConfig,
    train: &Dataset,
    vocab: &Vocabulary,
    tokenizer: &Tokenizer,
) -> Result<TopicModel> {
    let docs = topic_documents(train, vocab, tokenizer, cfg.topics.pool_by_course);
    Ok(fit_lda(&docs, vocab, &cfg.topics.lda(), seed::derive(cfg.seed, "lda"))?)
}

pub fn embedding_provider(cfg: &EmbeddingConfig, seed: u64) -> Result<Box<dyn EmbeddingProvider>> {
    Ok(match cfg.provider {
        ProviderKind::Test => Box::new(TestEncoder::new(cfg.dim, seed)),
        ProviderKind::File => {
            let path = cfg
                .path
                .as_ref()
                .ok_or_else(|| PipelineError::Config("file provider needs embedding.path".into()))?;
            Box::new(FileProvider::new(crate::embed::load_embeddings(path)?))
        }
        ProviderKind::Http => Box::new(HttpProvider::from_env_or(
            cfg.endpoint.as_deref(),
            cfg.max_in_flight,
            Duration::from_secs(cfg.timeout_secs),
        )?),
    })
}

pub fn embed_dataset(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<EmbeddingStore> {
    let provider = embedding_provider(&cfg.embedding, seed::derive(cfg.seed, "encoder"))?;
    let texts: Vec<(String, String)> = dataset.iter().map(|r| (r.id.clone(), r.text.clone())).collect();
    let policy = RetryPolicy {
        attempts: cfg.embedding.retries,
        ..RetryPolicy::default()
    };
    Ok(encode_batch(
        provider.as_ref(),
        &texts,
        cfg.embedding.batch_size,
        &policy,
    )?)
}

pub fn fit_behavior(cfg: &ExperimentConfig, train: &Dataset) -> Result<NormStats> {
    Ok(fit_norm_stats(train, &cfg.behavior.features)?)
}

/// Fitted state of every feature stage.
pub struct FittedStages {
    pub tokenizer: Tokenizer,
    pub vocab: Vocabulary,
    pub topics: TopicModel,
    pub embeddings: EmbeddingStore,
    pub norm_stats: NormStats,
}

pub fn featurize(cfg: &ExperimentConfig, dataset: &Dataset, stages: &FittedStages) -> Result<FeatureTable> {
    let sources = FeatureSources {
        topics: Some(TopicSource {
            model: &stages.topics,
            vocab: &stages.vocab,
            tokenizer: &stages.tokenizer,
            fold_in: cfg.topics.fold_in(),
            seed: seed::derive(cfg.seed, "fold-in"),
        }),
        embeddings: Some(&stages.embeddings),
        norm_stats: Some(&stages.norm_stats),
    };
    Ok(build_feature_table(dataset, &sources)?)
}

/// Everything an evaluation run needs, computed in memory.
pub struct Prepared {
    pub split: SplitAssignment,
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub stages: FittedStages,
    pub table: FeatureTable,
}

/// Runs split, vocabulary, topics, embeddings, normalization and
/// featurization on `dataset`. Fitted stages see only the training split.
pub fn prepare(cfg: &ExperimentConfig, dataset: &Dataset) -> Result<Prepared> {
    let split = split(cfg, dataset)?;
    let (train, val, test) = split.apply(dataset)?;
    let tokenizer = cfg.topics.tokenizer()?;
    let vocab = fit_vocab(cfg, &train, &tokenizer)?;
    let topics = fit_topics(cfg, &train, &vocab, &tokenizer)?;
    let embeddings = embed_dataset(cfg, dataset)?;
    let norm_stats = fit_behavior(cfg, &train)?;
    let stages = FittedStages {
        tokenizer,
        vocab,
        topics,
        embeddings,
        norm_stats,
    };
    let table = featurize(cfg, dataset, &stages)?;
    Ok(Prepared {
        split,
        train,
        val,
        test,
        stages,
        table,
    })
}

impl Prepared {
    pub fn experiment<'a>(&'a self, cfg: &'a ExperimentConfig) -> crate::eval::Experiment<'a> {
        crate::eval::Experiment::new(
            [&self.train, &self.val, &self.test],
            &self.table,
            &self.stages.tokenizer,
            &cfg.behavior.features,
            cfg.seed,
        )
    }
}
