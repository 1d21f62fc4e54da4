//! Output-directory layout. Each stage writes fixed file names; later stages
//! find them here and name the producing command when one is missing.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "config.resolved.json";
pub const REVIEWS: &str = "reviews.jsonl";
pub const LATENTS: &str = "latents.json";
pub const REJECTS: &str = "rejects.jsonl";
pub const SPLIT: &str = "split.json";
pub const VOCAB: &str = "vocab.json";
pub const TOPICS: &str = "topics.json";
pub const EMBEDDINGS: &str = "embeddings.emb";
pub const NORM_STATS: &str = "norm_stats.json";
pub const FEATURES: &str = "features.json";
pub const DESIGN_CSV: &str = "design_full.csv";
pub const MODELS_DIR: &str = "models";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const BENCHMARK: &str = "benchmark";
pub const ABLATION: &str = "ablation";
pub const REPORT: &str = "report.txt";

/// The command that writes each artifact.
pub fn producer(artifact: &str) -> &'static str {
    match artifact {
        REVIEWS => "synth` or `ingest",
        SPLIT => "split",
        VOCAB | TOPICS => "fit-topics",
        EMBEDDINGS => "embed",
        NORM_STATS | FEATURES => "featurize",
        TRAIN_SUMMARY => "train",
        BENCHMARK => "benchmark",
        ABLATION => "ablate",
        _ => "an earlier stage",
    }
}

pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn create(root: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn has(&self, name: &str) -> bool {
        self.path(name).exists()
    }

    /// Path of an upstream artifact, or an error naming its producer.
    pub fn require(&self, name: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if path.exists() {
            Ok(path)
        } else {
            Err(CliError::Missing {
                artifact: path.display().to_string(),
                producer: producer(name),
            })
        }
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value).expect("artifact serializes");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str) -> Result<T, CliError> {
        let path = self.require(name)?;
        read_json_file(&path)
    }
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}
