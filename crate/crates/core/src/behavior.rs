//! Behavioral feature vectors: temporal pooling of event logs, per-feature
//! normalization fitted on training records, and explicit missingness.
//!
//! A [`BehaviorVector`] has `2·K_b + 3` slots: the `K_b` normalized features,
//! then `K_b` missingness indicators, then a one-hot over completion status
//! (all zero when the status is unknown).

use std::path::Path;

use chrono::{DateTime, Datelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BehaviorRaw, Completion, Dataset, ReviewRecord};

#[derive(Debug, Error)]
pub enum BehaviorError {
    #[error("feature '{0}' has no non-missing training values")]
    NoTrainingValues(String),
    #[error("invalid behavior configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid norm stats file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, BehaviorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    Zscore,
    Minmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pooling {
    /// Mean of per-ISO-week means.
    WeeklyMean,
    /// Weighted mean with weights `exp(-λ · age_days)`.
    ExpDecay { lambda: f64 },
}

impl Default for Pooling {
    fn default() -> Self {
        Pooling::ExpDecay { lambda: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub name: String,
    pub scheme: NormScheme,
    #[serde(default)]
    pub pooling: Pooling,
}

impl FeatureSpec {
    pub fn new(name: &str, scheme: NormScheme) -> Self {
        Self {
            name: name.to_string(),
            scheme,
            pooling: Pooling::default(),
        }
    }
}

/// Default schema: durations and counts are z-scored, the watched fraction is
/// a bounded ratio and gets min-max.
pub fn default_schema() -> Vec<FeatureSpec> {
    vec![
        FeatureSpec::new("watch_time", NormScheme::Zscore),
        FeatureSpec::new("watch_fraction", NormScheme::Minmax),
        FeatureSpec::new("quiz_attempts", NormScheme::Zscore),
        FeatureSpec::new("forum_posts", NormScheme::Zscore),
        FeatureSpec::new("revisit_count", NormScheme::Zscore),
    ]
}

pub fn validate_schema(schema: &[FeatureSpec]) -> Result<()> {
    let mut names: Vec<&str> = schema.iter().map(|f| f.name.as_str()).collect();
    names.sort_unstable();
    if names.windows(2).any(|w| w[0] == w[1]) {
        return Err(BehaviorError::Config("duplicate feature name".into()));
    }
    for f in schema {
        if let Pooling::ExpDecay { lambda } = f.pooling {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(BehaviorError::Config(format!("{}: decay rate must be >= 0", f.name)));
            }
        }
    }
    Ok(())
}

const SECONDS_PER_DAY: f64 = 86_400.0;

/// Pools an event log into one value; `None` for an empty log.
pub fn pool_temporal(events: &[(i64, f64)], pooling: Pooling, now: i64) -> Option<f64> {
    if events.is_empty() {
        return None;
    }
    match pooling {
        Pooling::WeeklyMean => {
            let mut weeks: std::collections::BTreeMap<(i32, u32), (f64, usize)> = Default::default();
            for &(ts, v) in events {
                let week = DateTime::from_timestamp(ts, 0)
                    .map(|d| d.iso_week())
                    .map(|w| (w.year(), w.week()))
                    .unwrap_or((i32::MIN, 0));
                let e = weeks.entry(week).or_default();
                e.0 += v;
                e.1 += 1;
            }
            let n = weeks.len() as f64;
            Some(weeks.values().map(|(s, c)| s / *c as f64).sum::<f64>() / n)
        }
        Pooling::ExpDecay { lambda } => {
            let ages: Vec<f64> = events
                .iter()
                .map(|&(ts, _)| ((now - ts) as f64 / SECONDS_PER_DAY).max(0.0))
                .collect();
            // shifting by the youngest age leaves the ratio unchanged and keeps
            // at least one weight at 1 for very large rates
            let youngest = ages.iter().copied().fold(f64::INFINITY, f64::min);
            let (mut num, mut den) = (0.0, 0.0);
            for (&(_, v), age) in events.iter().zip(&ages) {
                let w = (-lambda * (age - youngest)).exp();
                num += w * v;
                den += w;
            }
            Some(num / den)
        }
    }
}

/// Scalar value of one feature for a record, pooling event logs at the
/// record's own timestamp.
pub fn raw_value(record: &ReviewRecord, spec: &FeatureSpec) -> Option<f64> {
    match record.behavior_value(&spec.name)? {
        BehaviorRaw::Scalar(v) => Some(*v),
        BehaviorRaw::Events(ev) => pool_temporal(ev, spec.pooling, record.timestamp),
    }
}

/// Population statistics of one feature over its non-missing training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub feature: FeatureSpec,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl FeatureStats {
    fn from_values(feature: FeatureSpec, values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            feature,
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            count: values.len(),
        }
    }

    /// Normalized value; degenerate statistics map to 0.
    pub fn apply(&self, raw: f64) -> f64 {
        match self.feature.scheme {
            NormScheme::Zscore => {
                if self.std > 0.0 {
                    (raw - self.mean) / self.std
                } else {
                    0.0
                }
            }
            NormScheme::Minmax => {
                let range = self.max - self.min;
                if range > 0.0 {
                    ((raw - self.min) / range).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: Vec<FeatureStats>,
}

impl NormStats {
    pub fn k_b(&self) -> usize {
        self.features.len()
    }

    /// Length of the vectors produced by [`normalize`].
    pub fn vector_dim(&self) -> usize {
        behavior_dim(self.k_b())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.features.iter().map(|f| f.feature.name.clone()).collect();
        names.extend(self.features.iter().map(|f| format!("{}.missing", f.feature.name)));
        names.extend(Completion::ALL.iter().map(|c| format!("completion.{}", c.as_str())));
        names
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| BehaviorError::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(|source| BehaviorError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| BehaviorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        serde_json::from_slice(&bytes).map_err(|e| BehaviorError::Format(e.to_string()))
    }
}

pub fn behavior_dim(k_b: usize) -> usize {
    2 * k_b + Completion::ALL.len()
}

/// Fits normalization statistics from training records only.
pub fn fit_norm_stats(train: &Dataset, schema: &[FeatureSpec]) -> Result<NormStats> {
    validate_schema(schema)?;
    let features = schema
        .iter()
        .map(|spec| {
            let values: Vec<f64> = train.iter().filter_map(|r| raw_value(r, spec)).collect();
            if values.is_empty() {
                return Err(BehaviorError::NoTrainingValues(spec.name.clone()));
            }
            Ok(FeatureStats::from_values(spec.clone(), &values))
        })
        .collect::<Result<_>>()?;
    Ok(NormStats { features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorVector {
    pub values: Vec<f64>,
}

impl BehaviorVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn normalize(record: &ReviewRecord, stats: &NormStats) -> BehaviorVector {
    let k_b = stats.k_b();
    let mut values = vec![0.0; stats.vector_dim()];
    for (k, fs) in stats.features.iter().enumerate() {
        match raw_value(record, &fs.feature) {
            Some(raw) => values[k] = fs.apply(raw),
            None => values[k_b + k] = 1.0,
        }
    }
    if let Some(c) = record.completion {
        let slot = Completion::ALL.iter().position(|&x| x == c).unwrap();
        values[2 * k_b + slot] = 1.0;
    }
    BehaviorVector { values }
}
