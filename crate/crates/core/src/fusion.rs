//! Fused per-review vectors `[θ; h; b]` and the design matrices built from
//! them.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{normalize, BehaviorVector, NormStats};
use crate::corpus::{Dataset, Tokenizer, Vocabulary};
use crate::embed::{Embedding, EmbeddingStore};
use crate::seed;
use crate::topics::{FoldInConfig, TopicDistribution, TopicError, TopicModel};

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("segment '{0}' is required by the mask but absent")]
    MissingSegment(Segment),
    #[error("{dropped} of {total} rows dropped (limit {limit:.0}%); first: {first}")]
    TooManyDropped {
        dropped: usize,
        total: usize,
        limit: f64,
        first: String,
    },
    #[error("empty ablation mask")]
    EmptyMask,
    #[error("unknown mask '{0}'")]
    UnknownMask(String),
    #[error("{segment} dimension {found} differs from {expected}")]
    Dimension {
        segment: Segment,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in row {0}")]
    NonFinite(String),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Topic,
    Sentiment,
    Behavior,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Topic, Segment::Sentiment, Segment::Behavior];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Topic => "topic",
            Segment::Sentiment => "sentiment",
            Segment::Behavior => "behavior",
        }
    }
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Non-empty subset of segments included in a design matrix.
///
/// Textual forms: `full`, `-topic` (full minus one segment), or segment names
/// joined by `+` such as `topic+behavior`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Mask(BTreeSet<Segment>);

impl Mask {
    pub fn new(segments: impl IntoIterator<Item = Segment>) -> Result<Self> {
        let set: BTreeSet<_> = segments.into_iter().collect();
        if set.is_empty() {
            return Err(FusionError::EmptyMask);
        }
        Ok(Self(set))
    }

    pub fn full() -> Self {
        Self(Segment::ALL.into_iter().collect())
    }

    pub fn only(segment: Segment) -> Self {
        Self([segment].into_iter().collect())
    }

    pub fn without(segment: Segment) -> Self {
        Self(Segment::ALL.into_iter().filter(|&s| s != segment).collect())
    }

    pub fn contains(&self, segment: Segment) -> bool {
        self.0.contains(&segment)
    }

    pub fn is_full(&self) -> bool {
        self.0.len() == Segment::ALL.len()
    }

    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_full() {
            return f.write_str("full");
        }
        if self.0.len() == Segment::ALL.len() - 1 {
            let gone = Segment::ALL.into_iter().find(|s| !self.contains(*s)).unwrap();
            return write!(f, "-{gone}");
        }
        let names: Vec<&str> = self.segments().map(Segment::as_str).collect();
        f.write_str(&names.join("+"))
    }
}

impl FromStr for Mask {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        let parse_segment = |name: &str| {
            Segment::ALL
                .into_iter()
                .find(|seg| seg.as_str() == name)
                .ok_or_else(|| FusionError::UnknownMask(s.to_string()))
        };
        let s = s.trim();
        if s == "full" {
            return Ok(Self::full());
        }
        if let Some(rest) = s.strip_prefix('-') {
            return Ok(Self::without(parse_segment(rest)?));
        }
        Self::new(
            s.split('+')
                .map(|p| parse_segment(p.trim()))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

impl Serialize for Mask {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Mask {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedVector {
    pub z: Vec<f64>,
    pub topic: Option<Range<usize>>,
    pub sentiment: Option<Range<usize>>,
    pub behavior: Option<Range<usize>>,
}

impl FusedVector {
    pub fn range(&self, segment: Segment) -> Option<Range<usize>> {
        match segment {
            Segment::Topic => self.topic.clone(),
            Segment::Sentiment => self.sentiment.clone(),
            Segment::Behavior => self.behavior.clone(),
        }
    }

    pub fn segment(&self, segment: Segment) -> Option<&[f64]> {
        self.range(segment).map(|r| &self.z[r])
    }
}

/// Concatenates the unmasked inputs in the order θ, h, b.
pub fn fuse(
    theta: Option<&TopicDistribution>,
    h: Option<&Embedding>,
    b: Option<&BehaviorVector>,
    mask: &Mask,
) -> Result<FusedVector> {
    let mut z = Vec::new();
    let mut push = |segment: Segment, values: Option<Vec<f64>>| -> Result<Option<Range<usize>>> {
        if !mask.contains(segment) {
            return Ok(None);
        }
        let values = values.ok_or(FusionError::MissingSegment(segment))?;
        let start = z.len();
        z.extend(values);
        Ok(Some(start..z.len()))
    };
    let topic = push(Segment::Topic, theta.map(|t| t.theta.clone()))?;
    let sentiment = push(
        Segment::Sentiment,
        h.map(|e| e.vector.iter().map(|&x| x as f64).collect()),
    )?;
    let behavior = push(Segment::Behavior, b.map(|b| b.values.clone()))?;
    Ok(FusedVector {
        z,
        topic,
        sentiment,
        behavior,
    })
}

/// Stacked fused vectors with targets, rows sorted by review id.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    /// n × p, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ids: Vec<String>,
    pub p: usize,
    pub mask: Mask,
    pub columns: Vec<String>,
}

impl DesignMatrix {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |e: csv::Error| FusionError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(io)?;
        let mut header = vec!["id".to_string(), "rating".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for i in 0..self.n() {
            let mut rec = vec![self.ids[i].clone(), self.y[i].to_string()];
            rec.extend(self.row(i).iter().map(f64::to_string));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| FusionError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Per-review feature sources computed once and shared across masks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub rating: f64,
    pub theta: Option<Vec<f64>>,
    pub embedding: Option<Vec<f32>>,
    pub behavior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub k: usize,
    pub embedding_dim: usize,
    pub behavior_columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

/// Rows excluded while assembling a matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DropReport {
    pub dropped: Vec<(String, String)>,
}

pub struct TopicSource<'a> {
    pub model: &'a TopicModel,
    pub vocab: &'a Vocabulary,
    pub tokenizer: &'a Tokenizer,
    pub fold_in: FoldInConfig,
    pub seed: u64,
}

#[derive(Default)]
pub struct FeatureSources<'a> {
    pub topics: Option<TopicSource<'a>>,
    pub embeddings: Option<&'a EmbeddingStore>,
    pub norm_stats: Option<&'a NormStats>,
}

/// Resolves every available segment for every record. θ for a review is
/// seeded from its id, so the result does not depend on record order.
pub fn build_feature_table(dataset: &Dataset, sources: &FeatureSources) -> Result<FeatureTable> {
    if let Some(t) = &sources.topics {
        t.model.check_vocab(t.vocab)?;
    }
    let mut rows = Vec::with_capacity(dataset.len());
    for r in dataset.iter() {
        let theta = match &sources.topics {
            Some(t) => {
                let doc = t.tokenizer.tokenize(&r.id, &r.text, t.vocab);
                Some(
                    t.model
                        .infer(&doc.tokens, &t.fold_in, seed::derive(t.seed, &r.id))?
                        .theta,
                )
            }
            None => None,
        };
        let embedding = sources.embeddings.and_then(|s| s.get(&r.id)).map(|e| e.vector.clone());
        let behavior = sources.norm_stats.map(|s| normalize(r, s).values);
        rows.push(FeatureRow {
            id: r.id.clone(),
            rating: r.rating,
            theta,
            embedding,
            behavior,
        });
    }
    rows.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(FeatureTable {
        k: sources.topics.as_ref().map_or(0, |t| t.model.k),
        embedding_dim: sources.embeddings.map_or(0, EmbeddingStore::dim),
        behavior_columns: sources.norm_stats.map(NormStats::column_names).unwrap_or_default(),
        rows,
    })
}

impl FeatureTable {
    pub fn columns(&self, mask: &Mask) -> Vec<String> {
        let mut cols = Vec::new();
        if mask.contains(Segment::Topic) {
            cols.extend((0..self.k).map(|k| format!("topic.{k}")));
        }
        if mask.contains(Segment::Sentiment) {
            cols.extend((0..self.embedding_dim).map(|j| format!("sentiment.{j}")));
        }
        if mask.contains(Segment::Behavior) {
            cols.extend(self.behavior_columns.iter().map(|c| format!("behavior.{c}")));
        }
        cols
    }

    pub fn width(&self, mask: &Mask) -> usize {
        let mut p = 0;
        if mask.contains(Segment::Topic) {
            p += self.k;
        }
        if mask.contains(Segment::Sentiment) {
            p += self.embedding_dim;
        }
        if mask.contains(Segment::Behavior) {
            p += self.behavior_columns.len();
        }
        p
    }

    /// Keeps only rows whose id is in `ids`.
    pub fn subset<'a>(&self, ids: impl IntoIterator<Item = &'a String>) -> FeatureTable {
        let keep: BTreeSet<&String> = ids.into_iter().collect();
        FeatureTable {
            rows: self.rows.iter().filter(|r| keep.contains(&r.id)).cloned().collect(),
            behavior_columns: self.behavior_columns.clone(),
            ..*self
        }
    }

    /// Builds the design matrix for `mask`, dropping rows with a missing
    /// unmasked segment. More than `max_drop_fraction` dropped is fatal.
    pub fn design(&self, mask: &Mask, max_drop_fraction: f64) -> Result<(DesignMatrix, DropReport)> {
        let p = self.width(mask);
        let mut x = Vec::with_capacity(self.rows.len() * p);
        let (mut y, mut ids) = (Vec::new(), Vec::new());
        let mut report = DropReport::default();
        let expected = [
            (Segment::Topic, self.k),
            (Segment::Sentiment, self.embedding_dim),
            (Segment::Behavior, self.behavior_columns.len()),
        ];
        for row in &self.rows {
            let theta = row.theta.clone().map(|theta| TopicDistribution { theta });
            let h = row.embedding.clone().map(Embedding::new);
            let b = row.behavior.clone().map(|values| BehaviorVector { values });
            let fused = match fuse(theta.as_ref(), h.as_ref(), b.as_ref(), mask) {
                Ok(f) => f,
                Err(e) => {
                    report.dropped.push((row.id.clone(), e.to_string()));
                    continue;
                }
            };
            for (segment, dim) in expected {
                if let Some(r) = fused.range(segment) {
                    if r.len() != dim {
                        return Err(FusionError::Dimension {
                            segment,
                            expected: dim,
                            found: r.len(),
                        });
                    }
                }
            }
            if fused.z.iter().any(|v| !v.is_finite()) {
                return Err(FusionError::NonFinite(row.id.clone()));
            }
            x.extend(fused.z);
            y.push(row.rating);
            ids.push(row.id.clone());
        }
        let total = self.rows.len();
        let dropped = report.dropped.len();
        if total > 0 && dropped as f64 > max_drop_fraction * total as f64 {
            return Err(FusionError::TooManyDropped {
                dropped,
                total,
                limit: max_drop_fraction * 100.0,
                first: report.dropped[0].0.clone(),
            });
        }
        for (id, reason) in &report.dropped {
            log::warn!("dropping row {id}: {reason}");
        }
        Ok((
            DesignMatrix {
                x,
                y,
                ids,
                p,
                mask: mask.clone(),
                columns: self.columns(mask),
            },
            report,
        ))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |message: String| FusionError::Io {
            path: path.display().to_string(),
            message,
        };
        let json = serde_json::to_vec(self).map_err(|e| io(e.to_string()))?;
        std::fs::write(path, json).map_err(|e| io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let io = |message: String| FusionError::Io {
            path: path.display().to_string(),
            message,
        };
        let bytes = std::fs::read(path).map_err(|e| io(e.to_string()))?;
        serde_json::from_slice(&bytes).map_err(|e| io(e.to_string()))
    }
}

pub const DEFAULT_MAX_DROP_FRACTION: f64 = 0.10;

/// One-shot assembly: resolves all sources and builds the matrix for `mask`.
pub fn assemble_matrix(
    dataset: &Dataset,
    sources: &FeatureSources,
    mask: &Mask,
    max_drop_fraction: f64,
) -> Result<(DesignMatrix, DropReport)> {
    build_feature_table(dataset, sources)?.design(mask, max_drop_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn theta(k: usize) -> TopicDistribution {
        TopicDistribution::uniform(k)
    }

    #[test]
    fn full_mask_offsets() {
        let h = Embedding::new((0..8).map(|i| i as f32).collect());
        let b = BehaviorVector { values: vec![0.5; 13] };
        let f = fuse(Some(&theta(6)), Some(&h), Some(&b), &Mask::full()).unwrap();
        assert_eq!(f.z.len(), 27);
        assert_eq!(f.topic, Some(0..6));
        assert_eq!(f.sentiment, Some(6..14));
        assert_eq!(f.behavior, Some(14..27));
    }

    #[test]
    fn single_segment_is_identity() {
        let h = Embedding::new(vec![0.25, -1.5, 3.0]);
        let f = fuse(None, Some(&h), None, &Mask::only(Segment::Sentiment)).unwrap();
        assert_eq!(f.z, vec![0.25, -1.5, 3.0]);
        assert_eq!(f.topic, None);
    }

    #[test]
    fn missing_unmasked_segment_errors() {
        let err = fuse(Some(&theta(2)), None, None, &Mask::full()).unwrap_err();
        assert!(matches!(err, FusionError::MissingSegment(Segment::Sentiment)));
        assert!(fuse(Some(&theta(2)), None, None, &Mask::only(Segment::Topic)).is_ok());
    }

    #[test]
    fn mask_text_forms() {
        for (s, m) in [
            ("full", Mask::full()),
            ("-topic", Mask::without(Segment::Topic)),
            ("sentiment", Mask::only(Segment::Sentiment)),
        ] {
            assert_eq!(s.parse::<Mask>().unwrap(), m);
            assert_eq!(m.to_string(), s);
        }
        let tb: Mask = "behavior+topic".parse().unwrap();
        assert_eq!(tb, Mask::without(Segment::Sentiment));
        assert!("-mood".parse::<Mask>().is_err());
        assert_eq!(serde_json::to_string(&Mask::full()).unwrap(), "\"full\"");
    }

    fn table(n: usize, missing_embedding: &[usize]) -> FeatureTable {
        FeatureTable {
            k: 2,
            embedding_dim: 3,
            behavior_columns: vec!["a".into(), "a.missing".into()],
            rows: (0..n)
                .map(|i| FeatureRow {
                    id: format!("r{i:03}"),
                    rating: 1.0 + (i % 5) as f64,
                    theta: Some(vec![0.25, 0.75]),
                    embedding: (!missing_embedding.contains(&i)).then(|| vec![i as f32, 0.0, -1.0]),
                    behavior: Some(vec![i as f64, 0.0]),
                })
                .collect(),
        }
    }

    #[test]
    fn design_widths_follow_mask() {
        let t = table(10, &[]);
        let (full, _) = t.design(&Mask::full(), 0.1).unwrap();
        assert_eq!((full.n(), full.p), (10, 7));
        assert_eq!(full.row(4), &[0.25, 0.75, 4.0, 0.0, -1.0, 4.0, 0.0]);
        let (nb, _) = t.design(&Mask::without(Segment::Behavior), 0.1).unwrap();
        assert_eq!(nb.p, 5);
        assert_eq!(nb.columns[2], "sentiment.0");
    }

    #[test]
    fn drop_threshold() {
        let t = table(20, &[3, 7]);
        let (m, report) = t.design(&Mask::full(), 0.1).unwrap();
        assert_eq!(m.n(), 18);
        assert_eq!(report.dropped.len(), 2);
        // embeddings are not needed when sentiment is masked out
        assert_eq!(t.design(&Mask::only(Segment::Topic), 0.1).unwrap().0.n(), 20);
        let t = table(20, &[1, 2, 3]);
        assert!(matches!(
            t.design(&Mask::full(), 0.1),
            Err(FusionError::TooManyDropped { dropped: 3, .. })
        ));
    }

    #[test]
    fn csv_export_has_segment_headers() {
        let t = table(3, &[]);
        let (m, _) = t.design(&Mask::full(), 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        m.write_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "id,rating,topic.0,topic.1,sentiment.0,sentiment.1,sentiment.2,behavior.a,behavior.a.missing"
        );
        assert_eq!(text.lines().count(), 4);
    }

    proptest! {
        #[test]
        fn fuse_then_slice_is_lossless(
            t in proptest::collection::vec(0.0f64..1.0, 1..8),
            h in proptest::collection::vec(-10.0f32..10.0, 1..20),
            b in proptest::collection::vec(-5.0f64..5.0, 1..15),
            bits in 1u8..8,
        ) {
            let mask = Mask::new(Segment::ALL.into_iter().enumerate().filter(|(i, _)| bits & (1 << i) != 0).map(|(_, s)| s)).unwrap();
            let theta = TopicDistribution { theta: t.clone() };
            let emb = Embedding::new(h.clone());
            let bv = BehaviorVector { values: b.clone() };
            let f = fuse(Some(&theta), Some(&emb), Some(&bv), &mask).unwrap();
            let expected_len = t.len() * mask.contains(Segment::Topic) as usize
                + h.len() * mask.contains(Segment::Sentiment) as usize
                + b.len() * mask.contains(Segment::Behavior) as usize;
            prop_assert_eq!(f.z.len(), expected_len);
            if let Some(s) = f.segment(Segment::Topic) { prop_assert_eq!(s, &t[..]); }
            if let Some(s) = f.segment(Segment::Sentiment) {
                let back: Vec<f32> = s.iter().map(|&x| x as f32).collect();
                prop_assert_eq!(back, h.clone());
            }
            if let Some(s) = f.segment(Segment::Behavior) { prop_assert_eq!(s, &b[..]); }
        }
    }
}
