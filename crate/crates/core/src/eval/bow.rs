//! Sparse-text baseline: sublinear TF-IDF over the training vocabulary.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Result;
use crate::corpus::{build_vocab, Dataset, Tokenizer, Vocabulary};

/// Weights term counts as `ln(1 + tf) · (ln(N / df) + 1)`, with document
/// frequencies taken from the training split. Rows are not length-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfFeaturizer {
    pub vocab: Vocabulary,
    pub idf: Vec<f64>,
}

impl TfidfFeaturizer {
    pub fn fit(train: &Dataset, tokenizer: &Tokenizer, min_doc_freq: usize) -> Result<Self> {
        let vocab = build_vocab(train, tokenizer, min_doc_freq)?;
        let n = train.len() as f64;
        let idf = (0..vocab.len())
            .map(|i| (n / vocab.doc_freq(i) as f64).ln() + 1.0)
            .collect();
        Ok(Self { vocab, idf })
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn transform_text(&self, tokenizer: &Tokenizer, text: &str) -> Vec<f64> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for term in tokenizer.terms(text) {
            if let Some(i) = self.vocab.index_of(&term) {
                *counts.entry(i).or_default() += 1;
            }
        }
        let mut row = vec![0.0; self.dim()];
        for (i, tf) in counts {
            row[i] = (tf as f64).ln_1p() * self.idf[i];
        }
        row
    }

    /// Row-major matrix, one row per record in dataset order.
    pub fn transform(&self, tokenizer: &Tokenizer, dataset: &Dataset) -> Vec<f64> {
        dataset
            .iter()
            .flat_map(|r| self.transform_text(tokenizer, &r.text))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewRecord;

    fn doc(id: &str, text: &str) -> ReviewRecord {
        ReviewRecord {
            id: id.into(),
            course_id: "c".into(),
            domain_tag: "d".into(),
            text: text.into(),
            rating: 3.0,
            timestamp: 0,
            behavior: BTreeMap::new(),
            completion: None,
        }
    }

    #[test]
    fn hand_computed_weights() {
        let train = Dataset::new(vec![
            doc("a", "quiz quiz video"),
            doc("b", "quiz forum"),
            doc("c", "video forum"),
            doc("d", "rare"),
        ]);
        let tok = Tokenizer::default();
        let f = TfidfFeaturizer::fit(&train, &tok, 2).unwrap();
        assert_eq!(f.dim(), 3);
        let quiz = f.vocab.index_of("quiz").unwrap();
        let video = f.vocab.index_of("video").unwrap();
        let forum = f.vocab.index_of("forum").unwrap();
        let idf = (4.0f64 / 2.0).ln() + 1.0;
        let row = f.transform_text(&tok, "quiz quiz video rare unseen");
        assert!((row[quiz] - 3f64.ln() * idf).abs() < 1e-12);
        assert!((row[video] - 2f64.ln() * idf).abs() < 1e-12);
        assert_eq!(row[forum], 0.0);
        assert_eq!(f.transform(&tok, &train).len(), 4 * 3);
    }
}
