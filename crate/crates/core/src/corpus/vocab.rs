use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CorpusError, Dataset, Result, Tokenizer};

#[derive(Serialize, Deserialize)]
struct VocabFile {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
}

/// Term ↔ index bijection with contiguous indices from 0, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    terms: Vec<String>,
    doc_freq: Vec<usize>,
    index: HashMap<String, usize>,
}

impl TryFrom<VocabFile> for Vocabulary {
    type Error = String;

    fn try_from(f: VocabFile) -> std::result::Result<Self, String> {
        if f.terms.len() != f.doc_freq.len() {
            return Err("terms and doc_freq lengths differ".into());
        }
        let index: HashMap<String, usize> = f.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != f.terms.len() {
            return Err("duplicate term in vocabulary".into());
        }
        Ok(Self {
            terms: f.terms,
            doc_freq: f.doc_freq,
            index,
        })
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            doc_freq: v.doc_freq,
        }
    }
}

impl Vocabulary {
    /// Builds a vocabulary over the given distinct terms (sorted, document
    /// frequencies set to 1). Handy for synthetic corpora.
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = terms.into_iter().map(Into::into).collect();
        let df = sorted.iter().map(|t| (t.clone(), 1)).collect();
        Self::from_doc_freq(df)
    }

    fn from_doc_freq(df: BTreeMap<String, usize>) -> Self {
        let mut terms = Vec::with_capacity(df.len());
        let mut doc_freq = Vec::with_capacity(df.len());
        let mut index = HashMap::with_capacity(df.len());
        for (i, (term, count)) in df.into_iter().enumerate() {
            index.insert(term.clone(), i);
            terms.push(term);
            doc_freq.push(count);
        }
        Self { terms, doc_freq, index }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn doc_freq(&self, index: usize) -> usize {
        self.doc_freq[index]
    }

    /// SHA-256 over the ordered term list; binds fitted models to this vocabulary.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.terms.len() as u64).to_le_bytes());
        for t in &self.terms {
            h.update((t.len() as u64).to_le_bytes());
            h.update(t.as_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Vocabulary of every term occurring in at least `min_doc_freq` distinct records.
pub fn build_vocab(dataset: &Dataset, tokenizer: &Tokenizer, min_doc_freq: usize) -> Result<Vocabulary> {
    if min_doc_freq == 0 {
        return Err(CorpusError::Config("min_doc_freq must be >= 1".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for rec in dataset.iter() {
        let distinct: BTreeSet<String> = tokenizer.terms(&rec.text).into_iter().collect();
        for term in distinct {
            *df.entry(term).or_default() += 1;
        }
    }
    df.retain(|_, c| *c >= min_doc_freq);
    if df.is_empty() {
        return Err(CorpusError::EmptyVocabulary { min_doc_freq });
    }
    Ok(Vocabulary::from_doc_freq(df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::ReviewRecord;
    use rand::{Rng, SeedableRng};

    fn record(id: &str, text: &str) -> ReviewRecord {
        ReviewRecord {
            id: id.into(),
            course_id: "c".into(),
            domain_tag: "cs".into(),
            text: text.into(),
            rating: 3.0,
            timestamp: 0,
            behavior: Default::default(),
            completion: None,
        }
    }

    #[test]
    fn shared_term_survives_min_df_two() {
        let ds = Dataset::new(vec![record("1", "python basics"), record("2", "advanced python")]);
        let v = build_vocab(&ds, &Tokenizer::default(), 2).unwrap();
        assert_eq!(v.terms(), &["python".to_string()]);
        assert_eq!(v.doc_freq(0), 2);
    }

    #[test]
    fn min_df_one_is_union() {
        let ds = Dataset::new(vec![record("1", "python basics"), record("2", "the advanced python")]);
        let v = build_vocab(&ds, &Tokenizer::default(), 1).unwrap();
        assert_eq!(v.terms(), &["advanced", "basics", "python"]);
    }

    #[test]
    fn repeated_term_counts_once_per_doc() {
        let ds = Dataset::new(vec![record("1", "python python python"), record("2", "java")]);
        assert!(matches!(
            build_vocab(&ds, &Tokenizer::default(), 2),
            Err(CorpusError::EmptyVocabulary { .. })
        ));
    }

    #[test]
    fn zero_min_df_rejected() {
        let ds = Dataset::new(vec![record("1", "python")]);
        assert!(matches!(
            build_vocab(&ds, &Tokenizer::default(), 0),
            Err(CorpusError::Config(_))
        ));
    }

    #[test]
    fn matches_brute_force_df_filter() {
        let words = [
            "alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta", "iota", "kappa",
        ];
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let docs: Vec<Vec<&str>> = (0..100)
            .map(|_| {
                (0..rng.random_range(0..6))
                    .map(|_| words[rng.random_range(0..words.len())])
                    .collect()
            })
            .collect();
        let ds: Dataset = docs
            .iter()
            .enumerate()
            .map(|(i, d)| record(&i.to_string(), &d.join(" ")))
            .collect();
        let v = build_vocab(&ds, &Tokenizer::default(), 3).unwrap();

        // brute force: count docs containing each word by linear scan
        let mut expected: Vec<&str> = words
            .iter()
            .copied()
            .filter(|w| docs.iter().filter(|d| d.contains(w)).count() >= 3)
            .collect();
        expected.sort();
        assert_eq!(v.terms(), expected.as_slice());
        for (i, t) in v.terms().iter().enumerate() {
            assert_eq!(v.doc_freq(i), docs.iter().filter(|d| d.contains(&t.as_str())).count());
            assert_eq!(v.index_of(t), Some(i));
        }
    }

    #[test]
    fn json_round_trip_rebuilds_index() {
        let v = Vocabulary::from_terms(["b", "a", "c"]);
        let s = serde_json::to_string(&v).unwrap();
        let back: Vocabulary = serde_json::from_str(&s).unwrap();
        assert_eq!(back.index_of("c"), Some(2));
        assert_eq!(back.fingerprint(), v.fingerprint());
        assert!(serde_json::from_str::<Vocabulary>(r#"{"terms":["a","a"],"doc_freq":[1,1]}"#).is_err());
    }

    #[test]
    fn fingerprint_depends_on_terms() {
        assert_ne!(
            Vocabulary::from_terms(["a", "b"]).fingerprint(),
            Vocabulary::from_terms(["a", "c"]).fingerprint()
        );
    }
}
