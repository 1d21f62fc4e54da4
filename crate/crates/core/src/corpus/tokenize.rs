use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Result, Vocabulary};

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// A review as a sequence of vocabulary indices. May be empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub review_id: String,
    pub tokens: Vec<usize>,
}

impl TokenizedDoc {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Lowercasing tokenizer that splits on anything that is not alphanumeric,
/// drops digit-only tokens and removes stopwords.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    stopwords: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self::with_stopwords(parse_stopwords(DEFAULT_STOPWORDS))
    }
}

fn parse_stopwords(contents: &str) -> impl Iterator<Item = String> + '_ {
    contents
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
}

impl Tokenizer {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            stopwords: words.into_iter().map(Into::into).collect(),
        }
    }

    /// Loads a stopword file in the shipped format (one word per line, `#` comments).
    pub fn from_stopword_file(path: &Path) -> Result<Self> {
        let contents = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::with_stopwords(parse_stopwords(&contents)))
    }

    pub fn is_stopword(&self, term: &str) -> bool {
        self.stopwords.contains(term)
    }

    /// Surface terms of `text`, in order.
    pub fn terms(&self, text: &str) -> Vec<String> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty() && !t.chars().all(char::is_numeric))
            .filter(|t| !self.stopwords.contains(*t))
            .map(str::to_string)
            .collect()
    }

    /// Tokenizes against an existing vocabulary; out-of-vocabulary terms are dropped.
    pub fn tokenize(&self, review_id: &str, text: &str, vocab: &Vocabulary) -> TokenizedDoc {
        TokenizedDoc {
            review_id: review_id.to_string(),
            tokens: self.terms(text).iter().filter_map(|t| vocab.index_of(t)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn punctuation_and_case() {
        let tok = Tokenizer::default();
        assert_eq!(tok.terms("Great course!"), vec!["great", "course"]);
    }

    #[test]
    fn empty_text() {
        assert!(Tokenizer::default().terms("").is_empty());
    }

    #[test]
    fn stopwords_removed_case_insensitively() {
        assert!(Tokenizer::default().terms("The THE the").is_empty());
    }

    #[test]
    fn digits_only_tokens_stripped() {
        let tok = Tokenizer::with_stopwords(Vec::<String>::new());
        assert_eq!(
            tok.terms("top 10 python3 course 2024"),
            vec!["top", "python3", "course"]
        );
    }

    #[test]
    fn unicode_split() {
        let tok = Tokenizer::with_stopwords(Vec::<String>::new());
        assert_eq!(tok.terms("Très—BIEN…cours"), vec!["très", "bien", "cours"]);
    }

    #[test]
    fn lookup_drops_unknown_and_is_idempotent() {
        let tok = Tokenizer::default();
        let vocab = Vocabulary::from_terms(["course", "great"]);
        let doc = tok.tokenize("r1", "Great course, great instructor", &vocab);
        assert_eq!(doc.tokens, vec![1, 0, 1]);
        let again = tok.tokenize("r1", "Great course, great instructor", &vocab);
        assert_eq!(doc, again);
    }

    #[test]
    fn custom_stopword_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stop.txt");
        std::fs::write(&p, "# custom\ncourse\n").unwrap();
        let tok = Tokenizer::from_stopword_file(&p).unwrap();
        assert_eq!(tok.terms("the course"), vec!["the"]);
    }
}
