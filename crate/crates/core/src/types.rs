//! Corpus records and embedding tables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

pub type TokenId = u32;

/// A single text, as token ids plus optional display text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextRecord {
    pub id: u64,
    pub tokens: Vec<TokenId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

impl TextRecord {
    /// Id carried by mechanism outputs that are not themselves corpus records.
    pub const DETACHED: u64 = u64::MAX;

    pub fn new(id: u64, tokens: Vec<TokenId>) -> Self {
        Self {
            id,
            tokens,
            raw_text: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.raw_text = Some(text.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// An ordered collection of records whose ids are exactly `0..len`.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    records: Vec<TextRecord>,
    source_path: String,
    vocab: Option<Vec<String>>,
}

impl Corpus {
    /// Builds a corpus, checking that ids are dense and every record is non-empty.
    pub fn new(records: Vec<TextRecord>, source_path: impl Into<String>) -> Result<Self> {
        if records.is_empty() {
            return Err(AuditError::config("corpus is empty"));
        }
        for (i, r) in records.iter().enumerate() {
            if r.id != i as u64 {
                return Err(AuditError::config(format!(
                    "record at position {i} has id {}; ids must be dense and ordered",
                    r.id
                )));
            }
            if r.tokens.is_empty() {
                return Err(AuditError::config(format!("record {i} has no tokens")));
            }
        }
        Ok(Self {
            records,
            source_path: source_path.into(),
            vocab: None,
        })
    }

    /// Attaches token strings, indexed by token id, used to render outputs as text.
    pub fn with_vocab(mut self, vocab: Vec<String>) -> Self {
        self.vocab = Some(vocab);
        self
    }

    pub fn records(&self) -> &[TextRecord] {
        &self.records
    }

    pub fn record(&self, id: usize) -> &TextRecord {
        &self.records[id]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn source_path(&self) -> &str {
        &self.source_path
    }

    pub fn vocab(&self) -> Option<&[String]> {
        self.vocab.as_deref()
    }

    pub fn max_token_id(&self) -> TokenId {
        self.records
            .iter()
            .flat_map(|r| r.tokens.iter().copied())
            .max()
            .unwrap_or(0)
    }

    /// Fails if any token id falls outside `table`.
    pub fn validate_against(&self, table: &EmbeddingTable) -> Result<()> {
        let max = self.max_token_id() as usize;
        if max >= table.vocab_size() {
            return Err(AuditError::config(format!(
                "corpus uses token id {max} but the embedding table has only {} rows",
                table.vocab_size()
            )));
        }
        Ok(())
    }

    /// Display text for a record: its raw text, else its tokens rendered through
    /// the attached vocabulary.
    pub fn render(&self, record: &TextRecord) -> Option<String> {
        if let Some(text) = &record.raw_text {
            return Some(text.clone());
        }
        let vocab = self.vocab.as_ref()?;
        let words: Option<Vec<&str>> = record
            .tokens
            .iter()
            .map(|&t| vocab.get(t as usize).map(String::as_str))
            .collect();
        words.map(|w| w.join(" "))
    }
}

/// Fixed-dimension vectors indexed by token id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: Vec<f64>,
    vocab: Option<Vec<String>>,
}

impl EmbeddingTable {
    /// `vectors` is row-major with `dim` entries per token.
    pub fn new(dim: usize, vectors: Vec<f64>, vocab: Option<Vec<String>>) -> Result<Self> {
        if dim < 2 {
            return Err(AuditError::config(format!(
                "embedding dimension must be at least 2, got {dim}"
            )));
        }
        if vectors.is_empty() || !vectors.len().is_multiple_of(dim) {
            return Err(AuditError::config(format!(
                "embedding payload of {} values is not a positive multiple of dim {dim}",
                vectors.len()
            )));
        }
        if let Some(pos) = vectors.iter().position(|v| !v.is_finite()) {
            return Err(AuditError::config(format!(
                "non-finite embedding value in row {}",
                pos / dim
            )));
        }
        if let Some(v) = &vocab {
            if v.len() != vectors.len() / dim {
                return Err(AuditError::config(format!(
                    "vocabulary has {} entries for {} rows",
                    v.len(),
                    vectors.len() / dim
                )));
            }
        }
        Ok(Self { dim, vectors, vocab })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn vocab(&self) -> Option<&[String]> {
        self.vocab.as_deref()
    }

    pub fn vector(&self, token: TokenId) -> &[f64] {
        let start = token as usize * self.dim;
        &self.vectors[start..start + self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.vectors
    }

    /// Token string to id, when the table carries a vocabulary.
    pub fn token_index(&self) -> Option<HashMap<&str, TokenId>> {
        self.vocab.as_ref().map(|v| {
            v.iter()
                .enumerate()
                .map(|(i, s)| (s.as_str(), i as TokenId))
                .collect()
        })
    }

    /// Mean of the token vectors; the zero vector for an empty sequence.
    pub fn sentence_embedding(&self, tokens: &[TokenId]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        if tokens.is_empty() {
            return acc;
        }
        for &t in tokens {
            for (a, v) in acc.iter_mut().zip(self.vector(t)) {
                *a += v;
            }
        }
        let n = tokens.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }

    /// Same table with every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.dim,
            self.vectors.iter().map(|v| v * factor).collect(),
            self.vocab.clone(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, tokens: &[TokenId]) -> TextRecord {
        TextRecord::new(id, tokens.to_vec())
    }

    #[test]
    fn corpus_rejects_sparse_ids_and_empty_records() {
        assert!(Corpus::new(vec![], "x").is_err());
        assert!(Corpus::new(vec![rec(1, &[0])], "x").is_err());
        assert!(Corpus::new(vec![rec(0, &[])], "x").is_err());
        assert!(Corpus::new(vec![rec(0, &[0]), rec(1, &[1])], "x").is_ok());
    }

    #[test]
    fn table_validation() {
        assert!(EmbeddingTable::new(1, vec![1.0, 2.0], None).is_err());
        assert!(EmbeddingTable::new(2, vec![1.0, 2.0, 3.0], None).is_err());
        assert!(EmbeddingTable::new(2, vec![1.0, f64::NAN], None).is_err());
        assert!(EmbeddingTable::new(2, vec![1.0, 2.0], Some(vec![])).is_err());
    }

    #[test]
    fn corpus_token_range_is_checked() {
        let table = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap();
        let ok = Corpus::new(vec![rec(0, &[0, 1])], "x").unwrap();
        assert!(ok.validate_against(&table).is_ok());
        let bad = Corpus::new(vec![rec(0, &[2])], "x").unwrap();
        assert!(bad.validate_against(&table).is_err());
    }

    #[test]
    fn sentence_embedding_is_mean() {
        let table = EmbeddingTable::new(2, vec![1.0, 0.0, 0.0, 1.0], None).unwrap();
        assert_eq!(table.sentence_embedding(&[0, 1]), vec![0.5, 0.5]);
        assert_eq!(table.sentence_embedding(&[]), vec![0.0, 0.0]);
    }

    #[test]
    fn render_uses_vocab() {
        let corpus = Corpus::new(vec![rec(0, &[1, 0])], "x")
            .unwrap()
            .with_vocab(vec!["a".into(), "b".into()]);
        assert_eq!(corpus.render(&rec(9, &[1, 0])).as_deref(), Some("b a"));
        assert_eq!(corpus.render(&rec(9, &[5])), None);
    }
}
