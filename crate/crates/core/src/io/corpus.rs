use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{AuditError, Result};
use crate::types::{Corpus, EmbeddingTable, TextRecord, TokenId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CorpusFormat {
    #[default]
    Jsonl,
    PlainText,
}

impl CorpusFormat {
    /// `.jsonl` and `.json` files are JSON lines, anything else plain text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => CorpusFormat::Jsonl,
            _ => CorpusFormat::PlainText,
        }
    }
}

impl std::str::FromStr for CorpusFormat {
    type Err = AuditError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "plain_text" | "text" | "txt" => Ok(CorpusFormat::PlainText),
            other => Err(AuditError::config(format!(
                "unknown corpus format {other:?}; expected jsonl or plain_text"
            ))),
        }
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: Option<u64>,
    text: Option<String>,
    tokens: Option<Vec<TokenId>>,
}

struct Parsed {
    line: usize,
    id: Option<u64>,
    text: String,
    tokens: Option<Vec<TokenId>>,
}

/// Assigns token ids to words: through the table's vocabulary when it has one,
/// otherwise from a vocabulary grown in order of first appearance.
enum Tokenizer<'a> {
    Fixed(HashMap<&'a str, TokenId>),
    Growing(HashMap<String, TokenId>, Vec<String>),
}

impl Tokenizer<'_> {
    fn tokenize(&mut self, text: &str) -> std::result::Result<Vec<TokenId>, String> {
        text.split_whitespace()
            .map(|w| match self {
                Tokenizer::Fixed(index) => index
                    .get(w)
                    .copied()
                    .ok_or_else(|| format!("word {w:?} is not in the embedding vocabulary")),
                Tokenizer::Growing(index, words) => Ok(*index.entry(w.to_string()).or_insert_with(|| {
                    words.push(w.to_string());
                    (words.len() - 1) as TokenId
                })),
            })
            .collect()
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> AuditError {
    AuditError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a corpus. When `table` is given, words are mapped through its
/// vocabulary (if any) and every token id is checked against its size.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat, table: Option<&EmbeddingTable>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| AuditError::Load {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let mut parsed = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        let raw = raw.trim_end_matches('\r');
        match format {
            CorpusFormat::PlainText => {
                if raw.trim().is_empty() {
                    return Err(malformed(path, line, "empty line"));
                }
                parsed.push(Parsed {
                    line,
                    id: None,
                    text: raw.to_string(),
                    tokens: None,
                });
            }
            CorpusFormat::Jsonl => {
                if raw.trim().is_empty() {
                    continue;
                }
                let rec: JsonRecord =
                    serde_json::from_str(raw).map_err(|e| malformed(path, line, e.to_string()))?;
                let text = rec
                    .text
                    .ok_or_else(|| malformed(path, line, "missing required field `text`"))?;
                parsed.push(Parsed {
                    line,
                    id: rec.id,
                    text,
                    tokens: rec.tokens,
                });
            }
        }
    }
    if parsed.is_empty() {
        return Err(AuditError::Load {
            path: path.to_path_buf(),
            message: "no records".to_string(),
        });
    }

    let table_index = table.and_then(EmbeddingTable::token_index);
    let needs_tokenizer = parsed.iter().any(|p| p.tokens.is_none());
    if needs_tokenizer && table_index.is_none() {
        if let Some(p) = parsed.iter().find(|p| p.tokens.is_some()) {
            return Err(malformed(
                path,
                p.line,
                "pre-tokenized records cannot be mixed with untokenized ones unless the \
                 embedding table carries a vocabulary",
            ));
        }
    }
    let mut tokenizer = match table_index {
        Some(index) => Tokenizer::Fixed(index),
        None => Tokenizer::Growing(HashMap::new(), Vec::new()),
    };

    let n = parsed.len();
    let mut slots: Vec<Option<TextRecord>> = vec![None; n];
    for (position, p) in parsed.into_iter().enumerate() {
        let id = p.id.unwrap_or(position as u64);
        if id >= n as u64 {
            return Err(malformed(
                path,
                p.line,
                format!("id {id} is outside 0..{n}; ids must be dense"),
            ));
        }
        let tokens = match p.tokens {
            Some(t) => t,
            None => tokenizer.tokenize(&p.text).map_err(|m| malformed(path, p.line, m))?,
        };
        if tokens.is_empty() {
            return Err(malformed(path, p.line, "record has no tokens"));
        }
        let slot = &mut slots[id as usize];
        if slot.is_some() {
            return Err(malformed(path, p.line, format!("duplicate id {id}")));
        }
        *slot = Some(TextRecord::new(id, tokens).with_text(p.text));
    }
    // n records with distinct ids in 0..n fill every slot.
    let records: Vec<TextRecord> = slots.into_iter().map(|s| s.expect("dense ids")).collect();

    let mut corpus = Corpus::new(records, path.display().to_string())?;
    match tokenizer {
        Tokenizer::Growing(_, words) if needs_tokenizer => corpus = corpus.with_vocab(words),
        _ => {
            if let Some(vocab) = table.and_then(EmbeddingTable::vocab) {
                corpus = corpus.with_vocab(vocab.to_vec());
            }
        }
    }
    if let Some(table) = table {
        corpus.validate_against(table)?;
    }
    Ok(corpus)
}
