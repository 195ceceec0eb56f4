use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{AuditError, Result};
use crate::types::EmbeddingTable;

pub const EMBEDDING_MAGIC: &[u8; 8] = b"TEDAEMB1";
const HEADER_LEN: usize = 8 + 8 + 8;

fn load_error(path: &Path, message: impl Into<String>) -> AuditError {
    AuditError::Load {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Loads a table, choosing the CSV reader for `.csv` files and the binary
/// reader otherwise.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        load_embeddings_csv(path)
    } else {
        load_embeddings_binary(path)
    }
}

/// Parses the binary encoding: magic, little-endian `u64` vocab size and
/// dimension, then row-major little-endian `f32` values.
pub fn decode_embeddings(bytes: &[u8]) -> std::result::Result<EmbeddingTable, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!(
            "file has {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        ));
    }
    if &bytes[..8] != EMBEDDING_MAGIC {
        return Err(format!(
            "bad magic {:?}; expected {:?}",
            String::from_utf8_lossy(&bytes[..8]),
            std::str::from_utf8(EMBEDDING_MAGIC).expect("ascii")
        ));
    }
    let read_u64 = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"));
    let (vocab, dim) = (read_u64(8), read_u64(16));
    let expected = vocab
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| format!("header sizes V={vocab}, D={dim} overflow"))?;
    if bytes.len() as u64 != expected {
        return Err(format!(
            "expected {expected} bytes for V={vocab}, D={dim}, found {} bytes",
            bytes.len()
        ));
    }
    let values: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
        return Err(format!(
            "non-finite value at row {}, column {}",
            pos as u64 / dim,
            pos as u64 % dim
        ));
    }
    EmbeddingTable::new(dim as usize, values, None).map_err(|e| e.to_string())
}

pub fn load_embeddings_binary(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| load_error(path, e.to_string()))?;
    decode_embeddings(&bytes).map_err(|m| load_error(path, m))
}

pub fn encode_embeddings(table: &EmbeddingTable) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + table.as_slice().len() * 4);
    out.extend_from_slice(EMBEDDING_MAGIC);
    out.extend_from_slice(&(table.vocab_size() as u64).to_le_bytes());
    out.extend_from_slice(&(table.dim() as u64).to_le_bytes());
    for &v in table.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

/// Writes the binary encoding. Values are stored as `f32`; the vocabulary is
/// not part of this format.
pub fn write_embeddings_binary(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_embeddings(table))?;
    Ok(())
}

/// Reads a CSV table with header `token,v0,...,v{D-1}`; the `token` column
/// becomes the table's vocabulary.
pub fn load_embeddings_csv(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| load_error(path, e.to_string()))?;
    let headers = reader.headers().map_err(|e| load_error(path, e.to_string()))?.clone();
    let dim = headers.len().saturating_sub(1);
    let header_ok = headers.get(0) == Some("token")
        && headers
            .iter()
            .skip(1)
            .enumerate()
            .all(|(i, h)| h == format!("v{i}"));
    if !header_ok || dim == 0 {
        return Err(load_error(path, "header must be token,v0,v1,...,v{D-1}"));
    }
    let mut vocab = Vec::new();
    let mut values = Vec::new();
    for (i, row) in reader.records().enumerate() {
        // Header is line 1.
        let line = i + 2;
        let row = row.map_err(|e| AuditError::Malformed {
            path: path.to_path_buf(),
            line,
            message: e.to_string(),
        })?;
        if row.len() != dim + 1 {
            return Err(AuditError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", dim + 1, row.len()),
            });
        }
        vocab.push(row[0].to_string());
        for field in row.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| AuditError::Malformed {
                path: path.to_path_buf(),
                line,
                message: format!("{field:?} is not a number"),
            })?;
            if !v.is_finite() {
                return Err(AuditError::Malformed {
                    path: path.to_path_buf(),
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
    }
    if vocab.is_empty() {
        return Err(load_error(path, "no rows"));
    }
    EmbeddingTable::new(dim, values, Some(vocab)).map_err(|e| load_error(path, e.to_string()))
}

/// Writes `token,v0,...` CSV. Tokens without a vocabulary are written as
/// their numeric id.
pub fn write_embeddings_csv(table: &EmbeddingTable, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["token".to_string()];
    header.extend((0..table.dim()).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for t in 0..table.vocab_size() {
        let name = table
            .vocab()
            .map_or_else(|| t.to_string(), |v| v[t].clone());
        let mut row = vec![name];
        row.extend(table.vector(t as u32).iter().map(|v| (*v as f32).to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reproducible random unit vectors, one per token.
pub fn synthetic_embeddings(vocab_size: usize, dim: usize, seed: u64) -> Result<EmbeddingTable> {
    if vocab_size == 0 {
        return Err(AuditError::config("synthetic vocabulary must be non-empty"));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(vocab_size * dim);
    for _ in 0..vocab_size {
        let row: Vec<f64> = loop {
            let row: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if crate::numeric::l2_norm(&row) > 1e-12 {
                break row;
            }
        };
        let norm = crate::numeric::l2_norm(&row);
        values.extend(row.iter().map(|v| v / norm));
    }
    EmbeddingTable::new(dim, values, None)
}
