use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::normalize_text;

/// Hex SHA-256 of the normalized UTF-8 text; the lookup key of an
/// [`EmbeddingStore`].
pub fn text_key(text: &str) -> String {
    hex::encode(Sha256::digest(normalize_text(text).as_bytes()))
}

/// One line of an embeddings file. Either `key` or `text` must be given;
/// `text` is hashed with [`text_key`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub vector: Vec<f64>,
}

/// Precomputed sentence vectors, all of one dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EmbeddingStore {
    /// Build from records; `line` numbers in errors are 1-based positions in
    /// `records`.
    pub fn from_records<I: IntoIterator<Item = EmbeddingRecord>>(records: I) -> Result<Self> {
        let mut store = EmbeddingStore::default();
        for (i, record) in records.into_iter().enumerate() {
            store.insert_record(record, i + 1)?;
        }
        Ok(store)
    }

    fn insert_record(&mut self, record: EmbeddingRecord, line: usize) -> Result<()> {
        let key = match (record.key, record.text) {
            (Some(key), _) => key.to_ascii_lowercase(),
            (None, Some(text)) => text_key(&text),
            (None, None) => {
                return Err(Error::InvalidEmbedding {
                    line,
                    reason: "record has neither key nor text".into(),
                })
            }
        };
        let d = record.vector.len();
        if d < 2 {
            return Err(Error::InvalidEmbedding {
                line,
                reason: format!("dimension {d} is below 2"),
            });
        }
        if record.vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidEmbedding {
                line,
                reason: "non-finite component".into(),
            });
        }
        if self.dim == 0 {
            self.dim = d;
        } else if d != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: d,
                line,
            });
        }
        self.vectors.insert(key, record.vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn lookup(&self, text: &str) -> Result<&[f64]> {
        let key = text_key(text);
        match self.vectors.get(&key) {
            Some(v) => Ok(v),
            None => Err(Error::MissingEmbedding {
                key,
                example_id: None,
            }),
        }
    }

    pub fn contains(&self, text: &str) -> bool {
        self.vectors.contains_key(&text_key(text))
    }
}

/// Read an embeddings JSONL stream.
pub fn read_embeddings<R: BufRead>(reader: R) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        store.insert_record(record, i + 1)?;
    }
    Ok(store)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    read_embeddings(super::open(path)?)
}
