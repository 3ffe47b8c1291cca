//! File formats and the normalization pipeline that turns heterogeneous
//! source records into unified examples.
//!
//! Every file is JSONL: one JSON object per line, blank lines ignored.
//! Parse failures report the 1-based line number.

mod embeddings;
mod normalize;
mod runs;

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::canonical_json;

pub use embeddings::{load_embeddings, read_embeddings, text_key, EmbeddingRecord, EmbeddingStore};
pub use normalize::{map_type, normalize, unknown_labels, RawRecord, RawUtterance, Source, TypeTarget, SOURCE_LABELS};
pub use runs::accumulate_runs;

pub fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Decode every non-blank line of `reader` as a `T`.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn read_jsonl_path<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    read_jsonl(open(path)?).map_err(|e| match e {
        Error::Malformed { line, message } => Error::Malformed {
            line,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

/// Write each item as one canonical (key-sorted) JSON line.
pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, items: &[T]) -> std::io::Result<()> {
    for item in items {
        writeln!(writer, "{}", canonical_json(item))?;
    }
    writer.flush()
}
