//! Pairwise text metrics and score-matrix construction.
//!
//! Every metric maps a (candidate, reference) pair to a real score. The
//! matrix builder evaluates a metric over all outputs x references; scores
//! produced outside the toolkit (contextual-embedding metrics, for instance)
//! enter through [`ExternalScores`].

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::assignment::ScoreMatrix;
use crate::dataio::{read_jsonl_path, text_key, EmbeddingStore};
use crate::error::{Error, Result};

/// A pure pairwise metric.
pub trait PairMetric: Sync {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64>;
}

/// Lowercased whitespace tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU in [0, 1].
///
/// Geometric mean of clipped n-gram precisions for n = 1..=4 with uniform
/// weights, times the brevity penalty `exp(min(0, 1 - |r|/|c|))`. For
/// n >= 2 a zero precision is replaced by `(matches + 1) / (possible + 1)`.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64> {
    let cand = tokenize(candidate);
    let refr = tokenize(reference);
    if cand.is_empty() || refr.is_empty() {
        return Err(Error::EmptyText);
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let cand_counts = ngram_counts(&cand, n);
        let ref_counts = ngram_counts(&refr, n);
        let possible = cand.len().saturating_sub(n - 1);
        let matches: usize = cand_counts
            .iter()
            .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
            .sum();
        let precision = if matches > 0 {
            matches as f64 / possible as f64
        } else if n == 1 {
            return Ok(0.0);
        } else {
            (matches as f64 + 1.0) / (possible as f64 + 1.0)
        };
        log_sum += precision.ln() / MAX_ORDER as f64;
    }
    let ratio = refr.len() as f64 / cand.len() as f64;
    let brevity = (1.0 - ratio).min(0.0);
    Ok((log_sum + brevity).exp().min(1.0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bleu;

impl PairMetric for Bleu {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64> {
        bleu(candidate, reference)
    }
}

/// 1.0 when the normalized strings are equal, else 0.0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactMatch;

impl PairMetric for ExactMatch {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64> {
        let eq = crate::model::normalize_text(candidate) == crate::model::normalize_text(reference);
        Ok(if eq { 1.0 } else { 0.0 })
    }
}

/// Cosine similarity; `None` when either vector has zero norm.
pub fn cosine(u: &[f64], v: &[f64]) -> Option<f64> {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return None;
    }
    Some((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Cosine similarity of the stored sentence vectors of two texts.
pub fn embed_cosine(candidate: &str, reference: &str, store: &EmbeddingStore) -> Result<f64> {
    let u = store.lookup(candidate)?;
    let v = store.lookup(reference)?;
    if let Some(c) = cosine(u, v) {
        return Ok(c);
    }
    let zero = if u.iter().all(|x| *x == 0.0) { candidate } else { reference };
    Err(Error::ZeroNormVector(text_key(zero)))
}

#[derive(Debug, Clone, Copy)]
pub struct EmbedCosine<'a> {
    pub store: &'a EmbeddingStore,
}

impl PairMetric for EmbedCosine<'_> {
    fn score(&self, candidate: &str, reference: &str) -> Result<f64> {
        embed_cosine(candidate, reference, self.store)
    }
}

/// `matrix[i][j] = metric(outputs[i], references[j])`.
pub fn score_matrix<S: AsRef<str>, T: AsRef<str>>(
    outputs: &[S],
    references: &[T],
    metric: &dyn PairMetric,
) -> Result<ScoreMatrix> {
    if outputs.is_empty() || references.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let mut data = Vec::with_capacity(outputs.len() * references.len());
    for (row, o) in outputs.iter().enumerate() {
        for (col, r) in references.iter().enumerate() {
            let s = metric
                .score(o.as_ref(), r.as_ref())
                .map_err(|e| Error::MetricAt {
                    row,
                    col,
                    source: Box::new(e),
                })?;
            data.push(s);
        }
    }
    ScoreMatrix::new(outputs.len(), references.len(), data)
}

/// Which metric an evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    Bleu,
    EmbedCosine,
    External,
}

impl MetricId {
    pub fn name(self) -> &'static str {
        match self {
            MetricId::Bleu => "bleu",
            MetricId::EmbedCosine => "embed_cosine",
            MetricId::External => "external",
        }
    }

    /// Factor applied to values in reports; BLEU is shown on a 0-100 scale.
    pub fn report_scale(self) -> f64 {
        match self {
            MetricId::Bleu => 100.0,
            _ => 1.0,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bleu" => Ok(MetricId::Bleu),
            "embed" | "embed_cosine" => Ok(MetricId::EmbedCosine),
            "external" => Ok(MetricId::External),
            _ => Err(Error::InvalidArgument(format!("unknown metric {s:?}"))),
        }
    }
}

/// One line of an external score sidecar, row-major outputs x references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalScoreRecord {
    pub example_id: String,
    pub scores: Vec<Vec<f64>>,
}

/// Score matrices computed outside the toolkit, keyed by example.
#[derive(Debug, Clone, Default)]
pub struct ExternalScores {
    matrices: HashMap<String, ScoreMatrix>,
}

impl ExternalScores {
    pub fn from_records<I: IntoIterator<Item = ExternalScoreRecord>>(records: I) -> Result<Self> {
        let mut matrices = HashMap::new();
        for (i, r) in records.into_iter().enumerate() {
            let m = ScoreMatrix::from_rows(&r.scores).map_err(|e| Error::Malformed {
                line: i + 1,
                message: format!("example {}: {e}", r.example_id),
            })?;
            matrices.insert(r.example_id.trim().to_string(), m);
        }
        Ok(Self { matrices })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_records(read_jsonl_path::<ExternalScoreRecord>(path)?)
    }

    /// The leading `rows` x `cols` block of the example's matrix. Column
    /// count must match the reference count exactly.
    pub fn matrix(&self, example_id: &str, rows: usize, cols: usize) -> Result<ScoreMatrix> {
        let m = self
            .matrices
            .get(example_id)
            .ok_or_else(|| Error::MissingExternalScores {
                example_id: example_id.to_string(),
            })?;
        if m.rows() < rows || m.cols() != cols {
            return Err(Error::ExternalShape {
                example_id: example_id.to_string(),
                rows,
                cols,
                found_rows: m.rows(),
                found_cols: m.cols(),
            });
        }
        m.select_rows(&(0..rows).collect::<Vec<_>>())
    }
}

/// Where per-example score matrices come from.
#[derive(Clone, Copy)]
pub enum ScoreSource<'a> {
    Pair(&'a dyn PairMetric),
    External(&'a ExternalScores),
}

impl ScoreSource<'_> {
    pub fn matrix<S: AsRef<str>, T: AsRef<str>>(
        &self,
        example_id: &str,
        outputs: &[S],
        references: &[T],
    ) -> Result<ScoreMatrix> {
        match self {
            ScoreSource::Pair(metric) => {
                score_matrix(outputs, references, *metric).map_err(|e| e.with_example(example_id))
            }
            ScoreSource::External(ext) => ext.matrix(example_id, outputs.len(), references.len()),
        }
    }
}
