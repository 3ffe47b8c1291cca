//! Evaluation of generators that produce several inferences per input,
//! scored against several references per input.
//!
//! Outputs and references are paired one-to-one by a maximum-weight
//! assignment over a pairwise metric; example scores are moderated by
//! output/reference coverage and weighted by reference count across a
//! corpus. Around this sit dataset normalization, diversity and agreement
//! statistics, and a small decoding harness for producing outputs.

pub mod assignment;
pub mod dataio;
pub mod decode;
pub mod diversity;
pub mod error;
pub mod model;
pub mod polyeval;
pub mod stats;
pub mod textmetrics;

pub use assignment::{solve_max, Assignment, ScoreMatrix};
pub use diversity::{bcubed, cluster_greedy, ngram_uniqueness, BCubed, Clustering, DiversityReport};
pub use error::{Error, Result};
pub use model::{
    EvalConfig, Example, ExampleRecord, GenerationMode, GenerationRecord, GenerationSet, InferenceType, Matching,
    RunSetting, Selection, Turn,
};
pub use polyeval::{corpus_score, coverage, polyagg, Aggregation, CorpusInputs, CorpusScore, ExampleScore};
pub use textmetrics::{bleu, MetricId, PairMetric, ScoreSource};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Derive an independent 64-bit seed for the stream named `key`.
pub fn derive_seed(seed: u64, key: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    h.finalize().into()
}

/// Deterministic generator for the stream named `key` under `seed`.
/// Distinct keys give unrelated streams, so parallel work can draw
/// without coordination.
pub fn seeded_rng(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive_seed(seed, key))
}
