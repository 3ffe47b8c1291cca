use thiserror::Error;

/// Errors raised by the evaluation toolkit.
///
/// Variants that concern a single evaluation unit carry its `example_id`
/// so that batch runs can point at the offending record.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("example {example_id}: reference list is empty")]
    EmptyReferences { example_id: String },

    #[error("example {example_id}: turns {index} and {next} share speaker tag {tag:?}", next = .index + 1)]
    ConsecutiveSameSpeaker {
        example_id: String,
        index: usize,
        tag: String,
    },

    #[error("example {example_id}: unknown inference type {label:?}")]
    UnknownInferenceType { example_id: String, label: String },

    #[error("example {example_id}: {reason}")]
    InvalidExample { example_id: String, reason: String },

    #[error("unknown source label {0:?}")]
    UnknownSourceLabel(String),

    #[error("source label {0:?} is an excluded type")]
    ExcludedType(String),

    #[error("example {example_id}: {needed} runs required, {available} available")]
    InsufficientRuns {
        example_id: String,
        needed: usize,
        available: usize,
    },

    #[error("no embedding for text key {key}{}", fmt_example(.example_id))]
    MissingEmbedding {
        key: String,
        example_id: Option<String>,
    },

    #[error("embedding dimension mismatch: expected {expected}, found {found} (line {line})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        line: usize,
    },

    #[error("invalid embedding at line {line}: {reason}")]
    InvalidEmbedding { line: usize, reason: String },

    #[error("empty text")]
    EmptyText,

    #[error("zero-norm embedding vector for key {0}")]
    ZeroNormVector(String),

    #[error("metric failed at output {row}, reference {col}: {source}")]
    MetricAt {
        row: usize,
        col: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("example {example_id}: no external scores")]
    MissingExternalScores { example_id: String },

    #[error("example {example_id}: external score matrix is {found_rows}x{found_cols}, need at least {rows}x{cols}")]
    ExternalShape {
        example_id: String,
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    #[error("score matrix has a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("score matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("no generations for example {0}")]
    MissingGenerations(String),

    #[error("empty cluster at position {0}")]
    EmptyCluster(usize),

    #[error("clustering is not a partition: {0}")]
    NotAPartition(String),

    #[error("clusterings cover different index sets")]
    IndexSetMismatch,

    #[error("annotation table mixes reasonability and novelty labels")]
    MixedLabelSets,

    #[error("annotation table is empty")]
    EmptyTable,

    #[error("chance agreement is 1; statistic undefined")]
    DegenerateMarginals,

    #[error("no discordant pairs")]
    NoDiscordantPairs,

    #[error("paired differences have zero variance")]
    ZeroVariance,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unparseable sequence: no \"(k)\" marker found")]
    UnparseableSequence,

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("language model: {0}")]
    LanguageModel(String),
}

fn fmt_example(example_id: &Option<String>) -> String {
    match example_id {
        Some(id) => format!(" (example {id})"),
        None => String::new(),
    }
}

impl Error {
    /// Attach an example id to errors that can carry one but were raised
    /// without it.
    pub fn with_example(self, id: &str) -> Self {
        match self {
            Error::MissingEmbedding {
                key,
                example_id: None,
            } => Error::MissingEmbedding {
                key,
                example_id: Some(id.to_string()),
            },
            Error::MetricAt { row, col, source } => Error::MetricAt {
                row,
                col,
                source: Box::new(source.with_example(id)),
            },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
