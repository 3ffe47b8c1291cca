//! The `polyeval` command line.

use std::collections::{HashMap, HashSet};
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use polyeval_core::dataio::read_jsonl_path;
use polyeval_core::model::validate_example;
use polyeval_core::{Error, Example, ExampleRecord, GenerationRecord, GenerationSet};

mod commands;
pub mod report;

/// Process exit status for a failure.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if matches!(e, Error::Io { .. }) { 2 } else { 1 };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub(crate) type CliResult<T = ()> = Result<T, CliError>;

/// Attach an example id to a library error.
pub(crate) fn in_example(id: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        let mut c = CliError::from(e);
        if !c.message.contains(id) {
            c.message = format!("example {id}: {}", c.message);
        }
        c
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| {
        CliError::from(Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    })
}

/// File name for config echoes; full paths would tie reports to a machine.
pub(crate) fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub(crate) fn load_examples(path: &Path) -> CliResult<Vec<Example>> {
    let records: Vec<ExampleRecord> = read_jsonl_path(path)?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for r in &records {
        let e = validate_example(r)?;
        if !seen.insert(e.example_id().to_string()) {
            return Err(CliError::validation(format!(
                "{}: duplicate example_id {}",
                path.display(),
                e.example_id()
            )));
        }
        out.push(e);
    }
    Ok(out)
}

/// Generation sets keyed by example id, plus the number of within-run
/// duplicates dropped while loading.
pub(crate) fn load_generations(path: &Path) -> CliResult<(HashMap<String, GenerationSet>, usize)> {
    let records: Vec<GenerationRecord> = read_jsonl_path(path)?;
    let mut map = HashMap::new();
    let mut dropped = 0;
    for r in &records {
        let g = GenerationSet::from_record(r).map_err(in_example(&r.example_id))?;
        dropped += g.dropped_duplicates();
        let id = g.example_id().to_string();
        if map.insert(id.clone(), g).is_some() {
            return Err(CliError::validation(format!(
                "{}: duplicate generations for example {id}",
                path.display()
            )));
        }
    }
    Ok((map, dropped))
}

const FILE_FORMATS: &str = "\
File formats (JSON Lines, one object per line):
  raw records     {\"example_id\", \"source\": convosense|comfact|cicero|reflect|generic,
                   \"utterances\": [{\"speaker\"?, \"text\"}], \"label\", \"inferences\": [..]}
  examples        {\"example_id\", \"dialogue\": [{\"speaker\", \"text\"}], \"type\",
                   \"question\"?, \"answer_prefix\"?, \"references\": [..]}
  generations     {\"example_id\", \"mode\": monomorphic_beam|monomorphic_diverse_beam|polymorphic,
                   \"runs\": [[output, ..], ..]}
  embeddings      {\"key\": sha256-hex of the normalized text, or \"text\", \"vector\": [..]}
  clusters        {\"example_id\", \"clusters\": [[output_index, ..], ..]}
  external scores {\"example_id\", \"scores\": [[output x reference], ..]}
  annotations     {\"item_id\", \"task\": reasonability|novelty, \"system\": X|Y,
                   \"annotator\": A|B, \"label\"}
  proportions     {\"group\", \"successes\", \"trials\"}
  score vectors   {\"system\", \"scores\": [..]}

Reports are JSON with sorted keys and floats at 9 significant digits.
Exit status: 0 success, 1 invalid input or arguments, 2 unreadable or unwritable file.";

#[derive(Parser, Debug)]
#[command(name = "polyeval", version, about = "Multi-reference evaluation of multi-output generators", after_long_help = FILE_FORMATS)]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "POLYEVAL_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert raw source records into unified examples.
    Normalize(NormalizeArgs),
    /// Score generations against references.
    Eval(EvalArgs),
    /// Cluster generations semantically and report diversity.
    Diversity(DiversityArgs),
    /// Uniqueness and size statistics of an example corpus.
    Datastats(DatastatsArgs),
    /// Annotation statistics.
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Generate outputs with a toy n-gram model.
    Decode(DecodeArgs),
}

#[derive(Args, Debug)]
#[command(after_long_help = FILE_FORMATS)]
pub(crate) struct NormalizeArgs {
    /// Raw records (JSONL).
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Source applied to every record, overriding the records' own field.
    #[arg(long)]
    pub source: Option<String>,
    /// Unified examples output (JSONL).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for speaker-letter assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SelectionArg {
    Maximum,
    Order,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum MatchingArg {
    Bipartite,
    Maximum,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum SettingArg {
    #[value(name = "low_n")]
    LowN,
    #[value(name = "high_n")]
    HighN,
}

impl From<SettingArg> for polyeval_core::RunSetting {
    fn from(s: SettingArg) -> Self {
        match s {
            SettingArg::LowN => Self::LowN,
            SettingArg::HighN => Self::HighN,
        }
    }
}

#[derive(Args, Debug)]
#[command(after_long_help = FILE_FORMATS)]
pub(crate) struct EvalArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub generations: PathBuf,
    /// Pairwise metric: bleu, embed (cosine of supplied embeddings) or
    /// external (precomputed score matrices).
    #[arg(long, default_value = "bleu")]
    pub metric: String,
    /// Embeddings for `--metric embed`.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Score matrices for `--metric external`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Outputs considered per example; 1 selects top-1 scoring.
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
    /// Top-1 rule.
    #[arg(long, value_enum, default_value_t = SelectionArg::Maximum)]
    pub selection: SelectionArg,
    /// N-best pairing rule.
    #[arg(long, value_enum, default_value_t = MatchingArg::Bipartite)]
    pub matching: MatchingArg,
    /// Use at most one output per cluster (requires `--clusters`).
    #[arg(long)]
    pub cluster_constrained: bool,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Let the coverage ratio exceed 1.
    #[arg(long)]
    pub uncapped: bool,
    #[arg(long, value_enum, default_value_t = SettingArg::LowN)]
    pub setting: SettingArg,
    /// Polymorphic generations whose accumulated sizes cut monomorphic
    /// beam lists.
    #[arg(long)]
    pub pair_with: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(after_long_help = FILE_FORMATS)]
pub(crate) struct DiversityArgs {
    #[arg(long)]
    pub generations: PathBuf,
    #[arg(long)]
    pub embeddings: PathBuf,
    /// Cosine threshold for joining a cluster.
    #[arg(long, default_value_t = polyeval_core::diversity::DEFAULT_TAU)]
    pub tau: f64,
    /// Reference clusterings to compare against with B-cubed.
    #[arg(long)]
    pub gold_clusters: Option<PathBuf>,
    /// Write the computed clusterings (JSONL) for cluster-constrained eval.
    #[arg(long)]
    pub clusters_out: Option<PathBuf>,
    /// Examples, for a per-type breakdown.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SettingArg::LowN)]
    pub setting: SettingArg,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(after_long_help = FILE_FORMATS)]
pub(crate) struct DatastatsArgs {
    #[arg(long)]
    pub examples: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum TaskArg {
    Reasonability,
    Novelty,
}

impl From<TaskArg> for polyeval_core::stats::Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Reasonability => Self::Reasonability,
            TaskArg::Novelty => Self::Novelty,
        }
    }
}

#[derive(Subcommand, Debug)]
pub(crate) enum StatsCommand {
    /// Gwet's AC1 and Cohen's kappa between annotators A and B.
    #[command(after_long_help = FILE_FORMATS)]
    Agree {
        #[arg(long = "in")]
        input: PathBuf,
        /// Restrict to one task; default reports every task present.
        #[arg(long, value_enum)]
        task: Option<TaskArg>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// McNemar's test of system X against Y, resolving annotator
    /// disagreements at random over repeated trials.
    #[command(after_long_help = FILE_FORMATS)]
    Mcnemar {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = TaskArg::Reasonability)]
        task: TaskArg,
        #[arg(long, default_value_t = 100)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Chi-square test of equal proportions across groups.
    #[command(after_long_help = FILE_FORMATS)]
    Prop {
        /// Proportions (JSONL).
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Paired t-tests with Bonferroni correction.
    #[command(after_long_help = FILE_FORMATS)]
    Ttest {
        /// Score vectors (JSONL).
        #[arg(long = "in")]
        input: PathBuf,
        /// Compare this system against every other; default is all pairs.
        #[arg(long)]
        baseline: Option<String>,
        /// Number of comparisons for the correction; default is the number
        /// of tests run.
        #[arg(long)]
        comparisons: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum StrategyArg {
    Beam,
    Dbs,
    Poly,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum PolySourceArg {
    Sample,
    Beam,
}

#[derive(Args, Debug)]
#[command(after_long_help = "\
Toy model format (plain text, '#' starts a comment):
  order N
  vocab tok1 tok2 ...            (the end token </s> is added)
  ctx c1 .. ck | tok p tok p ... (k <= N-1; rows sum to 1)
Contexts pad with <s>; with --examples the padding is <Type> (e.g. <Cause>)
when the model mentions it. Missing contexts back off to shorter suffixes,
then to a uniform distribution.")]
pub(crate) struct DecodeArgs {
    #[arg(long)]
    pub lm: PathBuf,
    #[arg(long, value_enum, default_value_t = StrategyArg::Beam)]
    pub strategy: StrategyArg,
    #[arg(long, default_value_t = 10)]
    pub beams: usize,
    /// Beam groups for dbs; defaults to `--beams` for dbs and 1 otherwise.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Diversity penalty for dbs.
    #[arg(long, default_value_t = 0.5)]
    pub penalty: f64,
    /// Runs for poly.
    #[arg(long, default_value_t = 3)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub max_len: usize,
    /// Sampling temperature for poly runs.
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Defaults to 5.0 for poly and 1.0 otherwise.
    #[arg(long)]
    pub repetition_penalty: Option<f64>,
    #[arg(long, value_enum, default_value_t = PolySourceArg::Sample)]
    pub poly_source: PolySourceArg,
    /// Examples to decode for; without it a single record "sample" is made.
    #[arg(long)]
    pub examples: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::Normalize(a) => commands::normalize(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Diversity(a) => commands::diversity(&a),
        Command::Datastats(a) => commands::datastats(&a),
        Command::Stats(s) => commands::stats(&s),
        Command::Decode(a) => commands::decode(&a),
    }
}

/// Run the command line; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
