use std::collections::BTreeMap;
use std::path::Path;

use polyeval_core::dataio::{normalize as normalize_record, read_jsonl_path, write_jsonl, RawRecord, Source};
use polyeval_core::diversity::ngram_uniqueness;
use polyeval_core::Error;
use rayon::prelude::*;
use serde::Serialize;

use crate::report::Report;
use crate::{file_name, in_example, load_examples, write_file, CliError, CliResult, DatastatsArgs, NormalizeArgs};

mod decode;
mod diversity;
mod eval;
mod stats;

pub(crate) use decode::decode;
pub(crate) use diversity::diversity;
pub(crate) use eval::eval;
pub(crate) use stats::stats;

pub(crate) fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> CliResult {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, items).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    write_file(path, &String::from_utf8(buf).expect("json is utf-8"))
}

pub(crate) fn normalize(a: &NormalizeArgs) -> CliResult {
    let mut raws: Vec<RawRecord> = read_jsonl_path(&a.input)?;
    let forced_source = a.source.as_deref().map(str::parse::<Source>).transpose()?;
    if let Some(src) = forced_source {
        for r in &mut raws {
            r.source = src;
        }
    }
    let results: Vec<Option<_>> = raws
        .par_iter()
        .map(|r| match normalize_record(r, a.seed) {
            Ok(e) => Ok(Some(e)),
            Err(Error::ExcludedType(_)) => Ok(None),
            Err(e) => Err(in_example(r.example_id.trim())(e)),
        })
        .collect::<CliResult<_>>()?;

    let mut report = Report::new("normalize");
    report
        .config("in", file_name(&a.input))
        .config("out", file_name(&a.out))
        .config("seed", a.seed)
        .config("source", a.source.as_deref().map(|s| s.to_ascii_lowercase()))
        .config("excluded_labels", ["isAfter", "isBefore"])
        .config("name_replacement", "whole word, case-insensitive, terminal speaker only");

    let mut examples = Vec::new();
    let mut per_type: BTreeMap<String, usize> = BTreeMap::new();
    let mut per_source: BTreeMap<String, usize> = BTreeMap::new();
    let mut seen = std::collections::HashSet::new();
    let (mut utterances, mut turns, mut excluded) = (0, 0, 0);
    for (raw, e) in raws.iter().zip(results) {
        let Some(e) = e else {
            excluded += 1;
            report.warn(format!("excluded_type: {}", raw.example_id.trim()));
            continue;
        };
        if !seen.insert(e.example_id().to_string()) {
            return Err(CliError::validation(format!("duplicate example_id {}", e.example_id())));
        }
        utterances += raw.utterances.len();
        turns += e.dialogue().len();
        *per_type.entry(e.inference_type().name().to_string()).or_default() += 1;
        *per_source.entry(raw.source.name().to_string()).or_default() += 1;
        examples.push(e.to_record());
    }
    write_lines(&a.out, &examples)?;
    report
        .result("examples", examples.len())
        .result("excluded", excluded)
        .result("merged_utterances", utterances - turns)
        .result("per_source", per_source)
        .result("per_type", per_type);
    report.emit(a.report.as_deref())
}

pub(crate) fn datastats(a: &DatastatsArgs) -> CliResult {
    let examples = load_examples(&a.examples)?;
    let stats = ngram_uniqueness(&examples);
    let mut report = Report::new("datastats");
    report
        .config("examples", file_name(&a.examples))
        .config("tokenization", "lowercase, whitespace split")
        .config(
            "within_example_uniqueness",
            "per example with at least two inferences: n-gram types occurring in exactly one inference / all n-gram types; averaged over examples",
        )
        .config("overall", "macro average over types; example counts summed");
    let per_type: BTreeMap<&str, _> = stats.per_type.iter().map(|(k, v)| (k.name(), v)).collect();
    report.result("per_type", per_type).result("overall", &stats.overall);
    report.emit(a.report.as_deref())
}
