use polyeval_core::decode::{decode_example, BeamConfig, DecodeConfig, NgramLM, PolySource, Strategy};
use rayon::prelude::*;
use serde_json::json;

use super::write_lines;
use crate::report::Report;
use crate::{file_name, in_example, load_examples, CliResult, DecodeArgs, PolySourceArg, StrategyArg};

pub(crate) fn decode(a: &DecodeArgs) -> CliResult {
    let lm = NgramLM::load(&a.lm)?;
    let strategy = match a.strategy {
        StrategyArg::Beam => Strategy::Beam,
        StrategyArg::Dbs => Strategy::Dbs,
        StrategyArg::Poly => Strategy::Poly,
    };
    let groups = a.groups.unwrap_or(if strategy == Strategy::Dbs { a.beams } else { 1 });
    let repetition_penalty = a
        .repetition_penalty
        .unwrap_or(if strategy == Strategy::Poly { 5.0 } else { 1.0 });
    let config = DecodeConfig {
        strategy,
        beam: BeamConfig {
            beams: a.beams,
            groups,
            diversity_penalty: if strategy == Strategy::Dbs { a.penalty } else { 0.0 },
            repetition_penalty,
            max_len: a.max_len,
        },
        runs: a.runs,
        temperature: a.temperature,
        poly_source: match a.poly_source {
            PolySourceArg::Sample => PolySource::Sample,
            PolySourceArg::Beam => PolySource::Beam,
        },
        seed: a.seed,
    };
    config.beam.validate()?;
    if strategy == Strategy::Poly && !(a.temperature > 0.0) {
        return Err(crate::CliError::validation("--temperature must be > 0"));
    }

    let targets: Vec<(String, String)> = match &a.examples {
        Some(p) => load_examples(p)?
            .iter()
            .map(|e| (e.example_id().to_string(), format!("<{}>", e.inference_type().name())))
            .collect(),
        None => vec![("sample".to_string(), polyeval_core::decode::START.to_string())],
    };
    let decoded = targets
        .par_iter()
        .map(|(id, start)| decode_example(&lm.conditioned(start), id, &config).map_err(in_example(id)))
        .collect::<CliResult<Vec<_>>>()?;

    let records: Vec<_> = decoded.iter().map(|d| d.record.clone()).collect();
    write_lines(&a.out, &records)?;

    let mut report = Report::new("decode");
    report
        .config("lm", file_name(&a.lm))
        .config("examples", a.examples.as_deref().map(file_name))
        .config("out", file_name(&a.out))
        .config("strategy", strategy)
        .config("beams", config.beam.beams)
        .config("groups", config.beam.groups)
        .config("group_width", config.beam.group_width())
        .config("diversity_penalty", config.beam.diversity_penalty)
        .config("repetition_penalty", config.beam.repetition_penalty)
        .config("max_len", config.beam.max_len)
        .config("runs", config.runs)
        .config("temperature", config.temperature)
        .config("poly_source", config.poly_source)
        .config("seed", config.seed)
        .config("length_normalization", "cumulative log-probability / tokens including end")
        .config("tie_break", "token ids, lexicographic");
    let rows: Vec<_> = decoded
        .iter()
        .map(|d| {
            json!({
                "example_id": d.record.example_id,
                "run_sizes": d.record.runs.iter().map(Vec::len).collect::<Vec<_>>(),
                "forced": d.forced,
            })
        })
        .collect();
    report
        .result("records", records.len())
        .result("outputs", records.iter().map(|r| r.runs.iter().map(Vec::len).sum::<usize>()).sum::<usize>())
        .result("forced", decoded.iter().map(|d| d.forced).sum::<usize>())
        .result("examples", rows);
    for d in &decoded {
        for w in &d.warnings {
            report.warn(format!("{}: {w}", d.record.example_id));
        }
    }
    report.emit(a.report.as_deref())
}
