use std::collections::{BTreeMap, HashMap};

use polyeval_core::dataio::{accumulate_runs, load_embeddings, read_jsonl_path};
use polyeval_core::diversity::ClusterRecord;
use polyeval_core::model::{EvalConfig, Matching, Selection};
use polyeval_core::polyeval::{corpus_score, CorpusInputs};
use polyeval_core::textmetrics::{Bleu, EmbedCosine, ExternalScores, MetricId, ScoreSource};
use polyeval_core::{Clustering, RunSetting};
use serde_json::{json, Map, Value};

use crate::report::Report;
use crate::{file_name, in_example, load_examples, load_generations, CliError, CliResult, EvalArgs, MatchingArg, SelectionArg};

pub(crate) fn load_clusterings(path: &std::path::Path) -> CliResult<HashMap<String, Clustering>> {
    let records: Vec<ClusterRecord> = read_jsonl_path(path)?;
    let mut map = HashMap::new();
    for r in records {
        let id = r.example_id.trim().to_string();
        let c = Clustering::try_from(r).map_err(in_example(&id))?;
        if map.insert(id.clone(), c).is_some() {
            return Err(CliError::validation(format!("{}: duplicate clusters for example {id}", path.display())));
        }
    }
    Ok(map)
}

pub(crate) fn eval(a: &EvalArgs) -> CliResult {
    let metric: MetricId = a.metric.parse()?;
    let examples = load_examples(&a.examples)?;
    let (generations, dropped) = load_generations(&a.generations)?;
    let setting: RunSetting = a.setting.into();

    let paired = match &a.pair_with {
        Some(p) => {
            let (poly, _) = load_generations(p)?;
            let mut sizes = HashMap::new();
            for (id, g) in &poly {
                sizes.insert(id.clone(), accumulate_runs(g, setting, None).map_err(in_example(id))?.len());
            }
            Some(sizes)
        }
        None => None,
    };

    let clusterings = match (&a.clusters, a.cluster_constrained) {
        (Some(p), _) => {
            let map = load_clusterings(p)?;
            for (id, c) in &map {
                if let Some(g) = generations.get(id) {
                    let n = accumulate_runs(g, setting, None).map_err(in_example(id))?.len();
                    c.check_partition(n).map_err(in_example(id))?;
                }
            }
            Some(map)
        }
        (None, true) => return Err(CliError::validation("--cluster-constrained needs --clusters")),
        (None, false) => None,
    };

    let store = match (metric, &a.embeddings) {
        (MetricId::EmbedCosine, Some(p)) => Some(load_embeddings(p)?),
        (MetricId::EmbedCosine, None) => return Err(CliError::validation("--metric embed needs --embeddings")),
        _ => None,
    };
    let external = match (metric, &a.scores) {
        (MetricId::External, Some(p)) => Some(ExternalScores::load(p)?),
        (MetricId::External, None) => return Err(CliError::validation("--metric external needs --scores")),
        _ => None,
    };
    let embed;
    let source = match metric {
        MetricId::Bleu => ScoreSource::Pair(&Bleu),
        MetricId::EmbedCosine => {
            embed = EmbedCosine {
                store: store.as_ref().expect("store loaded"),
            };
            ScoreSource::Pair(&embed)
        }
        MetricId::External => ScoreSource::External(external.as_ref().expect("scores loaded")),
    };

    let config = EvalConfig {
        top_k: a.top_k,
        selection: match a.selection {
            SelectionArg::Maximum => Selection::Maximum,
            SelectionArg::Order => Selection::Order,
        },
        matching: match a.matching {
            MatchingArg::Bipartite => Matching::Bipartite,
            MatchingArg::Maximum => Matching::Maximum,
        },
        cluster_constrained: a.cluster_constrained,
        coverage_cap: !a.uncapped,
        metric_id: metric.name().to_string(),
        seed: a.seed,
    };
    let inputs = CorpusInputs {
        examples: &examples,
        generations: &generations,
        clusterings: clusterings.as_ref(),
        paired_sizes: paired.as_ref(),
        setting,
    };
    let score = corpus_score(&inputs, &config, source)?;

    let scale = metric.report_scale();
    let mut report = Report::new("eval");
    report
        .config("examples", file_name(&a.examples))
        .config("generations", file_name(&a.generations))
        .config("metric", metric.name())
        .config("report_scale", scale)
        .config("top_k", config.top_k)
        .config("selection", config.selection)
        .config("matching", config.matching)
        .config("cluster_constrained", config.cluster_constrained)
        .config("clusters", a.clusters.as_deref().map(file_name))
        .config("coverage_cap", config.coverage_cap)
        .config("setting", setting)
        .config("pair_with", a.pair_with.as_deref().map(file_name))
        .config("embeddings", a.embeddings.as_deref().map(file_name))
        .config("scores", a.scores.as_deref().map(file_name))
        .config("seed", config.seed)
        .config("aggregation", score.aggregation);

    let mut per_type = Map::new();
    let mut raw_per_type = Map::new();
    for (k, t) in &score.per_type {
        per_type.insert(
            k.name().into(),
            json!({"score": t.score * scale, "n_examples": t.n_examples, "n_refs": t.n_refs}),
        );
        raw_per_type.insert(k.name().into(), json!(t.score));
    }
    let mut raw_examples = BTreeMap::new();
    let rows: Vec<Value> = score
        .examples
        .iter()
        .map(|e| {
            raw_examples.insert(e.example_id.clone(), e.polyagg);
            json!({
                "example_id": e.example_id,
                "type": e.inference_type.name(),
                "value": e.polyagg * scale,
                "coverage": e.coverage,
                "n_refs": e.n_refs,
                "n_outs": e.n_outs,
                "weight": e.weight,
                "contribution": e.contribution * scale,
            })
        })
        .collect();
    report
        .result("aggregation", score.aggregation)
        .result("overall", score.overall * scale)
        .result("macro_over_types", score.macro_over_types * scale)
        .result("n_examples", score.n_examples)
        .result("n_refs", score.n_refs)
        .result("per_type", per_type)
        .result("examples", rows)
        .result(
            "raw",
            json!({
                "overall": score.overall,
                "macro_over_types": score.macro_over_types,
                "per_type": raw_per_type,
                "examples": raw_examples,
            }),
        );
    if dropped > 0 {
        report.warn(format!("duplicate_outputs_dropped: {dropped}"));
    }
    let mut extra: Vec<&String> = generations.keys().filter(|id| !examples.iter().any(|e| e.example_id() == *id)).collect();
    extra.sort();
    for id in extra {
        report.warn(format!("generations_without_example: {id}"));
    }
    report.emit(a.report.as_deref())
}
