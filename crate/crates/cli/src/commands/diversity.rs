use std::collections::{BTreeMap, HashMap};

use polyeval_core::dataio::{accumulate_runs, load_embeddings};
use polyeval_core::diversity::{bcubed, cluster_greedy, diversity_report, ClusterRecord, Clustering};
use polyeval_core::RunSetting;
use rayon::prelude::*;
use serde_json::json;

use super::eval::load_clusterings;
use super::write_lines;
use crate::report::Report;
use crate::{file_name, in_example, load_examples, load_generations, CliError, CliResult, DiversityArgs};

pub(crate) fn diversity(a: &DiversityArgs) -> CliResult {
    let (generations, dropped) = load_generations(&a.generations)?;
    let store = load_embeddings(&a.embeddings)?;
    let setting: RunSetting = a.setting.into();
    if !(a.tau > 0.0 && a.tau < 1.0) {
        return Err(CliError::validation(format!("--tau must lie in (0, 1), got {}", a.tau)));
    }
    let mut ids: Vec<&String> = generations.keys().collect();
    ids.sort();
    let clustered: Vec<(String, Vec<String>, Clustering)> = ids
        .par_iter()
        .map(|id| {
            let outputs = accumulate_runs(&generations[*id], setting, None).map_err(in_example(id))?;
            let c = cluster_greedy(id, &outputs, &store, a.tau).map_err(in_example(id))?;
            Ok(((*id).clone(), outputs, c))
        })
        .collect::<CliResult<_>>()?;

    let mut report = Report::new("diversity");
    report
        .config("generations", file_name(&a.generations))
        .config("embeddings", file_name(&a.embeddings))
        .config("tau", a.tau)
        .config("setting", setting)
        .config("clustering", "single-link greedy scan: join the first cluster with a member at cosine >= tau")
        .config("gold_clusters", a.gold_clusters.as_deref().map(file_name))
        .config("examples", a.examples.as_deref().map(file_name));

    let pairs: Vec<(&[String], &Clustering)> = clustered.iter().map(|(_, o, c)| (o.as_slice(), c)).collect();
    report.result("overall", diversity_report(&pairs));

    if let Some(path) = &a.examples {
        let examples = load_examples(path)?;
        let types: HashMap<&str, &str> = examples.iter().map(|e| (e.example_id(), e.inference_type().name())).collect();
        let mut groups: BTreeMap<&str, Vec<(&[String], &Clustering)>> = BTreeMap::new();
        for (id, o, c) in &clustered {
            match types.get(id.as_str()) {
                Some(t) => groups.entry(t).or_default().push((o.as_slice(), c)),
                None => report.warn(format!("generations_without_example: {id}")),
            }
        }
        let per_type: BTreeMap<&str, _> = groups.iter().map(|(t, v)| (*t, diversity_report(v))).collect();
        report.result("per_type", per_type);
    }

    let per_example: Vec<_> = clustered
        .iter()
        .map(|(id, o, c)| {
            json!({
                "example_id": id,
                "n_outputs": o.len(),
                "n_clusters": c.len(),
                "singletons": c.singletons(),
                "clusters": c.clusters(),
            })
        })
        .collect();
    report.result("examples", per_example);

    if let Some(path) = &a.gold_clusters {
        let gold = load_clusterings(path)?;
        let (mut p, mut r, mut f, mut n) = (0.0, 0.0, 0.0, 0usize);
        let mut rows = Vec::new();
        for (id, _, c) in &clustered {
            let Some(g) = gold.get(id) else {
                report.warn(format!("gold_clusters_missing: {id}"));
                continue;
            };
            let b = bcubed(c, g).map_err(in_example(id))?;
            p += b.precision;
            r += b.recall;
            f += b.f1;
            n += 1;
            rows.push(json!({"example_id": id, "precision": b.precision, "recall": b.recall, "f1": b.f1}));
        }
        let mean = |x: f64| if n > 0 { x / n as f64 } else { 0.0 };
        report.result(
            "bcubed",
            json!({
                "precision": mean(p),
                "recall": mean(r),
                "f1": mean(f),
                "n_examples": n,
                "examples": rows,
            }),
        );
    }

    if let Some(path) = &a.clusters_out {
        let records: Vec<ClusterRecord> = clustered
            .iter()
            .map(|(id, _, c)| ClusterRecord {
                example_id: id.clone(),
                clusters: c.clusters().to_vec(),
            })
            .collect();
        write_lines(path, &records)?;
    }
    if dropped > 0 {
        report.warn(format!("duplicate_outputs_dropped: {dropped}"));
    }
    report.emit(a.report.as_deref())
}
