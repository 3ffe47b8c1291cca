use std::collections::BTreeMap;
use std::path::Path;

use polyeval_core::dataio::read_jsonl_path;
use polyeval_core::stats::{
    binarize, chi_square_proportions, cohen_kappa, collect_tables, gwet_ac1, pair_systems, paired_t_bonferroni,
    resolve_and_repeat, AnnotatedItem, AnnotationRecord, Contingency, Task,
};
use polyeval_core::Error;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::report::Report;
use crate::{file_name, CliError, CliResult, StatsCommand};

#[derive(Deserialize)]
struct ProportionRecord {
    group: String,
    successes: u64,
    trials: u64,
}

#[derive(Deserialize)]
struct ScoreVector {
    system: String,
    scores: Vec<f64>,
}

fn check_alpha(alpha: f64) -> CliResult {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(CliError::validation(format!("--alpha must lie in (0, 1), got {alpha}")))
    }
}

fn agreement(items: &[AnnotatedItem], report: &mut Report, label: &str) -> CliResult<Value> {
    let pairs = binarize(items)?;
    let t = Contingency::from_pairs(&pairs);
    let n = t.total() as f64;
    let kappa = match cohen_kappa(&t) {
        Ok(k) => Some(k),
        Err(Error::DegenerateMarginals) => {
            report.warn(format!("kappa_undefined: {label}"));
            None
        }
        Err(e) => return Err(e.into()),
    };
    Ok(json!({
        "items": t.total(),
        "contingency": t,
        "observed_agreement": (t.a + t.d) as f64 / n,
        "positive_rate_a": (t.a + t.b) as f64 / n,
        "positive_rate_b": (t.a + t.c) as f64 / n,
        "gwet_ac1": gwet_ac1(&t)?,
        "cohen_kappa": kappa,
    }))
}

fn load_annotations(path: &Path) -> CliResult<Vec<AnnotationRecord>> {
    Ok(read_jsonl_path(path)?)
}

pub(crate) fn stats(cmd: &StatsCommand) -> CliResult {
    match cmd {
        StatsCommand::Agree { input, task, report: out } => {
            let records = load_annotations(input)?;
            let tasks: Vec<Task> = match task {
                Some(t) => vec![(*t).into()],
                None => {
                    let mut ts: Vec<Task> = records.iter().map(|r| r.task).collect();
                    ts.sort();
                    ts.dedup();
                    ts
                }
            };
            let mut report = Report::new("stats agree");
            report
                .config("in", file_name(input))
                .config("tasks", &tasks)
                .config("positive_labels", ["always_likely", "sometimes_possible", "new_detailed", "new_simple"]);
            let mut results = BTreeMap::new();
            for task in tasks {
                let tables = collect_tables(&records, task)?;
                let name = serde_json::to_value(task).unwrap().as_str().unwrap().to_string();
                let mut per_system = BTreeMap::new();
                if !tables.x.is_empty() {
                    per_system.insert("X", agreement(&tables.x, &mut report, &format!("{name}/X"))?);
                }
                if !tables.y.is_empty() {
                    per_system.insert("Y", agreement(&tables.y, &mut report, &format!("{name}/Y"))?);
                }
                results.insert(name, per_system);
            }
            report.result("tasks", results);
            report.emit(out.as_deref())
        }
        StatsCommand::Mcnemar {
            input,
            task,
            repeats,
            seed,
            alpha,
            report: out,
        } => {
            check_alpha(*alpha)?;
            let records = load_annotations(input)?;
            let task: Task = (*task).into();
            let items = pair_systems(&collect_tables(&records, task)?)?;
            let r = resolve_and_repeat(&items, *repeats, *seed, *alpha)?;
            let mut report = Report::new("stats mcnemar");
            report
                .config("in", file_name(input))
                .config("task", task)
                .config("repeats", repeats)
                .config("seed", seed)
                .config("alpha", alpha)
                .config("continuity_correction", false)
                .config("resolution", "each disagreeing item takes a uniformly chosen annotator's label, independently per repeat")
                .config("verdict_rule", "significant only if every repeat has p < alpha");
            report.result("resolution", &r);
            report.emit(out.as_deref())
        }
        StatsCommand::Prop { input, alpha, report: out } => {
            check_alpha(*alpha)?;
            let records: Vec<ProportionRecord> = read_jsonl_path(input)?;
            let groups: Vec<(u64, u64)> = records.iter().map(|r| (r.successes, r.trials)).collect();
            let c = chi_square_proportions(&groups)?;
            let rows: Vec<Value> = records
                .iter()
                .map(|r| {
                    json!({
                        "group": r.group,
                        "successes": r.successes,
                        "trials": r.trials,
                        "rate": r.successes as f64 / r.trials as f64,
                    })
                })
                .collect();
            let mut report = Report::new("stats prop");
            report
                .config("in", file_name(input))
                .config("alpha", alpha)
                .config("test", "Pearson chi-square on the groups x outcome table, no continuity correction");
            report
                .result("groups", rows)
                .result("statistic", c.statistic)
                .result("df", c.df)
                .result("p_value", c.p_value)
                .result("significant", c.p_value < *alpha);
            report.emit(out.as_deref())
        }
        StatsCommand::Ttest {
            input,
            baseline,
            comparisons,
            alpha,
            report: out,
        } => {
            check_alpha(*alpha)?;
            let vectors: Vec<ScoreVector> = read_jsonl_path(input)?;
            let mut pairs: Vec<(usize, usize)> = Vec::new();
            match baseline {
                Some(b) => {
                    let bi = vectors
                        .iter()
                        .position(|v| &v.system == b)
                        .ok_or_else(|| CliError::validation(format!("baseline system {b:?} not in input")))?;
                    pairs.extend((0..vectors.len()).filter(|&j| j != bi).map(|j| (bi, j)));
                }
                None => {
                    for i in 0..vectors.len() {
                        for j in i + 1..vectors.len() {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            if pairs.is_empty() {
                return Err(CliError::validation("need at least two systems"));
            }
            let slices: Vec<(&[f64], &[f64])> = pairs
                .iter()
                .map(|&(i, j)| (vectors[i].scores.as_slice(), vectors[j].scores.as_slice()))
                .collect();
            let m = comparisons.unwrap_or(pairs.len());
            let tests = paired_t_bonferroni(&slices, Some(m)).map_err(|e| {
                CliError::validation(format!("paired t-test: {e}"))
            })?;
            let rows: Vec<Value> = pairs
                .iter()
                .zip(&tests)
                .map(|(&(i, j), t)| {
                    json!({
                        "a": vectors[i].system,
                        "b": vectors[j].system,
                        "t": t.t,
                        "df": t.df,
                        "mean_difference": t.mean_difference,
                        "p_value": t.p_value,
                        "p_adjusted": t.p_adjusted,
                        "significant": t.p_adjusted < *alpha,
                    })
                })
                .collect();
            let mut report = Report::new("stats ttest");
            report
                .config("in", file_name(input))
                .config("alpha", alpha)
                .config("baseline", baseline)
                .config("comparisons", m)
                .config("correction", "bonferroni, p * comparisons capped at 1");
            report.result("tests", rows);
            report.emit(out.as_deref())
        }
    }
}
