mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use common::*;
use polyeval_core::dataio::read_jsonl_path;
use polyeval_core::diversity::ClusterRecord;
use polyeval_core::stats::{mcnemar_counts, resolve_and_repeat, PairedJudgment};
use serde_json::Value;
use statrs::distribution::{ChiSquared, ContinuousCDF, StudentsT};

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stderr(out: &std::process::Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn missing_examples_file_exits_2_and_names_path() {
    let fx = fixtures();
    let missing = fx.join("does_not_exist.jsonl");
    let out = polyeval(&["eval", "--examples", p(&missing), "--generations", p(&fx.join("raw.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("does_not_exist.jsonl"), "{}", stderr(&out));
}

#[test]
fn malformed_line_seven_exits_1_and_names_line() {
    let dir = tempfile::tempdir().unwrap();
    let raw = fs::read_to_string(fixtures().join("raw.jsonl")).unwrap();
    let mut lines: Vec<&str> = raw.lines().collect();
    lines[6] = "{\"example_id\": \"e07\", \"utterances\": [";
    let bad = dir.path().join("raw.jsonl");
    fs::write(&bad, lines.join("\n")).unwrap();
    let out = polyeval(&["normalize", "--in", p(&bad), "--out", p(&dir.path().join("ex.jsonl"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 7"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(polyeval(&["eval"]).status.code(), Some(1));
    assert_eq!(polyeval(&["no-such-command"]).status.code(), Some(1));
    let help = polyeval(&["--help"]);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for cmd in ["normalize", "eval", "diversity", "datastats", "stats", "decode"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    let eval_help = polyeval(&["eval", "--help"]);
    let text = String::from_utf8_lossy(&eval_help.stdout);
    assert!(text.contains("example_id"), "file formats missing from eval --help");
}

#[test]
fn validation_errors_carry_example_context() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ex = d.join("ex.jsonl");
    ok(&["normalize", "--in", p(&fixtures().join("raw.jsonl")), "--out", p(&ex), "--seed", "3"]);
    let gens = d.join("gen.jsonl");
    fs::write(&gens, "{\"example_id\": \"e02\", \"mode\": \"polymorphic\", \"runs\": [[]]}\n").unwrap();
    let out = polyeval(&["eval", "--examples", p(&ex), "--generations", p(&gens)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("e02"), "{}", stderr(&out));
}

fn pipeline_reports(threads: Option<&str>) -> BTreeMap<String, Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let ex = d.join("examples.jsonl");
    let gen = d.join("gen.jsonl");
    let mut args = vec![];
    if let Some(t) = threads {
        args.extend(["--threads", t]);
    }
    let with = |extra: &[&str]| {
        let mut a = args.clone();
        a.extend(extra);
        ok(&a);
    };
    with(&["normalize", "--in", p(&fixtures().join("raw.jsonl")), "--out", p(&ex), "--seed", "3"]);
    with(&[
        "decode", "--lm", p(&fixtures().join("poly.lm")), "--strategy", "poly", "--seed", "11",
        "--examples", p(&ex), "--out", p(&gen), "--report", p(&d.join("decode.json")),
    ]);
    with(&[
        "eval", "--examples", p(&ex), "--generations", p(&gen), "--setting", "high_n",
        "--report", p(&d.join("eval.json")),
    ]);
    let mut out = BTreeMap::new();
    for name in ["examples.jsonl", "gen.jsonl", "decode.json", "eval.json"] {
        out.insert(name.to_string(), fs::read(d.join(name)).unwrap());
    }
    out
}

#[test]
fn reruns_and_thread_counts_give_identical_bytes() {
    let one = pipeline_reports(Some("1"));
    assert_eq!(one, pipeline_reports(Some("4")));
    assert_eq!(one, pipeline_reports(None));
}

#[test]
fn threads_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let ex = dir.path().join("ex.jsonl");
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_polyeval"))
        .args(["normalize", "--in", p(&fixtures().join("raw.jsonl")), "--out", p(&ex)])
        .env("POLYEVAL_THREADS", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_polyeval"))
        .args(["normalize", "--in", p(&fixtures().join("raw.jsonl")), "--out", p(&ex)])
        .env("POLYEVAL_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success());
}

#[test]
fn report_goes_to_stdout_without_report_flag() {
    let out = polyeval(&["datastats", "--examples", p(&golden_dir().join("examples.jsonl"))]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "datastats");
    assert_eq!(v["tool"], "polyeval");
}

#[test]
fn mcnemar_report_is_byte_identical_and_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let input = fixtures().join("annotations.jsonl");
    let mut reports = Vec::new();
    for i in 0..2 {
        let r = dir.path().join(format!("m{i}.json"));
        ok(&["stats", "mcnemar", "--in", p(&input), "--seed", "5", "--report", p(&r)]);
        reports.push(fs::read(&r).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let v: Value = serde_json::from_slice(&reports[0]).unwrap();
    let res = &v["results"]["resolution"];
    assert_eq!(res["disagreements"], 3);
    assert_eq!(res["repeats"], 100);

    // q1..q6 reasonability judgments as (annotator A, annotator B)
    let items = [
        ((true, true), (true, false)),
        ((true, true), (false, false)),
        ((false, true), (true, true)),
        ((true, true), (true, true)),
        ((false, false), (false, true)),
        ((true, true), (false, false)),
    ]
    .map(|(x, y)| PairedJudgment { x, y });
    let lib = resolve_and_repeat(&items, 100, 5, 0.05).unwrap();
    assert_eq!(res["significant_repeats"], lib.significant_repeats);
    assert_eq!(res["significant"], lib.significant);

    let other = dir.path().join("other.json");
    ok(&["stats", "mcnemar", "--in", p(&input), "--seed", "6", "--report", p(&other)]);
    let w = read_json(&other);
    assert_eq!(w["config"]["seed"], 6);
}

#[test]
fn agree_reports_both_tasks() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("agree.json");
    ok(&["stats", "agree", "--in", p(&fixtures().join("annotations.jsonl")), "--report", p(&r)]);
    let v = read_json(&r);
    let tasks = &v["results"]["tasks"];
    // system X: both positive on q1 q2 q4 q6, only B positive on q3, neither on q5
    let x = &tasks["reasonability"]["X"]["contingency"];
    assert_eq!((x["a"].as_u64(), x["b"].as_u64(), x["c"].as_u64(), x["d"].as_u64()), (Some(4), Some(0), Some(1), Some(1)));
    assert!(tasks["novelty"]["X"]["gwet_ac1"].is_number());
}

#[test]
fn prop_matches_statrs() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("prop.json");
    ok(&["stats", "prop", "--in", p(&fixtures().join("proportions.jsonl")), "--report", p(&r)]);
    let v = read_json(&r);
    let stat = v["results"]["statistic"].as_f64().unwrap();
    // Pearson statistic by hand: pooled rate 158/300
    let pooled = 158.0 / 300.0;
    let mut expect = 0.0;
    for s in [62.0, 45.0, 51.0] {
        for (obs, e) in [(s, 100.0 * pooled), (100.0 - s, 100.0 * (1.0 - pooled))] {
            expect += (obs - e) * (obs - e) / e;
        }
    }
    assert!((stat - expect).abs() < 1e-6, "{stat} vs {expect}");
    let oracle = 1.0 - ChiSquared::new(2.0).unwrap().cdf(expect);
    assert!((v["results"]["p_value"].as_f64().unwrap() - oracle).abs() < 1e-7);
}

#[test]
fn ttest_matches_statrs_with_bonferroni() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("t.json");
    ok(&[
        "stats", "ttest", "--in", p(&fixtures().join("scores.jsonl")), "--baseline", "poly", "--report", p(&r),
    ]);
    let v = read_json(&r);
    let tests = v["results"]["tests"].as_array().unwrap();
    assert_eq!(tests.len(), 2);
    let poly = [0.28, 0.41, 0.22, 0.47, 0.30, 0.39, 0.31, 0.36];
    let beam = [0.21, 0.35, 0.18, 0.40, 0.27, 0.33, 0.25, 0.30];
    let d: Vec<f64> = poly.iter().zip(beam).map(|(a, b)| a - b).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let t = mean / (sd / n.sqrt());
    let pv = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, n - 1.0).unwrap().cdf(t.abs()));
    let row = &tests[0];
    assert_eq!(row["b"], "beam");
    assert!((row["t"].as_f64().unwrap() - t).abs() < 1e-6);
    assert!((row["p_value"].as_f64().unwrap() - pv).abs() < 1e-7);
    assert!((row["p_adjusted"].as_f64().unwrap() - (2.0 * pv).min(1.0)).abs() < 1e-7);
}

#[test]
fn mcnemar_counts_match_statrs() {
    let m = mcnemar_counts(10, 2, 40).unwrap();
    let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(64.0 / 12.0);
    assert!((m.p_value - oracle).abs() < 1e-9);
}

#[test]
fn diversity_against_gold_clusters() {
    let g = golden_dir();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let computed: Vec<ClusterRecord> = read_jsonl_path(&g.join("clusters.jsonl")).unwrap();
    // gold: every output a singleton, so precision is 1 and recall is the
    // per-element mean of 1/|cluster|
    let gold: Vec<ClusterRecord> = computed
        .iter()
        .map(|c| {
            let mut all: Vec<usize> = c.clusters.iter().flatten().copied().collect();
            all.sort();
            ClusterRecord {
                example_id: c.example_id.clone(),
                clusters: all.into_iter().map(|i| vec![i]).collect(),
            }
        })
        .collect();
    let gold_path = d.join("gold.jsonl");
    polyeval_core::dataio::write_jsonl(fs::File::create(&gold_path).unwrap(), &gold).unwrap();
    let r = d.join("div.json");
    ok(&[
        "diversity", "--generations", p(&g.join("gen_poly.jsonl")), "--embeddings",
        p(&fixtures().join("embeddings.jsonl")), "--setting", "high_n", "--gold-clusters", p(&gold_path),
        "--report", p(&r),
    ]);
    let v = read_json(&r);
    let b = &v["results"]["bcubed"];
    assert_eq!(b["n_examples"].as_u64().unwrap() as usize, computed.len());
    // predicted vs singleton gold: recall 1, precision = mean 1/|cluster|
    let mut expect_p = 0.0;
    for c in &computed {
        let n: usize = c.clusters.iter().map(Vec::len).sum();
        expect_p += c.clusters.len() as f64 / n as f64;
    }
    expect_p /= computed.len() as f64;
    assert!((b["recall"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((b["precision"].as_f64().unwrap() - expect_p).abs() < 1e-8);
}

#[test]
fn report_echoes_defaults() {
    let g = golden_dir();
    let v = read_json(&g.join("eval_top5_bipartite.json"));
    let c = &v["config"];
    for key in ["top_k", "selection", "matching", "coverage_cap", "setting", "seed", "metric", "report_scale"] {
        assert!(!c[key].is_null(), "config lacks {key}");
    }
    assert_eq!(v["results"]["aggregation"], "reference_weighted");
    let raw = v["results"]["raw"]["overall"].as_f64().unwrap();
    let scaled = v["results"]["overall"].as_f64().unwrap();
    assert!((raw * 100.0 - scaled).abs() < 1e-6);
}
