#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polyeval_core::dataio::{read_jsonl_path, text_key, write_jsonl, EmbeddingRecord};
use polyeval_core::{ExampleRecord, GenerationRecord};

pub const EMBED_DIM: usize = 16;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn golden_dir() -> PathBuf {
    fixtures().join("golden")
}

pub fn polyeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyeval"))
        .args(args)
        .env_remove("POLYEVAL_THREADS")
        .output()
        .expect("spawn polyeval")
}

/// Run and require exit 0.
pub fn ok(args: &[&str]) {
    let out = polyeval(args);
    assert!(
        out.status.success(),
        "polyeval {args:?} exited {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

fn bucket(feature: &str) -> usize {
    let k = text_key(feature);
    usize::from_str_radix(&k[..8], 16).unwrap() % EMBED_DIM
}

/// Hashed bag of words: unigram counts plus half-weighted bigrams. All
/// weights are positive, so no vector is zero.
pub fn hashed_embedding(text: &str) -> Vec<f64> {
    let w = words(text);
    let mut v = vec![0.0; EMBED_DIM];
    for t in &w {
        v[bucket(t)] += 1.0;
    }
    for pair in w.windows(2) {
        v[bucket(&format!("{} {}", pair[0], pair[1]))] += 0.5;
    }
    if v.iter().all(|x| *x == 0.0) {
        v[bucket(text)] = 1.0;
    }
    v
}

/// Embeddings for every reference and every generated output in `dir`.
pub fn write_embeddings(dir: &Path, out: &Path) {
    let mut texts = BTreeSet::new();
    let examples: Vec<ExampleRecord> = read_jsonl_path(&dir.join("examples.jsonl")).unwrap();
    for e in &examples {
        texts.extend(e.references.iter().cloned());
    }
    for f in ["gen_poly.jsonl", "gen_beam.jsonl", "gen_dbs.jsonl"] {
        let gens: Vec<GenerationRecord> = read_jsonl_path(&dir.join(f)).unwrap();
        for g in gens {
            texts.extend(g.runs.into_iter().flatten());
        }
    }
    let records: Vec<EmbeddingRecord> = texts
        .into_iter()
        .map(|t| EmbeddingRecord {
            key: None,
            vector: hashed_embedding(&t),
            text: Some(t),
        })
        .collect();
    write_jsonl(fs::File::create(out).unwrap(), &records).unwrap();
}

/// normalize and decode.
pub fn stage_generate(dir: &Path) {
    let fx = fixtures();
    let raw = fx.join("raw.jsonl");
    let ex = dir.join("examples.jsonl");
    ok(&["normalize", "--in", s(&raw), "--out", s(&ex), "--seed", "3", "--report", s(&dir.join("normalize.json"))]);
    let poly = fx.join("poly.lm");
    let mono = fx.join("mono.lm");
    ok(&[
        "decode", "--lm", s(&poly), "--strategy", "poly", "--runs", "3", "--seed", "7",
        "--examples", s(&ex), "--out", s(&dir.join("gen_poly.jsonl")), "--report", s(&dir.join("decode_poly.json")),
        "--threads", "2",
    ]);
    ok(&[
        "decode", "--lm", s(&mono), "--strategy", "beam", "--examples", s(&ex),
        "--out", s(&dir.join("gen_beam.jsonl")), "--report", s(&dir.join("decode_beam.json")),
    ]);
    ok(&[
        "decode", "--lm", s(&mono), "--strategy", "dbs", "--groups", "5", "--penalty", "0.5", "--examples", s(&ex),
        "--out", s(&dir.join("gen_dbs.jsonl")), "--report", s(&dir.join("decode_dbs.json")),
    ]);
}

/// diversity, the eval variants and datastats.
pub fn stage_evaluate(dir: &Path, embeddings: &Path) {
    let ex = dir.join("examples.jsonl");
    let poly = dir.join("gen_poly.jsonl");
    let beam = dir.join("gen_beam.jsonl");
    let dbs = dir.join("gen_dbs.jsonl");
    let clusters = dir.join("clusters.jsonl");
    let r = |name: &str| dir.join(name);
    ok(&[
        "diversity", "--generations", s(&poly), "--embeddings", s(embeddings), "--setting", "high_n",
        "--examples", s(&ex), "--clusters-out", s(&clusters), "--report", s(&r("diversity.json")),
    ]);
    let base = ["eval", "--examples", s(&ex)];
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("eval_top1_maximum.json", vec!["--generations", s(&poly), "--top-k", "1", "--selection", "maximum"]),
        ("eval_top1_order.json", vec!["--generations", s(&poly), "--top-k", "1", "--selection", "order"]),
        ("eval_top1_beam.json", vec!["--generations", s(&beam), "--top-k", "1"]),
        ("eval_top5_bipartite.json", vec!["--generations", s(&poly), "--setting", "high_n", "--matching", "bipartite"]),
        ("eval_top5_maximum.json", vec!["--generations", s(&poly), "--setting", "high_n", "--matching", "maximum"]),
        (
            "eval_top5_cluster.json",
            vec!["--generations", s(&poly), "--setting", "high_n", "--clusters", s(&clusters), "--cluster-constrained"],
        ),
        ("eval_top5_uncapped.json", vec!["--generations", s(&poly), "--setting", "high_n", "--uncapped"]),
        (
            "eval_beam_paired.json",
            vec!["--generations", s(&beam), "--pair-with", s(&poly), "--setting", "high_n", "--top-k", "10"],
        ),
        ("eval_dbs_top5.json", vec!["--generations", s(&dbs)]),
        (
            "eval_embed.json",
            vec!["--generations", s(&poly), "--metric", "embed", "--embeddings", s(embeddings), "--threads", "3"],
        ),
    ];
    for (name, extra) in runs {
        let report = r(name);
        let mut args: Vec<&str> = base.to_vec();
        args.extend(extra);
        args.extend(["--report", s(&report)]);
        ok(&args);
    }
    ok(&["datastats", "--examples", s(&ex), "--report", s(&r("datastats.json"))]);
}

pub fn run_pipeline(dir: &Path, embeddings: &Path) {
    stage_generate(dir);
    stage_evaluate(dir, embeddings);
}

/// Every file under the golden directory, sorted by name.
pub fn golden_files() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(golden_dir())
        .map(|d| {
            d.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    names
}
