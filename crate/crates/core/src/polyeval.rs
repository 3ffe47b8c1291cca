//! The evaluation engine.
//!
//! An example's outputs are scored against its references through a score
//! matrix. The N-best score is the mean of a maximum one-to-one assignment
//! (bipartite matching) or the mean of per-output maxima (maximum
//! matching). It is then moderated by the coverage ratio
//! `|outputs| / |references|` and the corpus score weights each example by
//! its reference count:
//!
//! ```text
//! sum_e score_e * C_e * |refs_e|  /  sum_e |refs_e|
//! ```
//!
//! Top-1 evaluation instead averages the best single-output score per
//! example.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{mean_assigned, solve_max, ScoreMatrix};
use crate::dataio::accumulate_runs;
use crate::diversity::Clustering;
use crate::error::{Error, Result};
use crate::model::{EvalConfig, Example, GenerationSet, InferenceType, Matching, RunSetting, Selection};
use crate::textmetrics::{score_matrix, PairMetric, ScoreSource};

/// Mean score of the maximum one-to-one assignment.
pub fn polyagg_matrix(matrix: &ScoreMatrix) -> Result<f64> {
    let a = solve_max(matrix)?;
    Ok(mean_assigned(matrix, &a))
}

pub fn polyagg<S: AsRef<str>, T: AsRef<str>>(
    outputs: &[S],
    references: &[T],
    metric: &dyn PairMetric,
) -> Result<f64> {
    polyagg_matrix(&score_matrix(outputs, references, metric)?)
}

/// Coverage moderator `n_outs / n_refs`, clamped to 1 when `cap` is set.
pub fn coverage(n_outs: usize, n_refs: usize, cap: bool) -> f64 {
    assert!(n_refs >= 1, "coverage needs at least one reference");
    let c = n_outs as f64 / n_refs as f64;
    if cap {
        c.min(1.0)
    } else {
        c
    }
}

pub fn top1_select_matrix(matrix: &ScoreMatrix, selection: Selection) -> f64 {
    match selection {
        Selection::Maximum => matrix.max(),
        Selection::Order => matrix.row(0).iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Best single-output score: over all outputs (`Maximum`) or over the first
/// output only (`Order`).
pub fn top1_select<S: AsRef<str>, T: AsRef<str>>(
    outputs: &[S],
    references: &[T],
    metric: &dyn PairMetric,
    selection: Selection,
) -> Result<f64> {
    let outputs = match selection {
        Selection::Order => &outputs[..outputs.len().min(1)],
        Selection::Maximum => outputs,
    };
    Ok(top1_select_matrix(&score_matrix(outputs, references, metric)?, selection))
}

pub fn nbest_matrix(matrix: &ScoreMatrix, matching: Matching) -> Result<f64> {
    match matching {
        Matching::Bipartite => polyagg_matrix(matrix),
        Matching::Maximum => {
            let sum: f64 = (0..matrix.rows())
                .map(|r| matrix.row(r).iter().copied().fold(f64::NEG_INFINITY, f64::max))
                .sum();
            Ok(sum / matrix.rows() as f64)
        }
    }
}

pub fn nbest_score<S: AsRef<str>, T: AsRef<str>>(
    outputs: &[S],
    references: &[T],
    metric: &dyn PairMetric,
    matching: Matching,
) -> Result<f64> {
    nbest_matrix(&score_matrix(outputs, references, metric)?, matching)
}

/// Clusters x references matrix whose cell is the best member's score.
pub fn cluster_matrix(matrix: &ScoreMatrix, clusters: &[Vec<usize>]) -> Result<ScoreMatrix> {
    let mut data = Vec::with_capacity(clusters.len() * matrix.cols());
    for (k, members) in clusters.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::EmptyCluster(k));
        }
        for col in 0..matrix.cols() {
            let best = members
                .iter()
                .map(|&r| matrix.get(r, col))
                .fold(f64::NEG_INFINITY, f64::max);
            data.push(best);
        }
    }
    ScoreMatrix::new(clusters.len(), matrix.cols(), data)
}

/// N-best score when only one generation per cluster may be used, chosen
/// to maximize the score.
pub fn cluster_constrained_matrix(
    matrix: &ScoreMatrix,
    clusters: &[Vec<usize>],
    matching: Matching,
) -> Result<f64> {
    nbest_matrix(&cluster_matrix(matrix, clusters)?, matching)
}

pub fn cluster_constrained_score<S: AsRef<str>, T: AsRef<str>>(
    outputs: &[S],
    clustering: &Clustering,
    references: &[T],
    metric: &dyn PairMetric,
    matching: Matching,
) -> Result<f64> {
    clustering.check_partition(outputs.len())?;
    let m = score_matrix(outputs, references, metric)?;
    cluster_constrained_matrix(&m, clustering.clusters(), matching)
}

/// How per-example values are combined into a corpus score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Plain mean of the top-1 values.
    Top1Mean,
    /// Coverage-moderated, reference-weighted mean.
    ReferenceWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExampleScore {
    pub example_id: String,
    pub inference_type: InferenceType,
    /// Assignment (or selection) score before moderation.
    pub polyagg: f64,
    pub coverage: f64,
    pub n_refs: usize,
    pub n_outs: usize,
    pub weight: f64,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeScore {
    pub score: f64,
    pub n_examples: usize,
    pub n_refs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusScore {
    pub aggregation: Aggregation,
    /// Weighted over every example.
    pub overall: f64,
    /// Unweighted mean of the per-type scores.
    pub macro_over_types: f64,
    pub per_type: BTreeMap<InferenceType, TypeScore>,
    pub n_examples: usize,
    pub n_refs: usize,
    /// Per-example scores, sorted by example id.
    pub examples: Vec<ExampleScore>,
}

/// Everything a corpus evaluation reads besides configuration.
#[derive(Clone, Copy)]
pub struct CorpusInputs<'a> {
    pub examples: &'a [Example],
    pub generations: &'a HashMap<String, GenerationSet>,
    pub clusterings: Option<&'a HashMap<String, Clustering>>,
    /// Per-example output counts of a paired polymorphic model; monomorphic
    /// beams are cut to these sizes.
    pub paired_sizes: Option<&'a HashMap<String, usize>>,
    pub setting: RunSetting,
}

fn score_example(
    example: &Example,
    inputs: &CorpusInputs<'_>,
    config: &EvalConfig,
    source: ScoreSource<'_>,
) -> Result<ExampleScore> {
    let id = example.example_id();
    let g = inputs
        .generations
        .get(id)
        .ok_or_else(|| Error::MissingGenerations(id.to_string()))?;
    let paired = inputs.paired_sizes.and_then(|p| p.get(id).copied());
    let mut outputs = accumulate_runs(g, inputs.setting, paired)?;
    let refs = example.references();
    let n_refs = refs.len();

    if config.top_k == 1 {
        // monomorphic top-1 is the first beam; polymorphic keeps its list
        // and the selection rule decides
        let keep = if g.mode().is_polymorphic() && config.selection == Selection::Maximum {
            outputs.len()
        } else {
            1
        };
        outputs.truncate(keep);
        let m = source.matrix(id, &outputs, refs)?;
        let value = top1_select_matrix(&m, config.selection);
        return Ok(ExampleScore {
            example_id: id.to_string(),
            inference_type: example.inference_type(),
            polyagg: value,
            coverage: 1.0,
            n_refs,
            n_outs: outputs.len(),
            weight: 1.0,
            contribution: value,
        });
    }

    outputs.truncate(config.top_k);
    let m = source.matrix(id, &outputs, refs)?;
    let (value, n_outs) = if config.cluster_constrained {
        let clustering = inputs
            .clusterings
            .and_then(|c| c.get(id))
            .ok_or_else(|| Error::InvalidExample {
                example_id: id.to_string(),
                reason: "no clustering for cluster-constrained evaluation".into(),
            })?;
        let clusters = clustering.restricted_to(outputs.len());
        (cluster_constrained_matrix(&m, &clusters, config.matching)?, clusters.len())
    } else {
        (nbest_matrix(&m, config.matching)?, outputs.len())
    };
    let c = coverage(n_outs, n_refs, config.coverage_cap);
    Ok(ExampleScore {
        example_id: id.to_string(),
        inference_type: example.inference_type(),
        polyagg: value,
        coverage: c,
        n_refs,
        n_outs,
        weight: n_refs as f64,
        contribution: value * c * n_refs as f64,
    })
}

/// Reduce per-example scores; the sum runs in example-id order so the
/// result does not depend on input order.
pub fn aggregate(mut scores: Vec<ExampleScore>, aggregation: Aggregation) -> CorpusScore {
    scores.sort_by(|a, b| a.example_id.cmp(&b.example_id));
    let mut per_type: BTreeMap<InferenceType, (f64, f64, usize, usize)> = BTreeMap::new();
    let (mut num, mut den, mut n_refs) = (0.0, 0.0, 0usize);
    for s in &scores {
        num += s.contribution;
        den += s.weight;
        n_refs += s.n_refs;
        let t = per_type.entry(s.inference_type).or_default();
        t.0 += s.contribution;
        t.1 += s.weight;
        t.2 += 1;
        t.3 += s.n_refs;
    }
    let per_type: BTreeMap<InferenceType, TypeScore> = per_type
        .into_iter()
        .map(|(k, (num, den, n, r))| {
            (
                k,
                TypeScore {
                    score: num / den,
                    n_examples: n,
                    n_refs: r,
                },
            )
        })
        .collect();
    let macro_over_types = if per_type.is_empty() {
        0.0
    } else {
        per_type.values().map(|t| t.score).sum::<f64>() / per_type.len() as f64
    };
    CorpusScore {
        aggregation,
        overall: if den > 0.0 { num / den } else { 0.0 },
        macro_over_types,
        per_type,
        n_examples: scores.len(),
        n_refs,
        examples: scores,
    }
}

/// Score a corpus. With `top_k == 1` each example contributes its top-1
/// value to a plain mean; otherwise the reference-weighted, coverage-
/// moderated score over the first `top_k` outputs is computed.
pub fn corpus_score(
    inputs: &CorpusInputs<'_>,
    config: &EvalConfig,
    source: ScoreSource<'_>,
) -> Result<CorpusScore> {
    config.validate()?;
    let scores = inputs
        .examples
        .par_iter()
        .map(|e| score_example(e, inputs, config, source))
        .collect::<Result<Vec<_>>>()?;
    let aggregation = if config.top_k == 1 {
        Aggregation::Top1Mean
    } else {
        Aggregation::ReferenceWeighted
    };
    Ok(aggregate(scores, aggregation))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{GenerationMode, Turn};
    use crate::textmetrics::ExactMatch;

    fn strs(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn polyagg_perfect() {
        let items = ["a", "b", "c", "d"];
        assert_eq!(polyagg(&items, &items, &ExactMatch).unwrap(), 1.0);
    }

    #[test]
    fn polyagg_fixture() {
        let m = ScoreMatrix::from_rows(&[[0.9, 0.1, 0.2], [0.2, 0.8, 0.1]]).unwrap();
        assert!((polyagg_matrix(&m).unwrap() - 0.85).abs() < 1e-12);
        assert!((nbest_matrix(&m, Matching::Maximum).unwrap() - 0.85).abs() < 1e-12);
    }

    #[test]
    fn redundant_outputs() {
        let outs = ["r1"; 5];
        let refs = ["r1", "r2", "r3", "r4", "r5"];
        assert!((polyagg(&outs, &refs, &ExactMatch).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(nbest_score(&outs, &refs, &ExactMatch, Matching::Maximum).unwrap(), 1.0);
        assert!((nbest_score(&outs, &refs, &ExactMatch, Matching::Bipartite).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn coverage_values() {
        assert_eq!(coverage(5, 5, true), 1.0);
        assert_eq!(coverage(2, 5, true), 0.4);
        assert_eq!(coverage(7, 5, true), 1.0);
        assert_eq!(coverage(7, 5, false), 1.4);
    }

    #[test]
    fn top1_rules() {
        let refs = ["perfect", "other"];
        assert_eq!(top1_select(&["perfect"], &refs, &ExactMatch, Selection::Maximum).unwrap(), 1.0);
        assert_eq!(top1_select(&["perfect"], &refs, &ExactMatch, Selection::Order).unwrap(), 1.0);
        let outs = ["bad", "perfect"];
        assert_eq!(top1_select(&outs, &refs, &ExactMatch, Selection::Maximum).unwrap(), 1.0);
        assert_eq!(top1_select(&outs, &refs, &ExactMatch, Selection::Order).unwrap(), 0.0);
    }

    #[test]
    fn top1_order_on_polymorphic_sequence() {
        let items = crate::decode::parse_polymorphic("(1) a; (2) b").unwrap().items;
        assert_eq!(top1_select(&items, &["b"], &ExactMatch, Selection::Order).unwrap(), 0.0);
        assert_eq!(top1_select(&items, &["a"], &ExactMatch, Selection::Order).unwrap(), 1.0);
    }

    /// Enumerate one representative per cluster and every injective map.
    fn cluster_brute_force(m: &ScoreMatrix, clusters: &[Vec<usize>]) -> f64 {
        fn reps(clusters: &[Vec<usize>], k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if k == clusters.len() {
                out.push(cur.clone());
                return;
            }
            for &x in &clusters[k] {
                cur.push(x);
                reps(clusters, k + 1, cur, out);
                cur.pop();
            }
        }
        fn best_injective(m: &ScoreMatrix, rows: &[usize], i: usize, used: &mut [bool]) -> f64 {
            // rows <= cols assumed or handled by allowing skips below
            if i == rows.len() {
                return 0.0;
            }
            let mut best = f64::NEG_INFINITY;
            let free = used.iter().filter(|u| !**u).count();
            if rows.len() - i > free {
                // more rows than remaining columns: this row may go unmatched
                best = best.max(best_injective(m, rows, i + 1, used));
            }
            for c in 0..m.cols() {
                if !used[c] {
                    used[c] = true;
                    best = best.max(m.get(rows[i], c) + best_injective(m, rows, i + 1, used));
                    used[c] = false;
                }
            }
            best
        }
        let mut all = vec![];
        reps(clusters, 0, &mut vec![], &mut all);
        let k = clusters.len().min(m.cols()) as f64;
        all.iter()
            .map(|r| best_injective(m, r, 0, &mut vec![false; m.cols()]) / k)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn cluster_constrained_cases() {
        let outs = strs(&["x", "y", "z"]);
        let refs = strs(&["x", "y", "z"]);
        let singletons = Clustering::new("e", vec![vec![0], vec![1], vec![2]]).unwrap();
        for matching in [Matching::Bipartite, Matching::Maximum] {
            assert_eq!(
                cluster_constrained_score(&outs, &singletons, &refs, &ExactMatch, matching).unwrap(),
                nbest_score(&outs, &refs, &ExactMatch, matching).unwrap()
            );
        }
        let one = Clustering::new("e", vec![vec![0, 1, 2]]).unwrap();
        assert_eq!(
            cluster_constrained_score(&outs, &one, &refs, &ExactMatch, Matching::Bipartite).unwrap(),
            1.0
        );
        let two = Clustering::new("e", vec![vec![0, 1], vec![2]]).unwrap();
        let m = score_matrix(&outs, &refs, &ExactMatch).unwrap();
        let got = cluster_constrained_score(&outs, &two, &refs, &ExactMatch, Matching::Bipartite).unwrap();
        assert_eq!(got, cluster_brute_force(&m, two.clusters()));
        assert_eq!(got, 1.0);
    }

    #[test]
    fn cluster_constrained_matches_brute_force_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..300 {
            let n_out = rng.gen_range(1..=6);
            let n_ref = rng.gen_range(1..=4);
            let data: Vec<f64> = (0..n_out * n_ref).map(|_| rng.gen_range(0..5) as f64 / 4.0).collect();
            let m = ScoreMatrix::new(n_out, n_ref, data).unwrap();
            let n_clusters = rng.gen_range(1..=n_out.min(4));
            let mut clusters = vec![Vec::new(); n_clusters];
            for i in 0..n_out {
                let k = if i < n_clusters { i } else { rng.gen_range(0..n_clusters) };
                clusters[k].push(i);
            }
            let got = cluster_constrained_matrix(&m, &clusters, Matching::Bipartite).unwrap();
            assert!((got - cluster_brute_force(&m, &clusters)).abs() < 1e-12);
        }
    }

    fn example(id: &str, kind: InferenceType, refs: &[&str]) -> Example {
        Example::new(id, vec![Turn::new("Speaker (A)", "hello").unwrap()], kind, strs(refs)).unwrap()
    }

    fn gen(id: &str, mode: GenerationMode, outs: &[&str]) -> (String, GenerationSet) {
        (id.to_string(), GenerationSet::new(id, mode, vec![strs(outs)]).unwrap())
    }

    fn run(examples: &[Example], gens: &HashMap<String, GenerationSet>, config: &EvalConfig) -> CorpusScore {
        let inputs = CorpusInputs {
            examples,
            generations: gens,
            clusterings: None,
            paired_sizes: None,
            setting: RunSetting::LowN,
        };
        corpus_score(&inputs, config, ScoreSource::Pair(&ExactMatch)).unwrap()
    }

    #[test]
    fn reference_weighting() {
        // (polyagg, C, n_refs) = (1.0, 1.0, 2) and (0.5, 0.5, 4)
        let examples = vec![
            example("e1", InferenceType::Cause, &["a", "b"]),
            example("e2", InferenceType::Desire, &["p", "q", "r", "s"]),
        ];
        let gens: HashMap<_, _> = [
            gen("e1", GenerationMode::Polymorphic, &["a", "b"]),
            gen("e2", GenerationMode::Polymorphic, &["p", "x"]),
        ]
        .into_iter()
        .collect();
        let s = run(&examples, &gens, &EvalConfig::default());
        assert_eq!(s.examples[1].polyagg, 0.5);
        assert_eq!(s.examples[1].coverage, 0.5);
        assert_eq!(s.overall, 0.5);
        assert_eq!(s.per_type[&InferenceType::Cause].score, 1.0);
        assert_eq!(s.per_type[&InferenceType::Desire].score, 0.25);
        assert_eq!(s.macro_over_types, 0.625);
    }

    #[test]
    fn missing_generations() {
        let examples = vec![example("e1", InferenceType::Cause, &["a"])];
        let inputs = CorpusInputs {
            examples: &examples,
            generations: &HashMap::new(),
            clusterings: None,
            paired_sizes: None,
            setting: RunSetting::LowN,
        };
        assert_eq!(
            corpus_score(&inputs, &EvalConfig::default(), ScoreSource::Pair(&ExactMatch)),
            Err(Error::MissingGenerations("e1".into()))
        );
    }

    #[test]
    fn top1_corpus_uses_first_beam_for_monomorphic() {
        let examples = vec![example("e1", InferenceType::Cause, &["good"])];
        let gens: HashMap<_, _> = [gen("e1", GenerationMode::MonomorphicBeam, &["bad", "good"])].into_iter().collect();
        let config = EvalConfig {
            top_k: 1,
            ..EvalConfig::default()
        };
        let s = run(&examples, &gens, &config);
        assert_eq!(s.aggregation, Aggregation::Top1Mean);
        assert_eq!(s.overall, 0.0);
        let gens: HashMap<_, _> = [gen("e1", GenerationMode::Polymorphic, &["bad", "good"])].into_iter().collect();
        assert_eq!(run(&examples, &gens, &config).overall, 1.0);
        let order = EvalConfig {
            selection: Selection::Order,
            ..config
        };
        assert_eq!(run(&examples, &gens, &order).overall, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn words() -> impl Strategy<Value = Vec<String>> {
            prop::collection::vec("[a-e]", 1..7)
        }

        fn distinct_words() -> impl Strategy<Value = Vec<String>> {
            prop::collection::btree_set("[a-h]", 1..8).prop_map(|s| s.into_iter().collect())
        }

        proptest! {
            #[test]
            fn bipartite_never_exceeds_maximum(outs in words(), refs in distinct_words()) {
                prop_assume!(outs.len() <= refs.len());
                let b = nbest_score(&outs, &refs, &ExactMatch, Matching::Bipartite).unwrap();
                let m = nbest_score(&outs, &refs, &ExactMatch, Matching::Maximum).unwrap();
                prop_assert!(b <= m + 1e-12);
            }

            #[test]
            fn duplicate_output_never_helps(outs in words(), refs in distinct_words(), pick in any::<prop::sample::Index>()) {
                prop_assume!(outs.len() < refs.len());
                let mut dup = outs.clone();
                dup.push(outs[pick.index(outs.len())].clone());
                let before = nbest_score(&outs, &refs, &ExactMatch, Matching::Bipartite).unwrap();
                let after = nbest_score(&dup, &refs, &ExactMatch, Matching::Bipartite).unwrap();
                prop_assert!(after <= before + 1e-12);
                prop_assert_eq!(
                    top1_select(&outs, &refs, &ExactMatch, Selection::Maximum).unwrap(),
                    top1_select(&dup, &refs, &ExactMatch, Selection::Maximum).unwrap()
                );
            }

            #[test]
            fn corpus_bounded_and_order_invariant(
                items in prop::collection::vec((words(), words()), 1..6),
                seed in any::<u64>(),
            ) {
                use rand::{seq::SliceRandom, SeedableRng};
                let mut examples = Vec::new();
                let mut gens = HashMap::new();
                for (i, (outs, refs)) in items.iter().enumerate() {
                    let id = format!("e{i}");
                    let refs: Vec<&str> = refs.iter().map(String::as_str).collect();
                    let outs: Vec<&str> = outs.iter().map(String::as_str).collect();
                    examples.push(example(&id, InferenceType::ALL[i % 3], &refs));
                    gens.insert(id.clone(), GenerationSet::new(&id, GenerationMode::Polymorphic, vec![strs(&outs)]).unwrap());
                }
                let config = EvalConfig { top_k: 10, ..EvalConfig::default() };
                let a = run(&examples, &gens, &config);
                prop_assert!((0.0..=1.0).contains(&a.overall));
                examples.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let b = run(&examples, &gens, &config);
                prop_assert_eq!(a, b);
            }
        }
    }
}
