//! Diversity measurement: semantic clustering of outputs, B-cubed
//! comparison against reference clusterings, cluster statistics, and
//! n-gram uniqueness statistics of inference corpora.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::dataio::EmbeddingStore;
use crate::error::{Error, Result};
use crate::model::{Example, InferenceType};
use crate::textmetrics::{embed_cosine, tokenize};

/// A partition of an example's output indices into semantic groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clustering {
    pub example_id: String,
    clusters: Vec<Vec<usize>>,
}

impl Clustering {
    /// Clusters must be nonempty and pairwise disjoint. Members are sorted
    /// within each cluster; cluster order is kept.
    pub fn new(example_id: &str, clusters: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut clean = Vec::with_capacity(clusters.len());
        for (k, mut members) in clusters.into_iter().enumerate() {
            if members.is_empty() {
                return Err(Error::EmptyCluster(k));
            }
            members.sort_unstable();
            for &m in &members {
                if !seen.insert(m) {
                    return Err(Error::NotAPartition(format!(
                        "example {example_id}: index {m} appears twice"
                    )));
                }
            }
            clean.push(members);
        }
        Ok(Self {
            example_id: example_id.to_string(),
            clusters: clean,
        })
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn items(&self) -> BTreeSet<usize> {
        self.clusters.iter().flatten().copied().collect()
    }

    /// Check that the clusters cover exactly `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let items = self.items();
        if items.len() != n || items.iter().next_back().is_some_and(|&m| m >= n) {
            return Err(Error::NotAPartition(format!(
                "example {}: clusters cover {} indices, expected 0..{n}",
                self.example_id,
                items.len()
            )));
        }
        Ok(())
    }

    /// Clusters restricted to indices below `n`, dropping emptied clusters.
    pub fn restricted_to(&self, n: usize) -> Vec<Vec<usize>> {
        self.clusters
            .iter()
            .map(|c| c.iter().copied().filter(|&i| i < n).collect::<Vec<_>>())
            .filter(|c| !c.is_empty())
            .collect()
    }

    /// Number of clusters with exactly one member.
    pub fn singletons(&self) -> usize {
        self.clusters.iter().filter(|c| c.len() == 1).count()
    }
}

/// One line of a clusters file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub example_id: String,
    pub clusters: Vec<Vec<usize>>,
}

impl TryFrom<ClusterRecord> for Clustering {
    type Error = Error;

    fn try_from(r: ClusterRecord) -> Result<Self> {
        Clustering::new(r.example_id.trim(), r.clusters)
    }
}

pub const DEFAULT_TAU: f64 = 0.8;

/// Scan outputs in order; each joins the first cluster holding a member
/// with cosine similarity at least `tau`, or opens a new cluster.
pub fn cluster_greedy<S: AsRef<str>>(
    example_id: &str,
    outputs: &[S],
    store: &EmbeddingStore,
    tau: f64,
) -> Result<Clustering> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, o) in outputs.iter().enumerate() {
        let mut home = None;
        'clusters: for (k, members) in clusters.iter().enumerate() {
            for &j in members {
                let sim = embed_cosine(o.as_ref(), outputs[j].as_ref(), store)
                    .map_err(|e| e.with_example(example_id))?;
                if sim >= tau {
                    home = Some(k);
                    break 'clusters;
                }
            }
        }
        match home {
            Some(k) => clusters[k].push(i),
            None => {
                // still resolve the embedding so missing vectors fail loudly
                store.lookup(o.as_ref()).map_err(|e| e.with_example(example_id))?;
                clusters.push(vec![i]);
            }
        }
    }
    Clustering::new(example_id, clusters)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BCubed {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Element-averaged B-cubed precision, recall and F1 of `predicted`
/// against `gold`.
pub fn bcubed(predicted: &Clustering, gold: &Clustering) -> Result<BCubed> {
    let items = predicted.items();
    if items != gold.items() {
        return Err(Error::IndexSetMismatch);
    }
    if items.is_empty() {
        return Err(Error::InvalidArgument("clusterings are empty".into()));
    }
    let owner = |c: &Clustering| -> HashMap<usize, usize> {
        c.clusters()
            .iter()
            .enumerate()
            .flat_map(|(k, m)| m.iter().map(move |&i| (i, k)))
            .collect()
    };
    let (p_of, g_of) = (owner(predicted), owner(gold));
    let (mut p_sum, mut r_sum) = (0.0, 0.0);
    for i in &items {
        let pc = &predicted.clusters()[p_of[i]];
        let gc = &gold.clusters()[g_of[i]];
        let overlap = pc.iter().filter(|x| g_of[x] == g_of[i]).count() as f64;
        p_sum += overlap / pc.len() as f64;
        r_sum += overlap / gc.len() as f64;
    }
    let n = items.len() as f64;
    let (precision, recall) = (p_sum / n, r_sum / n);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(BCubed {
        precision,
        recall,
        f1,
    })
}

/// Cluster statistics over a set of clustered output lists.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiversityReport {
    pub examples: usize,
    pub avg_outputs: f64,
    pub avg_clusters: f64,
    /// Mean per-example percentage of outputs that form a cluster alone.
    pub pct_unique: f64,
    pub avg_words: f64,
}

pub fn diversity_report<S: AsRef<str>>(items: &[(&[S], &Clustering)]) -> DiversityReport {
    if items.is_empty() {
        return DiversityReport {
            examples: 0,
            avg_outputs: 0.0,
            avg_clusters: 0.0,
            pct_unique: 0.0,
            avg_words: 0.0,
        };
    }
    let n = items.len() as f64;
    let (mut outs, mut clusters, mut unique, mut words, mut total) = (0.0, 0.0, 0.0, 0usize, 0usize);
    for (outputs, clustering) in items {
        outs += outputs.len() as f64;
        clusters += clustering.len() as f64;
        unique += 100.0 * clustering.singletons() as f64 / outputs.len().max(1) as f64;
        for o in outputs.iter() {
            words += tokenize(o.as_ref()).len();
            total += 1;
        }
    }
    DiversityReport {
        examples: items.len(),
        avg_outputs: outs / n,
        avg_clusters: clusters / n,
        pct_unique: unique / n,
        avg_words: if total > 0 { words as f64 / total as f64 } else { 0.0 },
    }
}

/// Corpus statistics for one inference type (or macro-averaged overall).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessStats {
    pub examples: usize,
    /// Examples with at least two inferences; the only ones entering the
    /// within-example percentages.
    pub poly_examples: usize,
    pub words: f64,
    pub inferences_mean: f64,
    pub inferences_min: usize,
    pub inferences_max: usize,
    pub u1_count: f64,
    pub u2_count: f64,
    pub u1_pct: Option<f64>,
    pub u2_pct: Option<f64>,
    pub ul_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub per_type: BTreeMap<InferenceType, UniquenessStats>,
    pub overall: UniquenessStats,
}

fn ngram_types(tokens: &[String], n: usize) -> HashSet<Vec<String>> {
    if tokens.len() < n {
        return HashSet::new();
    }
    tokens.windows(n).map(<[String]>::to_vec).collect()
}

/// Percentage of the example's n-gram types that occur in exactly one of
/// its inferences; `None` when the example has no n-grams of this order.
fn within_example_unique(inferences: &[Vec<String>], n: usize) -> Option<f64> {
    let mut occurs: HashMap<Vec<String>, usize> = HashMap::new();
    for tokens in inferences {
        for g in ngram_types(tokens, n) {
            *occurs.entry(g).or_insert(0) += 1;
        }
    }
    if occurs.is_empty() {
        return None;
    }
    let once = occurs.values().filter(|&&c| c == 1).count();
    Some(100.0 * once as f64 / occurs.len() as f64)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn type_stats(examples: &[&Example]) -> UniquenessStats {
    let mut u1_types = HashSet::new();
    let mut u2_types = HashSet::new();
    let mut distinct = HashSet::new();
    let (mut total, mut words) = (0usize, 0usize);
    let (mut u1, mut u2) = (Vec::new(), Vec::new());
    let mut poly = 0;
    let counts: Vec<usize> = examples.iter().map(|e| e.references().len()).collect();
    for e in examples {
        let toks: Vec<Vec<String>> = e.references().iter().map(|r| tokenize(r)).collect();
        for (r, t) in e.references().iter().zip(&toks) {
            u1_types.extend(ngram_types(t, 1));
            u2_types.extend(ngram_types(t, 2));
            distinct.insert(r.as_str());
            words += t.len();
            total += 1;
        }
        if toks.len() >= 2 {
            poly += 1;
            u1.extend(within_example_unique(&toks, 1));
            u2.extend(within_example_unique(&toks, 2));
        }
    }
    UniquenessStats {
        examples: examples.len(),
        poly_examples: poly,
        words: words as f64 / total.max(1) as f64,
        inferences_mean: total as f64 / examples.len().max(1) as f64,
        inferences_min: counts.iter().copied().min().unwrap_or(0),
        inferences_max: counts.iter().copied().max().unwrap_or(0),
        u1_count: u1_types.len() as f64,
        u2_count: u2_types.len() as f64,
        u1_pct: mean(&u1),
        u2_pct: mean(&u2),
        ul_pct: 100.0 * distinct.len() as f64 / total.max(1) as f64,
    }
}

/// Unigram/bigram uniqueness and size statistics per inference type, with
/// an overall row macro-averaged across types (example counts summed).
pub fn ngram_uniqueness(examples: &[Example]) -> UniquenessReport {
    let groups = crate::model::group_by_type(examples);
    let per_type: BTreeMap<InferenceType, UniquenessStats> =
        groups.iter().map(|(k, v)| (*k, type_stats(v))).collect();
    let stats: Vec<&UniquenessStats> = per_type.values().collect();
    let avg = |f: &dyn Fn(&UniquenessStats) -> f64| mean(&stats.iter().map(|s| f(s)).collect::<Vec<_>>()).unwrap_or(0.0);
    let avg_opt = |f: &dyn Fn(&UniquenessStats) -> Option<f64>| {
        mean(&stats.iter().filter_map(|s| f(s)).collect::<Vec<_>>())
    };
    let overall = UniquenessStats {
        examples: stats.iter().map(|s| s.examples).sum(),
        poly_examples: stats.iter().map(|s| s.poly_examples).sum(),
        words: avg(&|s| s.words),
        inferences_mean: avg(&|s| s.inferences_mean),
        inferences_min: stats.iter().map(|s| s.inferences_min).min().unwrap_or(0),
        inferences_max: stats.iter().map(|s| s.inferences_max).max().unwrap_or(0),
        u1_count: avg(&|s| s.u1_count),
        u2_count: avg(&|s| s.u2_count),
        u1_pct: avg_opt(&|s| s.u1_pct),
        u2_pct: avg_opt(&|s| s.u2_pct),
        ul_pct: avg(&|s| s.ul_pct),
    };
    UniquenessReport { per_type, overall }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::EmbeddingRecord;
    use crate::model::Turn;

    fn part(clusters: &[&[usize]]) -> Clustering {
        Clustering::new("e", clusters.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn bcubed_identity() {
        let x = part(&[&[0, 1], &[2]]);
        let b = bcubed(&x, &x).unwrap();
        assert_eq!((b.precision, b.recall, b.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn bcubed_one_cluster_vs_singletons() {
        let b = bcubed(&part(&[&[0, 1, 2, 3]]), &part(&[&[0], &[1], &[2], &[3]])).unwrap();
        assert!(close(b.precision, 0.25) && close(b.recall, 1.0) && close(b.f1, 0.4));
    }

    #[test]
    fn bcubed_mixed() {
        let b = bcubed(&part(&[&[0, 1], &[2, 3]]), &part(&[&[0, 1, 2], &[3]])).unwrap();
        assert!(close(b.precision, 0.75));
        assert!(close(b.recall, (2.0 / 3.0 + 2.0 / 3.0 + 1.0 / 3.0 + 1.0) / 4.0));
        let f1 = 2.0 * 0.75 * (2.0 / 3.0) / (0.75 + 2.0 / 3.0);
        assert!(close(b.f1, f1));
        assert!((b.f1 - 0.706).abs() < 1e-3);
    }

    #[test]
    fn bcubed_mismatch() {
        assert_eq!(
            bcubed(&part(&[&[0, 1]]), &part(&[&[0], &[2]])),
            Err(Error::IndexSetMismatch)
        );
    }

    #[test]
    fn partition_checks() {
        assert_eq!(Clustering::new("e", vec![vec![0], vec![]]), Err(Error::EmptyCluster(1)));
        assert!(Clustering::new("e", vec![vec![0, 1], vec![1]]).is_err());
        assert!(part(&[&[0, 2]]).check_partition(3).is_err());
        assert!(part(&[&[0, 2], &[1]]).check_partition(3).is_ok());
        assert_eq!(part(&[&[0, 4], &[5], &[1]]).restricted_to(3), vec![vec![0], vec![1]]);
    }

    fn store(items: &[(&str, [f64; 2])]) -> EmbeddingStore {
        EmbeddingStore::from_records(items.iter().map(|(t, v)| EmbeddingRecord {
            key: None,
            text: Some(t.to_string()),
            vector: v.to_vec(),
        }))
        .unwrap()
    }

    fn unit(deg: f64) -> [f64; 2] {
        let r = deg.to_radians();
        [r.cos(), r.sin()]
    }

    #[test]
    fn greedy_fully_diverse_and_redundant() {
        let s = store(&[("a", unit(0.0)), ("b", unit(60.0)), ("c", unit(120.0))]);
        let c = cluster_greedy("e", &["a", "b", "c"], &s, 0.8).unwrap();
        assert_eq!(c.len(), 3);
        let c = cluster_greedy("e", &["a", "a", "a"], &s, 0.8).unwrap();
        assert_eq!(c.clusters(), [vec![0, 1, 2]]);
    }

    #[test]
    fn greedy_fixture() {
        // cos(0,2) = cos 20deg = 0.940; cos(0,1) = cos 50deg = 0.643;
        // cos(1,2) = cos 30deg = 0.866 but 1 opens its own cluster first,
        // and 2 joins the first cluster containing a close member (cluster 0);
        // item 3 at 140deg is far from everything
        let s = store(&[("o0", unit(0.0)), ("o1", unit(50.0)), ("o2", unit(20.0)), ("o3", unit(140.0))]);
        let c = cluster_greedy("e", &["o0", "o1", "o2", "o3"], &s, 0.8).unwrap();
        assert_eq!(c.clusters(), [vec![0, 2], vec![1], vec![3]]);
    }

    #[test]
    fn greedy_errors() {
        let s = store(&[("a", unit(0.0))]);
        assert!(matches!(
            cluster_greedy("e", &["a", "zzz"], &s, 0.8),
            Err(Error::MissingEmbedding { example_id: Some(id), .. }) if id == "e"
        ));
        assert!(cluster_greedy("e", &["a"], &s, 1.0).is_err());
    }

    fn ex(id: &str, kind: InferenceType, refs: &[&str]) -> Example {
        Example::new(
            id,
            vec![Turn::new("Speaker (A)", "hi").unwrap()],
            kind,
            refs.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn uniqueness_fixtures() {
        let r = ngram_uniqueness(&[ex("1", InferenceType::Cause, &["a b", "c d"])]);
        assert_eq!(r.per_type[&InferenceType::Cause].u1_pct, Some(100.0));

        let r = ngram_uniqueness(&[ex("1", InferenceType::Cause, &["a b", "a b"])]);
        let s = &r.per_type[&InferenceType::Cause];
        assert_eq!(s.u1_pct, Some(0.0));
        assert_eq!(s.ul_pct, 50.0);

        let r = ngram_uniqueness(&[ex("1", InferenceType::Cause, &["a b c", "a b d"])]);
        let s = &r.per_type[&InferenceType::Cause];
        assert_eq!(s.u1_pct, Some(50.0));
        assert_eq!(s.u1_count, 4.0);
        // bigrams {a b, b c, b d}: "a b" shared
        assert!((s.u2_pct.unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniqueness_macro_overall() {
        let r = ngram_uniqueness(&[
            ex("1", InferenceType::Cause, &["a b", "a b"]),
            ex("2", InferenceType::Desire, &["x y z"]),
            ex("3", InferenceType::Desire, &["x", "y"]),
        ]);
        let d = &r.per_type[&InferenceType::Desire];
        assert_eq!(d.examples, 2);
        assert_eq!(d.poly_examples, 1);
        assert_eq!(d.inferences_mean, 1.5);
        assert_eq!((d.inferences_min, d.inferences_max), (1, 2));
        assert_eq!(d.words, 5.0 / 3.0);
        assert_eq!(d.u2_pct, None);
        assert_eq!(r.overall.examples, 3);
        assert_eq!(r.overall.ul_pct, (50.0 + 100.0) / 2.0);
        assert_eq!(r.overall.u1_pct, Some(50.0));
    }

    #[test]
    fn diversity_stats() {
        let outs = ["a b", "c", "d e f"];
        let c = part(&[&[0, 1], &[2]]);
        let r = diversity_report(&[(&outs[..], &c)]);
        assert_eq!(r.avg_clusters, 2.0);
        assert!((r.pct_unique - 100.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.avg_words, 2.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn partition(max: usize) -> impl Strategy<Value = Clustering> {
            (1..=max).prop_flat_map(|n| {
                prop::collection::vec(0..n, n).prop_map(move |labels| {
                    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                    for (i, l) in labels.into_iter().enumerate() {
                        groups.entry(l).or_default().push(i);
                    }
                    Clustering::new("p", groups.into_values().collect()).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn bcubed_reflexive(x in partition(12)) {
                let b = bcubed(&x, &x).unwrap();
                prop_assert_eq!((b.precision, b.recall, b.f1), (1.0, 1.0, 1.0));
            }

            #[test]
            fn singleton_prediction_has_full_precision(x in partition(12)) {
                let singles = Clustering::new("p", x.items().into_iter().map(|i| vec![i]).collect()).unwrap();
                prop_assert_eq!(bcubed(&singles, &x).unwrap().precision, 1.0);
            }

            #[test]
            fn greedy_is_partition_and_monotone(
                angles in prop::collection::vec(0.0f64..360.0, 1..10),
                t1 in 0.05f64..0.95,
                t2 in 0.05f64..0.95,
            ) {
                let texts: Vec<String> = (0..angles.len()).map(|i| format!("t{i}")).collect();
                let s = EmbeddingStore::from_records(texts.iter().zip(&angles).map(|(t, a)| EmbeddingRecord {
                    key: None,
                    text: Some(t.clone()),
                    vector: unit(*a).to_vec(),
                })).unwrap();
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let a = cluster_greedy("e", &texts, &s, lo).unwrap();
                let b = cluster_greedy("e", &texts, &s, hi).unwrap();
                prop_assert!(a.check_partition(texts.len()).is_ok());
                prop_assert!(b.check_partition(texts.len()).is_ok());
                prop_assert!(a.len() <= b.len());
                prop_assert_eq!(a, cluster_greedy("e", &texts, &s, lo).unwrap());
            }

            #[test]
            fn ul_full_iff_distinct(refs in prop::collection::vec("[ab]{1,2}", 1..6)) {
                let refs_s: Vec<&str> = refs.iter().map(String::as_str).collect();
                let r = ngram_uniqueness(&[ex("1", InferenceType::Cause, &refs_s)]);
                let distinct = refs.iter().collect::<HashSet<_>>().len() == refs.len();
                prop_assert_eq!(r.per_type[&InferenceType::Cause].ul_pct == 100.0, distinct);
            }
        }
    }
}
