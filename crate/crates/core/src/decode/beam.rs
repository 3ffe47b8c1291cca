use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::scorer::{detokenize, logsumexp, TokenScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beams: usize,
    pub groups: usize,
    pub diversity_penalty: f64,
    pub repetition_penalty: f64,
    /// Maximum generated tokens, counting the end token.
    pub max_len: usize,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            beams: 10,
            groups: 1,
            diversity_penalty: 0.0,
            repetition_penalty: 1.0,
            max_len: 32,
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.beams == 0 || self.groups == 0 {
            return bad("beams and groups must be at least 1".into());
        }
        if self.beams % self.groups != 0 {
            return bad(format!("beams ({}) must be divisible by groups ({})", self.beams, self.groups));
        }
        if !(self.diversity_penalty >= 0.0 && self.diversity_penalty.is_finite()) {
            return bad(format!("diversity penalty must be >= 0, got {}", self.diversity_penalty));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return bad(format!("repetition penalty must be >= 1, got {}", self.repetition_penalty));
        }
        if self.max_len == 0 {
            return bad("max_len must be at least 1".into());
        }
        Ok(())
    }

    pub fn group_width(&self) -> usize {
        self.beams / self.groups
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hypothesis {
    /// Token ids, including the end token unless `forced`.
    pub tokens: Vec<usize>,
    pub text: String,
    /// Cumulative log-probability.
    pub score: f64,
    /// `score / tokens.len()`.
    pub normalized: f64,
    /// Cut off at `max_len` without producing the end token.
    pub forced: bool,
}

/// Penalize tokens already in `history`: positive log-scores are divided by
/// `penalty`, negative ones multiplied.
pub fn apply_repetition_penalty(logits: &[f64], history: &[usize], penalty: f64) -> Vec<f64> {
    let mut out = logits.to_vec();
    if penalty == 1.0 {
        return out;
    }
    let seen: HashSet<usize> = history.iter().copied().collect();
    for t in seen {
        if let Some(x) = out.get_mut(t) {
            *x = if *x > 0.0 { *x / penalty } else { *x * penalty };
        }
    }
    out
}

/// Scorer log-probabilities after the repetition penalty, renormalized.
pub(crate) fn step_log_probs(scorer: &dyn TokenScorer, prefix: &[usize], penalty: f64) -> Result<Vec<f64>> {
    let lp = scorer.log_probs(prefix)?;
    if lp.len() != scorer.vocab().len() || lp.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::LanguageModel("scorer returned an invalid distribution".into()));
    }
    if penalty == 1.0 {
        return Ok(lp);
    }
    let lp = apply_repetition_penalty(&lp, prefix, penalty);
    let z = logsumexp(&lp);
    if z == f64::NEG_INFINITY {
        return Err(Error::LanguageModel("distribution has no support".into()));
    }
    Ok(lp.into_iter().map(|x| x - z).collect())
}

/// Ranking order: higher normalized score first, then token ids
/// lexicographically.
pub fn rank_cmp(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.normalized.total_cmp(&a.normalized).then_with(|| a.tokens.cmp(&b.tokens))
}

#[derive(Debug, Clone)]
struct Partial {
    tokens: Vec<usize>,
    score: f64,
}

struct Candidate {
    tokens: Vec<usize>,
    score: f64,
    selection: f64,
}

fn finish(scorer: &dyn TokenScorer, tokens: Vec<usize>, score: f64, forced: bool) -> Hypothesis {
    let normalized = score / tokens.len() as f64;
    Hypothesis {
        text: detokenize(scorer, &tokens),
        tokens,
        score,
        normalized,
        forced,
    }
}

/// State of one beam group.
struct Group {
    alive: Vec<Partial>,
    finished: Vec<Hypothesis>,
}

impl Group {
    fn new() -> Self {
        Self {
            alive: vec![Partial {
                tokens: Vec::new(),
                score: 0.0,
            }],
            finished: Vec::new(),
        }
    }

    /// Extend every live hypothesis by one token and keep the best `width`
    /// candidates under the penalized selection score. Returns the last
    /// tokens of the selected candidates.
    fn step(
        &mut self,
        scorer: &dyn TokenScorer,
        config: &BeamConfig,
        width: usize,
        penalty_counts: &HashMap<usize, usize>,
    ) -> Result<Vec<usize>> {
        let end = scorer.end_id();
        let mut candidates = Vec::new();
        for p in &self.alive {
            let lp = step_log_probs(scorer, &p.tokens, config.repetition_penalty)?;
            for (t, &l) in lp.iter().enumerate() {
                if l == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = p.tokens.clone();
                tokens.push(t);
                let score = p.score + l;
                let hits = penalty_counts.get(&t).copied().unwrap_or(0) as f64;
                candidates.push(Candidate {
                    tokens,
                    score,
                    selection: score - config.diversity_penalty * hits,
                });
            }
        }
        candidates.sort_by(|a, b| b.selection.total_cmp(&a.selection).then_with(|| a.tokens.cmp(&b.tokens)));
        candidates.truncate(width);
        let mut chosen = Vec::with_capacity(candidates.len());
        self.alive.clear();
        for c in candidates {
            let last = *c.tokens.last().expect("candidate has a token");
            chosen.push(last);
            if last == end {
                self.finished.push(finish(scorer, c.tokens, c.score, false));
            } else if c.tokens.len() >= config.max_len {
                self.finished.push(finish(scorer, c.tokens, c.score, true));
            } else {
                self.alive.push(Partial {
                    tokens: c.tokens,
                    score: c.score,
                });
            }
        }
        Ok(chosen)
    }

    fn into_ranked(mut self, width: usize) -> Vec<Hypothesis> {
        self.finished.sort_by(rank_cmp);
        self.finished.truncate(width);
        self.finished
    }
}

/// Result of diverse beam search: each group's beams and the merged
/// ranking with duplicate sequences removed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiverseOutput {
    pub groups: Vec<Vec<Hypothesis>>,
    pub ranked: Vec<Hypothesis>,
}

/// Groups advance one token at a time in order; at each step group `g`
/// selects with scores lowered by `diversity_penalty` times the number of
/// times each token was chosen at that step by groups before `g`.
/// Hypothesis scores stay unpenalized.
pub fn diverse_beam_search(scorer: &dyn TokenScorer, config: &BeamConfig) -> Result<DiverseOutput> {
    config.validate()?;
    let width = config.group_width();
    let mut groups: Vec<Group> = (0..config.groups).map(|_| Group::new()).collect();
    for _ in 0..config.max_len {
        if groups.iter().all(|g| g.alive.is_empty()) {
            break;
        }
        let mut counts: HashMap<usize, usize> = HashMap::new();
        for g in groups.iter_mut() {
            if g.alive.is_empty() {
                continue;
            }
            for t in g.step(scorer, config, width, &counts)? {
                *counts.entry(t).or_insert(0) += 1;
            }
        }
    }
    let groups: Vec<Vec<Hypothesis>> = groups.into_iter().map(|g| g.into_ranked(width)).collect();
    let mut all: Vec<Hypothesis> = groups.iter().flatten().cloned().collect();
    all.sort_by(rank_cmp);
    all.dedup_by(|a, b| a.tokens == b.tokens);
    Ok(DiverseOutput { groups, ranked: all })
}

/// Standard beam search: top `k` finished hypotheses by length-normalized
/// log-probability. `config.groups` must be 1.
pub fn beam_search(scorer: &dyn TokenScorer, config: &BeamConfig, k: usize) -> Result<Vec<Hypothesis>> {
    if config.groups != 1 {
        return Err(Error::InvalidArgument("beam_search expects a single group".into()));
    }
    if k > config.beams {
        return Err(Error::InvalidArgument(format!("k ({k}) exceeds beams ({})", config.beams)));
    }
    let mut out = diverse_beam_search(scorer, config)?.ranked;
    out.truncate(k);
    Ok(out)
}
