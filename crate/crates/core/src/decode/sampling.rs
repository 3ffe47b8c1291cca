use rand::Rng;
use serde::{Deserialize, Serialize};

use super::beam::{step_log_probs, Hypothesis};
use super::scorer::{detokenize, TokenScorer};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    pub temperature: f64,
    pub repetition_penalty: f64,
    pub max_len: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            repetition_penalty: 1.0,
            max_len: 32,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        if !(self.repetition_penalty >= 1.0 && self.repetition_penalty.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "repetition penalty must be >= 1, got {}",
                self.repetition_penalty
            )));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidArgument("max_len must be at least 1".into()));
        }
        Ok(())
    }
}

/// Draw a token id from log-probabilities scaled by `1 / temperature`,
/// by inverting the cumulative distribution in id order with one uniform
/// draw.
pub fn sample_token(log_probs: &[f64], temperature: f64, rng: &mut impl Rng) -> usize {
    let scaled: Vec<f64> = log_probs.iter().map(|l| l / temperature).collect();
    let m = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|s| (s - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// One ancestral sample. The score is the log-probability under the
/// (repetition-penalized) model, not the tempered one.
pub fn sample_sequence(scorer: &dyn TokenScorer, config: &SampleConfig, rng: &mut impl Rng) -> Result<Hypothesis> {
    config.validate()?;
    let end = scorer.end_id();
    let mut tokens = Vec::new();
    let mut score = 0.0;
    loop {
        let lp = step_log_probs(scorer, &tokens, config.repetition_penalty)?;
        let t = sample_token(&lp, config.temperature, rng);
        score += lp[t];
        tokens.push(t);
        if t == end || tokens.len() >= config.max_len {
            let forced = t != end;
            return Ok(Hypothesis {
                text: detokenize(scorer, &tokens),
                normalized: score / tokens.len() as f64,
                tokens,
                score,
                forced,
            });
        }
    }
}

/// `runs` independent samples; run `r` draws from the stream keyed by
/// `seed`, `key` and `r`.
pub fn sample_runs(
    scorer: &dyn TokenScorer,
    config: &SampleConfig,
    runs: usize,
    seed: u64,
    key: &str,
) -> Result<Vec<Hypothesis>> {
    if runs == 0 {
        return Err(Error::InvalidArgument("runs must be at least 1".into()));
    }
    (0..runs)
        .map(|r| {
            let mut rng = crate::seeded_rng(seed, &format!("sample/{key}/{r}"));
            sample_sequence(scorer, config, &mut rng)
        })
        .collect()
}
