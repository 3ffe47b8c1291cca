//! Decoding harness: beam search, diverse beam search and sampling over a
//! pluggable token scorer, a toy back-off n-gram model, and the numbered
//! list format used by polymorphic generators.

mod beam;
mod codec;
mod sampling;
mod scorer;

pub use beam::{apply_repetition_penalty, beam_search, diverse_beam_search, rank_cmp, BeamConfig, DiverseOutput, Hypothesis};
pub use codec::{format_polymorphic, parse_polymorphic, CodecWarning, Parsed};
pub use sampling::{sample_runs, sample_sequence, sample_token, SampleConfig};
pub use scorer::{detokenize, logsumexp, Conditioned, NgramLM, TokenScorer, END, START};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GenerationMode, GenerationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Beam,
    Dbs,
    Poly,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beam" => Ok(Self::Beam),
            "dbs" => Ok(Self::Dbs),
            "poly" => Ok(Self::Poly),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Where the runs of a polymorphic generator come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolySource {
    #[default]
    Sample,
    /// The top `runs` beam-search sequences, one per run.
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub beam: BeamConfig,
    pub runs: usize,
    pub temperature: f64,
    pub poly_source: PolySource,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Beam,
            beam: BeamConfig::default(),
            runs: 3,
            temperature: 1.0,
            poly_source: PolySource::Sample,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decoded {
    pub record: GenerationRecord,
    /// Sequences cut off at the length limit.
    pub forced: usize,
    pub warnings: Vec<String>,
}

fn non_empty(hyps: Vec<Hypothesis>, warnings: &mut Vec<String>) -> Vec<String> {
    let mut out = Vec::new();
    for h in hyps {
        if h.text.is_empty() {
            warnings.push("empty_sequence_dropped".into());
        } else {
            out.push(h.text);
        }
    }
    out
}

/// Decode one example and package the outputs as a generation record.
/// Sampling streams are keyed by `example_id`.
pub fn decode_example(scorer: &dyn TokenScorer, example_id: &str, config: &DecodeConfig) -> Result<Decoded> {
    config.beam.validate()?;
    let mut warnings = Vec::new();
    let (mode, runs, forced) = match config.strategy {
        Strategy::Beam => {
            let cfg = BeamConfig { groups: 1, ..config.beam.clone() };
            let hyps = beam_search(scorer, &cfg, cfg.beams)?;
            let forced = hyps.iter().filter(|h| h.forced).count();
            (GenerationMode::MonomorphicBeam, vec![non_empty(hyps, &mut warnings)], forced)
        }
        Strategy::Dbs => {
            let mut hyps = diverse_beam_search(scorer, &config.beam)?.ranked;
            hyps.truncate(config.beam.beams);
            let forced = hyps.iter().filter(|h| h.forced).count();
            (GenerationMode::MonomorphicDiverseBeam, vec![non_empty(hyps, &mut warnings)], forced)
        }
        Strategy::Poly => {
            let hyps = match config.poly_source {
                PolySource::Sample => {
                    let cfg = SampleConfig {
                        temperature: config.temperature,
                        repetition_penalty: config.beam.repetition_penalty,
                        max_len: config.beam.max_len,
                    };
                    sample_runs(scorer, &cfg, config.runs, config.seed, example_id)?
                }
                PolySource::Beam => {
                    let beams = config.beam.beams.max(config.runs);
                    let cfg = BeamConfig { groups: 1, beams, ..config.beam.clone() };
                    beam_search(scorer, &cfg, config.runs)?
                }
            };
            let forced = hyps.iter().filter(|h| h.forced).count();
            let mut runs = Vec::with_capacity(hyps.len());
            for h in hyps {
                match parse_polymorphic(&h.text) {
                    Ok(p) => {
                        warnings.extend(p.warnings.iter().map(|w| w.to_string()));
                        if p.items.is_empty() {
                            return Err(Error::UnparseableSequence);
                        }
                        runs.push(p.items);
                    }
                    Err(Error::UnparseableSequence) if !h.text.is_empty() => {
                        warnings.push("unparseable_sequence_kept_whole".into());
                        runs.push(vec![h.text]);
                    }
                    Err(e) => return Err(e),
                }
            }
            (GenerationMode::Polymorphic, runs, forced)
        }
    };
    if forced > 0 {
        warnings.push("max_len_without_end".into());
    }
    warnings.sort();
    warnings.dedup();
    Ok(Decoded {
        record: GenerationRecord {
            example_id: example_id.to_string(),
            mode,
            runs,
        },
        forced,
        warnings,
    })
}
