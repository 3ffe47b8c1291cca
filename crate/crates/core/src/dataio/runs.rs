use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::model::{GenerationSet, RunSetting};

const HIGH_N_RUNS: usize = 3;

/// Flatten a generation set into the output list evaluated for one example.
///
/// Polymorphic sets use run 1 (`LowN`) or runs 1-3 concatenated and
/// deduplicated in order (`HighN`). Monomorphic sets use their first run
/// (the ranked beams); when `paired_size` gives the size of the matching
/// polymorphic output list, only that many leading beams are kept.
pub fn accumulate_runs(
    g: &GenerationSet,
    setting: RunSetting,
    paired_size: Option<usize>,
) -> Result<Vec<String>> {
    let runs = g.runs();
    if g.mode().is_polymorphic() {
        let needed = match setting {
            RunSetting::LowN => 1,
            RunSetting::HighN => HIGH_N_RUNS,
        };
        if runs.len() < needed {
            return Err(Error::InsufficientRuns {
                example_id: g.example_id().to_string(),
                needed,
                available: runs.len(),
            });
        }
        let mut seen = HashSet::new();
        Ok(runs[..needed]
            .iter()
            .flatten()
            .filter(|o| seen.insert(o.as_str()))
            .cloned()
            .collect())
    } else {
        let beams = &runs[0];
        let k = paired_size.map_or(beams.len(), |k| k.min(beams.len()));
        Ok(beams[..k].to_vec())
    }
}
