use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use regex::RegexBuilder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalize_text, Example, InferenceType, Turn};
use crate::seeded_rng;

/// Dataset a raw record comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Convosense,
    Comfact,
    Cicero,
    Reflect,
    #[default]
    Generic,
}

impl Source {
    pub fn name(self) -> &'static str {
        match self {
            Source::Convosense => "convosense",
            Source::Comfact => "comfact",
            Source::Cicero => "cicero",
            Source::Reflect => "reflect",
            Source::Generic => "generic",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "convosense" => Ok(Source::Convosense),
            "comfact" => Ok(Source::Comfact),
            "cicero" => Ok(Source::Cicero),
            "reflect" => Ok(Source::Reflect),
            "generic" => Ok(Source::Generic),
            _ => Err(Error::InvalidArgument(format!("unknown source {s:?}"))),
        }
    }
}

/// One utterance of a raw dialogue. `speaker` is absent for sources that
/// carry no speaker designations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawUtterance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    pub text: String,
}

/// A source-format record prior to normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub example_id: String,
    #[serde(default)]
    pub source: Source,
    pub utterances: Vec<RawUtterance>,
    pub label: String,
    pub inferences: Vec<String>,
}

impl RawRecord {
    /// Re-express a unified example as a raw record, using the participant
    /// letters as speaker names.
    pub fn from_example(example: &Example) -> Self {
        Self {
            example_id: example.example_id().to_string(),
            source: Source::Generic,
            utterances: example
                .dialogue()
                .iter()
                .map(|t| RawUtterance {
                    speaker: Some(t.participant().unwrap_or(t.speaker_tag()).to_string()),
                    text: t.text().to_string(),
                })
                .collect(),
            label: example.inference_type().name().to_string(),
            inferences: example.references().to_vec(),
        }
    }
}

/// Result of mapping a source label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeTarget {
    Canonical(InferenceType),
    Excluded,
}

/// Every source label known to the type-synthesis map, with its target.
/// Canonical type names map to themselves.
pub const SOURCE_LABELS: &[(&str, TypeTarget)] = {
    use InferenceType::*;
    use TypeTarget::{Canonical as C, Excluded as X};
    &[
        // temporal ordering without causation
        ("isBefore", X),
        ("isAfter", X),
        // effect family
        ("Causes", C(Effect)),
        ("xEffect", C(Effect)),
        ("oEffect", C(Effect)),
        ("SubsequentEvents", C(Effect)),
        ("SubsequentEvent", C(Effect)),
        ("Subsequent Events", C(Effect)),
        ("Subsequent Event", C(Effect)),
        ("Consequences", C(Effect)),
        ("Potential Consequences", C(Effect)),
        ("PotentialConsequences", C(Effect)),
        // cause family
        ("xReason", C(Cause)),
        ("Cause", C(Cause)),
        // prerequisite family
        ("xNeed", C(Prerequisite)),
        ("Prerequisites", C(Prerequisite)),
        ("Prerequisite", C(Prerequisite)),
        // one-to-one relabels
        ("xIntent", C(Motivation)),
        ("Motivation", C(Motivation)),
        ("xAttr", C(Attribute)),
        ("xReact", C(Reaction)),
        ("oReact", C(ReactionOther)),
        ("xWant", C(Desire)),
        ("oWant", C(DesireOther)),
        ("HasSubEvent", C(Constituents)),
        ("HinderedBy", C(Obstacle)),
        // canonical names
        ("Subsequent", C(Subsequent)),
        ("Antecedent", C(Antecedent)),
        ("Attribute", C(Attribute)),
        ("Reaction", C(Reaction)),
        ("Reaction_o", C(ReactionOther)),
        ("Desire", C(Desire)),
        ("Desire_o", C(DesireOther)),
        ("Constituents", C(Constituents)),
        ("Obstacle", C(Obstacle)),
        ("Effect", C(Effect)),
        ("Effect_s", C(EffectSpeaker)),
        ("Effect_o", C(EffectOther)),
    ]
};

/// Map a source inference label onto a canonical type, or `Excluded`.
pub fn map_type(label: &str) -> Result<TypeTarget> {
    let label = normalize_text(label);
    SOURCE_LABELS
        .iter()
        .find(|(name, _)| *name == label)
        .map(|(_, target)| *target)
        .ok_or(Error::UnknownSourceLabel(label))
}

const LETTERS: [&str; 2] = ["A", "B"];

/// Convert a raw record into a unified [`Example`].
///
/// Consecutive utterances by the same speaker are merged with a single
/// space. The terminal turn is tagged `Speaker`, its predecessor `Listener`,
/// alternating backwards, and the participant letter is appended as in
/// `Speaker (A)`. Records whose speakers are already `A`/`B` keep their
/// letters; named or anonymous participants receive letters from a PRNG
/// keyed by `seed` and the example id. When the original names are real
/// names, whole-word occurrences of the terminal speaker's name in the
/// inferences become `the speaker`.
pub fn normalize(raw: &RawRecord, seed: u64) -> Result<Example> {
    let id = raw.example_id.trim().to_string();
    let kind = match map_type(&raw.label)? {
        TypeTarget::Canonical(kind) => kind,
        TypeTarget::Excluded => return Err(Error::ExcludedType(normalize_text(&raw.label))),
    };
    let invalid = |reason: String| Error::InvalidExample {
        example_id: id.clone(),
        reason,
    };
    if raw.utterances.is_empty() {
        return Err(invalid("record has no utterances".into()));
    }

    let mut utterances = Vec::with_capacity(raw.utterances.len());
    for (i, u) in raw.utterances.iter().enumerate() {
        let text = normalize_text(&u.text);
        if text.is_empty() {
            return Err(invalid(format!("utterance {i} is empty")));
        }
        let speaker = u.speaker.as_deref().map(normalize_text);
        if speaker.as_deref() == Some("") {
            return Err(invalid(format!("utterance {i} has an empty speaker name")));
        }
        utterances.push((speaker, text));
    }

    let named = utterances.iter().filter(|(s, _)| s.is_some()).count();
    let mut rng = seeded_rng(seed, &id);
    let flip: bool = rng.gen();

    // (letter, original name) per utterance
    let mut speakers: Vec<(&'static str, Option<String>)> = Vec::with_capacity(utterances.len());
    let mut real_names = false;
    if named == 0 {
        // no designations: each utterance is its own turn
        let first = usize::from(flip);
        for i in 0..utterances.len() {
            speakers.push((LETTERS[(first + i) % 2], None));
        }
    } else if named == utterances.len() {
        let mut order: Vec<String> = Vec::new();
        for (s, _) in &utterances {
            let s = s.as_ref().expect("all named");
            if !order.contains(s) {
                order.push(s.clone());
            }
        }
        if order.len() > 2 {
            return Err(invalid(format!(
                "{} distinct speakers; dialogues must be dyadic",
                order.len()
            )));
        }
        let already_lettered = order.iter().all(|s| LETTERS.contains(&s.as_str()));
        for (s, _) in &utterances {
            let s = s.as_ref().expect("all named");
            let letter = if already_lettered {
                if s == "A" {
                    LETTERS[0]
                } else {
                    LETTERS[1]
                }
            } else {
                real_names = true;
                let pos = order.iter().position(|o| o == s).expect("collected");
                LETTERS[(pos + usize::from(flip)) % 2]
            };
            speakers.push((letter, Some(s.clone())));
        }
    } else {
        return Err(invalid("speaker names present on only some utterances".into()));
    }

    // merge consecutive same-speaker utterances
    let mut merged: Vec<(&'static str, Option<String>, String)> = Vec::new();
    for ((letter, name), (_, text)) in speakers.into_iter().zip(utterances) {
        match merged.last_mut() {
            Some((prev, _, prev_text)) if *prev == letter => {
                prev_text.push(' ');
                prev_text.push_str(&text);
            }
            _ => merged.push((letter, name, text)),
        }
    }

    let last = merged.len() - 1;
    let dialogue = merged
        .iter()
        .enumerate()
        .map(|(i, (letter, _, text))| {
            let role = if (last - i) % 2 == 0 { "Speaker" } else { "Listener" };
            Turn::new(&format!("{role} ({letter})"), text)
        })
        .collect::<Result<Vec<_>>>()?;

    let speaker_name = merged[last].1.clone().filter(|_| real_names);
    let references = raw
        .inferences
        .iter()
        .map(|inference| match &speaker_name {
            Some(name) => replace_name(inference, name),
            None => normalize_text(inference),
        })
        .collect();

    Example::new(&id, dialogue, kind, references)
}

/// Whole-word, case-insensitive replacement of `name` by `the speaker`.
/// Multi-word names match as a whole token sequence.
fn replace_name(text: &str, name: &str) -> String {
    let tokens: Vec<String> = name.split_whitespace().map(regex::escape).collect();
    if tokens.is_empty() {
        return normalize_text(text);
    }
    let pattern = format!(r"\b{}\b", tokens.join(r"\s+"));
    let re = RegexBuilder::new(&pattern)
        .case_insensitive(true)
        .build()
        .expect("escaped name is a valid pattern");
    normalize_text(&re.replace_all(&normalize_text(text), "the speaker"))
}

/// Labels found in a label list that the type map does not know.
pub fn unknown_labels<'a, I: IntoIterator<Item = &'a str>>(labels: I) -> BTreeSet<String> {
    labels
        .into_iter()
        .filter(|l| map_type(l).is_err())
        .map(str::to_string)
        .collect()
}
