//! Domain model shared by every other module: dialogues, inference types,
//! evaluation examples, generation sets and evaluation configuration.
//!
//! All types are immutable once constructed. Texts are whitespace- and
//! NFC-normalized on the way in (see [`normalize_text`]); case is preserved.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

/// Trim, collapse internal whitespace runs to one space, and apply Unicode NFC.
pub fn normalize_text(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    for word in nfc.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// One dialogue turn, e.g. `Speaker (A): fine thanks`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Turn {
    speaker_tag: String,
    text: String,
}

impl Turn {
    pub fn new(speaker_tag: &str, text: &str) -> Result<Self> {
        let speaker_tag = normalize_text(speaker_tag);
        let text = normalize_text(text);
        if speaker_tag.is_empty() {
            return Err(Error::InvalidArgument("turn has an empty speaker tag".into()));
        }
        if text.is_empty() {
            return Err(Error::InvalidArgument("turn has empty text".into()));
        }
        Ok(Self { speaker_tag, text })
    }

    pub fn speaker_tag(&self) -> &str {
        &self.speaker_tag
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Participant letter inside the tag, `"A"` for `"Speaker (A)"`.
    pub fn participant(&self) -> Option<&str> {
        let open = self.speaker_tag.rfind('(')?;
        let close = self.speaker_tag.rfind(')')?;
        (close > open + 1).then(|| &self.speaker_tag[open + 1..close])
    }
}

impl fmt::Display for Turn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.speaker_tag, self.text)
    }
}

/// The fifteen canonical inference types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InferenceType {
    Subsequent,
    Antecedent,
    Cause,
    Prerequisite,
    Motivation,
    Attribute,
    Reaction,
    #[serde(rename = "Reaction_o")]
    ReactionOther,
    Desire,
    #[serde(rename = "Desire_o")]
    DesireOther,
    Constituents,
    Obstacle,
    Effect,
    #[serde(rename = "Effect_s")]
    EffectSpeaker,
    #[serde(rename = "Effect_o")]
    EffectOther,
}

impl InferenceType {
    pub const ALL: [InferenceType; 15] = [
        InferenceType::Subsequent,
        InferenceType::Antecedent,
        InferenceType::Cause,
        InferenceType::Prerequisite,
        InferenceType::Motivation,
        InferenceType::Attribute,
        InferenceType::Reaction,
        InferenceType::ReactionOther,
        InferenceType::Desire,
        InferenceType::DesireOther,
        InferenceType::Constituents,
        InferenceType::Obstacle,
        InferenceType::Effect,
        InferenceType::EffectSpeaker,
        InferenceType::EffectOther,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InferenceType::Subsequent => "Subsequent",
            InferenceType::Antecedent => "Antecedent",
            InferenceType::Cause => "Cause",
            InferenceType::Prerequisite => "Prerequisite",
            InferenceType::Motivation => "Motivation",
            InferenceType::Attribute => "Attribute",
            InferenceType::Reaction => "Reaction",
            InferenceType::ReactionOther => "Reaction_o",
            InferenceType::Desire => "Desire",
            InferenceType::DesireOther => "Desire_o",
            InferenceType::Constituents => "Constituents",
            InferenceType::Obstacle => "Obstacle",
            InferenceType::Effect => "Effect",
            InferenceType::EffectSpeaker => "Effect_s",
            InferenceType::EffectOther => "Effect_o",
        }
    }

    /// The guiding question and answer prefix for this type.
    pub fn templates(self) -> (&'static str, &'static str) {
        match self {
            InferenceType::Subsequent => (
                "What might happen after what Speaker just said?",
                "After this, ...",
            ),
            InferenceType::Antecedent => (
                "What events happened before the situation that Speaker just shared?",
                "Before this, ...",
            ),
            InferenceType::Cause => (
                "What could have caused the last thing said to happen?",
                "This was caused by...",
            ),
            InferenceType::Prerequisite => (
                "What prerequisites are required for the last thing said to occur?",
                "For this to happen, it must be true that...",
            ),
            InferenceType::Motivation => (
                "What is an emotion or human drive that motivates Speaker based on what they just said?",
                "Speaker is motivated...",
            ),
            InferenceType::Attribute => (
                "What is a likely characteristic of Speaker based on what they just said?",
                "Speaker is...",
            ),
            InferenceType::Reaction => (
                "How is Speaker feeling after what they just said?",
                "Speaker feels...",
            ),
            InferenceType::ReactionOther => (
                "How does Listener feel because of what Speaker just said?",
                "Listener feels...",
            ),
            InferenceType::Desire => (
                "What does Speaker want to do next?",
                "As a result, Speaker wants...",
            ),
            InferenceType::DesireOther => (
                "What will Listener want to do next based on what Speaker just said?",
                "As a result, Listener wants...",
            ),
            InferenceType::Constituents => (
                "What is a breakdown of the last thing said into a series of required subevents?",
                "This involves...",
            ),
            InferenceType::Obstacle => (
                "What would cause the last thing said to be untrue or unsuccessful?",
                "This is untrue or unsuccessful if...",
            ),
            InferenceType::Effect => (
                "What does the last thing said cause to happen?",
                "This causes...",
            ),
            InferenceType::EffectSpeaker => (
                "How does the last thing said affect Speaker?",
                "This causes Speaker to...",
            ),
            InferenceType::EffectOther => (
                "How does the last thing said affect Listener?",
                "This causes Listener to...",
            ),
        }
    }

    pub fn question(self) -> &'static str {
        self.templates().0
    }

    pub fn answer_prefix(self) -> &'static str {
        self.templates().1
    }

    /// The ten types covered by the GPT-generated corpus.
    pub fn is_convosense_core(self) -> bool {
        matches!(
            self,
            InferenceType::Subsequent
                | InferenceType::Cause
                | InferenceType::Prerequisite
                | InferenceType::Motivation
                | InferenceType::Attribute
                | InferenceType::Reaction
                | InferenceType::ReactionOther
                | InferenceType::Desire
                | InferenceType::DesireOther
                | InferenceType::Constituents
        )
    }

    /// Reverse lookup from a (question, answer prefix) pair.
    pub fn from_templates(question: &str, answer_prefix: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.templates() == (question, answer_prefix))
    }
}

impl fmt::Display for InferenceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InferenceType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownInferenceType {
                example_id: String::new(),
                label: s.to_string(),
            })
    }
}

/// Question and answer prefix for an inference type.
pub fn question_for(kind: InferenceType) -> (&'static str, &'static str) {
    kind.templates()
}

/// One dialogue turn as stored in the unified JSONL format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub speaker: String,
    pub text: String,
}

/// One line of the unified examples file, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub example_id: String,
    pub dialogue: Vec<TurnRecord>,
    #[serde(rename = "type")]
    pub inference_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer_prefix: Option<String>,
    pub references: Vec<String>,
}

/// A validated evaluation unit. The inference target is always the final turn.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    example_id: String,
    dialogue: Vec<Turn>,
    inference_type: InferenceType,
    references: Vec<String>,
}

impl Example {
    pub fn new(
        example_id: &str,
        dialogue: Vec<Turn>,
        inference_type: InferenceType,
        references: Vec<String>,
    ) -> Result<Self> {
        let example_id = example_id.trim().to_string();
        if example_id.is_empty() {
            return Err(Error::InvalidExample {
                example_id,
                reason: "empty example_id".into(),
            });
        }
        if dialogue.is_empty() {
            return Err(Error::InvalidExample {
                example_id,
                reason: "dialogue has no turns".into(),
            });
        }
        for (index, pair) in dialogue.windows(2).enumerate() {
            if pair[0].speaker_tag == pair[1].speaker_tag {
                return Err(Error::ConsecutiveSameSpeaker {
                    example_id,
                    index,
                    tag: pair[0].speaker_tag.clone(),
                });
            }
        }
        let references: Vec<String> = references.iter().map(|r| normalize_text(r)).collect();
        if references.is_empty() {
            return Err(Error::EmptyReferences { example_id });
        }
        if let Some(pos) = references.iter().position(String::is_empty) {
            return Err(Error::InvalidExample {
                example_id,
                reason: format!("reference {pos} is empty"),
            });
        }
        Ok(Self {
            example_id,
            dialogue,
            inference_type,
            references,
        })
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn dialogue(&self) -> &[Turn] {
        &self.dialogue
    }

    pub fn target_index(&self) -> usize {
        self.dialogue.len() - 1
    }

    pub fn target(&self) -> &Turn {
        &self.dialogue[self.target_index()]
    }

    pub fn inference_type(&self) -> InferenceType {
        self.inference_type
    }

    pub fn references(&self) -> &[String] {
        &self.references
    }

    pub fn to_record(&self) -> ExampleRecord {
        let (question, answer_prefix) = self.inference_type.templates();
        ExampleRecord {
            example_id: self.example_id.clone(),
            dialogue: self
                .dialogue
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker_tag.clone(),
                    text: t.text.clone(),
                })
                .collect(),
            inference_type: self.inference_type.name().to_string(),
            question: Some(question.to_string()),
            answer_prefix: Some(answer_prefix.to_string()),
            references: self.references.clone(),
        }
    }

    /// Canonical single-line JSON with sorted keys.
    pub fn to_canonical_json(&self) -> String {
        canonical_json(&self.to_record())
    }
}

/// Serialize through `serde_json::Value`, whose maps are key-sorted.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("record types serialize");
    serde_json::to_string(&value).expect("values serialize")
}

/// Validate a decoded unified record into an [`Example`].
pub fn validate_example(raw: &ExampleRecord) -> Result<Example> {
    let id = raw.example_id.trim();
    let kind: InferenceType =
        raw.inference_type
            .parse()
            .map_err(|_| Error::UnknownInferenceType {
                example_id: id.to_string(),
                label: raw.inference_type.clone(),
            })?;
    let (question, prefix) = kind.templates();
    let mismatch = |field: &str, got: &str, want: &str| Error::InvalidExample {
        example_id: id.to_string(),
        reason: format!("{field} {got:?} does not match the {kind} template {want:?}"),
    };
    if let Some(q) = &raw.question {
        if normalize_text(q) != question {
            return Err(mismatch("question", q, question));
        }
    }
    if let Some(a) = &raw.answer_prefix {
        if normalize_text(a) != prefix {
            return Err(mismatch("answer_prefix", a, prefix));
        }
    }
    let dialogue = raw
        .dialogue
        .iter()
        .enumerate()
        .map(|(i, t)| {
            Turn::new(&t.speaker, &t.text).map_err(|e| Error::InvalidExample {
                example_id: id.to_string(),
                reason: format!("turn {i}: {e}"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Example::new(id, dialogue, kind, raw.references.clone())
}

/// How a generation set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenerationMode {
    MonomorphicBeam,
    MonomorphicDiverseBeam,
    Polymorphic,
}

impl GenerationMode {
    pub fn name(self) -> &'static str {
        match self {
            GenerationMode::MonomorphicBeam => "monomorphic_beam",
            GenerationMode::MonomorphicDiverseBeam => "monomorphic_diverse_beam",
            GenerationMode::Polymorphic => "polymorphic",
        }
    }

    pub fn is_polymorphic(self) -> bool {
        self == GenerationMode::Polymorphic
    }
}

/// One line of a generations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub example_id: String,
    pub mode: GenerationMode,
    pub runs: Vec<Vec<String>>,
}

/// A model's outputs for one example, possibly across several runs.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationSet {
    example_id: String,
    mode: GenerationMode,
    runs: Vec<Vec<String>>,
    dropped_duplicates: usize,
}

impl GenerationSet {
    /// Normalizes every output and drops duplicates within each run,
    /// keeping the first occurrence.
    pub fn new(example_id: &str, mode: GenerationMode, runs: Vec<Vec<String>>) -> Result<Self> {
        let example_id = example_id.trim().to_string();
        if runs.is_empty() {
            return Err(Error::InvalidExample {
                example_id,
                reason: "generation set has no runs".into(),
            });
        }
        let mut dropped = 0;
        let mut clean_runs = Vec::with_capacity(runs.len());
        for (r, run) in runs.into_iter().enumerate() {
            let mut seen = HashSet::new();
            let mut clean = Vec::with_capacity(run.len());
            for output in run {
                let output = normalize_text(&output);
                if output.is_empty() {
                    return Err(Error::InvalidExample {
                        example_id,
                        reason: format!("run {r} contains an empty output"),
                    });
                }
                if seen.insert(output.clone()) {
                    clean.push(output);
                } else {
                    dropped += 1;
                }
            }
            if clean.is_empty() {
                return Err(Error::InvalidExample {
                    example_id,
                    reason: format!("run {r} is empty"),
                });
            }
            clean_runs.push(clean);
        }
        Ok(Self {
            example_id,
            mode,
            runs: clean_runs,
            dropped_duplicates: dropped,
        })
    }

    pub fn from_record(record: &GenerationRecord) -> Result<Self> {
        Self::new(&record.example_id, record.mode, record.runs.clone())
    }

    pub fn to_record(&self) -> GenerationRecord {
        GenerationRecord {
            example_id: self.example_id.clone(),
            mode: self.mode,
            runs: self.runs.clone(),
        }
    }

    pub fn example_id(&self) -> &str {
        &self.example_id
    }

    pub fn mode(&self) -> GenerationMode {
        self.mode
    }

    pub fn runs(&self) -> &[Vec<String>] {
        &self.runs
    }

    /// Number of duplicate outputs removed at construction.
    pub fn dropped_duplicates(&self) -> usize {
        self.dropped_duplicates
    }
}

/// Top-1 selection rule for multi-output generations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Best score over every (output, reference) pair.
    Maximum,
    /// Only the first output is scored.
    Order,
}

/// N-best pairing rule between outputs and references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matching {
    /// Injective assignment; a reference can be used once.
    Bipartite,
    /// Each output takes its best reference; references may repeat.
    Maximum,
}

/// Run-accumulation regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunSetting {
    /// One polymorphic run.
    LowN,
    /// Three polymorphic runs, deduplicated.
    HighN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub top_k: usize,
    pub selection: Selection,
    pub matching: Matching,
    pub cluster_constrained: bool,
    pub coverage_cap: bool,
    pub metric_id: String,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            selection: Selection::Maximum,
            matching: Matching::Bipartite,
            cluster_constrained: false,
            coverage_cap: true,
            metric_id: "bleu".to_string(),
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(Error::InvalidArgument("top_k must be positive".into()));
        }
        Ok(())
    }
}

/// Group items by inference type, preserving input order inside each group.
pub fn group_by_type<'a, I>(examples: I) -> BTreeMap<InferenceType, Vec<&'a Example>>
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut groups: BTreeMap<InferenceType, Vec<&Example>> = BTreeMap::new();
    for e in examples {
        groups.entry(e.inference_type()).or_default().push(e);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(dialogue: &[(&str, &str)], refs: &[&str]) -> ExampleRecord {
        ExampleRecord {
            example_id: "ex-1".into(),
            dialogue: dialogue
                .iter()
                .map(|(s, t)| TurnRecord {
                    speaker: s.to_string(),
                    text: t.to_string(),
                })
                .collect(),
            inference_type: "Desire".into(),
            question: None,
            answer_prefix: None,
            references: refs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn valid_record() {
        let r = record(&[("Listener (A)", "hi"), ("Speaker (B)", "fine")], &["a", "b"]);
        let ex = validate_example(&r).unwrap();
        assert_eq!(ex.target_index(), 1);
        assert_eq!(ex.target().to_string(), "Speaker (B): fine");
        assert_eq!(ex.references(), ["a", "b"]);
    }

    #[test]
    fn empty_references() {
        let r = record(&[("Speaker (A)", "hi")], &[]);
        assert_eq!(
            validate_example(&r),
            Err(Error::EmptyReferences {
                example_id: "ex-1".into()
            })
        );
    }

    #[test]
    fn consecutive_speakers() {
        let r = record(&[("Speaker (A)", "hi"), ("Speaker (A)", "there")], &["a"]);
        match validate_example(&r) {
            Err(Error::ConsecutiveSameSpeaker { example_id, index, .. }) => {
                assert_eq!(example_id, "ex-1");
                assert_eq!(index, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_type() {
        let mut r = record(&[("Speaker (A)", "hi")], &["a"]);
        r.inference_type = "xWant".into();
        assert!(matches!(
            validate_example(&r),
            Err(Error::UnknownInferenceType { example_id, .. }) if example_id == "ex-1"
        ));
    }

    #[test]
    fn question_mismatch_rejected() {
        let mut r = record(&[("Speaker (A)", "hi")], &["a"]);
        r.question = Some("Why?".into());
        assert!(matches!(validate_example(&r), Err(Error::InvalidExample { .. })));
    }

    #[test]
    fn table_templates() {
        assert_eq!(
            question_for(InferenceType::Desire),
            ("What does Speaker want to do next?", "As a result, Speaker wants...")
        );
        assert_eq!(
            question_for(InferenceType::Attribute),
            (
                "What is a likely characteristic of Speaker based on what they just said?",
                "Speaker is..."
            )
        );
        assert_eq!(
            question_for(InferenceType::Effect),
            ("What does the last thing said cause to happen?", "This causes...")
        );
    }

    #[test]
    fn templates_round_trip() {
        for t in InferenceType::ALL {
            let (q, a) = question_for(t);
            assert_eq!(InferenceType::from_templates(q, a), Some(t));
            assert_eq!(t.name().parse::<InferenceType>().unwrap(), t);
        }
        assert_eq!(
            InferenceType::ALL.iter().filter(|t| t.is_convosense_core()).count(),
            10
        );
    }

    #[test]
    fn whitespace_normalization() {
        assert_eq!(normalize_text("  a \t b\n\nc "), "a b c");
        // e + combining acute composes to a single code point
        assert_eq!(normalize_text("cafe\u{301}"), "caf\u{e9}");
    }

    #[test]
    fn generation_set_drops_duplicates() {
        let g = GenerationSet::new(
            "e",
            GenerationMode::MonomorphicBeam,
            vec![vec!["a b".into(), " a  b".into(), "c".into()]],
        )
        .unwrap();
        assert_eq!(g.runs()[0], ["a b", "c"]);
        assert_eq!(g.dropped_duplicates(), 1);
        assert!(GenerationSet::new("e", GenerationMode::Polymorphic, vec![]).is_err());
        assert!(GenerationSet::new("e", GenerationMode::Polymorphic, vec![vec![]]).is_err());
    }

    #[test]
    fn canonical_json_sorts_keys() {
        let r = record(&[("Speaker (A)", "hi")], &["a"]);
        let ex = validate_example(&r).unwrap();
        let line = ex.to_canonical_json();
        assert!(line.starts_with(r#"{"answer_prefix":"As a result, Speaker wants...","dialogue":[{"speaker":"Speaker (A)","text":"hi"}],"example_id":"ex-1""#));
    }
}
