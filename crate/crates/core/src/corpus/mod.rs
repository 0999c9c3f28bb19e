//! Dialogue data model and its canonical JSON form.
//!
//! A corpus is a JSON array of dialogues. Every turn carries its speaker, the utterance,
//! optional act annotations and, on user turns, the cumulative dialogue state. Unknown
//! fields are kept in `extra` and written back untouched.

mod import;
mod io;
mod resources;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};

pub use import::{import_dstc10, import_multiwoz};
pub use io::{parse_corpus, parse_jsonl, to_canonical_json, write_corpus, write_jsonl};
pub use resources::{
    parse_database, parse_knowledge_base, parse_ontology, write_database, write_knowledge_base,
    write_ontology, Database, Entity, KnowledgeBase, KnowledgeSnippet, Ontology,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    System,
}

impl Speaker {
    pub fn as_str(self) -> &'static str {
        match self {
            Speaker::User => "user",
            Speaker::System => "system",
        }
    }

    pub fn other(self) -> Speaker {
        match self {
            Speaker::User => Speaker::System,
            Speaker::System => Speaker::User,
        }
    }
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One `(domain, slot, value)` triple.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triple {
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl Triple {
    pub fn new(domain: impl Into<String>, slot: impl Into<String>, value: impl Into<String>) -> Self {
        Triple {
            domain: domain.into(),
            slot: slot.into(),
            value: value.into(),
        }
    }
}

/// Dialogue state: at most one value per `(domain, slot)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialogueState {
    values: BTreeMap<(String, String), String>,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from triples, rejecting duplicate `(domain, slot)` keys and empty values.
    pub fn from_triples(triples: impl IntoIterator<Item = Triple>) -> std::result::Result<Self, String> {
        let mut state = DialogueState::new();
        for t in triples {
            if t.value.trim().is_empty() {
                return Err(format!("empty value for {}.{}", t.domain, t.slot));
            }
            if t.domain.is_empty() || t.slot.is_empty() {
                return Err("empty domain or slot name".to_string());
            }
            if state.values.insert((t.domain.clone(), t.slot.clone()), t.value).is_some() {
                return Err(format!("duplicate slot {}.{}", t.domain, t.slot));
            }
        }
        Ok(state)
    }

    /// Sets a value, overwriting any earlier value for the same `(domain, slot)`.
    pub fn set(&mut self, domain: impl Into<String>, slot: impl Into<String>, value: impl Into<String>) {
        self.values.insert((domain.into(), slot.into()), value.into());
    }

    pub fn get(&self, domain: &str, slot: &str) -> Option<&str> {
        self.values
            .get(&(domain.to_string(), slot.to_string()))
            .map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Triples in `(domain, slot)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.values
            .iter()
            .map(|((d, s), v)| (d.as_str(), s.as_str(), v.as_str()))
    }

    pub fn triples(&self) -> Vec<Triple> {
        self.iter().map(|(d, s, v)| Triple::new(d, s, v)).collect()
    }

    /// Rewrites every value through `f`, keeping keys.
    pub fn map_values(&self, mut f: impl FnMut(&str, &str, &str) -> String) -> DialogueState {
        DialogueState {
            values: self
                .values
                .iter()
                .map(|((d, s), v)| ((d.clone(), s.clone()), f(d, s, v)))
                .collect(),
        }
    }

    /// `self` overlaid with `update`: values in `update` win.
    pub fn overlay(&self, update: &DialogueState) -> DialogueState {
        let mut out = self.clone();
        for (k, v) in &update.values {
            out.values.insert(k.clone(), v.clone());
        }
        out
    }
}

impl Serialize for DialogueState {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.triples())
    }
}

impl<'de> Deserialize<'de> for DialogueState {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let triples = Vec::<Triple>::deserialize(deserializer)?;
        DialogueState::from_triples(triples).map_err(serde::de::Error::custom)
    }
}

impl FromIterator<Triple> for DialogueState {
    /// Later triples overwrite earlier ones for the same key.
    fn from_iter<I: IntoIterator<Item = Triple>>(iter: I) -> Self {
        let mut state = DialogueState::new();
        for t in iter {
            state.set(t.domain, t.slot, t.value);
        }
        state
    }
}

/// One slot mentioned by an act. Requests carry no value.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ActSlot {
    pub domain: String,
    pub slot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

/// An annotated act on a turn (`inform`, `request`, `book`, ...). The speaker is the turn's.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DialogueAction {
    pub act: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub slots: Vec<ActSlot>,
}

/// `(speaker, act)`: the unit the transition matrix and pattern pools are keyed by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActionSignature {
    pub speaker: Speaker,
    pub act: String,
}

/// Act name used for turns without act annotations.
pub const NO_ACT: &str = "none";

impl ActionSignature {
    pub fn new(speaker: Speaker, act: impl Into<String>) -> Self {
        ActionSignature {
            speaker,
            act: act.into(),
        }
    }
}

impl fmt::Display for ActionSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.speaker, self.act)
    }
}

impl Serialize for ActionSignature {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActionSignature {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl std::str::FromStr for ActionSignature {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (speaker, act) = s
            .split_once('-')
            .ok_or_else(|| format!("action {s:?} is not of the form speaker-act"))?;
        let speaker = match speaker {
            "user" => Speaker::User,
            "system" => Speaker::System,
            other => return Err(format!("unknown speaker {other:?}")),
        };
        if act.is_empty() {
            return Err(format!("action {s:?} has an empty act"));
        }
        Ok(ActionSignature::new(speaker, act))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub acts: Vec<DialogueAction>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<DialogueState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knowledge_ref: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeks_knowledge: Option<bool>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Turn {
    pub fn user(text: impl Into<String>, state: DialogueState) -> Self {
        Turn {
            speaker: Speaker::User,
            text: text.into(),
            acts: Vec::new(),
            state: Some(state),
            knowledge_ref: None,
            seeks_knowledge: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::System,
            text: text.into(),
            acts: Vec::new(),
            state: None,
            knowledge_ref: None,
            seeks_knowledge: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_acts(mut self, acts: Vec<DialogueAction>) -> Self {
        self.acts = acts;
        self
    }

    pub fn is_user(&self) -> bool {
        self.speaker == Speaker::User
    }

    /// Signature of the turn's primary (first) act; [`NO_ACT`] when unannotated.
    pub fn signature(&self) -> ActionSignature {
        let act = self.acts.first().map_or(NO_ACT, |a| a.act.as_str());
        ActionSignature::new(self.speaker, act)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dialogue {
    pub id: String,
    pub turns: Vec<Turn>,
    pub domains: BTreeSet<String>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, Value>,
}

impl Dialogue {
    pub fn new(id: impl Into<String>, turns: Vec<Turn>) -> Self {
        Dialogue {
            id: id.into(),
            turns,
            domains: BTreeSet::new(),
            extra: BTreeMap::new(),
        }
    }

    /// Number of turns `T`.
    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Turn at 1-based index `t`.
    pub fn turn(&self, t: usize) -> Option<&Turn> {
        t.checked_sub(1).and_then(|i| self.turns.get(i))
    }

    /// Cumulative state before 1-based turn `t`: the state of the latest user turn before it.
    pub fn state_before(&self, t: usize) -> DialogueState {
        self.turns[..t.saturating_sub(1).min(self.turns.len())]
            .iter()
            .rev()
            .find_map(|turn| turn.state.clone())
            .unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |turn: Option<usize>, msg: String| Err(Error::validation(&self.id, turn, msg));
        if self.id.trim().is_empty() {
            return fail(None, "dialogue id is empty".into());
        }
        if !self.turns.iter().any(Turn::is_user) {
            return fail(None, "dialogue has no user turn".into());
        }
        for (i, turn) in self.turns.iter().enumerate() {
            let t = Some(i + 1);
            if turn.text.trim().is_empty() {
                return fail(t, "utterance text is empty".into());
            }
            if i > 0 && self.turns[i - 1].speaker == turn.speaker {
                return fail(t, format!("speakers do not alternate (two consecutive {} turns)", turn.speaker));
            }
            if !turn.is_user() {
                if turn.state.is_some() {
                    return fail(t, "system turn carries a dialogue state".into());
                }
                if turn.seeks_knowledge.is_some() {
                    return fail(t, "system turn carries a knowledge-seeking flag".into());
                }
                if turn.knowledge_ref.is_some() {
                    return fail(t, "system turn carries a knowledge reference".into());
                }
            }
            if let Some(state) = &turn.state {
                if let Some((d, s, _)) = state.iter().find(|(_, _, v)| v.trim().is_empty()) {
                    return fail(t, format!("empty value for {d}.{s}"));
                }
            }
            for act in &turn.acts {
                if act.act.is_empty() || act.act.chars().any(char::is_whitespace) {
                    return fail(t, format!("act name {:?} is not a single token", act.act));
                }
            }
        }
        Ok(())
    }
}

/// Checks every dialogue and that ids are unique.
pub fn validate_corpus(dialogues: &[Dialogue]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for d in dialogues {
        d.validate()?;
        if !seen.insert(d.id.as_str()) {
            return Err(Error::validation(&d.id, None, "duplicate dialogue id"));
        }
    }
    Ok(())
}
