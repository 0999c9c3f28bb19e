//! Text-to-text and text-to-label training examples.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, DialogueState, KnowledgeBase, Speaker, Triple, Turn};
use crate::error::{Error, Result};
use crate::negatives::NegativeRecord;

pub const USER_TAG: &str = "[user]";
pub const SYSTEM_TAG: &str = "[system]";
pub const STATE_TAG: &str = "[state]";
pub const KNOWLEDGE_TAG: &str = "[knowledge]";
pub const EMPTY_STATE: &str = "none";
pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Dst,
    Detection,
    Selection,
    Generation,
}

impl Task {
    pub const ALL: [Task; 4] = [Task::Dst, Task::Detection, Task::Selection, Task::Generation];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Dst => "dst",
            Task::Detection => "detection",
            Task::Selection => "selection",
            Task::Generation => "generation",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::invalid("task", format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Target {
    Label(u8),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub dialogue_id: String,
    pub turn: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub task: Task,
    pub source: String,
    pub target: Target,
    pub meta: ExampleMeta,
}

/// `"domain slot = value"` triples in key order joined by `" ; "`, or `"none"`.
pub fn linearize_state(state: &DialogueState) -> String {
    if state.is_empty() {
        return EMPTY_STATE.to_string();
    }
    state
        .iter()
        .map(|(d, s, v)| format!("{d} {s} = {v}"))
        .collect::<Vec<_>>()
        .join(" ; ")
}

/// Inverse of [`linearize_state`]. Domains are single tokens; slots may contain spaces.
pub fn parse_state(text: &str) -> Result<DialogueState> {
    let text = text.trim();
    if text == EMPTY_STATE {
        return Ok(DialogueState::new());
    }
    let bad = |part: &str| Error::invalid("state text", format!("cannot parse {part:?}"));
    let mut triples = Vec::new();
    for part in text.split(" ; ") {
        let (key, value) = part.split_once(" = ").ok_or_else(|| bad(part))?;
        let (domain, slot) = key.split_once(' ').ok_or_else(|| bad(part))?;
        triples.push(Triple::new(domain, slot, value));
    }
    DialogueState::from_triples(triples).map_err(|m| Error::invalid("state text", m))
}

fn render_turn(turn: &Turn) -> String {
    let tag = match turn.speaker {
        Speaker::User => USER_TAG,
        Speaker::System => SYSTEM_TAG,
    };
    format!("{tag} {}", turn.text)
}

/// Role-tagged rendering of `turns`.
pub fn render_context(turns: &[Turn]) -> String {
    turns.iter().map(render_turn).collect::<Vec<_>>().join(" ")
}

fn meta(dialogue: &Dialogue, turn: usize, snippet_id: Option<&str>) -> ExampleMeta {
    ExampleMeta {
        dialogue_id: dialogue.id.clone(),
        turn,
        snippet_id: snippet_id.map(str::to_string),
    }
}

/// One example per user turn: the last `window + 1` turns and the previous state in, the
/// turn's state out.
pub fn dst_examples(dialogue: &Dialogue, window: usize) -> Vec<TrainingExample> {
    let mut previous = DialogueState::new();
    let mut out = Vec::new();
    for (i, turn) in dialogue.turns.iter().enumerate() {
        if !turn.is_user() {
            continue;
        }
        let state = turn.state.clone().unwrap_or_default();
        let from = i.saturating_sub(window);
        let source = format!(
            "{} {STATE_TAG} {}",
            render_context(&dialogue.turns[from..=i]),
            linearize_state(&previous)
        );
        out.push(TrainingExample {
            task: Task::Dst,
            source,
            target: Target::Text(linearize_state(&state)),
            meta: meta(dialogue, i + 1, None),
        });
        previous = state;
    }
    out
}

/// One example per user turn that carries a knowledge-seeking flag; the label is the flag.
pub fn detection_examples(dialogue: &Dialogue) -> Result<Vec<TrainingExample>> {
    let out: Vec<TrainingExample> = dialogue
        .turns
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let flag = t.seeks_knowledge.filter(|_| t.is_user())?;
            Some(TrainingExample {
                task: Task::Detection,
                source: render_context(&dialogue.turns[..=i]),
                target: Target::Label(u8::from(flag)),
                meta: meta(dialogue, i + 1, None),
            })
        })
        .collect();
    if out.is_empty() {
        return Err(Error::validation(&dialogue.id, None, "no user turn carries a seeks_knowledge flag"));
    }
    Ok(out)
}

fn with_knowledge(context: &str, kb: &KnowledgeBase, id: &str, dialogue: &Dialogue, turn: usize) -> Result<String> {
    let snippet = kb.get(id).ok_or_else(|| {
        Error::validation(&dialogue.id, Some(turn), format!("knowledge_ref {id:?} is not in the knowledge base"))
    })?;
    Ok(format!("{context} {KNOWLEDGE_TAG} {} {}", snippet.question, snippet.answer))
}

fn grounded_turns(dialogue: &Dialogue) -> impl Iterator<Item = (usize, &str)> {
    dialogue
        .turns
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.knowledge_ref.as_deref().map(|r| (i, r)))
}

/// Per grounded turn: the positive snippet with label 1 and each sampled negative with
/// label 0. `negatives` is looked up by `(dialogue id, turn)`.
pub fn selection_examples(
    dialogue: &Dialogue,
    kb: &KnowledgeBase,
    negatives: &BTreeMap<(String, usize), NegativeRecord>,
) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, positive) in grounded_turns(dialogue) {
        let t = i + 1;
        let record = negatives
            .get(&(dialogue.id.clone(), t))
            .ok_or_else(|| Error::validation(&dialogue.id, Some(t), "no sampled negatives for grounded turn"))?;
        if record.positive != positive {
            return Err(Error::validation(
                &dialogue.id,
                Some(t),
                format!("negatives were sampled for {:?}, turn is grounded on {positive:?}", record.positive),
            ));
        }
        let context = render_context(&dialogue.turns[..=i]);
        let candidates = std::iter::once((positive, 1u8)).chain(record.negatives.iter().map(|n| (n.id.as_str(), 0)));
        for (id, label) in candidates {
            out.push(TrainingExample {
                task: Task::Selection,
                source: with_knowledge(&context, kb, id, dialogue, t)?,
                target: Target::Label(label),
                meta: meta(dialogue, t, Some(id)),
            });
        }
    }
    Ok(out)
}

/// Per grounded turn: context and ground-truth snippet in, the following system response
/// out.
pub fn generation_examples(dialogue: &Dialogue, kb: &KnowledgeBase) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, positive) in grounded_turns(dialogue) {
        let response = dialogue
            .turns
            .get(i + 1)
            .filter(|t| t.speaker == Speaker::System)
            .ok_or_else(|| Error::validation(&dialogue.id, Some(i + 1), "grounded turn has no system response"))?;
        let context = render_context(&dialogue.turns[..=i]);
        out.push(TrainingExample {
            task: Task::Generation,
            source: with_knowledge(&context, kb, positive, dialogue, i + 1)?,
            target: Target::Text(response.text.clone()),
            meta: meta(dialogue, i + 2, Some(positive)),
        });
    }
    Ok(out)
}

/// Negative records keyed by `(dialogue id, turn)`.
pub fn index_negatives(records: &[NegativeRecord]) -> BTreeMap<(String, usize), NegativeRecord> {
    records
        .iter()
        .map(|r| ((r.dialogue_id.clone(), r.turn), r.clone()))
        .collect()
}

/// Optional inputs for the knowledge tasks.
#[derive(Debug, Clone, Copy, Default)]
pub struct SerializeInputs<'a> {
    pub knowledge: Option<&'a KnowledgeBase>,
    pub negatives: Option<&'a BTreeMap<(String, usize), NegativeRecord>>,
}

/// Serializes a whole corpus for one task. For detection, dialogues without any flagged
/// user turn are skipped; the call fails only if no dialogue has one.
pub fn serialize_corpus(
    corpus: &[Dialogue],
    task: Task,
    window: usize,
    inputs: SerializeInputs<'_>,
) -> Result<Vec<TrainingExample>> {
    let kb = || inputs.knowledge.ok_or_else(|| Error::invalid("serialize", format!("task {task} needs a knowledge base")));
    let mut out = Vec::new();
    match task {
        Task::Dst => corpus.iter().for_each(|d| out.extend(dst_examples(d, window))),
        Task::Detection => {
            let mut any = false;
            for d in corpus {
                if let Ok(ex) = detection_examples(d) {
                    any = true;
                    out.extend(ex);
                }
            }
            if !any && !corpus.is_empty() {
                return Err(Error::invalid("serialize", "no user turn in the corpus carries a seeks_knowledge flag"));
            }
        }
        Task::Selection => {
            let kb = kb()?;
            let negatives = inputs
                .negatives
                .ok_or_else(|| Error::invalid("serialize", "task selection needs sampled negatives"))?;
            for d in corpus {
                out.extend(selection_examples(d, kb, negatives)?);
            }
        }
        Task::Generation => {
            let kb = kb()?;
            for d in corpus {
                out.extend(generation_examples(d, kb)?);
            }
        }
    }
    Ok(out)
}
