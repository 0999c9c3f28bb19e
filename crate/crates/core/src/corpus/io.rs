use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{validate_corpus, Dialogue, DialogueAction, DialogueState, Speaker, Triple, Turn};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct TurnWire {
    speaker: Speaker,
    text: String,
    #[serde(default)]
    acts: Vec<DialogueAction>,
    #[serde(default)]
    state: Option<Vec<Triple>>,
    #[serde(default)]
    knowledge_ref: Option<String>,
    #[serde(default)]
    seeks_knowledge: Option<bool>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct DialogueWire {
    id: String,
    turns: Vec<TurnWire>,
    #[serde(default)]
    domains: BTreeSet<String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

fn from_wire(wire: DialogueWire) -> Result<Dialogue> {
    let mut turns = Vec::with_capacity(wire.turns.len());
    for (i, t) in wire.turns.into_iter().enumerate() {
        let state = match t.state {
            Some(triples) => Some(
                DialogueState::from_triples(triples)
                    .map_err(|m| Error::validation(&wire.id, Some(i + 1), m))?,
            ),
            None => None,
        };
        turns.push(Turn {
            speaker: t.speaker,
            text: t.text,
            acts: t.acts,
            state,
            knowledge_ref: t.knowledge_ref,
            seeks_knowledge: t.seeks_knowledge,
            extra: t.extra,
        });
    }
    Ok(Dialogue {
        id: wire.id,
        turns,
        domains: wire.domains,
        extra: wire.extra,
    })
}

/// Parses a corpus (JSON array of dialogues) and validates every dialogue.
pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<Dialogue>> {
    let wire: Vec<DialogueWire> =
        serde_json::from_slice(bytes).map_err(|e| Error::json("corpus", bytes, e))?;
    let dialogues = wire.into_iter().map(from_wire).collect::<Result<Vec<_>>>()?;
    validate_corpus(&dialogues)?;
    Ok(dialogues)
}

/// Canonical JSON: object keys sorted, two-space indentation, trailing newline.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // serde_json::Value keeps object keys in a BTreeMap, which yields the sorted key order.
    let value = serde_json::to_value(value).expect("in-memory types always serialize");
    let mut out = serde_json::to_vec_pretty(&value).expect("values always serialize");
    out.push(b'\n');
    out
}

pub fn write_corpus(dialogues: &[Dialogue]) -> Vec<u8> {
    to_canonical_json(dialogues)
}

/// One compact JSON value per line.
pub fn write_jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

/// Parses JSON Lines, skipping blank lines. Error offsets are relative to the whole input.
pub fn parse_jsonl<T: serde::de::DeserializeOwned>(what: &'static str, bytes: &[u8]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in bytes.split(|&b| b == b'\n') {
        if !line.iter().all(u8::is_ascii_whitespace) {
            let value = serde_json::from_slice(line).map_err(|e| {
                let mut err = Error::json(what, line, e);
                if let Error::Parse { offset: o, .. } = &mut err {
                    *o += offset;
                }
                err
            })?;
            out.push(value);
        }
        offset += line.len() + 1;
    }
    Ok(out)
}
