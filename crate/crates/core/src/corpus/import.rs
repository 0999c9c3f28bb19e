//! Import adapters from upstream dialogue formats into the normalized corpus.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use serde_json::Value;

use super::resources::dstc_snippet_id;
use super::{validate_corpus, ActSlot, Dialogue, DialogueAction, DialogueState, Turn};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct MwozTurn {
    text: String,
    #[serde(default)]
    metadata: BTreeMap<String, MwozDomainState>,
    #[serde(default)]
    dialog_act: BTreeMap<String, Vec<(String, String)>>,
}

#[derive(Deserialize, Default)]
struct MwozDomainState {
    #[serde(default)]
    book: BTreeMap<String, Value>,
    #[serde(default)]
    semi: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct MwozDialogue {
    log: Vec<MwozTurn>,
}

fn meaningful(value: &str) -> bool {
    let v = value.trim();
    !v.is_empty() && v != "not mentioned" && v != "none"
}

fn mwoz_state(metadata: &BTreeMap<String, MwozDomainState>) -> DialogueState {
    let mut state = DialogueState::new();
    for (domain, ds) in metadata {
        for (slot, value) in &ds.semi {
            if let Value::String(v) = value {
                if meaningful(v) {
                    state.set(domain.as_str(), slot.to_lowercase(), v.trim());
                }
            }
        }
        for (slot, value) in &ds.book {
            if let Value::String(v) = value {
                if meaningful(v) {
                    state.set(domain.as_str(), format!("book {}", slot.to_lowercase()), v.trim());
                }
            }
        }
    }
    state
}

fn mwoz_acts(dialog_act: &BTreeMap<String, Vec<(String, String)>>) -> Vec<DialogueAction> {
    let mut acts: Vec<DialogueAction> = Vec::new();
    for (name, pairs) in dialog_act {
        let (domain, act) = name.split_once('-').unwrap_or(("general", name.as_str()));
        let (domain, act) = (domain.to_lowercase(), act.to_lowercase());
        let slots: Vec<ActSlot> = pairs
            .iter()
            .filter(|(slot, _)| slot.to_lowercase() != "none")
            .map(|(slot, value)| ActSlot {
                domain: domain.clone(),
                slot: slot.to_lowercase(),
                value: (meaningful(value) && value != "?").then(|| value.trim().to_string()),
            })
            .collect();
        match acts.iter_mut().find(|a| a.act == act) {
            Some(existing) => existing.slots.extend(slots),
            None => acts.push(DialogueAction { act, slots }),
        }
    }
    acts
}

/// Imports a MultiWOZ 2.x `data.json` (`dialogue id -> {log: [...]}`).
///
/// Even log entries are user turns, odd ones system turns. A user turn's state is the
/// belief state recorded on the following system turn.
pub fn import_multiwoz(bytes: &[u8]) -> Result<Vec<Dialogue>> {
    let raw: BTreeMap<String, MwozDialogue> =
        serde_json::from_slice(bytes).map_err(|e| Error::json("MultiWOZ data", bytes, e))?;
    let mut out = Vec::with_capacity(raw.len());
    for (id, dialogue) in raw {
        let id = id.trim_end_matches(".json").to_string();
        let mut turns = Vec::with_capacity(dialogue.log.len());
        let mut domains = BTreeSet::new();
        let mut last_state = DialogueState::new();
        for (i, entry) in dialogue.log.iter().enumerate() {
            let acts = mwoz_acts(&entry.dialog_act);
            for a in &acts {
                for s in &a.slots {
                    if s.domain != "general" {
                        domains.insert(s.domain.clone());
                    }
                }
            }
            let turn = if i % 2 == 0 {
                if let Some(next) = dialogue.log.get(i + 1) {
                    last_state = mwoz_state(&next.metadata);
                }
                domains.extend(last_state.iter().map(|(d, _, _)| d.to_string()));
                Turn::user(entry.text.trim(), last_state.clone())
            } else {
                Turn::system(entry.text.trim())
            };
            turns.push(turn.with_acts(acts));
        }
        let mut d = Dialogue::new(id, turns);
        d.domains = domains;
        out.push(d);
    }
    validate_corpus(&out)?;
    Ok(out)
}

#[derive(Deserialize)]
struct DstcLogTurn {
    speaker: String,
    text: String,
}

#[derive(Deserialize)]
struct DstcKnowledgeRef {
    domain: String,
    entity_id: Value,
    doc_id: Value,
}

#[derive(Deserialize)]
struct DstcLabel {
    target: bool,
    #[serde(default)]
    knowledge: Vec<DstcKnowledgeRef>,
    #[serde(default)]
    response: Option<String>,
}

fn id_string(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Imports DSTC-style `logs.json` + `labels.json`. Each log is a context ending in a user
/// turn; its label flags that last turn and, when knowledge-seeking, supplies the grounded
/// snippet and the system response (appended as a final system turn).
pub fn import_dstc10(logs: &[u8], labels: &[u8]) -> Result<Vec<Dialogue>> {
    let logs: Vec<Vec<DstcLogTurn>> =
        serde_json::from_slice(logs).map_err(|e| Error::json("DSTC logs", logs, e))?;
    let labels: Vec<DstcLabel> =
        serde_json::from_slice(labels).map_err(|e| Error::json("DSTC labels", labels, e))?;
    if logs.len() != labels.len() {
        return Err(Error::invalid(
            "DSTC input",
            format!("{} logs but {} labels", logs.len(), labels.len()),
        ));
    }
    let mut out = Vec::with_capacity(logs.len());
    for (i, (log, label)) in logs.into_iter().zip(labels).enumerate() {
        let id = format!("dstc-{i:05}");
        let mut turns: Vec<Turn> = log
            .into_iter()
            .map(|t| match t.speaker.as_str() {
                "U" | "user" => Turn {
                    state: None,
                    ..Turn::user(t.text.trim(), DialogueState::new())
                },
                _ => Turn::system(t.text.trim()),
            })
            .collect();
        let last_user = turns
            .iter()
            .rposition(Turn::is_user)
            .ok_or_else(|| Error::validation(&id, None, "log has no user turn"))?;
        turns[last_user].seeks_knowledge = Some(label.target);
        let mut domains = BTreeSet::new();
        if label.target {
            if let Some(k) = label.knowledge.first() {
                turns[last_user].knowledge_ref = Some(dstc_snippet_id(
                    &k.domain,
                    &id_string(&k.entity_id),
                    &id_string(&k.doc_id),
                ));
                domains.insert(k.domain.clone());
            }
            if let Some(response) = label.response.filter(|r| !r.trim().is_empty()) {
                if last_user + 1 == turns.len() {
                    turns.push(Turn::system(response.trim()));
                }
            }
        }
        let mut d = Dialogue::new(id, turns);
        d.domains = domains;
        out.push(d);
    }
    validate_corpus(&out)?;
    Ok(out)
}
