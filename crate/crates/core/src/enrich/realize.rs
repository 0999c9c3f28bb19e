//! Turning sampled action sequences into annotated dialogues.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pattern::{ExpressionLexicon, PatternLibrary, PlaceholderKind, Segment, VALUE_TOKEN};
use super::transitions::{sample_action_sequence, TransitionMatrix};
use crate::corpus::{
    ActSlot, ActionSignature, Database, Dialogue, DialogueAction, DialogueState, Ontology, Speaker, Turn, NO_ACT,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::text::join_with_and;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatternConfig {
    /// Cap on the number of actions per generated dialogue.
    pub max_turns: usize,
    /// A prefix/suffix placeholder expands into `k` slot expressions, `k` uniform in
    /// `1..=max_expansion`.
    pub max_expansion: usize,
    /// User acts whose filled values are written into the dialogue state.
    pub state_acts: Vec<String>,
    /// Walks without a user action or with repeated speakers are redrawn this many times.
    pub max_walk_attempts: usize,
    pub id_prefix: String,
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig {
            max_turns: 12,
            max_expansion: 3,
            state_acts: vec!["inform".into(), "book".into()],
            max_walk_attempts: 100,
            id_prefix: "gen-".into(),
        }
    }
}

impl PatternConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_turns == 0 {
            return Err(Error::invalid("pattern config", "max_turns must be at least 1"));
        }
        if self.max_expansion == 0 {
            return Err(Error::invalid("pattern config", "max_expansion must be at least 1"));
        }
        Ok(())
    }
}

/// Patterns and transitions fitted from a seed corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternModel {
    pub library: PatternLibrary,
    pub transitions: TransitionMatrix,
}

/// Resources needed to fill patterns.
#[derive(Debug, Clone, Copy)]
pub struct Resources<'a> {
    pub library: &'a PatternLibrary,
    pub lexicon: &'a ExpressionLexicon,
    pub database: &'a Database,
    pub ontology: &'a Ontology,
}

/// Which pattern each turn used: `(action, index into its pool)`.
pub type PatternTrace = Vec<(ActionSignature, usize)>;

/// Entity-consistent value source for one dialogue. The active entity changes only when a
/// placeholder asks for a different domain.
struct ValueSource<'a> {
    res: Resources<'a>,
    active: Option<(String, Option<usize>)>,
}

impl<'a> ValueSource<'a> {
    fn value<R: Rng + ?Sized>(
        &mut self,
        domain: &str,
        slot: &str,
        turn_cache: &mut BTreeMap<(String, String), String>,
        rng: &mut R,
    ) -> Result<String> {
        let key = (domain.to_string(), slot.to_string());
        if let Some(v) = turn_cache.get(&key) {
            return Ok(v.clone());
        }
        if self.active.as_ref().map(|(d, _)| d.as_str()) != Some(domain) {
            let candidates: Vec<usize> = self
                .res
                .database
                .entities
                .iter()
                .enumerate()
                .filter(|(_, e)| e.domain == domain)
                .map(|(i, _)| i)
                .collect();
            self.active = Some((domain.to_string(), candidates.choose(rng).copied()));
        }
        let entity = self.active.as_ref().and_then(|(_, e)| *e).map(|i| &self.res.database.entities[i]);
        let value = match entity.and_then(|e| e.attributes.get(slot)) {
            Some(v) => v.clone(),
            None => self
                .res
                .ontology
                .values(domain, slot)
                .and_then(|vs| vs.choose(rng))
                .cloned()
                .ok_or_else(|| Error::invalid("pattern", format!("no value source for {domain}.{slot}")))?,
        };
        turn_cache.insert(key, value.clone());
        Ok(value)
    }
}

fn fill_phrase(phrase: &str, value: &str) -> String {
    phrase.replacen(VALUE_TOKEN, value, 1)
}

/// Realizes `actions` into a dialogue: one turn per action, pattern drawn uniformly from the
/// action's pool, expressions and values filled, and user `state_acts` values accumulated
/// into the running state.
#[allow(clippy::too_many_arguments)]
pub fn realize_dialogue<R: Rng + ?Sized>(
    id: &str,
    actions: &[ActionSignature],
    library: &PatternLibrary,
    lexicon: &ExpressionLexicon,
    database: &Database,
    ontology: &Ontology,
    rng: &mut R,
    cfg: &PatternConfig,
) -> Result<Dialogue> {
    let res = Resources {
        library,
        lexicon,
        database,
        ontology,
    };
    realize_traced(id, actions, res, rng, cfg).map(|(d, _)| d)
}

pub fn realize_traced<R: Rng + ?Sized>(
    id: &str,
    actions: &[ActionSignature],
    res: Resources<'_>,
    rng: &mut R,
    cfg: &PatternConfig,
) -> Result<(Dialogue, PatternTrace)> {
    if actions.is_empty() {
        return Err(Error::validation(id, None, "no actions to realize"));
    }
    let mut source = ValueSource { res, active: None };
    let mut running = DialogueState::new();
    let mut turns = Vec::with_capacity(actions.len());
    let mut domains = BTreeSet::new();
    let mut trace = Vec::with_capacity(actions.len());

    for action in actions {
        let pool = res.library.pool(action);
        if pool.is_empty() {
            return Err(Error::EmptyPatternPool(action.to_string()));
        }
        let pick = rng.gen_range(0..pool.len());
        trace.push((action.clone(), pick));
        let pattern = &pool[pick];

        let segments = pattern.segments();
        let pattern_slots: BTreeSet<(String, String)> = pattern
            .slots()
            .map(|(_, d, s)| (d, s))
            .collect();
        let mut cache = BTreeMap::new();
        let mut filled: Vec<(String, String, String)> = Vec::new();
        let mut used: BTreeSet<(String, String)> = BTreeSet::new();
        let mut text = String::new();

        for seg in segments {
            match seg {
                Segment::Text(t) => text.push_str(&t),
                Segment::Slot {
                    kind: PlaceholderKind::Value,
                    domain,
                    slot,
                } => {
                    let v = source.value(&domain, &slot, &mut cache, rng)?;
                    text.push_str(&v);
                    if used.insert((domain.clone(), slot.clone())) {
                        filled.push((domain, slot, v));
                    }
                }
                Segment::Slot { kind, domain, slot } => {
                    let expressions = res
                        .lexicon
                        .get(&domain, &slot)
                        .map(|e| e.of(kind))
                        .filter(|e| !e.is_empty())
                        .ok_or_else(|| Error::MissingExpression {
                            domain: domain.clone(),
                            slot: slot.clone(),
                        })?;
                    let k = rng.gen_range(1..=cfg.max_expansion);
                    let mut extra: Vec<&str> = res
                        .lexicon
                        .slots_with(&domain, kind)
                        .into_iter()
                        .filter(|s| {
                            *s != slot
                                && !pattern_slots.contains(&(domain.clone(), s.to_string()))
                                && !used.contains(&(domain.clone(), s.to_string()))
                        })
                        .collect();
                    extra.shuffle(rng);
                    extra.truncate(k - 1);

                    let mut phrases = Vec::with_capacity(k);
                    let phrase = expressions.choose(rng).expect("non-empty");
                    let v = source.value(&domain, &slot, &mut cache, rng)?;
                    phrases.push(fill_phrase(phrase, &v));
                    if used.insert((domain.clone(), slot.clone())) {
                        filled.push((domain.clone(), slot.clone(), v));
                    }
                    for other in extra {
                        let options = res.lexicon.get(&domain, other).expect("listed by lexicon").of(kind);
                        let phrase = options.choose(rng).expect("non-empty");
                        let v = source.value(&domain, other, &mut cache, rng)?;
                        phrases.push(fill_phrase(phrase, &v));
                        used.insert((domain.clone(), other.to_string()));
                        filled.push((domain.clone(), other.to_string(), v));
                    }
                    text.push_str(&join_with_and(&phrases));
                }
            }
        }

        let text = capitalize_first(&text);
        domains.extend(filled.iter().map(|(d, _, _)| d.clone()));
        let acts = if action.act == NO_ACT {
            Vec::new()
        } else {
            vec![DialogueAction {
                act: action.act.clone(),
                slots: filled
                    .iter()
                    .map(|(d, s, v)| ActSlot {
                        domain: d.clone(),
                        slot: s.clone(),
                        value: Some(v.clone()),
                    })
                    .collect(),
            }]
        };
        let turn = match action.speaker {
            Speaker::User => {
                if cfg.state_acts.contains(&action.act) {
                    for (d, s, v) in &filled {
                        running.set(d.as_str(), s.as_str(), v.as_str());
                    }
                }
                Turn::user(text, running.clone())
            }
            Speaker::System => Turn::system(text),
        };
        turns.push(turn.with_acts(acts));
    }

    let mut dialogue = Dialogue::new(id, turns);
    dialogue.domains = domains;
    dialogue.validate()?;
    Ok((dialogue, trace))
}

fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_lowercase() => c.to_uppercase().chain(chars).collect(),
        _ => text.to_string(),
    }
}

fn walk_is_usable(actions: &[ActionSignature]) -> bool {
    actions.iter().any(|a| a.speaker == Speaker::User)
        && actions.windows(2).all(|w| w[0].speaker != w[1].speaker)
}

/// Generates the dialogue at `index`, drawing from that index's own random stream.
pub fn generate_one(
    index: usize,
    model: &PatternModel,
    lexicon: &ExpressionLexicon,
    database: &Database,
    ontology: &Ontology,
    stream: &RngStream,
    cfg: &PatternConfig,
) -> Result<(Dialogue, PatternTrace)> {
    let id = format!("{}{index:06}", cfg.id_prefix);
    let mut rng = stream.stream("enrich-pattern", &id);
    let res = Resources {
        library: &model.library,
        lexicon,
        database,
        ontology,
    };
    for _ in 0..cfg.max_walk_attempts.max(1) {
        let actions = sample_action_sequence(&model.transitions, &mut rng, cfg.max_turns);
        if walk_is_usable(&actions) {
            return realize_traced(&id, &actions, res, &mut rng, cfg).map_err(|e| match e {
                Error::Validation { .. } => e,
                other => Error::validation(&id, None, other.to_string()),
            });
        }
    }
    Err(Error::validation(
        &id,
        None,
        format!("no usable action walk after {} attempts", cfg.max_walk_attempts),
    ))
}

/// Generates `count` dialogues. Runs on the current rayon pool; output order and content do
/// not depend on the number of workers.
pub fn generate_dialogues(
    count: usize,
    model: &PatternModel,
    lexicon: &ExpressionLexicon,
    database: &Database,
    ontology: &Ontology,
    stream: &RngStream,
    cfg: &PatternConfig,
) -> Result<Vec<(Dialogue, PatternTrace)>> {
    cfg.validate()?;
    model.library.check_against(ontology)?;
    (0..count)
        .into_par_iter()
        .map(|i| generate_one(i, model, lexicon, database, ontology, stream, cfg))
        .collect()
}

/// Fits patterns and transitions from a seed corpus.
pub fn fit(corpus: &[Dialogue], ontology: &Ontology) -> Result<PatternModel> {
    Ok(PatternModel {
        library: super::pattern::extract_patterns(corpus, ontology)?,
        transitions: super::transitions::estimate_transitions(corpus),
    })
}
