//! Ontology-based enrichment: swap slot values for values from another ontology while
//! keeping the dialogue's structure, and the knowledge-grounded variant that swaps the
//! grounding snippet and its entity.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, KnowledgeBase, Ontology, Speaker};
use crate::error::{Error, Result};
use crate::text::{find_matches, mirror_case, splice};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OntologyConfig {
    /// Leave the original value out of the candidates when another value exists.
    pub exclude_original: bool,
    /// Keep slots that the target ontology lacks instead of failing.
    pub skip_missing_slots: bool,
    /// Fail when a mapped value never appears in any utterance.
    pub require_surface_match: bool,
}

impl Default for OntologyConfig {
    fn default() -> Self {
        OntologyConfig {
            exclude_original: true,
            skip_missing_slots: false,
            require_surface_match: false,
        }
    }
}

/// `(domain, slot, original value) -> replacement`, one replacement per key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValueMap {
    entries: BTreeMap<(String, String, String), String>,
}

impl ValueMap {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, domain: &str, slot: &str, value: &str) -> Option<&str> {
        self.entries
            .get(&(domain.to_string(), slot.to_string(), value.to_string()))
            .map(String::as_str)
    }

    pub fn insert(&mut self, domain: &str, slot: &str, original: &str, replacement: &str) {
        self.entries.insert(
            (domain.to_string(), slot.to_string(), original.to_string()),
            replacement.to_string(),
        );
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str, &str)> {
        self.entries
            .iter()
            .map(|((d, s, o), r)| (d.as_str(), s.as_str(), o.as_str(), r.as_str()))
    }

    /// Surface substitutions: lowercased original -> replacement. When the same string is
    /// an original under several slots, the first key in order decides the surface form.
    fn surface(&self) -> Vec<(String, String)> {
        let mut seen: BTreeMap<String, String> = BTreeMap::new();
        for ((_, _, original), replacement) in &self.entries {
            seen.entry(original.to_lowercase())
                .or_insert_with(|| replacement.clone());
        }
        seen.into_iter().collect()
    }
}

/// Draws a replacement for every distinct `(domain, slot, value)` in the dialogue's states.
pub fn build_value_map<R: Rng + ?Sized>(
    dialogue: &Dialogue,
    target: &Ontology,
    rng: &mut R,
    cfg: &OntologyConfig,
) -> Result<ValueMap> {
    let mut keys: Vec<(String, String, String)> = dialogue
        .turns
        .iter()
        .filter_map(|t| t.state.as_ref())
        .flat_map(|s| s.iter().map(|(d, sl, v)| (d.to_string(), sl.to_string(), v.to_string())))
        .collect();
    keys.sort();
    keys.dedup();

    let mut map = ValueMap::default();
    // Keeps one surface replacement per original string where the candidates allow it.
    let mut by_surface: HashMap<String, String> = HashMap::new();
    for (domain, slot, original) in keys {
        let Some(values) = target.values(&domain, &slot) else {
            if cfg.skip_missing_slots {
                continue;
            }
            return Err(Error::MissingSlot {
                dialogue: dialogue.id.clone(),
                domain,
                slot,
            });
        };
        let lowered = original.to_lowercase();
        if let Some(prev) = by_surface.get(&lowered) {
            if values.iter().any(|v| v == prev) {
                map.insert(&domain, &slot, &original, &prev.clone());
                continue;
            }
        }
        let mut candidates: Vec<&String> = values.iter().collect();
        if cfg.exclude_original {
            let others: Vec<&String> = values.iter().filter(|v| v.to_lowercase() != lowered).collect();
            if !others.is_empty() {
                candidates = others;
            }
        }
        let replacement = (*candidates.choose(rng).expect("ontology slots have values")).clone();
        by_surface.entry(lowered).or_insert_with(|| replacement.clone());
        map.insert(&domain, &slot, &original, &replacement);
    }
    Ok(map)
}

/// Rewrites utterances, states and act values through `map`. Turn count, speakers and the
/// act sequence are kept.
pub fn apply_value_map(dialogue: &Dialogue, map: &ValueMap, cfg: &OntologyConfig) -> Result<Dialogue> {
    let surface = map.surface();
    let originals: Vec<&str> = surface.iter().map(|(o, _)| o.as_str()).collect();
    let mut out = dialogue.clone();
    let mut matched = vec![false; surface.len()];

    for turn in &mut out.turns {
        let spans = find_matches(&turn.text, &originals);
        if !spans.is_empty() {
            turn.text = splice(&turn.text, &spans, |span, matched_text| {
                matched[span.candidate] = true;
                let (original, replacement) = &surface[span.candidate];
                if replacement.to_lowercase() == *original {
                    matched_text.to_string()
                } else {
                    mirror_case(matched_text, replacement)
                }
            });
        }
        if let Some(state) = &turn.state {
            turn.state = Some(state.map_values(|d, s, v| map.get(d, s, v).unwrap_or(v).to_string()));
        }
        for act in &mut turn.acts {
            for slot in &mut act.slots {
                if let Some(v) = &slot.value {
                    if let Some(r) = map.get(&slot.domain, &slot.slot, v) {
                        slot.value = Some(r.to_string());
                    }
                }
            }
        }
    }

    if cfg.require_surface_match {
        for (domain, slot, original, _) in map.iter() {
            let idx = surface
                .iter()
                .position(|(o, _)| *o == original.to_lowercase())
                .expect("every original has a surface entry");
            if !matched[idx] {
                return Err(Error::NoSurfaceMatch {
                    dialogue: dialogue.id.clone(),
                    domain: domain.to_string(),
                    slot: slot.to_string(),
                    value: original.to_string(),
                });
            }
        }
    }
    Ok(out)
}

/// Builds a value map and applies it.
pub fn enrich_dialogue<R: Rng + ?Sized>(
    dialogue: &Dialogue,
    target: &Ontology,
    rng: &mut R,
    cfg: &OntologyConfig,
) -> Result<Dialogue> {
    let map = build_value_map(dialogue, target, rng, cfg)?;
    apply_value_map(dialogue, &map, cfg)
}

fn has_letters(name: &str) -> bool {
    name.chars().any(char::is_alphanumeric)
}

/// Regrounds every knowledge-seeking turn on a snippet from `target` and renames the
/// entity in all utterances.
///
/// Each distinct source entity is mapped to one target entity of the same domain (any
/// domain when the target has none), preferring a different entity when one exists. The
/// new snippet is drawn uniformly from that entity's snippets.
pub fn augment_knowledge_dialogue<R: Rng + ?Sized>(
    dialogue: &Dialogue,
    source: &KnowledgeBase,
    target: &KnowledgeBase,
    rng: &mut R,
) -> Result<Dialogue> {
    if target.is_empty() {
        return Err(Error::Knowledge("target knowledge base is empty".into()));
    }
    if !dialogue.turns.iter().any(|t| t.knowledge_ref.is_some()) {
        return Err(Error::validation(&dialogue.id, None, "no knowledge-grounded turn"));
    }

    // Target entities in first-seen order, each with its snippet positions.
    let mut entities: Vec<((String, String), Vec<usize>)> = Vec::new();
    for (i, s) in target.snippets().iter().enumerate() {
        let key = (s.domain.clone(), s.entity_id.clone());
        match entities.iter_mut().find(|(k, _)| *k == key) {
            Some((_, docs)) => docs.push(i),
            None => entities.push((key, vec![i])),
        }
    }

    let mut out = dialogue.clone();
    let mut entity_map: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut renames: Vec<(String, String)> = Vec::new();

    for (ti, turn) in out.turns.iter_mut().enumerate() {
        let Some(old_id) = turn.knowledge_ref.clone() else {
            continue;
        };
        let old = source
            .get(&old_id)
            .ok_or_else(|| Error::validation(&dialogue.id, Some(ti + 1), format!("unknown snippet {old_id:?}")))?;
        let old_key = (old.domain.clone(), old.entity_id.clone());
        let entity_idx = match entity_map.get(&old_key) {
            Some(&e) => e,
            None => {
                let same_domain: Vec<usize> = (0..entities.len())
                    .filter(|&e| entities[e].0 .0 == old.domain)
                    .collect();
                let mut pool = if same_domain.is_empty() {
                    (0..entities.len()).collect()
                } else {
                    same_domain
                };
                let others: Vec<usize> = pool.iter().copied().filter(|&e| entities[e].0 != old_key).collect();
                if !others.is_empty() {
                    pool = others;
                }
                let e = *pool.choose(rng).expect("pool is non-empty");
                entity_map.insert(old_key.clone(), e);
                let new_name = &target.snippets()[entities[e].1[0]].entity_name;
                if entities[e].0 != old_key
                    && has_letters(&old.entity_name)
                    && has_letters(new_name)
                    && old.entity_name != "*"
                    && new_name != "*"
                {
                    renames.push((old.entity_name.clone(), new_name.clone()));
                }
                e
            }
        };
        let snippet_pos = *entities[entity_idx].1.choose(rng).expect("entities have snippets");
        let new = &target.snippets()[snippet_pos];
        turn.knowledge_ref = Some(new.id.clone());
        out.domains.insert(new.domain.clone());
    }

    if !renames.is_empty() {
        let olds: Vec<&str> = renames.iter().map(|(o, _)| o.as_str()).collect();
        for turn in &mut out.turns {
            let spans = find_matches(&turn.text, &olds);
            if !spans.is_empty() {
                turn.text = splice(&turn.text, &spans, |span, matched| {
                    mirror_case(matched, &renames[span.candidate].1)
                });
            }
        }
    }
    Ok(out)
}

/// Positions (0-based) of system turns that answer a knowledge-grounded user turn.
pub fn grounded_system_turns(dialogue: &Dialogue) -> Vec<usize> {
    (1..dialogue.turns.len())
        .filter(|&i| {
            dialogue.turns[i].speaker == Speaker::System && dialogue.turns[i - 1].knowledge_ref.is_some()
        })
        .collect()
}

/// With probability `p` per grounded system turn, prepends one phrase drawn from `phrases`.
pub fn insert_reference_phrases<R: Rng + ?Sized>(
    dialogue: &Dialogue,
    phrases: &[String],
    p: f64,
    rng: &mut R,
) -> Result<Dialogue> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid("phrase probability", format!("{p} is outside [0, 1]")));
    }
    if phrases.is_empty() {
        return Err(Error::invalid("phrase list", "no phrases given"));
    }
    let mut out = dialogue.clone();
    for i in grounded_system_turns(dialogue) {
        if rng.gen_bool(p) {
            let phrase = phrases.choose(rng).expect("non-empty");
            let turn = &mut out.turns[i];
            turn.text = format!("{} {}", phrase.trim(), turn.text);
        }
    }
    Ok(out)
}
