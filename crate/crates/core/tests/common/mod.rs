#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use proptest::prelude::*;
use tod_augment::corpus::{
    parse_corpus, parse_database, parse_knowledge_base, parse_ontology, ActSlot, ActionSignature, Database, Dialogue,
    DialogueAction, DialogueState, KnowledgeBase, Ontology, Speaker, Triple, Turn,
};
use tod_augment::enrich::{fit, parse_lexicon, ExpressionLexicon, Pattern, PatternModel};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn seed_corpus() -> Vec<Dialogue> {
    parse_corpus(&fixture("seed_corpus.json")).unwrap()
}

pub fn knowledge_dialogues() -> Vec<Dialogue> {
    parse_corpus(&fixture("knowledge_dialogues.json")).unwrap()
}

pub fn ontology() -> Ontology {
    parse_ontology(&fixture("ontology.json")).unwrap()
}

pub fn database() -> Database {
    parse_database(&fixture("database.json")).unwrap()
}

pub fn lexicon() -> ExpressionLexicon {
    parse_lexicon(&fixture("lexicon.json")).unwrap()
}

pub fn knowledge() -> KnowledgeBase {
    parse_knowledge_base(&fixture("knowledge.json")).unwrap()
}

pub const HAND_WRITTEN: &[&str] = &[
    "I would like a [slot_prefix:restaurant.pricerange] restaurant [slot_suffix:restaurant.food].",
    "Is there a [slot_prefix:hotel.stars] hotel [slot_suffix:hotel.area]?",
    "I need somewhere [slot_suffix:hotel.parking].",
];

/// Model fitted on the seed corpus plus hand-written expression patterns.
pub fn model() -> PatternModel {
    let mut m = fit(&seed_corpus(), &ontology()).unwrap();
    let inform = ActionSignature::new(Speaker::User, "inform");
    for t in HAND_WRITTEN {
        m.library.add(Pattern::new(inform.clone(), *t).unwrap());
    }
    m
}

pub fn state(triples: &[(&str, &str, &str)]) -> DialogueState {
    DialogueState::from_triples(triples.iter().map(|&(d, s, v)| Triple::new(d, s, v))).unwrap()
}

/// Lowercased alphanumeric runs; written independently of the library tokenizer.
pub fn ref_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Brute-force Okapi BM25 over raw document strings: every statistic is recounted per call.
pub fn ref_bm25(docs: &[String], query: &str, doc: usize, k1: f64, b: f64) -> f64 {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| ref_tokens(d)).collect();
    let n = docs.len() as f64;
    let avgdl = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let dl = toks[doc].len() as f64;
    let mut score = 0.0;
    for q in ref_tokens(query) {
        let df = toks.iter().filter(|t| t.contains(&q)).count() as f64;
        let tf = toks[doc].iter().filter(|t| **t == q).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        let norm = if avgdl > 0.0 { dl / avgdl } else { 0.0 };
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm));
    }
    score
}

/// Reference top-`m` documents for `query` (score > 0, `exclude` left out), ties by position.
pub fn ref_top(docs: &[String], query: &str, exclude: usize, m: usize) -> Vec<(usize, f64)> {
    let mut scored: Vec<(usize, f64)> = (0..docs.len())
        .filter(|&i| i != exclude)
        .map(|i| (i, ref_bm25(docs, query, i, 1.2, 0.75)))
        .filter(|&(_, s)| s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(m);
    scored
}

/// Whole-word, case-insensitive containment; an independent restatement of the matching rule.
pub fn mentions(text: &str, needle: &str) -> bool {
    let hay: Vec<char> = text.to_lowercase().chars().collect();
    let pat: Vec<char> = needle.to_lowercase().chars().collect();
    if pat.is_empty() || pat.len() > hay.len() {
        return false;
    }
    let word = |c: char| c.is_alphanumeric();
    (0..=hay.len() - pat.len()).any(|i| {
        hay[i..i + pat.len()] == pat[..]
            && (i == 0 || !word(hay[i - 1]))
            && (i + pat.len() == hay.len() || !word(hay[i + pat.len()]))
    })
}

// ---- proptest strategies ----

pub fn word() -> impl Strategy<Value = String> {
    "[a-z]{1,8}"
}

pub fn arb_state() -> impl Strategy<Value = DialogueState> {
    prop::collection::btree_map(("[a-z]{1,6}", "[a-z]{1,6}( [a-z]{1,4})?"), "[a-z0-9][a-z0-9 :'-]{0,10}[a-z0-9]", 0..6)
        .prop_map(|m: BTreeMap<(String, String), String>| {
            DialogueState::from_triples(m.into_iter().map(|((d, s), v)| Triple::new(d, s, v))).unwrap()
        })
}

fn arb_acts() -> impl Strategy<Value = Vec<DialogueAction>> {
    prop::collection::vec(
        (
            "[a-z]{2,8}",
            prop::collection::vec(("[a-z]{1,6}", "[a-z]{1,6}", prop::option::of("[a-z]{1,6}")), 0..3),
        )
            .prop_map(|(act, slots)| DialogueAction {
                act,
                slots: slots
                    .into_iter()
                    .map(|(domain, slot, value)| ActSlot { domain, slot, value })
                    .collect(),
            }),
        0..2,
    )
}

fn arb_text() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9 ,.?!'\u{e9}]{0,40}"
}

pub fn arb_dialogue() -> impl Strategy<Value = Dialogue> {
    (
        "[a-z0-9-]{1,10}",
        any::<bool>(),
        prop::collection::vec(
            (arb_text(), arb_acts(), arb_state(), prop::option::of(any::<bool>()), prop::option::of("[a-z]{1,5}:[0-9]")),
            1..7,
        ),
        prop::collection::btree_set("[a-z]{3,8}", 0..3),
    )
        .prop_map(|(id, system_first, raw, domains)| {
            let mut turns = Vec::new();
            let mut speaker = if system_first { Speaker::System } else { Speaker::User };
            for (text, acts, state, seeks, kref) in raw {
                let turn = match speaker {
                    Speaker::User => {
                        let mut t = Turn::user(text, state).with_acts(acts);
                        t.seeks_knowledge = seeks;
                        t.knowledge_ref = kref;
                        t
                    }
                    Speaker::System => Turn::system(text).with_acts(acts),
                };
                turns.push(turn);
                speaker = speaker.other();
            }
            if !turns.iter().any(Turn::is_user) {
                turns.push(Turn::user("ok", DialogueState::new()));
            }
            let mut d = Dialogue::new(id, turns);
            d.domains = domains;
            d
        })
}

pub fn arb_corpus() -> impl Strategy<Value = Vec<Dialogue>> {
    prop::collection::vec(arb_dialogue(), 0..5).prop_map(|mut ds| {
        for (i, d) in ds.iter_mut().enumerate() {
            d.id = format!("{}-{i}", d.id);
        }
        ds
    })
}

/// Checks one generated dialogue: informed values surface in their utterance, states follow
/// the overwrite recurrence, and every step of the walk has positive probability.
pub fn check_generated(
    d: &Dialogue,
    trace: &[(ActionSignature, usize)],
    model: &PatternModel,
    state_acts: &[&str],
) -> Result<(), String> {
    if trace.len() != d.turns.len() {
        return Err(format!("{}: trace has {} entries for {} turns", d.id, trace.len(), d.turns.len()));
    }
    let mut expected: BTreeMap<(String, String), String> = BTreeMap::new();
    let mut prev: Option<&ActionSignature> = None;
    for (t, (turn, (action, pick))) in d.turns.iter().zip(trace).enumerate() {
        let at = format!("{} turn {}", d.id, t + 1);
        if turn.signature() != *action {
            return Err(format!("{at}: signature {} but walked {action}", turn.signature()));
        }
        if *pick >= model.library.pool(action).len() {
            return Err(format!("{at}: pattern index {pick} out of range"));
        }
        if model.transitions.prob(prev, Some(action)) <= 0.0 {
            return Err(format!("{at}: zero-probability step into {action}"));
        }
        prev = Some(action);
        if turn.speaker != Speaker::User {
            continue;
        }
        let informs = state_acts.contains(&action.act.as_str());
        for act in &turn.acts {
            for s in &act.slots {
                let Some(v) = &s.value else { continue };
                if informs {
                    if !mentions(&turn.text, v) {
                        return Err(format!("{at}: value {v:?} not in {:?}", turn.text));
                    }
                    expected.insert((s.domain.clone(), s.slot.clone()), v.clone());
                }
            }
        }
        let got: BTreeMap<(String, String), String> = turn
            .state
            .as_ref()
            .ok_or_else(|| format!("{at}: user turn without state"))?
            .iter()
            .map(|(dd, ss, vv)| ((dd.to_string(), ss.to_string()), vv.to_string()))
            .collect();
        if got != expected {
            return Err(format!("{at}: state {got:?} but recurrence gives {expected:?}"));
        }
    }
    Ok(())
}

/// Per-operator laws, stated over inputs and outputs only.
pub mod laws {
    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    /// Removing one inserted filler recovers the token sequence.
    pub fn pause(input: &str, output: &str, fillers: &[String]) -> bool {
        let (i, o) = (toks(input), toks(output));
        if i == o {
            return true;
        }
        fillers.iter().any(|f| {
            let f = toks(f);
            o.len() == i.len() + f.len()
                && (0..=i.len()).any(|at| o[..at] == i[..at] && o[at..at + f.len()] == f[..] && o[at + f.len()..] == i[at..])
        })
    }

    /// Output is the input with one span of 1-3 tokens duplicated in place.
    pub fn repetition(input: &str, output: &str) -> bool {
        let (i, o) = (toks(input), toks(output));
        if i == o {
            return true;
        }
        (1..=3).any(|len| {
            o.len() == i.len() + len
                && (0..=i.len().saturating_sub(len)).any(|s| {
                    let mut rebuilt = i[..s + len].to_vec();
                    rebuilt.extend_from_slice(&i[s..s + len]);
                    rebuilt.extend_from_slice(&i[s + len..]);
                    rebuilt == o
                })
        })
    }

    pub fn restart(input: &str, output: &str, prefixes: &[String]) -> bool {
        output == input || prefixes.iter().any(|p| output == format!("{p} {input}"))
    }

    /// Same length, at most one position differs, and the change is a configured pair.
    pub fn substitute(input: &str, output: &str, pairs: &[[char; 2]]) -> bool {
        let (i, o): (Vec<char>, Vec<char>) = (input.chars().collect(), output.chars().collect());
        if i.len() != o.len() {
            return false;
        }
        let diffs: Vec<(char, char)> = i.iter().zip(&o).filter(|(a, b)| a != b).map(|(a, b)| (*a, *b)).collect();
        match diffs.as_slice() {
            [] => true,
            [(a, b)] => {
                let (a, b) = (a.to_ascii_lowercase(), b.to_ascii_lowercase());
                pairs.iter().any(|[x, y]| (*x == a && *y == b) || (*x == b && *y == a))
            }
            _ => false,
        }
    }

    /// Deleting one character of the output recovers the input.
    pub fn insert(input: &str, output: &str) -> bool {
        let o: Vec<char> = output.chars().collect();
        o.len() == input.chars().count() + 1
            && (0..o.len()).any(|k| o.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, c)| *c).collect::<String>() == input)
    }

    pub fn delete(input: &str, output: &str) -> bool {
        let i: Vec<char> = input.chars().collect();
        if i.len() < 2 {
            return input == output;
        }
        output.chars().count() == i.len() - 1
            && (0..i.len()).any(|k| i.iter().enumerate().filter(|(j, _)| *j != k).map(|(_, c)| *c).collect::<String>() == output)
    }

    /// Letter multiset kept; any change is one transposed pair of adjacent vowels.
    pub fn swap(input: &str, output: &str, vowels: &str) -> bool {
        let (i, o): (Vec<char>, Vec<char>) = (input.chars().collect(), output.chars().collect());
        let (mut si, mut so) = (i.clone(), o.clone());
        si.sort_unstable();
        so.sort_unstable();
        if si != so {
            return false;
        }
        let diffs: Vec<usize> = (0..i.len()).filter(|&k| i[k] != o[k]).collect();
        let v = |c: char| vowels.contains(c.to_ascii_lowercase());
        match diffs.as_slice() {
            [] => true,
            [a, b] => *b == a + 1 && v(i[*a]) && v(i[*b]) && i[*a] == o[*b] && i[*b] == o[*a],
            _ => false,
        }
    }

    /// Removing spaces recovers the word; one or two cuts for long words, none for short.
    pub fn split(input: &str, output: &str, min_len: usize) -> bool {
        let n = input.chars().count();
        let spaces = output.matches(' ').count();
        let parts_ok = output.split(' ').all(|p| !p.is_empty());
        output.replace(' ', "") == input
            && parts_ok
            && if n < min_len {
                spaces == 0
            } else if n >= 2 * min_len {
                spaces == 1 || spaces == 2
            } else {
                spaces == 1
            }
    }
}

/// Scale predicate for one negative, recomputed from the knowledge base alone.
pub fn ref_predicate(
    kb: &KnowledgeBase,
    positive: &str,
    context: &str,
    neg: &tod_augment::negatives::Negative,
    top_m: usize,
) -> Result<(), String> {
    use tod_augment::negatives::Scale;
    let snippets = kb.snippets();
    let p = snippets.iter().position(|s| s.id == positive).ok_or("unknown positive")?;
    let n = snippets.iter().position(|s| s.id == neg.id).ok_or("unknown negative")?;
    if p == n {
        return Err(format!("positive {positive} leaked as a negative"));
    }
    let (ps, ns) = (&snippets[p], &snippets[n]);
    let ok = match neg.effective_scale() {
        Scale::Random => true,
        Scale::InDomain => ns.domain == ps.domain,
        Scale::InEntity => ns.domain == ps.domain && ns.entity_id == ps.entity_id,
        Scale::CrossEntity => {
            !(ns.domain == ps.domain && ns.entity_id == ps.entity_id) && mentions(context, &ns.entity_name)
        }
        Scale::InSemantics => {
            let docs: Vec<String> = snippets.iter().map(|s| format!("{} {}", s.question, s.answer)).collect();
            ref_top(&docs, &docs[p], p, top_m).iter().any(|&(d, _)| d == n)
        }
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{} fails {:?} for positive {positive}", neg.id, neg.effective_scale()))
    }
}
