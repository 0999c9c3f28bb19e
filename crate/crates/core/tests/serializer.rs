mod common;

use common::*;
use proptest::prelude::*;
use tod_augment::corpus::{parse_corpus, Dialogue, DialogueState, Turn};
use tod_augment::negatives::{sample_corpus_negatives, NegativeConfig, NegativeSampler};
use tod_augment::serializer::{
    detection_examples, dst_examples, generation_examples, index_negatives, linearize_state, parse_state,
    render_context, selection_examples, serialize_corpus, SerializeInputs, Target, Task,
};
use tod_augment::RngStream;

#[test]
fn linearization_examples() {
    assert_eq!(linearize_state(&DialogueState::new()), "none");
    let s = state(&[("restaurant", "food", "italian"), ("hotel", "area", "east")]);
    assert_eq!(linearize_state(&s), "hotel area = east ; restaurant food = italian");
}

#[test]
fn one_turn_dialogue_with_zero_window() {
    let d = Dialogue::new("d", vec![Turn::user("I need a hotel in the east", state(&[("hotel", "area", "east")]))]);
    let ex = dst_examples(&d, 0);
    assert_eq!(ex.len(), 1);
    assert_eq!(ex[0].source, "[user] I need a hotel in the east [state] none");
    assert_eq!(ex[0].target, Target::Text("hotel area = east".into()));
}

#[test]
fn window_covers_exactly_the_last_turns() {
    let d = &seed_corpus()[0];
    let ex = dst_examples(d, 2);
    let at5 = ex.iter().find(|e| e.meta.turn == 5).unwrap();
    let expected = format!("{} [state] {}", render_context(&d.turns[2..5]), linearize_state(&d.state_before(5)));
    assert_eq!(at5.source, expected);
    assert!(!at5.source.contains(&d.turns[1].text));
}

#[test]
fn dst_targets_follow_the_annotated_updates() {
    for d in seed_corpus() {
        let ex = dst_examples(&d, 2);
        assert_eq!(ex.len(), d.turns.iter().filter(|t| t.is_user()).count());
        let mut prev = DialogueState::new();
        for e in &ex {
            let turn = &d.turns[e.meta.turn - 1];
            let mut update = DialogueState::new();
            for act in turn.acts.iter().filter(|a| a.act == "inform" || a.act == "book") {
                for s in &act.slots {
                    if let Some(v) = &s.value {
                        update.set(s.domain.as_str(), s.slot.as_str(), v.as_str());
                    }
                }
            }
            let Target::Text(t) = &e.target else { panic!("dst target is text") };
            let parsed = parse_state(t).unwrap();
            assert_eq!(parsed, prev.overlay(&update), "{} turn {}", d.id, e.meta.turn);
            assert!(e.source.ends_with(&format!("[state] {}", linearize_state(&prev))));
            prev = parsed;
        }
    }
}

#[test]
fn detection_examples_and_labels() {
    let mut only = Turn::user("Do they allow pets?", DialogueState::new());
    only.seeks_knowledge = Some(true);
    let ex = detection_examples(&Dialogue::new("d", vec![only])).unwrap();
    assert_eq!(ex.len(), 1);
    assert_eq!(ex[0].target, Target::Label(1));

    let corpus = knowledge_dialogues();
    let positives = corpus
        .iter()
        .flat_map(|d| &d.turns)
        .filter(|t| t.seeks_knowledge == Some(true))
        .count();
    let all = serialize_corpus(&corpus, Task::Detection, 2, SerializeInputs::default()).unwrap();
    assert_eq!(all.iter().filter(|e| e.target == Target::Label(1)).count(), positives);
    for d in &corpus {
        for e in detection_examples(d).unwrap() {
            assert_eq!(e.source, render_context(&d.turns[..e.meta.turn]));
            assert_eq!(e.source.matches("[user] ").count() + e.source.matches("[system] ").count(), e.meta.turn);
        }
    }

    let unflagged = Dialogue::new("u", vec![Turn::user("hello", DialogueState::new())]);
    assert!(detection_examples(&unflagged).is_err());
}

#[test]
fn selection_counts_and_positive_label() {
    let kb = knowledge();
    let corpus = knowledge_dialogues();
    let sampler = NegativeSampler::new(&kb, NegativeConfig::default()).unwrap();
    let records = sample_corpus_negatives(&corpus, &sampler, &RngStream::new(4)).unwrap();
    let index = index_negatives(&records);
    let mut expected = 0;
    for d in &corpus {
        let ex = selection_examples(d, &kb, &index).unwrap();
        let grounded: Vec<usize> = (0..d.turns.len()).filter(|&i| d.turns[i].knowledge_ref.is_some()).collect();
        for &i in &grounded {
            let rec = &index[&(d.id.clone(), i + 1)];
            assert_eq!(rec.negatives.len(), 5);
            let here: Vec<_> = ex.iter().filter(|e| e.meta.turn == i + 1).collect();
            assert_eq!(here.len(), 6);
            let pos: Vec<_> = here.iter().filter(|e| e.target == Target::Label(1)).collect();
            assert_eq!(pos.len(), 1);
            assert_eq!(pos[0].meta.snippet_id.as_deref(), d.turns[i].knowledge_ref.as_deref());
            expected += 1 + rec.negatives.len();
        }
    }
    let all = serialize_corpus(
        &corpus,
        Task::Selection,
        2,
        SerializeInputs {
            knowledge: Some(&kb),
            negatives: Some(&index),
        },
    )
    .unwrap();
    assert_eq!(all.len(), expected);
}

#[test]
fn generation_targets_are_system_replies() {
    let kb = knowledge();
    let corpus = knowledge_dialogues();
    let mut grounded = 0;
    for d in &corpus {
        for e in generation_examples(d, &kb).unwrap() {
            let snippet = kb.get(e.meta.snippet_id.as_deref().unwrap()).unwrap();
            assert!(e.source.contains(&snippet.answer));
            assert_eq!(e.target, Target::Text(d.turns[e.meta.turn - 1].text.clone()));
        }
        grounded += d.turns.iter().filter(|t| t.knowledge_ref.is_some()).count();
    }
    let all = serialize_corpus(
        &corpus,
        Task::Generation,
        2,
        SerializeInputs {
            knowledge: Some(&kb),
            negatives: None,
        },
    )
    .unwrap();
    assert_eq!(all.len(), grounded);

    let mut u = Turn::user("Is there wifi?", DialogueState::new());
    u.knowledge_ref = Some("hotel:1:0".into());
    assert!(generation_examples(&Dialogue::new("x", vec![u]), &kb).is_err());
}

#[test]
fn serialization_fixture_contract() {
    let corpus = parse_corpus(&fixture("serialization_corpus.json")).unwrap();
    assert_eq!(corpus.len(), 50);
    let ex = serialize_corpus(&corpus, Task::Dst, 2, SerializeInputs::default()).unwrap();
    let users = corpus.iter().flat_map(|d| &d.turns).filter(|t| t.is_user()).count();
    assert_eq!(ex.len(), users);
    for e in &ex {
        let Target::Text(t) = &e.target else { panic!() };
        assert_eq!(linearize_state(&parse_state(t).unwrap()), *t);
    }
}

#[test]
fn serialization_is_deterministic() {
    let corpus = seed_corpus();
    let a = serialize_corpus(&corpus, Task::Dst, 2, SerializeInputs::default()).unwrap();
    let b = serialize_corpus(&corpus, Task::Dst, 2, SerializeInputs::default()).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn state_text_round_trips(s in arb_state()) {
        let text = linearize_state(&s);
        prop_assert_eq!(parse_state(&text).unwrap(), s);
        prop_assert_eq!(linearize_state(&parse_state(&text).unwrap()), text);
    }

    #[test]
    fn dst_shape_laws(d in arb_dialogue(), window in 0usize..5) {
        let ex = dst_examples(&d, window);
        prop_assert_eq!(ex.len(), d.turns.iter().filter(|t| t.is_user()).count());
        for e in &ex {
            let turns = e.source.matches("[user] ").count() + e.source.matches("[system] ").count();
            prop_assert!(turns <= window + 1);
        }
    }

    #[test]
    fn contexts_extend_by_prefix(d in arb_dialogue()) {
        for t in 1..d.turns.len() {
            let shorter = render_context(&d.turns[..t]);
            let longer = render_context(&d.turns[..=t]);
            prop_assert!(longer.starts_with(&shorter));
        }
    }
}
