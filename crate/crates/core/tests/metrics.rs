mod common;

use common::*;
use proptest::prelude::*;
use tod_augment::corpus::DialogueState;
use tod_augment::metrics::{
    detection_prf, evaluate_detection, evaluate_dst, evaluate_selection, joint_goal_accuracy, mrr_at_k,
    parse_records, recall_at_k, EvalReport,
};

#[test]
fn joint_goal_accuracy_examples() {
    let a = state(&[("hotel", "area", "east")]);
    let b = state(&[("hotel", "area", "west")]);
    let all: Vec<_> = (0..4).map(|_| (a.clone(), a.clone())).collect();
    assert_eq!(joint_goal_accuracy(&all).unwrap(), 1.0);
    let mut three = all.clone();
    three[2].0 = b.clone();
    assert_eq!(joint_goal_accuracy(&three).unwrap(), 0.75);
    assert!(joint_goal_accuracy(&[]).is_err());
}

#[test]
fn joint_goal_accuracy_on_a_hand_scored_fixture() {
    let gold = [
        state(&[("restaurant", "food", "italian")]),
        state(&[("restaurant", "food", "italian"), ("restaurant", "area", "centre")]),
        state(&[("hotel", "stars", "4")]),
        DialogueState::new(),
        state(&[("hotel", "parking", "free"), ("hotel", "area", "north")]),
        state(&[("restaurant", "book day", "friday")]),
        state(&[("hotel", "name", "acorn lodge")]),
        state(&[("restaurant", "pricerange", "cheap")]),
        state(&[("hotel", "book stay", "3")]),
        state(&[("restaurant", "book people", "2"), ("restaurant", "book time", "18:00")]),
    ];
    let pred = [
        state(&[("restaurant", "food", "italian")]),
        state(&[("restaurant", "food", "italian")]),
        state(&[("hotel", "stars", "4")]),
        DialogueState::new(),
        state(&[("hotel", "parking", "free"), ("hotel", "area", "north")]),
        state(&[("restaurant", "book day", "saturday")]),
        state(&[("hotel", "name", "Acorn  Lodge")]),
        state(&[("restaurant", "pricerange", "cheap"), ("restaurant", "area", "west")]),
        state(&[("hotel", "book stay", "3")]),
        state(&[("restaurant", "book people", "2"), ("restaurant", "book time", "18:00")]),
    ];
    // Wrong: turn 2 (missing slot), turn 6 (wrong value), turn 8 (extra slot). Turn 7 only
    // differs in case and spacing.
    let pairs: Vec<_> = pred.into_iter().zip(gold).collect();
    assert_eq!(joint_goal_accuracy(&pairs).unwrap(), 0.7);
}

#[test]
fn detection_scores() {
    let perfect = detection_prf(&[true, false, true], &[true, false, true]).unwrap();
    assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

    let none = detection_prf(&[false, false], &[true, false]).unwrap();
    assert_eq!((none.precision, none.f1), (0.0, 0.0));

    // TP = 2, FP = 1, FN = 1.
    let pred = [true, true, true, false, false];
    let gold = [true, true, false, true, false];
    let s = detection_prf(&pred, &gold).unwrap();
    for v in [s.precision, s.recall, s.f1] {
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
    }
    assert!(detection_prf(&[true], &[true, false]).is_err());
}

fn ranked(gold_rank: usize) -> (Vec<String>, String) {
    let ids: Vec<String> = (1..=10).map(|i| format!("s{i}")).collect();
    (ids, format!("s{gold_rank}"))
}

#[test]
fn reciprocal_rank_examples() {
    assert!((mrr_at_k(&[ranked(3)], 5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(mrr_at_k(&[ranked(7)], 5).unwrap(), 0.0);
    assert_eq!(mrr_at_k(&[ranked(1)], 5).unwrap(), 1.0);
    // (1 + 1/2 + 0 + 1/5) / 4
    let four = [ranked(1), ranked(2), ranked(6), ranked(5)];
    assert!((mrr_at_k(&four, 5).unwrap() - 0.425).abs() < 1e-12);
    assert_eq!(recall_at_k(&four, 5).unwrap(), 0.75);
    assert!(mrr_at_k::<String>(&[], 5).is_err());
}

#[test]
fn evaluation_over_jsonl_records() {
    let gold = br#"{"dialogue_id":"a","turn":1,"state":"hotel area = east"}
{"dialogue_id":"a","turn":3,"state":"hotel area = east ; hotel stars = 4"}
"#;
    let pred = br#"{"dialogue_id":"a","turn":3,"state":[{"domain":"hotel","slot":"stars","value":"4"},{"domain":"hotel","slot":"area","value":"East"}]}
{"dialogue_id":"a","turn":1,"state":"hotel area = west"}
"#;
    let r = evaluate_dst(parse_records("p", pred).unwrap(), parse_records("g", gold).unwrap()).unwrap();
    assert_eq!(r, EvalReport::Dst { joint_goal_accuracy: 0.5, turns: 2 });

    let gold = b"{\"meta\":{\"dialogue_id\":\"a\",\"turn\":1},\"target\":1}\n{\"meta\":{\"dialogue_id\":\"a\",\"turn\":3},\"target\":0}\n";
    let pred = b"{\"dialogue_id\":\"a\",\"turn\":1,\"label\":true}\n{\"dialogue_id\":\"a\",\"turn\":3,\"label\":true}\n";
    let r = evaluate_detection(parse_records("p", pred).unwrap(), parse_records("g", gold).unwrap()).unwrap();
    assert_eq!(r, EvalReport::Detection { precision: 0.5, recall: 1.0, f1: 2.0 / 3.0, turns: 2 });

    let gold = b"{\"dialogue_id\":\"a\",\"turn\":2,\"positive\":\"x\"}\n";
    let pred = b"{\"dialogue_id\":\"a\",\"turn\":2,\"ranking\":[\"y\",\"x\"]}\n";
    let r = evaluate_selection(parse_records("p", pred).unwrap(), parse_records("g", gold).unwrap()).unwrap();
    assert_eq!(
        r,
        EvalReport::Selection { mrr_at_5: 0.5, recall_at_1: 0.0, recall_at_5: 1.0, queries: 1 }
    );

    let missing = b"{\"dialogue_id\":\"b\",\"turn\":2,\"ranking\":[\"x\"]}\n";
    let err = evaluate_selection(parse_records("p", missing).unwrap(), parse_records("g", gold).unwrap());
    assert!(err.is_err());
}

fn arb_queries() -> impl Strategy<Value = Vec<(Vec<String>, String)>> {
    prop::collection::vec((prop::collection::vec(0u8..12, 0..12), 0u8..12), 1..40).prop_map(|qs| {
        qs.into_iter()
            .map(|(ids, g)| (ids.into_iter().map(|i| format!("s{i}")).collect(), format!("s{g}")))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn accuracy_ignores_order(pairs in prop::collection::vec((arb_state(), arb_state()), 1..20), rot in 0usize..20) {
        let mut shuffled = pairs.clone();
        shuffled.rotate_left(rot % pairs.len());
        shuffled.reverse();
        let a = joint_goal_accuracy(&pairs).unwrap();
        prop_assert_eq!(a, joint_goal_accuracy(&shuffled).unwrap());
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ranking_metrics_are_ordered(qs in arb_queries()) {
        let r1 = recall_at_k(&qs, 1).unwrap();
        let mrr = mrr_at_k(&qs, 5).unwrap();
        let r5 = recall_at_k(&qs, 5).unwrap();
        prop_assert!(r1 <= mrr + 1e-12 && mrr <= r5 + 1e-12, "{r1} {mrr} {r5}");
    }

    #[test]
    fn detection_scores_are_bounded(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 0..50)) {
        let (p, g): (Vec<bool>, Vec<bool>) = pairs.into_iter().unzip();
        let s = detection_prf(&p, &g).unwrap();
        for v in [s.precision, s.recall, s.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
    }
}
