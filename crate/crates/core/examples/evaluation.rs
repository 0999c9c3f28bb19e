//! Scores predictions with joint goal accuracy, detection P/R/F1 and ranking metrics.
//!
//! ```text
//! cargo run --example evaluation
//! ```

use tod_augment::corpus::{DialogueState, Triple};
use tod_augment::metrics::{detection_prf, joint_goal_accuracy, mrr_at_k, recall_at_k};

fn state(triples: &[(&str, &str, &str)]) -> DialogueState {
    DialogueState::from_triples(triples.iter().map(|&(d, s, v)| Triple::new(d, s, v))).expect("valid state")
}

fn main() -> anyhow::Result<()> {
    let gold = state(&[("hotel", "area", "north"), ("hotel", "stars", "4")]);
    let close = state(&[("hotel", "area", "North"), ("hotel", "stars", "4")]);
    let wrong = state(&[("hotel", "area", "north")]);
    let jga = joint_goal_accuracy(&[(close, gold.clone()), (wrong, gold)])?;
    println!("joint goal accuracy: {jga}");

    let prf = detection_prf(&[true, true, false, true], &[true, false, true, true])?;
    println!("detection: p={:.3} r={:.3} f1={:.3}", prf.precision, prf.recall, prf.f1);

    let ranked = |gold_rank: usize| {
        let mut ids: Vec<String> = (0..10).map(|i| format!("neg-{i}")).collect();
        ids.insert(gold_rank - 1, "gold".to_string());
        (ids, "gold".to_string())
    };
    let queries: Vec<_> = [1, 2, 6, 5].into_iter().map(ranked).collect();
    println!(
        "selection: mrr@5={:.3} r@1={:.3} r@5={:.3}",
        mrr_at_k(&queries, 5)?,
        recall_at_k(&queries, 1)?,
        recall_at_k(&queries, 5)?
    );
    Ok(())
}
