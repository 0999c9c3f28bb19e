//! Builds a BM25 index over the knowledge base and samples one negative per scale for
//! each grounded turn.
//!
//! ```text
//! cargo run --example negative_sampling
//! ```

use tod_augment::corpus::{parse_corpus, parse_knowledge_base};
use tod_augment::negatives::{sample_corpus_negatives, NegativeConfig, NegativeSampler};
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let dialogues = parse_corpus(&fixture("knowledge_dialogues.json"))?;
    let kb = parse_knowledge_base(&fixture("knowledge.json"))?;
    let sampler = NegativeSampler::new(&kb, NegativeConfig::default())?;

    let query = "are dogs allowed in the hotel";
    println!("top BM25 hits for {query:?}:");
    for (doc, score) in sampler.index().rank(query).into_iter().take(3) {
        println!("  {score:>7.4} {}", sampler.index().id(doc));
    }

    for record in sample_corpus_negatives(&dialogues, &sampler, &RngStream::new(1))? {
        println!("\n{} turn {} positive {}", record.dialogue_id, record.turn, record.positive);
        for n in &record.negatives {
            let fallback = n.fallback.map(|f| format!(" (fell back to {f})")).unwrap_or_default();
            println!("  {:<13} {}{fallback}", n.scale.as_str(), n.id);
        }
    }
    Ok(())
}
