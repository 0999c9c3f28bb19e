//! Regrounds knowledge-seeking dialogues on another knowledge base and prepends
//! reference phrases to grounded responses.
//!
//! ```text
//! cargo run --example knowledge_enrichment
//! ```

use tod_augment::corpus::{parse_corpus, parse_knowledge_base};
use tod_augment::enrich::{augment_knowledge_dialogue, insert_reference_phrases};
use tod_augment::pipeline::parse_phrases;
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let dialogues = parse_corpus(&fixture("knowledge_dialogues.json"))?;
    let source = parse_knowledge_base(&fixture("knowledge.json"))?;
    let target = parse_knowledge_base(&fixture("target_knowledge.json"))?;
    let phrases = parse_phrases(&fixture("phrases.txt"));
    let stream = RngStream::new(3);

    for dialogue in dialogues.iter().filter(|d| d.domains.contains("hotel")) {
        let mut rng = stream.stream("enrich-knowledge", &dialogue.id);
        let regrounded = augment_knowledge_dialogue(dialogue, &source, &target, &mut rng)?;
        let out = insert_reference_phrases(&regrounded, &phrases, 1.0, &mut rng)?;
        println!("{}:", out.id);
        for turn in &out.turns {
            let grounding = turn.knowledge_ref.as_deref().unwrap_or("");
            println!("  {:>6}: {} {grounding}", turn.speaker.as_str(), turn.text);
        }
    }
    Ok(())
}
