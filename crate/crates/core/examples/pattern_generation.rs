//! Fits patterns and action transitions on the seed corpus, adds two hand-written
//! patterns that use prefix and suffix expressions, and generates new dialogues.
//!
//! ```text
//! cargo run --example pattern_generation -- 5
//! ```

use tod_augment::corpus::{parse_corpus, parse_database, parse_ontology, ActionSignature, Speaker};
use tod_augment::enrich::{fit, generate_dialogues, parse_lexicon, Pattern, PatternConfig};
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let count: usize = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(3);
    let corpus = parse_corpus(&fixture("seed_corpus.json"))?;
    let ontology = parse_ontology(&fixture("ontology.json"))?;
    let database = parse_database(&fixture("database.json"))?;
    let lexicon = parse_lexicon(&fixture("lexicon.json"))?;

    let mut model = fit(&corpus, &ontology)?;
    let inform = ActionSignature::new(Speaker::User, "inform");
    for template in [
        "I would like a [slot_prefix:restaurant.pricerange] restaurant [slot_suffix:restaurant.food].",
        "Is there a [slot_prefix:hotel.stars] hotel [slot_suffix:hotel.area]?",
    ] {
        model.library.add(Pattern::new(inform.clone(), template)?);
    }
    println!("{} patterns over {} actions", model.library.len(), model.library.actions().count());

    let generated = generate_dialogues(
        count,
        &model,
        &lexicon,
        &database,
        &ontology,
        &RngStream::new(5),
        &PatternConfig::default(),
    )?;
    for (dialogue, trace) in &generated {
        println!("{}:", dialogue.id);
        for (turn, (action, pattern)) in dialogue.turns.iter().zip(trace) {
            println!("  {:<22} #{pattern:<2} {}", action.to_string(), turn.text);
            if let Some(state) = &turn.state {
                println!("  {:<26} state: {}", "", tod_augment::serializer::linearize_state(state));
            }
        }
    }
    Ok(())
}
