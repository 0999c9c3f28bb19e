//! Rewrites the seed corpus with values from a second ontology.
//!
//! ```text
//! cargo run --example ontology_enrichment
//! ```

use tod_augment::corpus::{parse_corpus, parse_ontology};
use tod_augment::enrich::{apply_value_map, build_value_map, OntologyConfig};
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let corpus = parse_corpus(&fixture("seed_corpus.json"))?;
    let target = parse_ontology(&fixture("target_ontology.json"))?;
    let stream = RngStream::new(11);
    let cfg = OntologyConfig::default();

    for dialogue in corpus.iter().take(2) {
        let mut rng = stream.stream("enrich-ontology", &dialogue.id);
        let map = build_value_map(dialogue, &target, &mut rng, &cfg)?;
        println!("{}:", dialogue.id);
        for (domain, slot, from, to) in map.iter() {
            println!("  {domain}.{slot}: {from} -> {to}");
        }
        let out = apply_value_map(dialogue, &map, &cfg)?;
        for (before, after) in dialogue.turns.iter().zip(&out.turns) {
            println!("  {:<60} | {}", before.text, after.text);
        }
    }
    Ok(())
}
