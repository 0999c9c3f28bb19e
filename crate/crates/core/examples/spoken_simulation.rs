//! Applies the disfluency and phoneme operators to the seed corpus.
//!
//! ```text
//! cargo run --example spoken_simulation
//! ```

use tod_augment::corpus::{parse_corpus, parse_ontology};
use tod_augment::spoken::{simulate_corpus, NoiseConfig};
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let corpus = parse_corpus(&fixture("seed_corpus.json"))?;
    let ontology = parse_ontology(&fixture("ontology.json"))?;
    let cfg: NoiseConfig = serde_json::from_slice(&fixture("noise.json"))?;

    let (noisy, counts) = simulate_corpus(&corpus, Some(&ontology), &cfg, &RngStream::new(9))?;
    for (clean, noisy) in corpus.iter().zip(&noisy).take(3) {
        for (a, b) in clean.turns.iter().zip(&noisy.turns).filter(|(a, _)| a.is_user()) {
            println!("{:<55} => {}", a.text, b.text);
        }
    }
    println!("\n{}", serde_json::to_string_pretty(&counts)?);
    Ok(())
}
