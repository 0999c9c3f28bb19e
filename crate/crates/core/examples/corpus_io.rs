//! Parses, validates and canonically re-serializes a corpus, then prints summary stats.
//!
//! ```text
//! cargo run --example corpus_io -- path/to/corpus.json
//! ```

use tod_augment::corpus::{parse_corpus, write_corpus};
use tod_augment::pipeline::stats;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/seed_corpus.json").to_string());
    let bytes = std::fs::read(&path)?;
    let corpus = parse_corpus(&bytes)?;
    let canonical = write_corpus(&corpus);
    assert_eq!(parse_corpus(&canonical)?, corpus);
    println!("{path}: {} dialogues, canonical form is {} bytes", corpus.len(), canonical.len());
    println!("{}", serde_json::to_string_pretty(&stats(&corpus))?);
    Ok(())
}
