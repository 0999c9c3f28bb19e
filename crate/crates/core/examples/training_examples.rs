//! Serializes dialogues into source/target pairs for the four training tasks.
//!
//! ```text
//! cargo run --example training_examples
//! ```

use tod_augment::corpus::{parse_corpus, parse_knowledge_base};
use tod_augment::negatives::{sample_corpus_negatives, NegativeConfig, NegativeSampler};
use tod_augment::serializer::{index_negatives, serialize_corpus, SerializeInputs, Task, DEFAULT_WINDOW};
use tod_augment::RngStream;

fn fixture(name: &str) -> Vec<u8> {
    std::fs::read(format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture")
}

fn main() -> anyhow::Result<()> {
    let seed = parse_corpus(&fixture("seed_corpus.json"))?;
    let grounded = parse_corpus(&fixture("knowledge_dialogues.json"))?;
    let kb = parse_knowledge_base(&fixture("knowledge.json"))?;
    let sampler = NegativeSampler::new(&kb, NegativeConfig::default())?;
    let negatives = index_negatives(&sample_corpus_negatives(&grounded, &sampler, &RngStream::new(2))?);
    let inputs = SerializeInputs {
        knowledge: Some(&kb),
        negatives: Some(&negatives),
    };

    for task in Task::ALL {
        let corpus = if task == Task::Dst { &seed } else { &grounded };
        let examples = serialize_corpus(&corpus[..1], task, DEFAULT_WINDOW, inputs)?;
        println!("== {task} ({} examples from one dialogue)", examples.len());
        for ex in examples.iter().take(2) {
            println!("{}", serde_json::to_string(ex)?);
        }
    }
    Ok(())
}
