//! Runs a pipeline config end to end and writes its outputs atomically.
//!
//! ```text
//! cargo run --example full_pipeline -- crates/core/fixtures/knowledge_pipeline.json /tmp/out
//! ```

use std::path::PathBuf;

use tod_augment::pipeline::{run_pipeline, PipelineConfig};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/pipeline.json")));
    let mut cfg = PipelineConfig::load(&config)?;
    if let Some(out) = args.next() {
        cfg.output_dir = out.into();
    }
    let stats = run_pipeline(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&stats)?);
    println!("outputs in {}", cfg.output_dir.display());
    Ok(())
}
