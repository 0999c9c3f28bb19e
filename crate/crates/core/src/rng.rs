//! Keyed random streams.
//!
//! Every unit of work (a dialogue, a generated dialogue index, a grounded turn) draws from
//! its own stream of a counter-based generator. The stream is selected by a stable 64-bit
//! hash of `(stage, item)`, so results do not depend on scheduling or worker count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    master_seed: u64,
}

impl RngStream {
    pub fn new(master_seed: u64) -> Self {
        RngStream { master_seed }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Stable 64-bit key for `(stage, item)`.
    pub fn key(stage: &str, item: &str) -> u64 {
        let digest = Sha256::new()
            .chain_update((stage.len() as u64).to_le_bytes())
            .chain_update(stage.as_bytes())
            .chain_update(item.as_bytes())
            .finalize();
        let mut first = [0u8; 8];
        first.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(first)
    }

    pub fn stream(&self, stage: &str, item: &str) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(Self::key(stage, item));
        rng
    }
}
