//! Augmentation toolkit for task-oriented dialogue corpora.

pub mod corpus;
pub mod enrich;
pub mod error;
pub mod metrics;
pub mod negatives;
pub mod pipeline;
pub mod rng;
pub mod serializer;
pub mod spoken;
pub mod text;

pub use error::{Error, Result};
pub use rng::RngStream;
