use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed JSON. `offset` is the byte offset of the failure inside the input.
    #[error("{what}: malformed JSON at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        what: &'static str,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("dialogue {dialogue:?}{}: {message}", turn.map(|t| format!(", turn {t}")).unwrap_or_default())]
    Validation {
        dialogue: String,
        turn: Option<usize>,
        message: String,
    },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("dialogue {dialogue:?}: slot {domain}.{slot} is missing from the target ontology")]
    MissingSlot {
        dialogue: String,
        domain: String,
        slot: String,
    },

    #[error("dialogue {dialogue:?}: value {value:?} for {domain}.{slot} has no surface match")]
    NoSurfaceMatch {
        dialogue: String,
        domain: String,
        slot: String,
        value: String,
    },

    #[error("no patterns available for action {0}")]
    EmptyPatternPool(String),

    #[error("no expression lexicon entry for {domain}.{slot}")]
    MissingExpression { domain: String, slot: String },

    #[error("knowledge base: {0}")]
    Knowledge(String),

    #[error("unknown knowledge snippet {0:?}")]
    UnknownSnippet(String),

    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },

    #[error("{0}")]
    Metric(String),

    #[error("external noiser: {0}")]
    External(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(dialogue: &str, turn: Option<usize>, message: impl Into<String>) -> Self {
        Error::Validation {
            dialogue: dialogue.to_string(),
            turn,
            message: message.into(),
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            message: message.into(),
        }
    }

    /// Converts a serde_json failure into a [`Error::Parse`], recovering the byte offset
    /// from serde's line/column report.
    pub(crate) fn json(what: &'static str, input: &[u8], err: serde_json::Error) -> Self {
        let (line, column) = (err.line(), err.column());
        Error::Parse {
            what,
            offset: byte_offset(input, line, column),
            line,
            column,
            message: err.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

fn byte_offset(input: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current = 1;
    let mut start = 0;
    for (i, b) in input.iter().enumerate() {
        if current == line {
            break;
        }
        if *b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    // serde_json columns are 1-based and point at the offending byte.
    (start + column.saturating_sub(1)).min(input.len())
}
