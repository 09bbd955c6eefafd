//! Error types shared across the engine.

use thiserror::Error;

/// Errors produced by the routing engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes are incompatible for the requested operation.
    #[error("{op}: shape mismatch ({detail})")]
    Shape { op: &'static str, detail: String },

    /// A parameter is outside its accepted range.
    #[error("invalid parameter `{name}`: {detail}")]
    Parameter { name: &'static str, detail: String },

    /// A tensor contains NaN or infinite entries.
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    /// Cosine similarity is undefined for a zero vector or zero product.
    #[error("similarity undefined: {what} is zero")]
    UndefinedSimilarity { what: String },

    /// The two-step merge requires every selected expert to share one rank.
    #[error("selected experts have mixed ranks {ranks:?}; use the fused merge")]
    MixedRanks { ranks: Vec<usize> },

    /// The SGD trainer diverged.
    #[error("training diverged at step {step} with loss {loss:e}")]
    Diverged {
        step: usize,
        loss: f64,
        /// Per-step losses up to and including the diverging step.
        trace: Vec<f64>,
    },

    /// An error that occurred while processing one adapter of a library,
    /// tagged with where it happened.
    #[error("layer `{layer_id}`, expert `{expert_id}`: {source}")]
    InAdapter {
        layer_id: String,
        expert_id: String,
        #[source]
        source: Box<Error>,
    },

    /// Library-level semantic validation failed.
    #[error("invalid adapter library: {0}")]
    Validation(String),

    /// Bundle I/O or parsing failed.
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Errors raised while reading or writing SALB bundle files.
///
/// Each parse failure mode gets its own variant so callers can distinguish a
/// wrong file type from a damaged file from a metadata bug.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bad magic bytes {found:?}, expected \"SALB\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported bundle version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },

    #[error("truncated bundle: {context}")]
    Truncated { context: String },

    #[error("header metadata contradicts payload: {0}")]
    Metadata(String),

    #[error("header is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
