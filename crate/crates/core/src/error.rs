//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Quantizing or training hit a NaN/Inf value; the index is into the
    /// flattened row-major data of the offending tensor.
    #[error("non-finite value {value} at flat index {index}{}", context_suffix(.context))]
    NonFinite {
        index: usize,
        value: f32,
        context: String,
    },

    #[error("invalid quantization spec: {0}")]
    InvalidSpec(String),

    /// The L1 norm of the input is zero, so relative quantization error is
    /// undefined.
    #[error("zero-norm input: quantized loss is undefined")]
    ZeroNorm,

    #[error("zero-norm group {group} (filters {start}..{end})")]
    ZeroNormGroup {
        group: usize,
        start: usize,
        end: usize,
    },

    #[error("empty tensor")]
    EmptyTensor,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid group size {0}: must be >= 1 or the whole-layer sentinel -1")]
    InvalidGroupSize(i32),

    #[error("invalid group scheme: {0}")]
    InvalidScheme(String),

    /// Grouped quantization on a layer that is not followed by batch norm;
    /// the per-group scales could never be merged away at inference.
    #[error("fold unsupported: {0}")]
    FoldUnsupported(String),

    #[error("activation threshold became non-positive ({0}): divergent step size or degenerate activations")]
    NonPositiveThreshold(f32),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at epoch {0}: loss is not finite")]
    Diverged(usize),

    #[error("unknown layer {name}; available: {available}")]
    UnknownLayer { name: String, available: String },

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: String, reason: String },

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn context_suffix(context: &str) -> String {
    if context.is_empty() {
        String::new()
    } else {
        format!(" ({context})")
    }
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
