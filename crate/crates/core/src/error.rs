use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate denominator ({0})")]
    DegenerateDenominator(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{what} exceeds the supported scale (limit {limit})")]
    ScaleGuard { what: String, limit: u64 },

    #[error("format error at line {line}: {msg}")]
    Format { line: usize, msg: String },

    #[error("unknown preset `{0}` (expected f1, jaccard, precision or accuracy)")]
    UnknownPreset(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },

    #[error("no valid candidate: every candidate had a degenerate validation metric")]
    NoValidCandidate,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
