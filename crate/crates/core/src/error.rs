use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every module in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition that is data-dependent
    /// (programmer contracts on pure index math panic instead).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Text input could not be parsed; `offset` is a byte offset into the input.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("underdetermined fit: {0}")]
    UnderdeterminedFit(String),

    #[error("illegal action: vertex {vertex} is not available in basic mode")]
    IllegalAction { vertex: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("division undefined: {0}")]
    DivisionUndefined(String),

    #[error("search space too large: {bound:.3e} candidates exceeds the {limit:.1e} bound")]
    SearchSpaceExceeded { bound: f64, limit: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
