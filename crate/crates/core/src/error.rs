use thiserror::Error;

/// Everything that can go wrong across the toolkit.
///
/// Container parsing keeps the three classic stream failures apart
/// (`BadMagic` / `TruncatedStream` / `ChecksumMismatch`) because callers
/// map them to different exit codes and HTTP statuses.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("previous-request family exceeds cap of {cap} subsets for source {source_id}")]
    SubsetCapExceeded { source_id: u32, cap: usize },

    #[error("storage insufficient: {0}")]
    StorageInsufficient(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported container version {0}")]
    BadVersion(u16),

    #[error("truncated stream: {0}")]
    TruncatedStream(String),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity failure: {0}")]
    Integrity(String),

    #[error("unknown request: {0}")]
    UnknownRequest(String),
}

pub type Result<T> = std::result::Result<T, Error>;
