//! Serve prefixes of stored embedded bitstreams over HTTP.
//!
//! The service owns a data directory of immutable artifacts: raw source
//! words, one encoded bitstream per source, and the matching rate reports.
//! Writes happen once (store a source, encode it); every later request is
//! answered by slicing the stored stream, never by re-encoding and never
//! by touching the raw inputs.
//!
//! * [`vfs`] — a narrow filesystem seam so tests can watch which files a
//!   handler reads.
//! * [`store`] — the on-disk layout and its crash-safe index.
//! * [`service`] — the axum router and handlers.

pub mod service;
pub mod store;
pub mod vfs;

pub use service::{app, serve, AppState, ServiceConfig};
pub use store::{Store, StoreLayout};
pub use vfs::{RecordingVfs, StdVfs, Vfs};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("source {0} is already stored")]
    SourceExists(u32),
    #[error("{0}")]
    Malformed(String),
    #[error("unknown source {0}")]
    UnknownSource(u32),
    #[error("sources not stored yet: {0:?}")]
    MissingSources(Vec<u32>),
    #[error("source {0} is not encoded yet")]
    NotEncoded(u32),
    #[error("no request edge {k}<-{prev}")]
    UnknownRequest { k: u32, prev: u32 },
    #[error(transparent)]
    Code(#[from] smra_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
