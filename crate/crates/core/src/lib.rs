//! Encode a source once, serve every reader from one stored bitstream.
//!
//! A request names a previously decoded source as side information; the
//! server answers with a prefix of the stored stream, longer prefixes for
//! weaker side information. Decoding combines the prefix with the side
//! information; nothing is ever re-encoded. The crate covers the pieces of
//! that pipeline:
//!
//! * [`entropy`] — achievable transmission/storage rates per request graph,
//!   plus the Gaussian rate-distortion variant and universal-mode overhead.
//! * [`graph`] — request navigation graphs: who may be asked after whom.
//! * [`model`] — per-edge correlation channels (erasure, flip, Gaussian).
//! * [`source`] — reproducible synthetic ensembles and empirical statistics.
//! * [`staircase`] / [`ldpca`] — the two incremental code families behind
//!   the stream: parity staircases for erasure side information,
//!   accumulated syndromes for bit-flip side information.
//! * [`codec`] — builds, serializes, slices, and decodes the embedded
//!   bitstream itself.
//! * [`binning`] — a brute-force random-binning oracle on toy block lengths,
//!   used to sanity-check the rate region empirically.

pub mod binning;
pub mod bits;
pub mod codec;
pub mod entropy;
pub mod error;
pub mod graph;
pub mod ldpca;
pub mod model;
pub mod outcome;
pub mod par;
pub mod source;
pub mod staircase;

pub use error::{Error, Result};
