//! Decode result shared by the code decoders and the binning oracle.

use serde::Serialize;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize)]
pub enum DecodeStatus {
    /// Unique consistent reconstruction found.
    Recovered,
    /// Constraints conflict or more than one candidate survives.
    Ambiguous,
    /// Underdetermined: the constraint system does not pin every symbol.
    RankDeficient,
    /// Iterative decoder ran out of iterations without converging.
    IterationsExhausted,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct DecodeStats {
    /// Peeling resolutions plus one for a linear-algebra pass, or message
    /// passing iterations for the iterative decoder.
    pub iterations: usize,
    /// Symbols recovered by peeling alone.
    pub peeled: usize,
    /// Pivots placed by the Gaussian elimination fallback.
    pub ge_pivots: usize,
    /// Candidates left by the typicality decoder (binning oracle only).
    pub survivors: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecodeOutcome {
    pub status: DecodeStatus,
    /// Reconstructed symbols (0/1), present only on `Recovered`.
    pub x_hat: Option<Vec<u8>>,
    pub stats: DecodeStats,
}

impl DecodeOutcome {
    pub fn recovered(&self) -> bool {
        self.status == DecodeStatus::Recovered
    }
}
