//! The embedded bitstream: one stored encoding per source, sliced into
//! nested prefixes so that better side information buys a shorter read.
//!
//! [`offline_encode`] ranks a source's previous requests by conditional
//! entropy, finds the shortest decodable prefix for each realized side
//! information, and lays the increments out as consecutive segments of a
//! single parity (erasure mode) or accumulated-syndrome (bit-flip mode)
//! word. [`online_extract`] answers a request by cutting the prefix at the
//! requester's level marker; it never touches the source again. [`decode`]
//! rebuilds the code from header fields alone and combines prefix with
//! side information.
//!
//! Direct access (previous request 0) is served by a systematic tail
//! appended after the payload rather than by driving the incremental code
//! to rate 1; the cost is the same n bits and the read stays trivial.
//!
//! In universal mode the encoder works from empirical channel estimates
//! instead of model parameters and stores one learning string per level: a
//! parameter count quantized to ceil(log2(n+1)) bits, or the full joint
//! type table behind [`LearningMode::TypeTables`].

use serde::Serialize;

use crate::bits::{crc32, BitVec};
use crate::entropy::{conditional_entropy, rate_storage_single_memory, RateStorageBound};
use crate::error::{Error, Result};
use crate::graph::NavigationGraph;
use crate::ldpca::LdpcaCode;
use crate::model::{ChannelSpec, CorrelationModel};
use crate::source::{
    conditional_type, count_disagreements, count_erasures, derive_seed, SourceEnsemble,
};
use crate::staircase::{StaircaseCode, StaircaseParams};

pub const STREAM_MAGIC: [u8; 4] = *b"SMRA";
pub const TRANSMISSION_MAGIC: [u8; 4] = *b"SMRX";
pub const CONTAINER_VERSION: u16 = 1;

/// Ladder resolution handed to [`LdpcaCode`]; one decodable level per
/// ladder rung, plus the always-exact full word.
pub const LADDER_LEVELS: usize = 66;

const FLAG_LEARNING: u8 = 1 << 0;
const FLAG_ROOT: u8 = 1 << 1;

/// Which incremental code carries the payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CodecMode {
    /// Parity staircase; side information has erasures.
    ErasureParity,
    /// Accumulated syndrome; side information has bit flips.
    BscSyndrome,
}

impl CodecMode {
    fn byte(self) -> u8 {
        match self {
            CodecMode::ErasureParity => 0,
            CodecMode::BscSyndrome => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(CodecMode::ErasureParity),
            1 => Ok(CodecMode::BscSyndrome),
            _ => Err(Error::Format(format!("unknown codec mode byte {b}"))),
        }
    }
}

/// How the encoder learns channel parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LearningMode {
    /// Trust the correlation model; store no learning strings.
    Known,
    /// Estimate from realizations; store one parameter count per level.
    Counts,
    /// Estimate from realizations; store the joint type table per level.
    TypeTables,
}

/// Stored learning strings, parallel to the level markers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Learning {
    None,
    /// Erasure or disagreement count per level, each < n + 1.
    Counts(Vec<u64>),
    /// Joint type per level. Bit-flip: (x=0,y=0), (x=0,y=1), (x=1,y=0),
    /// (x=1,y=1). Erasure: (x=0 kept), (x=0 erased), (x=1 kept),
    /// (x=1 erased).
    TypeTables(Vec<[u64; 4]>),
}

impl Learning {
    pub fn is_none(&self) -> bool {
        matches!(self, Learning::None)
    }

    /// Information bits one level's string occupies, before byte padding.
    fn bits_per_level(&self, n: usize) -> u64 {
        let w = count_width(n) as u64;
        match self {
            Learning::None => 0,
            Learning::Counts(_) => w,
            Learning::TypeTables(_) => 4 * w,
        }
    }

    fn field(&self, rank: usize) -> Option<LevelLearning> {
        match self {
            Learning::None => None,
            Learning::Counts(c) => Some(LevelLearning::Count(c[rank])),
            Learning::TypeTables(t) => Some(LevelLearning::TypeTable(t[rank])),
        }
    }
}

/// The learning string riding along one transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LevelLearning {
    Count(u64),
    TypeTable([u64; 4]),
}

impl LevelLearning {
    /// Parameter estimate the decoder runs with.
    pub fn estimate(&self, n: usize) -> f64 {
        match self {
            LevelLearning::Count(c) => *c as f64 / n as f64,
            LevelLearning::TypeTable(t) => (t[1] + t[2]) as f64 / n as f64,
        }
    }
}

/// One level of the embedded stream: who it serves, at what channel
/// parameter, and how many payload bits its segment adds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelMarker {
    pub prev_id: u32,
    /// Erasure or crossover probability; the estimate in universal mode.
    pub channel_param: f64,
    pub segment_bits: u64,
}

/// One source's stored stream: level markers in ascending conditional
/// entropy, the payload their segments tile, and an optional systematic
/// tail for direct access.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedBitstream {
    pub source_id: u32,
    pub n: usize,
    pub mode: CodecMode,
    pub levels: Vec<LevelMarker>,
    pub learning: Learning,
    /// Segments concatenated; its length is the sum of segment bits.
    pub payload: BitVec,
    /// Raw source bits when the root is one hop away.
    pub root_segment: Option<BitVec>,
}

/// What goes over the wire for one request.
#[derive(Clone, Debug, PartialEq)]
pub struct Transmission {
    pub source_id: u32,
    pub n: usize,
    pub mode: CodecMode,
    pub prev_id: u32,
    /// 1-based level rank the prefix reaches; 0 when no payload rides
    /// along (a root-only stream).
    pub level_rank: u16,
    /// Channel parameter of the served level; 0 for direct access.
    pub channel_param: f64,
    pub includes_root: bool,
    pub learning: Option<LevelLearning>,
    /// Payload prefix, then the systematic tail when `includes_root`.
    pub bits: BitVec,
}

/// Per-request cost line in a [`RateReport`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RequestCost {
    pub prev_id: u32,
    /// 1-based rank; 0 for the direct-access row.
    pub level_rank: u16,
    /// Payload bits sent (direct access adds the systematic tail).
    pub prefix_bits: u64,
    /// Prefix plus the level's learning string.
    pub transmission_bits: u64,
    pub transmission_rate: f64,
    /// Rate of the equivalent channel code over n + prefix sent bits.
    pub channel_rate: f64,
}

/// Measured storage and per-request transmission against the
/// entropy bound.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub source_id: u32,
    pub n: usize,
    pub mode: CodecMode,
    pub universal: bool,
    /// Incremental payload alone.
    pub payload_bits: u64,
    pub payload_rate: f64,
    /// Payload plus systematic tail plus learning strings.
    pub storage_bits: u64,
    pub storage_rate: f64,
    /// Serialized container size, headers and padding included.
    pub container_bytes: u64,
    pub container_rate: f64,
    /// One row per level in embedded order, then direct access if served.
    pub requests: Vec<RequestCost>,
    pub bound: RateStorageBound,
}

impl RateReport {
    /// Largest deviation from the identity tying cumulative segment rates
    /// to the equivalent channel-code rate: sum of the first m rates must
    /// equal 1/R_m - 1.
    pub fn channel_rate_identity_gap(&self) -> f64 {
        let n = self.n as f64;
        self.requests
            .iter()
            .filter(|r| r.level_rank > 0)
            .map(|r| {
                let cumulative = r.prefix_bits as f64 / n;
                (cumulative - (1.0 / r.channel_rate - 1.0)).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Bits needed to hold a count in 0..=n.
fn count_width(n: usize) -> usize {
    (u64::BITS - (n as u64).leading_zeros()) as usize
}

/// Code construction seed; a function of header fields only, so the
/// decoder rebuilds the exact code without the stream.
fn code_seed(source_id: u32, n: usize, mode: CodecMode) -> u64 {
    derive_seed(derive_seed(u64::from(source_id), n as u64), u64::from(mode.byte()))
}

/// Crossover handed to belief propagation; the decoder rejects the
/// closed endpoints.
fn bp_param(p: f64) -> f64 {
    p.clamp(1e-9, 0.5 - 1e-9)
}

struct LevelPlan {
    prev_id: u32,
    channel_param: f64,
    entropy: f64,
    count: u64,
    table: [u64; 4],
}

/// Encode one source against its navigation neighborhood. Known-statistics
/// mode reads channel parameters from the model; see
/// [`offline_encode_with`] for the universal variants.
pub fn offline_encode(
    ensemble: &SourceEnsemble,
    graph: &NavigationGraph,
    model: &CorrelationModel,
    universal: bool,
) -> Result<(EmbeddedBitstream, RateReport)> {
    let learning = if universal { LearningMode::Counts } else { LearningMode::Known };
    offline_encode_with(ensemble, graph, model, learning)
}

pub fn offline_encode_with(
    ensemble: &SourceEnsemble,
    graph: &NavigationGraph,
    model: &CorrelationModel,
    learning_mode: LearningMode,
) -> Result<(EmbeddedBitstream, RateReport)> {
    let k = ensemble.source_id;
    if k == 0 {
        return Err(Error::Domain("source 0 is the root and is stored verbatim".into()));
    }
    let n = ensemble.x.len();
    if n == 0 || n != ensemble.n {
        return Err(Error::LengthMismatch(format!(
            "ensemble advertises n = {} but holds {} symbols",
            ensemble.n,
            ensemble.x.len()
        )));
    }
    let neighbors = graph.one_hop(k)?;
    if neighbors.is_empty() {
        return Err(Error::Graph(format!("source {k} has no previous-request edges")));
    }
    let root_served = neighbors.contains(&0);

    // Classify the payload code from the channel kinds; parameters may
    // still come from estimates below.
    let mut mode = None;
    let mut plans: Vec<LevelPlan> = Vec::new();
    for &j in neighbors {
        if j == 0 {
            continue;
        }
        let spec = model.channel(k, j)?;
        let kind = match spec {
            ChannelSpec::Erasure(_) => CodecMode::ErasureParity,
            ChannelSpec::Bsc(_) => CodecMode::BscSyndrome,
            other => {
                return Err(Error::Unsupported(format!(
                    "no incremental code for channel {other:?} on {k}<-{j}"
                )))
            }
        };
        match mode {
            None => mode = Some(kind),
            Some(m) if m != kind => {
                return Err(Error::Unsupported(format!(
                    "source {k} mixes erasure and bit-flip previous requests"
                )))
            }
            Some(_) => {}
        }
        let y = ensemble.side_infos.get(&j).ok_or_else(|| {
            Error::Model(format!("ensemble for {k} has no side information for {j}"))
        })?;
        if y.len() != n {
            return Err(Error::LengthMismatch(format!(
                "side information for {k}<-{j} has {} symbols, source has {n}",
                y.len()
            )));
        }
        let count = match kind {
            CodecMode::ErasureParity => count_erasures(y)?,
            CodecMode::BscSyndrome => count_disagreements(&ensemble.x, y)?,
        };
        let table = pack_type(kind, &conditional_type(&ensemble.x, y)?);
        let channel_param = match learning_mode {
            LearningMode::Known => match spec {
                ChannelSpec::Erasure(p) | ChannelSpec::Bsc(p) => p,
                _ => unreachable!(),
            },
            _ => count as f64 / n as f64,
        };
        // Entropy of the effective channel orders the levels; flips past
        // a half are folded back since the entropy is symmetric there.
        let entropy = match kind {
            CodecMode::ErasureParity => conditional_entropy(&ChannelSpec::Erasure(channel_param))?,
            CodecMode::BscSyndrome => {
                conditional_entropy(&ChannelSpec::Bsc(channel_param.min(0.5)))?
            }
        };
        plans.push(LevelPlan { prev_id: j, channel_param, entropy, count, table });
    }
    // Root-only neighborhoods still need a container mode byte.
    let mode = mode.unwrap_or(CodecMode::ErasureParity);
    if plans.len() > usize::from(u16::MAX) {
        return Err(Error::Format(format!("{} levels exceed the marker count field", plans.len())));
    }

    plans.sort_by(|a, b| a.entropy.total_cmp(&b.entropy).then(a.prev_id.cmp(&b.prev_id)));

    // One full codeword, then per-level shortest decodable prefixes on the
    // realized side informations. Prefixes must nest, so a later level
    // that happens to decode earlier is clamped up to the running total.
    let seed = code_seed(k, n, mode);
    let (word, min_prefix): (BitVec, Box<dyn Fn(&LevelPlan) -> Result<usize>>) = match mode {
        CodecMode::ErasureParity => {
            let code = StaircaseCode::new(n, seed, StaircaseParams::default())?;
            let word = code.encode(&ensemble.x)?;
            let x = ensemble.x.clone();
            let ens = ensemble.side_infos.clone();
            let w = word.clone();
            (
                word,
                Box::new(move |plan| {
                    let y = &ens[&plan.prev_id];
                    code.min_decodable_prefix(&w, y, &x)
                }),
            )
        }
        CodecMode::BscSyndrome => {
            let code = LdpcaCode::new(n, seed, LADDER_LEVELS)?;
            let word = code.encode(&ensemble.x)?;
            let x = ensemble.x.clone();
            let ens = ensemble.side_infos.clone();
            let w = word.clone();
            (
                word,
                Box::new(move |plan| {
                    if plan.count == 0 {
                        return Ok(0);
                    }
                    let y = &ens[&plan.prev_id];
                    code.min_decodable_level(&w, y, &x, bp_param(plan.channel_param))
                }),
            )
        }
    };

    let mut levels = Vec::with_capacity(plans.len());
    let mut totals = Vec::with_capacity(plans.len());
    let mut run: u64 = 0;
    for plan in &plans {
        let need = min_prefix(plan)? as u64;
        run = run.max(need);
        totals.push(run);
        levels.push(LevelMarker {
            prev_id: plan.prev_id,
            channel_param: plan.channel_param,
            segment_bits: 0,
        });
    }
    let mut prev_total = 0;
    for (marker, &total) in levels.iter_mut().zip(&totals) {
        marker.segment_bits = total - prev_total;
        prev_total = total;
    }

    let payload = word.prefix(run as usize);
    let root_segment = root_served.then(|| BitVec::from_bits(&ensemble.x));
    let learning = match learning_mode {
        LearningMode::Known => Learning::None,
        LearningMode::Counts => Learning::Counts(plans.iter().map(|p| p.count).collect()),
        LearningMode::TypeTables => Learning::TypeTables(plans.iter().map(|p| p.table).collect()),
    };

    let stream = EmbeddedBitstream {
        source_id: k,
        n,
        mode,
        levels,
        learning,
        payload,
        root_segment,
    };
    let report = build_report(&stream, graph, model)?;
    Ok((stream, report))
}

/// Project the empirical joint type onto the four cells a mode can
/// populate.
fn pack_type(mode: CodecMode, t: &[[u64; 3]; 2]) -> [u64; 4] {
    match mode {
        CodecMode::ErasureParity => [t[0][0], t[0][2], t[1][1], t[1][2]],
        CodecMode::BscSyndrome => [t[0][0], t[0][1], t[1][0], t[1][1]],
    }
}

fn build_report(
    stream: &EmbeddedBitstream,
    graph: &NavigationGraph,
    model: &CorrelationModel,
) -> Result<RateReport> {
    let n = stream.n;
    let nf = n as f64;
    let learn_bits = stream.learning.bits_per_level(n);
    let mut requests = Vec::with_capacity(stream.levels.len() + 1);
    let mut cumulative = 0u64;
    for (i, marker) in stream.levels.iter().enumerate() {
        cumulative += marker.segment_bits;
        let tx = cumulative + learn_bits;
        requests.push(RequestCost {
            prev_id: marker.prev_id,
            level_rank: (i + 1) as u16,
            prefix_bits: cumulative,
            transmission_bits: tx,
            transmission_rate: tx as f64 / nf,
            channel_rate: nf / (nf + cumulative as f64),
        });
    }
    if let Some(root) = &stream.root_segment {
        let bits = stream.payload.len() as u64 + root.len() as u64;
        requests.push(RequestCost {
            prev_id: 0,
            level_rank: 0,
            prefix_bits: bits,
            transmission_bits: bits,
            transmission_rate: bits as f64 / nf,
            channel_rate: nf / (nf + bits as f64),
        });
    }
    let payload_bits = stream.payload.len() as u64;
    let storage_bits = payload_bits
        + stream.root_segment.as_ref().map_or(0, |r| r.len() as u64)
        + learn_bits * stream.levels.len() as u64;
    let container_bytes = stream.to_bytes().len() as u64;
    Ok(RateReport {
        source_id: stream.source_id,
        n,
        mode: stream.mode,
        universal: !stream.learning.is_none(),
        payload_bits,
        payload_rate: payload_bits as f64 / nf,
        storage_bits,
        storage_rate: storage_bits as f64 / nf,
        container_bytes,
        container_rate: container_bytes as f64 * 8.0 / nf,
        requests,
        bound: rate_storage_single_memory(stream.source_id, graph, model)?,
    })
}

impl EmbeddedBitstream {
    /// Payload bits through the given 1-based level rank.
    pub fn prefix_bits(&self, rank: usize) -> u64 {
        self.levels.iter().take(rank).map(|m| m.segment_bits).sum()
    }

    pub fn level_rank(&self, prev_id: u32) -> Option<u16> {
        self.levels
            .iter()
            .position(|m| m.prev_id == prev_id)
            .map(|i| (i + 1) as u16)
    }

    /// Cut the transmission for a request: the payload prefix through the
    /// requester's level, or everything plus the systematic tail for
    /// direct access. Storage is read, never the source.
    pub fn extract(&self, prev_id: u32) -> Result<Transmission> {
        if prev_id == 0 {
            let root = self.root_segment.as_ref().ok_or_else(|| {
                Error::UnknownRequest(format!(
                    "stream for source {} has no direct-access segment",
                    self.source_id
                ))
            })?;
            let mut bits = self.payload.clone();
            bits.extend(root);
            return Ok(Transmission {
                source_id: self.source_id,
                n: self.n,
                mode: self.mode,
                prev_id: 0,
                level_rank: self.levels.len() as u16,
                channel_param: 0.0,
                includes_root: true,
                learning: None,
                bits,
            });
        }
        let rank = self.level_rank(prev_id).ok_or_else(|| {
            Error::UnknownRequest(format!(
                "source {} has no level for previous request {prev_id}",
                self.source_id
            ))
        })? as usize;
        let marker = self.levels[rank - 1];
        Ok(Transmission {
            source_id: self.source_id,
            n: self.n,
            mode: self.mode,
            prev_id,
            level_rank: rank as u16,
            channel_param: marker.channel_param,
            includes_root: false,
            learning: self.learning.field(rank - 1),
            bits: self.payload.prefix(self.prefix_bits(rank) as usize),
        })
    }
}

/// Free-function alias for [`EmbeddedBitstream::extract`].
pub fn online_extract(stream: &EmbeddedBitstream, prev_id: u32) -> Result<Transmission> {
    stream.extract(prev_id)
}

/// Recover the source word from a transmission and the side information
/// the requester already holds. Direct access ignores `y`; otherwise a
/// word that fails to reproduce the transmitted prefix is an integrity
/// failure, not a best effort.
pub fn decode(tx: &Transmission, y: Option<&[u8]>) -> Result<Vec<u8>> {
    let n = tx.n;
    if tx.includes_root {
        let total = tx.bits.len();
        if total < n {
            return Err(Error::TruncatedStream(format!(
                "direct-access transmission holds {total} bits, tail needs {n}"
            )));
        }
        return Ok((total - n..total).map(|i| tx.bits.get(i)).collect());
    }
    let y = y.ok_or_else(|| {
        Error::Domain("request is not direct access, side information required".into())
    })?;
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "side information length {} vs block length {n}",
            y.len()
        )));
    }
    let seed = code_seed(tx.source_id, n, tx.mode);
    // The learning string outranks the marker parameter: in universal mode
    // the decoder must run from what was stored, not what was modeled.
    let param = tx
        .learning
        .as_ref()
        .map_or(tx.channel_param, |l| l.estimate(n));
    match tx.mode {
        CodecMode::ErasureParity => {
            let code = StaircaseCode::new(n, seed, StaircaseParams::default())?;
            if tx.bits.is_empty() {
                // Zero-bit level: the side information had no erasures.
                if count_erasures(y)? > 0 {
                    return Err(Error::Integrity(
                        "erased side information on a zero-bit transmission".into(),
                    ));
                }
                return Ok(y.to_vec());
            }
            let out = code.decode(&tx.bits, y)?;
            let x_hat = match (out.recovered(), out.x_hat) {
                (true, Some(x_hat)) => x_hat,
                _ => {
                    return Err(Error::Integrity(format!(
                        "prefix of {} parity bits cannot resolve this side information",
                        tx.bits.len()
                    )))
                }
            };
            // A wrong word that slipped through elimination cannot also
            // reproduce the transmitted parity prefix.
            let check = code.encode(&x_hat)?;
            if !tx.bits.is_bit_prefix_of(&check) {
                return Err(Error::Integrity(
                    "decoded word disagrees with the transmitted parity prefix".into(),
                ));
            }
            Ok(x_hat)
        }
        CodecMode::BscSyndrome => {
            if tx.bits.is_empty() {
                // Zero-bit level: the realization had no disagreements.
                return Ok(y.to_vec());
            }
            let code = LdpcaCode::new(n, seed, LADDER_LEVELS)?;
            let out = code.decode(&tx.bits, y, bp_param(param))?;
            match (out.recovered(), out.x_hat) {
                (true, Some(x_hat)) => {
                    let check = code.encode(&x_hat)?;
                    if !tx.bits.is_bit_prefix_of(&check) {
                        return Err(Error::Integrity(
                            "decoded word disagrees with the transmitted syndrome prefix".into(),
                        ));
                    }
                    Ok(x_hat)
                }
                _ => Err(Error::Integrity(format!(
                    "syndrome prefix of {} bits did not converge on this side information",
                    tx.bits.len()
                ))),
            }
        }
    }
}

// ---------------------------------------------------------------------
// Wire formats. Both containers share the scheme: magic, little-endian
// fixed header, bit-packed payload with a single zero pad, CRC32 over
// everything after the magic.
// ---------------------------------------------------------------------

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, at: 0 }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < len {
            return Err(Error::TruncatedStream(format!(
                "{what} needs {len} bytes, {} remain",
                self.bytes.len() - self.at
            )));
        }
        let out = &self.bytes[self.at..self.at + len];
        self.at += len;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }
}

fn packed_len(bits: u64) -> Result<usize> {
    let bytes = bits
        .checked_add(7)
        .ok_or_else(|| Error::Format("bit count overflows".into()))?
        / 8;
    usize::try_from(bytes).map_err(|_| Error::Format(format!("{bits} bits exceed memory")))
}

fn push_field(bits: &mut BitVec, value: u64, width: usize) {
    for i in (0..width).rev() {
        bits.push(((value >> i) & 1) as u8);
    }
}

fn read_field(bits: &BitVec, at: usize, width: usize) -> u64 {
    (0..width).fold(0u64, |v, i| (v << 1) | u64::from(bits.get(at + i)))
}

fn encode_learning(learning: &Learning, n: usize) -> Vec<u8> {
    let w = count_width(n);
    let (kind, fields): (u8, Vec<u64>) = match learning {
        Learning::None => return Vec::new(),
        Learning::Counts(c) => (0, c.clone()),
        Learning::TypeTables(t) => (1, t.iter().flatten().copied().collect()),
    };
    let mut bits = BitVec::with_capacity(fields.len() * w);
    for v in fields {
        push_field(&mut bits, v, w);
    }
    let mut out = vec![kind];
    out.extend_from_slice(bits.as_bytes());
    out
}

fn decode_learning(bytes: &[u8], n: usize, level_count: usize) -> Result<Learning> {
    if bytes.is_empty() {
        return Err(Error::Format("learning section flagged but empty".into()));
    }
    let kind = bytes[0];
    let w = count_width(n);
    let per = match kind {
        0 => 1usize,
        1 => 4,
        k => return Err(Error::Format(format!("unknown learning kind {k}"))),
    };
    let total_bits = level_count * per * w;
    if bytes.len() != 1 + packed_len(total_bits as u64)? {
        return Err(Error::Format(format!(
            "learning section holds {} bytes, kind {kind} with {level_count} levels needs {}",
            bytes.len(),
            1 + packed_len(total_bits as u64)?
        )));
    }
    let bits = BitVec::from_bytes(&bytes[1..], total_bits)?;
    let read = |i: usize| read_field(&bits, i * w, w);
    let check = |v: u64| -> Result<u64> {
        if v > n as u64 {
            return Err(Error::Format(format!("learning count {v} exceeds block length {n}")));
        }
        Ok(v)
    };
    match kind {
        0 => {
            let counts = (0..level_count).map(|i| check(read(i))).collect::<Result<_>>()?;
            Ok(Learning::Counts(counts))
        }
        _ => {
            let mut tables = Vec::with_capacity(level_count);
            for t in 0..level_count {
                let mut cell = [0u64; 4];
                for (c, slot) in cell.iter_mut().enumerate() {
                    *slot = check(read(t * 4 + c))?;
                }
                if cell.iter().sum::<u64>() != n as u64 {
                    return Err(Error::Format(format!(
                        "learning type table sums to {}, block length is {n}",
                        cell.iter().sum::<u64>()
                    )));
                }
                tables.push(cell);
            }
            Ok(Learning::TypeTables(tables))
        }
    }
}

impl EmbeddedBitstream {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&STREAM_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.push(self.mode.byte());
        let mut flags = 0u8;
        if !self.learning.is_none() {
            flags |= FLAG_LEARNING;
        }
        if self.root_segment.is_some() {
            flags |= FLAG_ROOT;
        }
        out.push(flags);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.source_id.to_le_bytes());
        out.extend_from_slice(&(self.levels.len() as u16).to_le_bytes());
        for marker in &self.levels {
            out.extend_from_slice(&marker.prev_id.to_le_bytes());
            out.extend_from_slice(&marker.channel_param.to_le_bytes());
            out.extend_from_slice(&marker.segment_bits.to_le_bytes());
        }
        let learning = encode_learning(&self.learning, self.n);
        out.extend_from_slice(&(learning.len() as u32).to_le_bytes());
        out.extend_from_slice(&learning);
        let root_bits = self.root_segment.as_ref().map_or(0, |r| r.len() as u64);
        out.extend_from_slice(&root_bits.to_le_bytes());
        let mut body = self.payload.clone();
        if let Some(root) = &self.root_segment {
            body.extend(root);
        }
        out.extend_from_slice(body.as_bytes());
        let crc = crc32(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if magic != STREAM_MAGIC {
            return Err(Error::BadMagic { expected: STREAM_MAGIC, found: magic });
        }
        let version = cur.u16("version")?;
        if version != CONTAINER_VERSION {
            return Err(Error::BadVersion(version));
        }
        let mode_byte = cur.u8("mode")?;
        let flags = cur.u8("flags")?;
        let n64 = cur.u64("block length")?;
        let source_id = cur.u32("source id")?;
        let level_count = cur.u16("level count")? as usize;
        let mut raw_levels = Vec::with_capacity(level_count);
        for _ in 0..level_count {
            let prev_id = cur.u32("level prev id")?;
            let channel_param = cur.f64("level channel parameter")?;
            let segment_bits = cur.u64("level segment bits")?;
            raw_levels.push(LevelMarker { prev_id, channel_param, segment_bits });
        }
        let learn_len = cur.u32("learning length")? as usize;
        let learn_bytes = cur.take(learn_len, "learning section")?.to_vec();
        let root_bits = cur.u64("root segment bits")?;
        let payload_bits: u64 = raw_levels
            .iter()
            .try_fold(0u64, |acc, m| acc.checked_add(m.segment_bits))
            .ok_or_else(|| Error::Format("segment bits overflow".into()))?;
        let body_bits = payload_bits
            .checked_add(root_bits)
            .ok_or_else(|| Error::Format("segment bits overflow".into()))?;
        let body = cur.take(packed_len(body_bits)?, "payload")?;
        if cur.remaining() != 4 {
            return Err(if cur.remaining() < 4 {
                Error::TruncatedStream(format!(
                    "checksum needs 4 bytes, {} remain",
                    cur.remaining()
                ))
            } else {
                Error::Format(format!("{} trailing bytes after checksum", cur.remaining() - 4))
            });
        }
        let stored = u32::from_le_bytes(cur.take(4, "checksum")?.try_into().unwrap());
        let computed = crc32(&bytes[4..bytes.len() - 4]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }

        // Structure is intact and authenticated; now judge field values.
        let mode = CodecMode::from_byte(mode_byte)?;
        if flags & !(FLAG_LEARNING | FLAG_ROOT) != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
        }
        let n = usize::try_from(n64)
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Format(format!("bad block length {n64}")))?;
        if flags & FLAG_ROOT != 0 && root_bits != n as u64 {
            return Err(Error::Format(format!(
                "direct-access segment holds {root_bits} bits, block length is {n}"
            )));
        }
        if flags & FLAG_ROOT == 0 && root_bits != 0 {
            return Err(Error::Format("direct-access bits present without the flag".into()));
        }
        if (flags & FLAG_LEARNING != 0) != (learn_len > 0) {
            return Err(Error::Format("learning flag disagrees with section length".into()));
        }
        if payload_bits > n as u64 {
            return Err(Error::Format(format!(
                "{payload_bits} payload bits exceed the {n}-bit codeword"
            )));
        }
        for m in &raw_levels {
            if m.prev_id == 0 {
                return Err(Error::Format("level marker names the root".into()));
            }
            if !m.channel_param.is_finite() || m.channel_param < 0.0 || m.channel_param > 1.0 {
                return Err(Error::Format(format!(
                    "level channel parameter {} outside [0, 1]",
                    m.channel_param
                )));
            }
        }
        let learning = if learn_len > 0 {
            decode_learning(&learn_bytes, n, level_count)?
        } else {
            Learning::None
        };
        let body = BitVec::from_bytes(body, (payload_bits + root_bits) as usize)?;
        let payload = body.prefix(payload_bits as usize);
        let root_segment = (flags & FLAG_ROOT != 0).then(|| {
            (payload_bits as usize..body.len()).map(|i| body.get(i)).collect::<Vec<u8>>()
        });
        Ok(EmbeddedBitstream {
            source_id,
            n,
            mode,
            levels: raw_levels,
            learning,
            payload,
            root_segment: root_segment.map(|bits| BitVec::from_bits(&bits)),
        })
    }
}

impl Transmission {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&TRANSMISSION_MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.push(self.mode.byte());
        let mut flags = 0u8;
        if self.learning.is_some() {
            flags |= FLAG_LEARNING;
        }
        if self.includes_root {
            flags |= FLAG_ROOT;
        }
        out.push(flags);
        out.extend_from_slice(&(self.n as u64).to_le_bytes());
        out.extend_from_slice(&self.source_id.to_le_bytes());
        out.extend_from_slice(&self.prev_id.to_le_bytes());
        out.extend_from_slice(&self.level_rank.to_le_bytes());
        out.extend_from_slice(&self.channel_param.to_le_bytes());
        let learning = match &self.learning {
            None => Vec::new(),
            Some(LevelLearning::Count(c)) => {
                encode_learning(&Learning::Counts(vec![*c]), self.n)
            }
            Some(LevelLearning::TypeTable(t)) => {
                encode_learning(&Learning::TypeTables(vec![*t]), self.n)
            }
        };
        out.extend_from_slice(&(learning.len() as u32).to_le_bytes());
        out.extend_from_slice(&learning);
        out.extend_from_slice(&(self.bits.len() as u64).to_le_bytes());
        out.extend_from_slice(self.bits.as_bytes());
        let crc = crc32(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let magic: [u8; 4] = cur.take(4, "magic")?.try_into().unwrap();
        if magic != TRANSMISSION_MAGIC {
            return Err(Error::BadMagic { expected: TRANSMISSION_MAGIC, found: magic });
        }
        let version = cur.u16("version")?;
        if version != CONTAINER_VERSION {
            return Err(Error::BadVersion(version));
        }
        let mode_byte = cur.u8("mode")?;
        let flags = cur.u8("flags")?;
        let n64 = cur.u64("block length")?;
        let source_id = cur.u32("source id")?;
        let prev_id = cur.u32("previous request id")?;
        let level_rank = cur.u16("level rank")?;
        let channel_param = cur.f64("channel parameter")?;
        let learn_len = cur.u32("learning length")? as usize;
        let learn_bytes = cur.take(learn_len, "learning section")?.to_vec();
        let bit_len = cur.u64("payload bits")?;
        let body = cur.take(packed_len(bit_len)?, "payload")?;
        if cur.remaining() != 4 {
            return Err(if cur.remaining() < 4 {
                Error::TruncatedStream(format!(
                    "checksum needs 4 bytes, {} remain",
                    cur.remaining()
                ))
            } else {
                Error::Format(format!("{} trailing bytes after checksum", cur.remaining() - 4))
            });
        }
        let stored = u32::from_le_bytes(cur.take(4, "checksum")?.try_into().unwrap());
        let computed = crc32(&bytes[4..bytes.len() - 4]);
        if stored != computed {
            return Err(Error::ChecksumMismatch { stored, computed });
        }

        let mode = CodecMode::from_byte(mode_byte)?;
        if flags & !(FLAG_LEARNING | FLAG_ROOT) != 0 {
            return Err(Error::Format(format!("unknown flag bits {flags:#04x}")));
        }
        let n = usize::try_from(n64)
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Format(format!("bad block length {n64}")))?;
        let includes_root = flags & FLAG_ROOT != 0;
        if (flags & FLAG_LEARNING != 0) != (learn_len > 0) {
            return Err(Error::Format("learning flag disagrees with section length".into()));
        }
        if includes_root && prev_id != 0 {
            return Err(Error::Format(
                "systematic tail on a transmission that is not direct access".into(),
            ));
        }
        if !channel_param.is_finite() || !(0.0..=1.0).contains(&channel_param) {
            return Err(Error::Format(format!(
                "channel parameter {channel_param} outside [0, 1]"
            )));
        }
        let learning = if learn_len > 0 {
            match decode_learning(&learn_bytes, n, 1)? {
                Learning::Counts(c) => Some(LevelLearning::Count(c[0])),
                Learning::TypeTables(t) => Some(LevelLearning::TypeTable(t[0])),
                Learning::None => None,
            }
        } else {
            None
        };
        let bits = BitVec::from_bytes(body, bit_len as usize)?;
        Ok(Transmission {
            source_id,
            n,
            mode,
            prev_id,
            level_rank,
            channel_param,
            includes_root,
            learning,
            bits,
        })
    }
}
