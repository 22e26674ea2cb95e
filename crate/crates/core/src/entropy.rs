//! Achievable-rate arithmetic: what a request must cost, and what one
//! stored stream must span.
//!
//! For a requested binary source the transmission floor against one piece
//! of side information is its conditional entropy through the tying
//! channel; the storage floor of a single embedded stream is the worst
//! such floor over every allowed previous request. Conditioning on several
//! previous requests at once (full-memory decoders) only lowers the floor,
//! with equality exactly when the worst one-hop neighbor is reachable
//! straight from the root.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::NavigationGraph;
use crate::model::{ChannelSpec, CorrelationModel};

/// Shannon binary entropy in bits; 0 at both endpoints.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(h2(p))
}

fn h2(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Conditional entropy (bits/symbol) of a uniform binary source given one
/// channel output: `p` for an erasure channel, `h2(p)` for a flip channel,
/// 1 for the root (which reveals nothing).
pub fn conditional_entropy(ch: &ChannelSpec) -> Result<f64> {
    ch.validate()?;
    match *ch {
        ChannelSpec::Root => Ok(1.0),
        ChannelSpec::Erasure(p) => Ok(p),
        ChannelSpec::Bsc(p) => Ok(h2(p)),
        ChannelSpec::Gaussian { .. } => Err(Error::Unsupported(
            "gaussian channels have no discrete conditional entropy; use the rate-distortion ops".into(),
        )),
    }
}

/// Conditional entropy given several independent channel outputs of the
/// same source at once. Root entries are ignored (they add nothing); the
/// rest must be all-erasure or all-flip.
///
/// All-erasure: the symbol survives unless every copy is erased, so
/// `H = prod p_j`. All-flip: exact enumeration over the `2^m` observation
/// patterns, weighting each posterior's entropy by its probability.
pub fn multi_conditional_entropy(chs: &[ChannelSpec]) -> Result<f64> {
    if chs.is_empty() {
        return Err(Error::Domain("empty conditioning set".into()));
    }
    let mut erasures = Vec::new();
    let mut flips = Vec::new();
    for ch in chs {
        ch.validate()?;
        match *ch {
            ChannelSpec::Root => {}
            ChannelSpec::Erasure(p) => erasures.push(p),
            ChannelSpec::Bsc(p) => flips.push(p),
            ChannelSpec::Gaussian { .. } => {
                return Err(Error::Unsupported(
                    "gaussian channels cannot join a discrete conditioning set".into(),
                ))
            }
        }
    }
    match (erasures.is_empty(), flips.is_empty()) {
        (true, true) => Ok(1.0),
        (false, true) => Ok(erasures.iter().product()),
        (true, false) => {
            if flips.len() > 24 {
                return Err(Error::Unsupported(format!(
                    "flip conditioning set of {} exceeds the enumeration limit of 24",
                    flips.len()
                )));
            }
            let m = flips.len();
            let mut h = 0.0;
            for pattern in 0u32..(1u32 << m) {
                // Joint weights of (X = 0, Y = pattern) and (X = 1, Y = pattern).
                let mut w0 = 0.5;
                let mut w1 = 0.5;
                for (j, &p) in flips.iter().enumerate() {
                    if (pattern >> j) & 1 == 1 {
                        w0 *= p;
                        w1 *= 1.0 - p;
                    } else {
                        w0 *= 1.0 - p;
                        w1 *= p;
                    }
                }
                let total = w0 + w1;
                if total > 0.0 {
                    h += total * h2(w1 / total);
                }
            }
            Ok(h)
        }
        (false, false) => Err(Error::Unsupported(
            "mixed erasure/flip conditioning sets are not supported".into(),
        )),
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PrevRate {
    pub prev_id: u32,
    pub rate: f64,
}

/// Single-memory bound: the decoder keeps exactly one previous request.
#[derive(Clone, Debug, Serialize)]
pub struct RateStorageBound {
    pub source_id: u32,
    /// Per-previous-request transmission floor, best side information first.
    pub transmission: Vec<PrevRate>,
    /// Worst transmission floor; one stored stream must span it.
    pub storage: f64,
    /// Previous-request ids by ascending conditional entropy, ties by id.
    pub ordering: Vec<u32>,
}

pub fn rate_storage_single_memory(
    k: u32,
    graph: &NavigationGraph,
    model: &CorrelationModel,
) -> Result<RateStorageBound> {
    let neighbors = graph.one_hop(k)?;
    if neighbors.is_empty() {
        return Err(Error::Graph(format!("source {k} has no previous-request edges")));
    }
    let mut rates = Vec::with_capacity(neighbors.len());
    for &j in neighbors {
        let rate = conditional_entropy(&model.channel(k, j)?)?;
        rates.push(PrevRate { prev_id: j, rate });
    }
    rates.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.prev_id.cmp(&b.prev_id)));
    let storage = rates.iter().map(|r| r.rate).fold(0.0, f64::max);
    let ordering = rates.iter().map(|r| r.prev_id).collect();
    Ok(RateStorageBound { source_id: k, transmission: rates, storage, ordering })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsetRate {
    pub subset: Vec<u32>,
    pub rate: f64,
}

/// Full-memory bound: the decoder keeps everything it has decoded along
/// one navigation path.
#[derive(Clone, Debug, Serialize)]
pub struct FullMemoryBound {
    pub source_id: u32,
    /// One entry per distinct predecessor set reachable on a simple path.
    pub per_subset: Vec<SubsetRate>,
    pub storage: f64,
    /// Single-memory storage for comparison; never smaller than `storage`.
    pub single_memory_storage: f64,
}

/// Channels tying `k` to every member of `subset` that the model knows
/// about. Members without an entry are independent of `k` under the star
/// model and contribute nothing.
fn subset_channels(k: u32, subset: &[u32], model: &CorrelationModel) -> Result<Vec<ChannelSpec>> {
    let mut chans = Vec::new();
    for &l in subset {
        if l == 0 {
            chans.push(ChannelSpec::Root);
        } else if model.has_entry(k, l) {
            chans.push(model.channel(k, l)?);
        }
    }
    Ok(chans)
}

pub fn rate_storage_full_memory(
    k: u32,
    graph: &NavigationGraph,
    model: &CorrelationModel,
    subset_cap: usize,
) -> Result<FullMemoryBound> {
    let family = graph.previous_request_subsets(k, subset_cap)?;
    let single = rate_storage_single_memory(k, graph, model)?;
    let mut per_subset = Vec::with_capacity(family.len());
    let mut storage: f64 = 0.0;
    for subset in family {
        let chans = subset_channels(k, &subset, model)?;
        let rate = multi_conditional_entropy(&chans)?;
        storage = storage.max(rate);
        per_subset.push(SubsetRate { subset, rate });
    }
    Ok(FullMemoryBound {
        source_id: k,
        per_subset,
        storage,
        single_memory_storage: single.storage,
    })
}

/// Transmission and storage sums along a whole request path starting at
/// the root. Each step conditions on everything requested before it
/// (chain rule under the star model); storage is charged at the
/// full-memory floor of every visited source.
pub fn request_path_rates(
    path: &[u32],
    graph: &NavigationGraph,
    model: &CorrelationModel,
    subset_cap: usize,
) -> Result<(f64, f64)> {
    if path.is_empty() {
        return Err(Error::Domain("empty request path".into()));
    }
    let mut seen = vec![0u32];
    let mut sum_tx = 0.0;
    let mut sum_storage = 0.0;
    let mut prev = 0u32;
    for &k in path {
        if seen.contains(&k) {
            return Err(Error::Graph(format!("request path revisits source {k}")));
        }
        if !graph.has_edge(prev, k) {
            return Err(Error::Graph(format!("request path needs missing edge {prev} -> {k}")));
        }
        let chans = subset_channels(k, &seen, model)?;
        sum_tx += multi_conditional_entropy(&chans)?;
        sum_storage += rate_storage_full_memory(k, graph, model, subset_cap)?.storage;
        seen.push(k);
        prev = k;
    }
    Ok((sum_tx, sum_storage))
}

/// Storage overhead (bits/symbol) of universal mode for `m` stored levels:
/// one learning string per level, `alphabet^2 * log2(n+1)` bits each.
pub fn universal_overhead_storage(n: usize, alphabet: usize, m: usize) -> f64 {
    m as f64 * universal_overhead_per_request(n, alphabet)
}

/// Per-request share of the universal overhead: one learning string.
pub fn universal_overhead_per_request(n: usize, alphabet: usize) -> f64 {
    assert!(n >= 1);
    (alphabet * alphabet) as f64 * ((n + 1) as f64).log2() / n as f64
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GaussianPoint {
    pub rate: f64,
    pub distortion: f64,
}

/// Rate-distortion point for a Gaussian source (std `sigma`) decoded with
/// jointly Gaussian side information at correlation `rho`, targeting
/// per-letter distortion `delta`.
pub fn wyner_ziv_point(sigma: f64, rho: f64, delta: f64) -> Result<GaussianPoint> {
    if sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::Domain(format!("sigma {sigma} must be positive")));
    }
    if delta <= 0.0 || !delta.is_finite() {
        return Err(Error::Domain(format!("delta {delta} must be positive")));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho {rho} outside [-1, 1]")));
    }
    if rho.abs() == 1.0 {
        return Err(Error::Domain(
            "rho = ±1 is degenerate: the side information determines the source".into(),
        ));
    }
    let var = sigma * sigma * (1.0 - rho * rho);
    let distortion = delta * var / (var + delta * rho * rho);
    let rate = if var > distortion { 0.5 * (var / distortion).log2() } else { 0.0 };
    Ok(GaussianPoint { rate, distortion })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PrevPoint {
    pub prev_id: u32,
    pub rate: f64,
    pub distortion: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GaussianRegion {
    pub source_id: u32,
    pub per_prev: Vec<PrevPoint>,
    pub storage_rate: f64,
}

/// Maps [`wyner_ziv_point`] over every one-hop neighbor of `k`. Each edge
/// needs an explicit Gaussian spec (including the root edge, written as
/// `rho = 0`).
pub fn gaussian_region(
    k: u32,
    graph: &NavigationGraph,
    model: &CorrelationModel,
    delta: f64,
) -> Result<GaussianRegion> {
    let neighbors = graph.one_hop(k)?;
    if neighbors.is_empty() {
        return Err(Error::Graph(format!("source {k} has no previous-request edges")));
    }
    let mut per_prev = Vec::with_capacity(neighbors.len());
    let mut storage_rate: f64 = 0.0;
    for &j in neighbors {
        if !model.has_entry(k, j) {
            return Err(Error::Model(format!(
                "gaussian region needs an explicit channel for {k}<-{j}"
            )));
        }
        let point = match model.channel(k, j)? {
            ChannelSpec::Gaussian { sigma, rho } => wyner_ziv_point(sigma, rho, delta)?,
            other => {
                return Err(Error::Unsupported(format!(
                    "gaussian region over non-gaussian channel {other} on {k}<-{j}"
                )))
            }
        };
        storage_rate = storage_rate.max(point.rate);
        per_prev.push(PrevPoint { prev_id: j, rate: point.rate, distortion: point.distortion });
    }
    Ok(GaussianRegion { source_id: k, per_prev, storage_rate })
}
