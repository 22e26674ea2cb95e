//! Exhaustive embedded random binning on toy block lengths: the
//! achievability argument run literally, with every source word assigned
//! a nested tuple of uniform bin indices and decoding done by joint
//! typicality over the whole space.
//!
//! Stage m contributes ceil(n * r_m) index bits; the full assignment of a
//! word is one packed integer with stage 1 in the low bits, so an
//! m-stage index is a bit truncation of the (m+1)-stage index and nesting
//! holds by construction. Block lengths stay small enough to enumerate
//! {0,1}^n, which is the point: the oracle cross-checks the rate region,
//! it does not compress anything.

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::entropy::conditional_entropy;
use crate::error::{Error, Result};
use crate::model::ChannelSpec;
use crate::outcome::{DecodeOutcome, DecodeStats, DecodeStatus};
use crate::par;
use crate::source::{derive_seed, pass_through_channel, ERASED};

pub const MAX_BLOCK: usize = 16;
pub const MAX_INDEX_BITS: f64 = 30.0;

/// Slack added to the typicality threshold so words sitting exactly on
/// the eps boundary do not flip on float noise.
const EPS_SLACK: f64 = 1e-9;

/// Monte-Carlo trials drawn per freshly built binning.
const BATCH: u64 = 128;

/// One random binning of all `2^n` source words into nested bins.
#[derive(Clone, Debug)]
pub struct EmbeddedBinning {
    n: usize,
    stage_rates: Vec<f64>,
    stage_bits: Vec<usize>,
    /// Packed nested index per word, stage 1 lowest.
    table: Vec<u64>,
    seed: u64,
}

impl EmbeddedBinning {
    /// Assign every word of `{0,1}^n` a tuple of independent uniform
    /// stage indices, packed so prefixes truncate.
    pub fn build(n: usize, stage_rates: &[f64], seed: u64) -> Result<Self> {
        if n == 0 || n > MAX_BLOCK {
            return Err(Error::Domain(format!(
                "block length {n} outside 1..={MAX_BLOCK} for the exhaustive oracle"
            )));
        }
        if stage_rates.is_empty() {
            return Err(Error::Domain("at least one stage rate required".into()));
        }
        if stage_rates.iter().any(|&r| !r.is_finite() || r < 0.0) {
            return Err(Error::Domain("stage rates must be finite and nonnegative".into()));
        }
        let sum: f64 = stage_rates.iter().sum();
        if n as f64 * sum > MAX_INDEX_BITS {
            return Err(Error::Domain(format!(
                "{n} symbols at {sum} bits/symbol exceed the {MAX_INDEX_BITS}-bit index cap"
            )));
        }
        let stage_bits: Vec<usize> =
            stage_rates.iter().map(|&r| (n as f64 * r).ceil() as usize).collect();
        let total: usize = stage_bits.iter().sum();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let table: Vec<u64> = (0..1usize << n)
            .map(|_| {
                // Independent uniform index per stage, packed low to high.
                let mut packed = 0u64;
                let mut shift = 0;
                for &b in &stage_bits {
                    let draw = if b == 0 { 0 } else { rng.next_u64() & ((1u64 << b) - 1) };
                    packed |= draw << shift;
                    shift += b;
                }
                packed
            })
            .collect();
        debug_assert!(total < 64);
        Ok(EmbeddedBinning { n, stage_rates: stage_rates.to_vec(), stage_bits, table, seed })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn stages(&self) -> usize {
        self.stage_bits.len()
    }

    pub fn stage_rates(&self) -> &[f64] {
        &self.stage_rates
    }

    pub fn stage_bits(&self) -> &[usize] {
        &self.stage_bits
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index bits in the first `m` stages.
    pub fn prefix_bits(&self, m: usize) -> usize {
        self.stage_bits.iter().take(m).sum()
    }

    /// Packed index tuple of the first `m` stages for one word.
    pub fn index_of_word(&self, word: usize, m: usize) -> u64 {
        let bits = self.prefix_bits(m);
        if bits == 0 {
            return 0;
        }
        self.table[word] & ((1u64 << bits) - 1)
    }

    pub fn index_prefix(&self, x: &[u8], m: usize) -> Result<u64> {
        Ok(self.index_of_word(word_of(x, self.n)?, m))
    }
}

/// Pack binary symbols into a word index, symbol 0 lowest.
fn word_of(x: &[u8], n: usize) -> Result<usize> {
    if x.len() != n {
        return Err(Error::LengthMismatch(format!(
            "word has {} symbols, binning covers {n}",
            x.len()
        )));
    }
    if x.iter().any(|&s| s > 1) {
        return Err(Error::Domain("source word must be binary".into()));
    }
    Ok(x.iter().enumerate().fold(0, |w, (i, &s)| w | (usize::from(s) << i)))
}

fn symbols_of(word: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((word >> i) & 1) as u8).collect()
}

/// Per-word posterior cost -log2 P(x | y) under a uniform source, or None
/// when the pair is impossible.
fn neg_log2_posterior(word: usize, y: &[u8], channel: &ChannelSpec, p: f64) -> Option<f64> {
    let mut cost = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let xi = ((word >> i) & 1) as u8;
        match channel {
            ChannelSpec::Erasure(_) => {
                if yi == ERASED {
                    cost += 1.0;
                } else if yi != xi {
                    return None;
                }
            }
            ChannelSpec::Bsc(_) => {
                let q = if yi == xi { 1.0 - p } else { p };
                if q <= 0.0 {
                    return None;
                }
                cost -= q.log2();
            }
            _ => unreachable!("validated by the caller"),
        }
    }
    Some(cost)
}

/// Joint-typicality decoding against an index prefix: every word of the
/// matching bin survives if its empirical posterior cost per symbol sits
/// within `eps` of the conditional entropy; recovery demands exactly one
/// survivor.
pub fn typicality_decode(
    binning: &EmbeddedBinning,
    m: usize,
    index_prefix: u64,
    y: &[u8],
    channel: &ChannelSpec,
    eps: f64,
) -> Result<DecodeOutcome> {
    if m == 0 || m > binning.stages() {
        return Err(Error::Domain(format!(
            "stage prefix {m} outside 1..={}",
            binning.stages()
        )));
    }
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Domain(format!("typicality slack {eps} must be positive")));
    }
    let n = binning.n;
    if y.len() != n {
        return Err(Error::LengthMismatch(format!(
            "side information has {} symbols, binning covers {n}",
            y.len()
        )));
    }
    let p = match channel {
        ChannelSpec::Erasure(p) | ChannelSpec::Bsc(p) => *p,
        other => {
            return Err(Error::Unsupported(format!(
                "typicality oracle handles erasure and bit-flip channels, not {other:?}"
            )))
        }
    };
    if matches!(channel, ChannelSpec::Bsc(_)) && y.iter().any(|&s| s > 1) {
        return Err(Error::Domain("flip side information must be binary".into()));
    }
    let h = conditional_entropy(channel)?;
    let bits = binning.prefix_bits(m);
    let mask = if bits == 0 { 0 } else { (1u64 << bits) - 1 };

    let mut survivor = None;
    let mut count = 0usize;
    for word in 0..binning.table.len() {
        if binning.table[word] & mask != index_prefix & mask {
            continue;
        }
        let Some(cost) = neg_log2_posterior(word, y, channel, p) else {
            continue;
        };
        if (cost / n as f64 - h).abs() < eps + EPS_SLACK {
            count += 1;
            survivor = Some(word);
        }
    }
    let stats = DecodeStats { survivors: count, ..DecodeStats::default() };
    Ok(if count == 1 {
        DecodeOutcome {
            status: DecodeStatus::Recovered,
            x_hat: survivor.map(|w| symbols_of(w, n)),
            stats,
        }
    } else {
        DecodeOutcome { status: DecodeStatus::Ambiguous, x_hat: None, stats }
    })
}

/// Empirical error probability with a Wilson 95% interval.
#[derive(Clone, Copy, Debug, serde::Serialize)]
pub struct ErrorEstimate {
    pub trials: u64,
    pub errors: u64,
    pub p_err: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

fn wilson(errors: u64, trials: u64) -> (f64, f64) {
    // 95% two-sided normal quantile.
    let z = 1.96f64;
    let t = trials as f64;
    let p = errors as f64 / t;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * t)) / (1.0 + z2 / t);
    let half = z * (p * (1.0 - p) / t + z2 / (4.0 * t * t)).sqrt() / (1.0 + z2 / t);
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Monte-Carlo error probability of the full-prefix typicality decoder.
/// Every batch of trials rebuilds the binning from a derived seed, so the
/// estimate averages over codes exactly as the achievability bound does.
pub fn monte_carlo_error(
    n: usize,
    stage_rates: &[f64],
    channel: &ChannelSpec,
    eps: f64,
    trials: u64,
    seed: u64,
) -> Result<ErrorEstimate> {
    if trials == 0 {
        return Err(Error::Domain("at least one trial required".into()));
    }
    // Fail fast on an infeasible build before spawning batches.
    EmbeddedBinning::build(n, stage_rates, seed)?;
    let batches: Vec<(u64, u64)> = (0..trials.div_ceil(BATCH))
        .map(|b| (b, BATCH.min(trials - b * BATCH)))
        .collect();
    let counts: Vec<Result<u64>> = par::map_items(batches, |(batch, batch_trials)| {
        let binning = EmbeddedBinning::build(n, stage_rates, derive_seed(seed, 2 * batch))?;
        let m = binning.stages();
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 2 * batch + 1));
        let mut errors = 0u64;
        for _ in 0..batch_trials {
            let x: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
            let y = pass_through_channel(&x, channel, &mut rng)?;
            let prefix = binning.index_prefix(&x, m)?;
            let out = typicality_decode(&binning, m, prefix, &y, channel, eps)?;
            if !(out.recovered() && out.x_hat.as_deref() == Some(&x[..])) {
                errors += 1;
            }
        }
        Ok(errors)
    });
    let errors = counts.into_iter().sum::<Result<u64>>()?;
    let p_err = errors as f64 / trials as f64;
    let (ci_lo, ci_hi) = wilson(errors, trials);
    Ok(ErrorEstimate { trials, errors, p_err, ci_lo, ci_hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_nest_exactly_on_the_full_table() {
        let b = EmbeddedBinning::build(10, &[0.3, 0.4, 0.25], 7).unwrap();
        for word in 0..1usize << 10 {
            for m in 1..3 {
                let lower = b.index_of_word(word, m);
                let wider = b.index_of_word(word, m + 1);
                let bits = b.prefix_bits(m);
                assert_eq!(lower, wider & ((1 << bits) - 1), "word {word} stage {m}");
            }
        }
    }

    #[test]
    fn zero_rate_stage_is_a_single_bin() {
        let b = EmbeddedBinning::build(8, &[0.0], 3).unwrap();
        assert_eq!(b.stage_bits(), &[0]);
        for word in 0..1usize << 8 {
            assert_eq!(b.index_of_word(word, 1), 0);
        }
    }

    #[test]
    fn full_rate_stage_collisions_match_the_frozen_count() {
        // 2^10 words into 2^10 bins; duplicates counted exactly on the
        // built table for this seed.
        let b = EmbeddedBinning::build(10, &[1.0], 42).unwrap();
        let mut seen = vec![false; 1 << 10];
        let mut collisions = 0u32;
        for word in 0..1usize << 10 {
            let bin = b.index_of_word(word, 1) as usize;
            if seen[bin] {
                collisions += 1;
            }
            seen[bin] = true;
        }
        assert_eq!(collisions, FROZEN_COLLISIONS);
    }

    /// Duplicate assignments among 1024 uniform draws on 1024 bins,
    /// seed 42; near the birthday expectation 1024(1 - (1 - 1/1024)^1023)
    /// of roughly 377.
    const FROZEN_COLLISIONS: u32 = 364;

    #[test]
    fn size_caps_are_enforced() {
        assert!(matches!(
            EmbeddedBinning::build(17, &[0.5], 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            EmbeddedBinning::build(16, &[1.0, 1.0], 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn huge_eps_and_full_rate_always_recover() {
        let b = EmbeddedBinning::build(8, &[1.0, 1.0, 1.0], 9).unwrap();
        let ch = ChannelSpec::Bsc(0.2);
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for _ in 0..50 {
            let x: Vec<u8> = (0..8).map(|_| rng.random_range(0..2u8)).collect();
            let y = pass_through_channel(&x, &ch, &mut rng).unwrap();
            let prefix = b.index_prefix(&x, 3).unwrap();
            let out = typicality_decode(&b, 3, prefix, &y, &ch, 50.0).unwrap();
            // 24 index bits over 8 symbols: collisions are possible but
            // did not occur for this seed; the word is pinned exactly.
            assert!(out.recovered());
            assert_eq!(out.x_hat.unwrap(), x);
        }
    }

    #[test]
    fn more_stages_only_shrink_the_survivor_set() {
        let ch = ChannelSpec::Bsc(0.2);
        let mut rng = ChaCha12Rng::seed_from_u64(13);
        for trial in 0..40 {
            let b = EmbeddedBinning::build(12, &[0.4, 0.4], derive_seed(99, trial)).unwrap();
            let x: Vec<u8> = (0..12).map(|_| rng.random_range(0..2u8)).collect();
            let y = pass_through_channel(&x, &ch, &mut rng).unwrap();
            let short = typicality_decode(&b, 1, b.index_prefix(&x, 1).unwrap(), &y, &ch, 0.3)
                .unwrap();
            let long = typicality_decode(&b, 2, b.index_prefix(&x, 2).unwrap(), &y, &ch, 0.3)
                .unwrap();
            assert!(long.stats.survivors <= short.stats.survivors, "trial {trial}");
            // When the short prefix already pinned the true word, the
            // longer one must agree (the word still matches and survives).
            if short.recovered() && short.x_hat.as_deref() == Some(&x[..]) {
                assert!(long.recovered());
                assert_eq!(long.x_hat.unwrap(), x);
            }
        }
    }

    #[test]
    fn erasure_posterior_treats_erasures_as_coin_flips() {
        let b = EmbeddedBinning::build(6, &[1.0], 5).unwrap();
        let ch = ChannelSpec::Erasure(0.5);
        // Half the symbols erased exactly: cost/n = 0.5 = H, deviation 0.
        let x = vec![1, 0, 1, 1, 0, 0];
        let y = vec![1, ERASED, 1, ERASED, 0, ERASED];
        let out =
            typicality_decode(&b, 1, b.index_prefix(&x, 1).unwrap(), &y, &ch, 0.05).unwrap();
        // Unerased positions are hard constraints, so only the 8 words
        // agreeing there can survive; typicality then keeps them all.
        assert!(out.stats.survivors >= 1);
        // A word disagreeing on an unerased position is impossible.
        assert_eq!(neg_log2_posterior(0b000000, &y, &ch, 0.5), None);
    }

    #[test]
    fn noiseless_channel_never_errs() {
        let est =
            monte_carlo_error(10, &[0.5], &ChannelSpec::Bsc(0.0), 0.1, 256, 21).unwrap();
        assert_eq!(est.errors, 0);
        assert_eq!(est.p_err, 0.0);
        let est =
            monte_carlo_error(10, &[0.5], &ChannelSpec::Erasure(0.0), 0.1, 256, 22).unwrap();
        assert_eq!(est.errors, 0);
    }

    #[test]
    fn wilson_interval_brackets_the_point_estimate() {
        let (lo, hi) = wilson(10, 100);
        assert!(lo < 0.1 && 0.1 < hi);
        assert!(lo > 0.0 && hi < 1.0);
        let (lo, hi) = wilson(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.06);
    }

    #[test]
    fn rate_phase_transition_at_the_frozen_operating_point() {
        // Two sum rates straddling H(X|Y) = h2(0.2) ~ 0.722 on n = 12.
        let ch = ChannelSpec::Bsc(0.2);
        let below = monte_carlo_error(12, &[0.47], &ch, 0.1, 2048, 77).unwrap();
        let above = monte_carlo_error(12, &[0.97], &ch, 0.1, 2048, 77).unwrap();
        assert!(below.p_err > 0.5, "starved rate errs at {}", below.p_err);
        assert!(
            below.p_err - above.p_err >= 0.3,
            "phase gap {} too small",
            below.p_err - above.p_err
        );
    }

    #[test]
    fn error_is_nonincreasing_in_rate_within_confidence() {
        let ch = ChannelSpec::Bsc(0.2);
        let mut last: Option<ErrorEstimate> = None;
        for rate in [0.4, 0.6, 0.8, 1.0] {
            let est = monte_carlo_error(12, &[rate], &ch, 0.1, 1024, 31).unwrap();
            if let Some(prev) = last {
                assert!(
                    est.ci_lo <= prev.ci_hi,
                    "rate {rate}: {} not within CI of {}",
                    est.p_err,
                    prev.p_err
                );
            }
            last = Some(est);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let b = EmbeddedBinning::build(8, &[0.5], 1).unwrap();
        let y = vec![0u8; 8];
        assert!(typicality_decode(&b, 0, 0, &y, &ChannelSpec::Bsc(0.1), 0.1).is_err());
        assert!(typicality_decode(&b, 2, 0, &y, &ChannelSpec::Bsc(0.1), 0.1).is_err());
        assert!(typicality_decode(&b, 1, 0, &y, &ChannelSpec::Bsc(0.1), 0.0).is_err());
        assert!(typicality_decode(&b, 1, 0, &y[..4], &ChannelSpec::Bsc(0.1), 0.1).is_err());
        assert!(typicality_decode(&b, 1, 0, &y, &ChannelSpec::Root, 0.1).is_err());
        assert!(
            typicality_decode(&b, 1, 0, &y, &ChannelSpec::Gaussian { sigma: 1.0, rho: 0.5 }, 0.1)
                .is_err()
        );
        assert!(monte_carlo_error(8, &[0.5], &ChannelSpec::Bsc(0.1), 0.1, 0, 1).is_err());
    }
}
