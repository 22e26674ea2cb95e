//! Rate-adaptive syndrome code for bit-flip side information.
//!
//! One base parity-check relation per source bit, accumulated into
//! running XORs. The stored word holds every accumulated bit, reordered
//! so that any prefix spreads its positions almost evenly over the word:
//! knowing the accumulated value at positions `q_1 < ... < q_m` hands the
//! decoder one merged check per gap, with syndrome `a[q] ^ a[prev]` and
//! support equal to the XOR of the base rows inside the gap. Longer
//! prefixes only split gaps, so levels nest bit-for-bit.
//!
//! The base matrix pins every variable to one equation through a seeded
//! permutation: variable `i` owns equation `pi(i)` and adds two extra
//! entries in equations owned by later variables. Under that order each
//! equation contains exactly one variable no earlier equation has, so
//! forward substitution restores the source from all `n` accumulated
//! bits with no side information at all, which serves the worst case
//! exactly. Because ownership is a random permutation, an equation's
//! position in the accumulator is unrelated to which variables it
//! carries; rows of one column that land in the same gap cancel out of
//! its merged XOR support, and the shuffle keeps such collisions rare
//! and uncorrelated across levels instead of letting any column cluster
//! systematically. Extra draws are redone when two columns would come to
//! share a row pair (which would close a four-cycle) and rows are
//! load-capped so no merged check grows heavy.

use std::collections::HashSet;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::outcome::{DecodeOutcome, DecodeStats, DecodeStatus};
use crate::par;

const MSG_CLAMP: f64 = 30.0;
const MAX_ITERATIONS: u32 = 100;
/// Extra entries a row accepts beyond its pinned variable.
const ROW_EXTRA_CAP: u8 = 3;

#[derive(Clone, Debug)]
pub struct LdpcaCode {
    n: usize,
    /// Base rows, CSR, columns sorted ascending; last entry is the diagonal.
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    /// Transmission order over positions `1..=n`; prefixes nest.
    order: Vec<u32>,
    /// Decodable level sizes to probe, ascending, ending at `n`.
    ladder: Vec<usize>,
    seed: u64,
}

impl LdpcaCode {
    pub fn new(n: usize, seed: u64, ladder_levels: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("empty source word".into()));
        }
        if n > u32::MAX as usize / 2 {
            return Err(Error::Domain(format!("source length {n} too large")));
        }
        if ladder_levels == 0 {
            return Err(Error::Domain("ladder needs at least one level".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let cols = Self::draw_columns(n, &mut rng);

        // Transpose into row CSR; the pinned variable lands last per
        // sorted row because extras only go to later-pinned equations.
        let mut row_lists: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
        for (j, rows) in cols.iter().enumerate() {
            for &r in rows {
                row_lists[r as usize].push(j as u32 + 1);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0u32);
        for r in 1..=n {
            row_lists[r].sort_unstable();
            col_idx.extend_from_slice(&row_lists[r]);
            row_ptr.push(col_idx.len() as u32);
        }

        let order = bisection_order(n);
        let ladder = build_ladder(n, ladder_levels);
        Ok(LdpcaCode { n, row_ptr, col_idx, order, ladder, seed })
    }

    /// Row sets per column: the pinned equation plus two extras drawn
    /// among equations pinned to later variables. Offsets into the pin
    /// order are geometric, so each later equation absorbs about two
    /// extras no matter where it sits (uniform offsets would pile load
    /// harmonically onto the last-pinned rows); the pin shuffle already
    /// scatters row indices, so offset shape costs no randomness where
    /// it matters. Draws retry past loaded rows and already-used row
    /// pairs, then give in so the tail variables, whose candidate pools
    /// shrink to nothing, still terminate.
    fn draw_columns(n: usize, rng: &mut ChaCha12Rng) -> Vec<Vec<u32>> {
        // Mean pin-order distance between a variable and its extras.
        const MEAN_OFFSET: f64 = 12.0;
        let decay = (1.0f64 - 1.0 / MEAN_OFFSET).ln();
        let mut pin: Vec<u32> = (1..=n as u32).collect();
        for i in (1..n).rev() {
            pin.swap(i, rng.random_range(0..=i));
        }
        let mut load = vec![0u8; n + 1];
        let mut used_pairs: HashSet<(u32, u32)> = HashSet::new();
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n];
        for j in 1..=n {
            let rows = &mut cols[j - 1];
            rows.push(pin[j - 1]);
            let want = 2.min(n - j);
            let mut attempt = 0;
            loop {
                let mut drawn: Vec<u32> = Vec::with_capacity(want);
                let mut tries = 0;
                while drawn.len() < want && tries < 400 {
                    tries += 1;
                    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                    let offset = 1 + (u.ln() / decay) as usize;
                    if offset > n - j {
                        continue;
                    }
                    let r = pin[j + offset - 1];
                    if drawn.contains(&r) {
                        continue;
                    }
                    if tries <= 60 && load[r as usize] >= ROW_EXTRA_CAP {
                        continue;
                    }
                    drawn.push(r);
                }
                let candidate: Vec<u32> =
                    rows.iter().copied().chain(drawn.iter().copied()).collect();
                if attempt >= 64 || !has_used_pair(&candidate, &used_pairs) {
                    for &r in &drawn {
                        load[r as usize] += 1;
                    }
                    *rows = candidate;
                    break;
                }
                attempt += 1;
            }
            record_pairs(rows, &mut used_pairs);
            rows.sort_unstable();
        }
        cols
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Probe sizes for the level search, in stored bits.
    pub fn ladder(&self) -> &[usize] {
        &self.ladder
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i - 1] as usize..self.row_ptr[i] as usize]
    }

    /// Raw per-row syndromes of `x`.
    pub fn syndrome(&self, x: &[u8]) -> Result<BitVec> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "source length {} vs code length {}",
                x.len(),
                self.n
            )));
        }
        let bits = par::map_indexed(self.n, |i| {
            self.row(i + 1).iter().fold(0u8, |acc, &c| acc ^ (x[c as usize - 1] & 1))
        });
        Ok(BitVec::from_bits(&bits))
    }

    /// Stored word: accumulated syndromes in transmission order.
    pub fn encode(&self, x: &[u8]) -> Result<BitVec> {
        let s = self.syndrome(x)?;
        let mut acc = Vec::with_capacity(self.n);
        let mut running = 0u8;
        for i in 0..self.n {
            running ^= s.get(i);
            acc.push(running);
        }
        Ok(BitVec::from_bits(
            &self.order.iter().map(|&pos| acc[pos as usize - 1]).collect::<Vec<u8>>(),
        ))
    }

    /// Decodes a stored prefix against flip-degraded side information
    /// with crossover probability `p`. The full word decodes by forward
    /// substitution and is exact; shorter prefixes run belief propagation
    /// over the merged checks, and report recovery when the hard decision
    /// satisfies every one of them.
    pub fn decode(&self, prefix: &BitVec, y: &[u8], p: f64) -> Result<DecodeOutcome> {
        let m = prefix.len();
        if m == 0 || m > self.n {
            return Err(Error::Domain(format!(
                "stored prefix of {m} bits outside 1..={}",
                self.n
            )));
        }
        if y.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "side information length {} vs code length {}",
                y.len(),
                self.n
            )));
        }
        if y.iter().any(|&s| s > 1) {
            return Err(Error::Domain("flip side information must be binary".into()));
        }
        if !(0.0..0.5).contains(&p) {
            return Err(Error::Domain(format!(
                "crossover probability {p} outside [0, 0.5)"
            )));
        }

        if m == self.n {
            return Ok(self.decode_full(prefix));
        }

        // Known accumulator positions, ascending, with their values.
        let mut known: Vec<(u32, u8)> =
            (0..m).map(|r| (self.order[r], prefix.get(r))).collect();
        known.sort_unstable_by_key(|&(pos, _)| pos);

        // One merged check per gap: support is the XOR of the base rows
        // inside it, value the accumulator step across it.
        let mut checks: Vec<(Vec<u32>, u8)> = Vec::with_capacity(m);
        let mut mark = vec![false; self.n + 1];
        let mut touched: Vec<u32> = Vec::new();
        let mut prev_pos = 0u32;
        let mut prev_val = 0u8;
        for &(pos, val) in &known {
            for i in (prev_pos + 1)..=pos {
                for &c in self.row(i as usize) {
                    let slot = &mut mark[c as usize];
                    if !*slot {
                        touched.push(c);
                    }
                    *slot = !*slot;
                }
            }
            let mut support: Vec<u32> =
                touched.iter().copied().filter(|&c| mark[c as usize]).collect();
            support.sort_unstable();
            // A position re-toggled inside one gap lands in `touched` twice.
            support.dedup();
            for &c in &touched {
                mark[c as usize] = false;
            }
            touched.clear();
            checks.push((support, val ^ prev_val));
            prev_pos = pos;
            prev_val = val;
        }

        self.propagate(&checks, y, p)
    }

    fn decode_full(&self, prefix: &BitVec) -> DecodeOutcome {
        let mut acc = vec![0u8; self.n + 1];
        for r in 0..self.n {
            acc[self.order[r] as usize] = prefix.get(r);
        }
        // Each row's pinned variable is its last, largest entry, and the
        // pin map is a bijection, so substitution in variable order only
        // ever consumes already-solved values.
        let mut row_of = vec![0u32; self.n + 1];
        for r in 1..=self.n {
            row_of[*self.row(r).last().unwrap() as usize] = r as u32;
        }
        let mut x = vec![0u8; self.n];
        for i in 1..=self.n {
            let r = row_of[i] as usize;
            let s = acc[r] ^ acc[r - 1];
            let row = self.row(r);
            let head = &row[..row.len() - 1];
            x[i - 1] = head.iter().fold(s, |v, &c| v ^ x[c as usize - 1]);
        }
        DecodeOutcome {
            status: DecodeStatus::Recovered,
            x_hat: Some(x),
            stats: DecodeStats::default(),
        }
    }

    fn propagate(&self, checks: &[(Vec<u32>, u8)], y: &[u8], p: f64) -> Result<DecodeOutcome> {
        let p_eff = p.max(1e-9);
        let prior_mag = (((1.0 - p_eff) / p_eff).ln()).min(MSG_CLAMP);
        let mut llr: Vec<f64> = y
            .iter()
            .map(|&b| if b == 0 { prior_mag } else { -prior_mag })
            .collect();
        let mut messages: Vec<Vec<f64>> =
            checks.iter().map(|(s, _)| vec![0.0; s.len()]).collect();
        let mut fwd: Vec<f64> = Vec::new();
        let mut bwd: Vec<f64> = Vec::new();
        let mut stats = DecodeStats::default();

        for iter in 1..=MAX_ITERATIONS {
            for ((support, c), msgs) in checks.iter().zip(messages.iter_mut()) {
                let d = support.len();
                if d == 0 {
                    continue;
                }
                for (k, &v) in support.iter().enumerate() {
                    llr[v as usize - 1] -= msgs[k];
                }
                fwd.clear();
                fwd.resize(d + 1, 1.0);
                bwd.clear();
                bwd.resize(d + 1, 1.0);
                for k in 0..d {
                    let t = (llr[support[k] as usize - 1].clamp(-MSG_CLAMP, MSG_CLAMP) / 2.0)
                        .tanh();
                    fwd[k + 1] = fwd[k] * t;
                }
                for k in (0..d).rev() {
                    let t = (llr[support[k] as usize - 1].clamp(-MSG_CLAMP, MSG_CLAMP) / 2.0)
                        .tanh();
                    bwd[k] = bwd[k + 1] * t;
                }
                let sign = if *c == 1 { -1.0 } else { 1.0 };
                for k in 0..d {
                    let prod = (sign * fwd[k] * bwd[k + 1]).clamp(-(1.0 - 1e-6), 1.0 - 1e-6);
                    let msg = (2.0 * prod.atanh()).clamp(-MSG_CLAMP, MSG_CLAMP);
                    llr[support[k] as usize - 1] += msg;
                    msgs[k] = msg;
                }
            }
            stats.iterations = iter as usize;

            let x_hat: Vec<u8> = llr.iter().map(|&l| u8::from(l < 0.0)).collect();
            let consistent = checks.iter().all(|(support, c)| {
                support.iter().fold(0u8, |acc, &v| acc ^ x_hat[v as usize - 1]) == *c
            });
            if consistent {
                return Ok(DecodeOutcome {
                    status: DecodeStatus::Recovered,
                    x_hat: Some(x_hat),
                    stats,
                });
            }
        }
        Ok(DecodeOutcome { status: DecodeStatus::IterationsExhausted, x_hat: None, stats })
    }

    /// Smallest ladder level whose prefix restores `x` exactly, scanning
    /// upward. The top level decodes by substitution, so the scan always
    /// lands; the equality check makes the reported level zero-error.
    pub fn min_decodable_level(
        &self,
        stored: &BitVec,
        y: &[u8],
        x: &[u8],
        p: f64,
    ) -> Result<usize> {
        if stored.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "stored word length {} vs code length {}",
                stored.len(),
                self.n
            )));
        }
        if x.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "source length {} vs code length {}",
                x.len(),
                self.n
            )));
        }
        for &level in &self.ladder {
            let out = self.decode(&stored.prefix(level), y, p)?;
            if out.recovered() && out.x_hat.as_deref() == Some(x) {
                return Ok(level);
            }
        }
        unreachable!("the full-word level decodes by substitution");
    }
}

fn has_used_pair(rows: &[u32], used: &HashSet<(u32, u32)>) -> bool {
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            let key = (a.min(b), a.max(b));
            if used.contains(&key) {
                return true;
            }
        }
    }
    false
}

fn record_pairs(rows: &[u32], used: &mut HashSet<(u32, u32)>) {
    for (i, &a) in rows.iter().enumerate() {
        for &b in &rows[i + 1..] {
            used.insert((a.min(b), a.max(b)));
        }
    }
}

/// Deterministic transmission order: start from the last position, then
/// repeatedly split the widest remaining gap at its midpoint. Every
/// prefix of the result is therefore nearly evenly spaced.
fn bisection_order(n: usize) -> Vec<u32> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let mut order = Vec::with_capacity(n);
    order.push(n as u32);
    // (length, Reverse(start)): widest gap first, leftmost on ties.
    let mut heap: BinaryHeap<(usize, Reverse<usize>, usize)> = BinaryHeap::new();
    if n > 1 {
        heap.push((n - 1, Reverse(0), n));
    }
    while let Some((len, Reverse(lo), hi)) = heap.pop() {
        debug_assert_eq!(len, hi - lo - 1);
        let mid = (lo + hi) / 2;
        order.push(mid as u32);
        if mid - lo > 1 {
            heap.push((mid - lo - 1, Reverse(lo), mid));
        }
        if hi - mid > 1 {
            heap.push((hi - mid - 1, Reverse(mid), hi));
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

/// Evenly spaced probe sizes ending exactly at `n`.
fn build_ladder(n: usize, levels: usize) -> Vec<usize> {
    let mut ladder: Vec<usize> = (1..=levels)
        .map(|i| ((i * n) as f64 / levels as f64).round() as usize)
        .filter(|&l| l >= 1)
        .collect();
    ladder.dedup();
    if *ladder.last().unwrap() != n {
        ladder.push(n);
    }
    ladder
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ChannelSpec;
    use crate::source::SourceEnsemble;

    fn flip_pair(n: usize, p: f64, seed: u64) -> (Vec<u8>, Vec<u8>) {
        let e = SourceEnsemble::generate(1, n, seed, &[(2, ChannelSpec::Bsc(p))]).unwrap();
        let y = e.side_infos[&2].clone();
        (e.x, y)
    }

    #[test]
    fn bisection_order_is_even_permutation() {
        let n = 396;
        let order = bisection_order(n);
        let mut seen = vec![false; n + 1];
        for &pos in &order {
            assert!((1..=n as u32).contains(&pos));
            assert!(!seen[pos as usize]);
            seen[pos as usize] = true;
        }
        // Any prefix spreads out: gaps never differ wildly.
        for m in [4usize, 16, 64] {
            let mut qs: Vec<u32> = order[..m].to_vec();
            qs.sort_unstable();
            let mut prev = 0u32;
            let mut max_gap = 0;
            for &q in &qs {
                max_gap = max_gap.max(q - prev);
                prev = q;
            }
            assert!(
                (max_gap as usize) <= n.div_ceil(m) * 2,
                "m={m} max gap {max_gap}"
            );
        }
    }

    #[test]
    fn ladder_shapes() {
        assert_eq!(build_ladder(396, 66).len(), 66);
        assert_eq!(build_ladder(396, 66)[0], 6);
        assert_eq!(*build_ladder(396, 66).last().unwrap(), 396);
        assert_eq!(build_ladder(6336, 66)[0], 96);
        assert_eq!(*build_ladder(6336, 66).last().unwrap(), 6336);
        assert_eq!(*build_ladder(100, 66).last().unwrap(), 100);
        assert_eq!(build_ladder(1, 66), vec![1]);
    }

    #[test]
    fn base_matrix_pins_one_variable_per_row() {
        let n = 396;
        let code = LdpcaCode::new(n, 5, 66).unwrap();
        let mut pinned = vec![false; n + 1];
        for i in 1..=n {
            let row = code.row(i);
            assert!(!row.is_empty());
            assert!(row.windows(2).all(|w| w[0] < w[1]));
            // Load cap plus the pin, with slack for tail-pool spill.
            assert!(row.len() <= 5 + ROW_EXTRA_CAP as usize, "row {i} degree {}", row.len());
            let pin = *row.last().unwrap() as usize;
            assert!(!pinned[pin], "variable {pin} pinned twice");
            pinned[pin] = true;
        }
        assert!(pinned[1..].iter().all(|&b| b), "pin map must be a bijection");
        // Regular column weight 3: a pin plus two extras, except the two
        // last-pinned variables whose extra pools run out.
        let mut col_weight = vec![0usize; n + 1];
        for i in 1..=n {
            for &c in code.row(i) {
                col_weight[c as usize] += 1;
            }
        }
        let shorted: Vec<usize> = (1..=n).filter(|&j| col_weight[j] != 3).collect();
        assert!(shorted.len() <= 2, "sub-regular columns {shorted:?}");
        for j in shorted {
            assert!((1..=2).contains(&col_weight[j]), "column {j} weight {}", col_weight[j]);
        }
    }

    #[test]
    fn no_shared_row_pairs_away_from_the_boundary() {
        let n = 200;
        let code = LdpcaCode::new(n, 9, 66).unwrap();
        let mut cols: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
        for i in 1..=n {
            for &c in code.row(i) {
                cols[c as usize].push(i as u32);
            }
        }
        // Late-pinned variables draw from pools too small for the pair
        // dedup to always win, so only the bulk must stay four-cycle
        // free; cross pairs involving a tail column count against it.
        let tail = n - 32;
        let mut pairs = HashSet::new();
        let mut bulk_shared = 0;
        for (j, rows) in cols[1..].iter().enumerate() {
            for (i, &a) in rows.iter().enumerate() {
                for &b in &rows[i + 1..] {
                    if !pairs.insert((a.min(b), a.max(b))) && j + 1 <= tail {
                        bulk_shared += 1;
                    }
                }
            }
        }
        assert!(bulk_shared <= 1, "{bulk_shared} shared row pairs in the bulk");
    }

    #[test]
    fn construction_is_deterministic() {
        let a = LdpcaCode::new(396, 77, 66).unwrap();
        let b = LdpcaCode::new(396, 77, 66).unwrap();
        assert_eq!(a.col_idx, b.col_idx);
        let c = LdpcaCode::new(396, 78, 66).unwrap();
        assert_ne!(a.col_idx, c.col_idx);
    }

    #[test]
    fn accumulator_steps_recover_syndromes() {
        let n = 128;
        let code = LdpcaCode::new(n, 3, 66).unwrap();
        let (x, _) = flip_pair(n, 0.1, 4);
        let s = code.syndrome(&x).unwrap();
        let stored = code.encode(&x).unwrap();
        let mut acc = vec![0u8; n + 1];
        for r in 0..n {
            acc[code.order[r] as usize] = stored.get(r);
        }
        for i in 1..=n {
            assert_eq!(acc[i] ^ acc[i - 1], s.get(i - 1), "step {i}");
        }
    }

    #[test]
    fn top_level_is_exact_without_side_information() {
        let n = 396;
        let code = LdpcaCode::new(n, 11, 66).unwrap();
        let (x, _) = flip_pair(n, 0.1, 12);
        let stored = code.encode(&x).unwrap();
        let junk = vec![0u8; n];
        let out = code.decode(&stored, &junk, 0.4999).unwrap();
        assert_eq!(out.status, DecodeStatus::Recovered);
        assert_eq!(out.x_hat.unwrap(), x);
    }

    #[test]
    fn moderate_flip_rate_decodes_below_top() {
        let n = 396;
        let code = LdpcaCode::new(n, 21, 66).unwrap();
        let (x, y) = flip_pair(n, 0.05, 22);
        let stored = code.encode(&x).unwrap();
        let level = code.min_decodable_level(&stored, &y, &x, 0.05).unwrap();
        // The conditional entropy floor is 114 bits; stay between the
        // floor's neighborhood and well under the full 396.
        assert!(level >= 66, "level {level} suspiciously low");
        assert!(level <= 282, "level {level} too high");
        let out = code.decode(&stored.prefix(level), &y, 0.05).unwrap();
        assert_eq!(out.x_hat.unwrap(), x);
    }

    #[test]
    fn identical_side_information_needs_the_bottom_level() {
        let n = 396;
        let code = LdpcaCode::new(n, 31, 66).unwrap();
        let (x, _) = flip_pair(n, 0.1, 32);
        let stored = code.encode(&x).unwrap();
        let level = code.min_decodable_level(&stored, &x, &x, 0.001).unwrap();
        assert_eq!(level, code.ladder()[0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let code = LdpcaCode::new(64, 1, 66).unwrap();
        let x = vec![0u8; 64];
        let stored = code.encode(&x).unwrap();
        assert!(code.decode(&stored, &x[..10], 0.1).is_err());
        assert!(code.decode(&stored, &x, 0.5).is_err());
        assert!(code.decode(&BitVec::new(), &x, 0.1).is_err());
        assert!(code.decode(&stored, &vec![2u8; 64], 0.1).is_err());
        assert!(LdpcaCode::new(0, 1, 66).is_err());
    }
}
