//! Incremental parity code for erasure side information.
//!
//! The encoder emits `n` chained parity bits over the source word; any
//! prefix of them is a valid (weaker) code. Chaining makes prefixes
//! self-contained: parity `i` XORs its source selection into parity
//! `i-1`, so rows past a prefix only define parities the prefix never
//! shipped and cannot constrain the source. Decoding a prefix of length
//! `t` therefore solves exactly the first `t` rows.
//!
//! Source columns are not sprinkled uniformly over all rows: a column
//! whose edges all land beyond the prefix is invisible to it, and with
//! plain uniform placement short prefixes lose almost every column.
//! Instead rows are split into strata of doubling height and every column
//! draws a fixed number of distinct rows inside each stratum, so every
//! prefix that covers a stratum sees every column.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::outcome::{DecodeOutcome, DecodeStats, DecodeStatus};
use crate::par;
use crate::source::ERASED;

#[derive(Clone, Copy, Debug)]
pub struct StaircaseParams {
    /// Edges per column per stratum.
    pub n1: usize,
    /// Height of the first stratum; each later stratum doubles.
    pub base_stratum: usize,
}

impl Default for StaircaseParams {
    fn default() -> Self {
        StaircaseParams { n1: 5, base_stratum: 64 }
    }
}

#[derive(Clone, Debug)]
pub struct StaircaseCode {
    n: usize,
    /// CSR over rows: source columns feeding each parity.
    row_ptr: Vec<u32>,
    col_idx: Vec<u32>,
    seed: u64,
    params: StaircaseParams,
}

impl StaircaseCode {
    pub fn new(n: usize, seed: u64, params: StaircaseParams) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("empty source word".into()));
        }
        if n > u32::MAX as usize / 2 {
            return Err(Error::Domain(format!("source length {n} too large")));
        }
        if params.n1 == 0 || params.base_stratum == 0 {
            return Err(Error::Domain("staircase parameters must be positive".into()));
        }
        let strata = strata_bounds(n, params.base_stratum);
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut rows: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut picks = [0u32; 64];
        for c in 0..n as u32 {
            for &(lo, hi) in &strata {
                let height = hi - lo;
                if height <= params.n1 {
                    for r in lo..hi {
                        rows[r].push(c);
                    }
                    continue;
                }
                let want = params.n1.min(picks.len());
                let mut got = 0;
                while got < want {
                    let r = rng.random_range(lo as u32..hi as u32);
                    if !picks[..got].contains(&r) {
                        picks[got] = r;
                        got += 1;
                    }
                }
                for &r in &picks[..got] {
                    rows[r as usize].push(c);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0u32);
        for row in &rows {
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len() as u32);
        }
        Ok(StaircaseCode { n, row_ptr, col_idx, seed, params })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// One stored parity per source symbol.
    pub fn parity_count(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> StaircaseParams {
        self.params
    }

    fn row(&self, i: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[i] as usize..self.row_ptr[i + 1] as usize]
    }

    /// Full parity word; callers ship prefixes of it.
    pub fn encode(&self, x: &[u8]) -> Result<BitVec> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "source length {} vs code length {}",
                x.len(),
                self.n
            )));
        }
        let row_xors = par::map_indexed(self.n, |i| {
            self.row(i).iter().fold(0u8, |acc, &c| acc ^ (x[c as usize] & 1))
        });
        let mut parities = BitVec::with_capacity(self.n);
        let mut running = 0u8;
        for rx in row_xors {
            running ^= rx;
            parities.push(running);
        }
        Ok(parities)
    }

    /// Solves the first `parity_prefix.len()` rows against side
    /// information `y` (erasures marked [`ERASED`]). Peels degree-one
    /// equations first, then eliminates the residual core over GF(2).
    pub fn decode(&self, parity_prefix: &BitVec, y: &[u8]) -> Result<DecodeOutcome> {
        let t = parity_prefix.len();
        if t > self.n {
            return Err(Error::Domain(format!(
                "parity prefix of {t} exceeds the {} stored parities",
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
        if let Some(&bad) = y.iter().find(|&&s| s > ERASED) {
            return Err(Error::Domain(format!("side-information symbol {bad} out of range")));
        }

        // Dense ids for the erased positions.
        let mut unk_of_col = vec![u32::MAX; self.n];
        let mut col_of_unk = Vec::new();
        for (c, &s) in y.iter().enumerate() {
            if s == ERASED {
                unk_of_col[c] = col_of_unk.len() as u32;
                col_of_unk.push(c as u32);
            }
        }
        let e = col_of_unk.len();
        let mut stats = DecodeStats::default();
        if e == 0 {
            return Ok(DecodeOutcome {
                status: DecodeStatus::Recovered,
                x_hat: Some(y.to_vec()),
                stats,
            });
        }
        if e > t {
            // Fewer equations than unknowns; no prefix this short resolves.
            return Ok(DecodeOutcome { status: DecodeStatus::RankDeficient, x_hat: None, stats });
        }

        // Row i of the prefix states: XOR of erased columns = parity step
        // XOR the known side-information bits on the row.
        let built = par::map_indexed(t, |i| {
            let step = parity_prefix.get(i) ^ if i > 0 { parity_prefix.get(i - 1) } else { 0 };
            let mut rhs = step;
            let mut unknowns = Vec::new();
            for &c in self.row(i) {
                let s = y[c as usize];
                if s == ERASED {
                    unknowns.push(unk_of_col[c as usize]);
                } else {
                    rhs ^= s & 1;
                }
            }
            (unknowns, rhs)
        });
        let mut eq_unknowns: Vec<Vec<u32>> = Vec::with_capacity(t);
        let mut rhs: Vec<u8> = Vec::with_capacity(t);
        for (u, r) in built {
            eq_unknowns.push(u);
            rhs.push(r);
        }

        let mut incident: Vec<Vec<u32>> = vec![Vec::new(); e];
        for (i, unknowns) in eq_unknowns.iter().enumerate() {
            for &u in unknowns {
                incident[u as usize].push(i as u32);
            }
        }

        let mut live: Vec<u32> = eq_unknowns.iter().map(|u| u.len() as u32).collect();
        let mut value = vec![u8::MAX; e];
        let mut solved = 0usize;
        let mut queue: Vec<u32> =
            (0..t as u32).filter(|&i| live[i as usize] == 1).collect();
        while let Some(i) = queue.pop() {
            let i = i as usize;
            if live[i] != 1 {
                continue;
            }
            let &u = eq_unknowns[i]
                .iter()
                .find(|&&u| value[u as usize] == u8::MAX)
                .expect("live count said one unknown remains");
            let v = rhs[i];
            value[u as usize] = v;
            solved += 1;
            stats.peeled += 1;
            for &j in &incident[u as usize] {
                let j = j as usize;
                live[j] -= 1;
                rhs[j] ^= v;
                if live[j] == 1 {
                    queue.push(j as u32);
                }
            }
        }

        if solved < e {
            let status = self.eliminate_core(&eq_unknowns, &live, &rhs, &mut value, &mut stats);
            if status != DecodeStatus::Recovered {
                return Ok(DecodeOutcome { status, x_hat: None, stats });
            }
        }

        let mut x_hat = y.to_vec();
        for (u, &c) in col_of_unk.iter().enumerate() {
            x_hat[c as usize] = value[u];
        }
        Ok(DecodeOutcome { status: DecodeStatus::Recovered, x_hat: Some(x_hat), stats })
    }

    /// Gauss-Jordan over the equations the peeler could not finish.
    fn eliminate_core(
        &self,
        eq_unknowns: &[Vec<u32>],
        live: &[u32],
        rhs: &[u8],
        value: &mut [u8],
        stats: &mut DecodeStats,
    ) -> DecodeStatus {
        let mut dense_of_unk = vec![u32::MAX; value.len()];
        let mut unk_of_dense = Vec::new();
        for (u, &v) in value.iter().enumerate() {
            if v == u8::MAX {
                dense_of_unk[u] = unk_of_dense.len() as u32;
                unk_of_dense.push(u as u32);
            }
        }
        let cols = unk_of_dense.len();
        let words = (cols + 1).div_ceil(64);
        let mut matrix: Vec<u64> = Vec::new();
        let mut nrows = 0usize;
        for (i, unknowns) in eq_unknowns.iter().enumerate() {
            if live[i] == 0 {
                continue;
            }
            let base = matrix.len();
            matrix.resize(base + words, 0);
            for &u in unknowns {
                if value[u as usize] == u8::MAX {
                    let d = dense_of_unk[u as usize] as usize;
                    matrix[base + d / 64] |= 1u64 << (d % 64);
                }
            }
            if rhs[i] == 1 {
                matrix[base + cols / 64] |= 1u64 << (cols % 64);
            }
            nrows += 1;
        }

        let mut pivot_of_col = vec![usize::MAX; cols];
        let mut pivot_row = 0usize;
        let mut scratch = vec![0u64; words];
        for col in 0..cols {
            let (w, b) = (col / 64, 1u64 << (col % 64));
            let Some(found) =
                (pivot_row..nrows).find(|&r| matrix[r * words + w] & b != 0)
            else {
                continue;
            };
            if found != pivot_row {
                for k in 0..words {
                    matrix.swap(found * words + k, pivot_row * words + k);
                }
            }
            scratch.copy_from_slice(&matrix[pivot_row * words..(pivot_row + 1) * words]);
            for r in 0..nrows {
                if r != pivot_row && matrix[r * words + w] & b != 0 {
                    let row = &mut matrix[r * words..(r + 1) * words];
                    for k in 0..words {
                        row[k] ^= scratch[k];
                    }
                }
            }
            pivot_of_col[col] = pivot_row;
            pivot_row += 1;
            stats.ge_pivots += 1;
        }

        // Rows below the pivots are all-zero over the unknowns; a set
        // constant bit there means the system contradicts itself.
        let rhs_w = cols / 64;
        let rhs_b = 1u64 << (cols % 64);
        for r in pivot_row..nrows {
            let row = &matrix[r * words..(r + 1) * words];
            if row[rhs_w] & rhs_b != 0 {
                return DecodeStatus::Ambiguous;
            }
        }
        if pivot_of_col.iter().any(|&p| p == usize::MAX) {
            return DecodeStatus::RankDeficient;
        }
        for (col, &p) in pivot_of_col.iter().enumerate() {
            let bit = (matrix[p * words + rhs_w] >> (cols % 64)) & 1;
            value[unk_of_dense[col] as usize] = bit as u8;
        }
        DecodeStatus::Recovered
    }

    /// Shortest parity prefix that restores `x` exactly from `y`, found by
    /// bisection (prefixes only gain equations, so decodability is
    /// monotone in the prefix length). The full parity word must already
    /// succeed; its failure means no prefix can serve this request.
    pub fn min_decodable_prefix(
        &self,
        parities: &BitVec,
        y: &[u8],
        x: &[u8],
    ) -> Result<usize> {
        if parities.len() != self.n {
            return Err(Error::LengthMismatch(format!(
                "parity word length {} vs code length {}",
                parities.len(),
                self.n
            )));
        }
        let e = y.iter().filter(|&&s| s == ERASED).count();
        if e == 0 {
            return Ok(0);
        }
        let succeeds = |t: usize| -> Result<bool> {
            let out = self.decode(&parities.prefix(t), y)?;
            Ok(out.recovered() && out.x_hat.as_deref() == Some(x))
        };
        if !succeeds(self.n)? {
            return Err(Error::StorageInsufficient(format!(
                "full parity word cannot restore the source ({e} erasures of {})",
                self.n
            )));
        }
        let (mut lo, mut hi) = (e, self.n);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            if succeeds(mid)? {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Ok(lo)
    }
}

/// Half-open row ranges of doubling height covering `0..n`.
fn strata_bounds(n: usize, base: usize) -> Vec<(usize, usize)> {
    let mut bounds = Vec::new();
    let mut lo = 0usize;
    let mut height = base;
    while lo < n {
        let hi = (lo + height).min(n);
        bounds.push((lo, hi));
        lo = hi;
        height *= 2;
    }
    bounds
}
