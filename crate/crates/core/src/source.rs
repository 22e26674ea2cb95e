//! Source material: synthetic correlated ensembles, channel passage,
//! empirical type counts, and the raw symbol file format.

use std::collections::BTreeMap;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::bits::BitVec;
use crate::error::{Error, Result};
use crate::model::ChannelSpec;

/// Symbol value marking an erased position in a side-information word.
pub const ERASED: u8 = 2;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable per-stream seed derivation so every generated word has its own
/// independent generator regardless of iteration order.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ GOLDEN.wrapping_mul(stream.wrapping_add(1)))
}

/// Passes a binary word through a star channel. Erasure output uses
/// [`ERASED`]; the root passes nothing through (no output word exists),
/// and gaussian channels have no binary passage.
pub fn pass_through_channel(
    x: &[u8],
    spec: &ChannelSpec,
    rng: &mut impl Rng,
) -> Result<Vec<u8>> {
    spec.validate()?;
    check_bits(x)?;
    match *spec {
        ChannelSpec::Erasure(p) => Ok(x
            .iter()
            .map(|&b| if rng.random_bool(p) { ERASED } else { b })
            .collect()),
        ChannelSpec::Bsc(p) => Ok(x
            .iter()
            .map(|&b| if rng.random_bool(p) { b ^ 1 } else { b })
            .collect()),
        ChannelSpec::Root => Err(Error::Unsupported(
            "the root channel carries no word to pass through".into(),
        )),
        ChannelSpec::Gaussian { .. } => Err(Error::Unsupported(
            "gaussian channels do not act on binary words".into(),
        )),
    }
}

fn check_bits(x: &[u8]) -> Result<()> {
    if let Some(&bad) = x.iter().find(|&&b| b > 1) {
        return Err(Error::Domain(format!("source symbol {bad} is not a bit")));
    }
    Ok(())
}

fn check_side(y: &[u8]) -> Result<()> {
    if let Some(&bad) = y.iter().find(|&&b| b > ERASED) {
        return Err(Error::Domain(format!("side-information symbol {bad} out of range")));
    }
    Ok(())
}

/// A uniform binary source word plus its channel-degraded copies, one per
/// correlated neighbor, all derived deterministically from one seed.
#[derive(Clone, Debug)]
pub struct SourceEnsemble {
    pub source_id: u32,
    pub n: usize,
    pub x: Vec<u8>,
    /// Side information by previous-request id. Root edges carry nothing
    /// and get no entry.
    pub side_infos: BTreeMap<u32, Vec<u8>>,
    pub seed: u64,
}

impl SourceEnsemble {
    pub fn generate(
        source_id: u32,
        n: usize,
        seed: u64,
        channels: &[(u32, ChannelSpec)],
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("empty source word".into()));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 0));
        let x: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        let mut side_infos = BTreeMap::new();
        for (j, spec) in channels {
            if matches!(spec, ChannelSpec::Root) {
                continue;
            }
            let mut crng = ChaCha12Rng::seed_from_u64(derive_seed(seed, 1 + *j as u64));
            side_infos.insert(*j, pass_through_channel(&x, spec, &mut crng)?);
        }
        Ok(SourceEnsemble { source_id, n, x, side_infos, seed })
    }
}

/// Empirical joint type `counts[x][y]` with `y` over {0, 1, erased}.
pub fn conditional_type(x: &[u8], y: &[u8]) -> Result<[[u64; 3]; 2]> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "source length {} vs side-information length {}",
            x.len(),
            y.len()
        )));
    }
    check_bits(x)?;
    check_side(y)?;
    let mut counts = [[0u64; 3]; 2];
    for (&xi, &yi) in x.iter().zip(y) {
        counts[xi as usize][yi as usize] += 1;
    }
    Ok(counts)
}

/// Erased positions in a side-information word.
pub fn count_erasures(y: &[u8]) -> Result<u64> {
    check_side(y)?;
    Ok(y.iter().filter(|&&b| b == ERASED).count() as u64)
}

/// Positions where an unerased side-information symbol disagrees with the
/// source.
pub fn count_disagreements(x: &[u8], y: &[u8]) -> Result<u64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(format!(
            "source length {} vs side-information length {}",
            x.len(),
            y.len()
        )));
    }
    check_bits(x)?;
    check_side(y)?;
    Ok(x
        .iter()
        .zip(y)
        .filter(|&(&xi, &yi)| yi != ERASED && yi != xi)
        .count() as u64)
}

/// Serializes a symbol word: `[n: u64 LE][width: u8][packed symbols]`,
/// width 1 for pure bits and 2 when erasures appear, symbols packed
/// MSB-first at that width.
pub fn to_raw_bytes(symbols: &[u8]) -> Result<Vec<u8>> {
    check_side(symbols)?;
    let width: u8 = if symbols.iter().any(|&s| s == ERASED) { 2 } else { 1 };
    let mut bits = BitVec::new();
    for &s in symbols {
        if width == 2 {
            bits.push((s >> 1) & 1);
        }
        bits.push(s & 1);
    }
    let mut out = Vec::with_capacity(9 + bits.as_bytes().len());
    out.extend_from_slice(&(symbols.len() as u64).to_le_bytes());
    out.push(width);
    out.extend_from_slice(bits.as_bytes());
    Ok(out)
}

pub fn from_raw_bytes(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() < 9 {
        return Err(Error::Format("raw symbol file shorter than its header".into()));
    }
    let n = u64::from_le_bytes(bytes[0..8].try_into().unwrap()) as usize;
    let width = bytes[8];
    if width != 1 && width != 2 {
        return Err(Error::Format(format!("raw symbol width {width} is not 1 or 2")));
    }
    let bit_len = n
        .checked_mul(width as usize)
        .ok_or_else(|| Error::Format("raw symbol count overflows".into()))?;
    let expected = bit_len.div_ceil(8);
    if bytes.len() - 9 != expected {
        return Err(Error::Format(format!(
            "raw symbol payload is {} bytes, expected {expected}",
            bytes.len() - 9
        )));
    }
    let bits = BitVec::from_bytes(&bytes[9..], bit_len)?;
    let mut symbols = Vec::with_capacity(n);
    for i in 0..n {
        let s = if width == 2 {
            (bits.get(2 * i) << 1) | bits.get(2 * i + 1)
        } else {
            bits.get(i)
        };
        if s > ERASED {
            return Err(Error::Format(format!("raw symbol value {s} out of range")));
        }
        symbols.push(s);
    }
    Ok(symbols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_streams_differ() {
        let chans = [(1u32, ChannelSpec::Erasure(0.3)), (2u32, ChannelSpec::Bsc(0.1))];
        let a = SourceEnsemble::generate(7, 512, 99, &chans).unwrap();
        let b = SourceEnsemble::generate(7, 512, 99, &chans).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.side_infos, b.side_infos);
        let c = SourceEnsemble::generate(7, 512, 100, &chans).unwrap();
        assert_ne!(a.x, c.x);
        assert_ne!(a.side_infos[&1], a.side_infos[&2]);
    }

    #[test]
    fn channel_statistics_match_parameters() {
        let chans = [(1u32, ChannelSpec::Erasure(0.2)), (2u32, ChannelSpec::Bsc(0.05))];
        let e = SourceEnsemble::generate(1, 20000, 5, &chans).unwrap();
        let erased = count_erasures(&e.side_infos[&1]).unwrap() as f64 / 20000.0;
        assert!((erased - 0.2).abs() < 0.02, "erasure fraction {erased}");
        let flips = count_disagreements(&e.x, &e.side_infos[&2]).unwrap() as f64 / 20000.0;
        assert!((flips - 0.05).abs() < 0.01, "flip fraction {flips}");
        // The erasure channel never flips what it delivers.
        assert_eq!(count_disagreements(&e.x, &e.side_infos[&1]).unwrap(), 0);
    }

    #[test]
    fn root_channels_yield_no_side_info() {
        let e = SourceEnsemble::generate(1, 16, 1, &[(0u32, ChannelSpec::Root)]).unwrap();
        assert!(e.side_infos.is_empty());
    }

    #[test]
    fn type_counts() {
        let x = [0u8, 0, 1, 1, 1];
        let y = [0u8, ERASED, 1, 0, ERASED];
        let t = conditional_type(&x, &y).unwrap();
        assert_eq!(t[0], [1, 0, 1]);
        assert_eq!(t[1], [1, 1, 1]);
        assert!(conditional_type(&x, &y[..4]).is_err());
        assert!(conditional_type(&[3u8], &[0u8]).is_err());
    }

    #[test]
    fn raw_round_trip_both_widths() {
        let bits = vec![0u8, 1, 1, 0, 1, 0, 0, 1, 1];
        let packed = to_raw_bytes(&bits).unwrap();
        assert_eq!(packed[8], 1);
        assert_eq!(from_raw_bytes(&packed).unwrap(), bits);

        let with_erasures = vec![0u8, ERASED, 1, ERASED, ERASED, 0, 1];
        let packed2 = to_raw_bytes(&with_erasures).unwrap();
        assert_eq!(packed2[8], 2);
        assert_eq!(from_raw_bytes(&packed2).unwrap(), with_erasures);
    }

    #[test]
    fn raw_rejects_damage() {
        let good = to_raw_bytes(&[0u8, 1, 1]).unwrap();
        assert!(from_raw_bytes(&good[..good.len() - 1]).is_err());
        let mut bad_width = good.clone();
        bad_width[8] = 7;
        assert!(from_raw_bytes(&bad_width).is_err());
        // Width-2 stream carrying the out-of-range pattern 11.
        let mut bad_symbol = to_raw_bytes(&[ERASED, 0]).unwrap();
        bad_symbol[9] = 0b1100_0000;
        assert!(from_raw_bytes(&bad_symbol).is_err());
        assert!(to_raw_bytes(&[5u8]).is_err());
    }

    #[test]
    fn derived_seeds_spread() {
        let s0 = derive_seed(42, 0);
        let s1 = derive_seed(42, 1);
        let s2 = derive_seed(43, 0);
        assert_ne!(s0, s1);
        assert_ne!(s0, s2);
    }
}
