//! Bit-packed vectors shared by every on-disk format.
//!
//! Bits are packed MSB-first: bit `i` lives in byte `i / 8` under mask
//! `0x80 >> (i % 8)`. Multi-byte header integers elsewhere are
//! little-endian; only payload bit order is MSB-first.

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Debug, Default)]
pub struct BitVec {
    bytes: Vec<u8>,
    len: usize,
}

impl BitVec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self { bytes: vec![0u8; len.div_ceil(8)], len }
    }

    pub fn with_capacity(bits: usize) -> Self {
        Self { bytes: Vec::with_capacity(bits.div_ceil(8)), len: 0 }
    }

    /// Builds from one symbol per slice entry; every entry must be 0 or 1.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            debug_assert!(b <= 1);
            if b == 1 {
                v.bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        v
    }

    /// Reinterprets packed bytes as `len` bits. The byte count must be
    /// exactly `ceil(len / 8)`; pad bits are masked off so equality and
    /// prefix tests never see them.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch(format!(
                "{} bytes cannot hold exactly {} bits",
                bytes.len(),
                len
            )));
        }
        let mut v = Self { bytes: bytes.to_vec(), len };
        v.mask_tail();
        Ok(v)
    }

    fn mask_tail(&mut self) {
        let tail = self.len % 8;
        if tail != 0 {
            if let Some(last) = self.bytes.last_mut() {
                *last &= 0xffu8 << (8 - tail);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> u8 {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.bytes[i / 8] >> (7 - (i % 8))) & 1
    }

    pub fn set(&mut self, i: usize, bit: u8) {
        assert!(i < self.len);
        let mask = 0x80 >> (i % 8);
        if bit == 1 {
            self.bytes[i / 8] |= mask;
        } else {
            self.bytes[i / 8] &= !mask;
        }
    }

    pub fn push(&mut self, bit: u8) {
        if self.len % 8 == 0 {
            self.bytes.push(0);
        }
        self.len += 1;
        if bit == 1 {
            self.bytes[(self.len - 1) / 8] |= 0x80 >> ((self.len - 1) % 8);
        }
    }

    pub fn extend(&mut self, other: &BitVec) {
        for i in 0..other.len {
            self.push(other.get(i));
        }
    }

    /// First `nbits` bits as an owned vector.
    pub fn prefix(&self, nbits: usize) -> BitVec {
        assert!(nbits <= self.len);
        let mut v = Self {
            bytes: self.bytes[..nbits.div_ceil(8)].to_vec(),
            len: nbits,
        };
        v.mask_tail();
        v
    }

    /// Packed representation, tail padded with zero bits.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    /// One byte per bit, values 0/1.
    pub fn to_symbols(&self) -> Vec<u8> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// True when `self` equals the first `self.len()` bits of `other`,
    /// compared on packed bytes with the final partial byte masked.
    pub fn is_bit_prefix_of(&self, other: &BitVec) -> bool {
        if self.len > other.len {
            return false;
        }
        other.prefix(self.len) == *self
    }
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}
