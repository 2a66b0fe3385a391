//! Bit containers shared by every stage of the chains.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest transport block carried by either link.
pub const MAX_TBS: usize = 1000;

/// Width of the TBS field sent in-band when a frame ends without a postamble.
pub const TBS_FIELD_BITS: usize = 10;

/// An ordered sequence of bits, each stored as a `u8` holding 0 or 1.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<u8>", into = "Vec<u8>")]
pub struct BitVec(Vec<u8>);

impl BitVec {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    /// Wraps `bits`, rejecting any value other than 0 or 1.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(&b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidBit(b));
        }
        Ok(Self(bits))
    }

    pub(crate) fn from_bits_unchecked(bits: Vec<u8>) -> Self {
        debug_assert!(bits.iter().all(|&b| b <= 1));
        Self(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0; len])
    }

    /// Uniformly random bits.
    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random::<bool>() as u8).collect())
    }

    /// `value` written MSB-first into `width` bits.
    pub fn from_uint(value: u64, width: usize) -> Self {
        Self((0..width).rev().map(|i| ((value >> i) & 1) as u8).collect())
    }

    /// Reads the bits MSB-first as an unsigned integer.
    pub fn to_uint(&self) -> u64 {
        self.0.iter().fold(0, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn push(&mut self, bit: bool) {
        self.0.push(bit as u8);
    }

    pub fn extend_from_bits(&mut self, other: &[u8]) {
        debug_assert!(other.iter().all(|&b| b <= 1));
        self.0.extend_from_slice(other);
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    /// Number of positions where `self` and `other` differ (over the common prefix).
    pub fn hamming_distance(&self, other: &[u8]) -> usize {
        self.0.iter().zip(other).filter(|(a, b)| a != b).count()
    }
}

impl Deref for BitVec {
    type Target = [u8];

    fn deref(&self) -> &[u8] {
        &self.0
    }
}

impl FromIterator<bool> for BitVec {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self(iter.into_iter().map(u8::from).collect())
    }
}

impl TryFrom<Vec<u8>> for BitVec {
    type Error = Error;

    fn try_from(bits: Vec<u8>) -> Result<Self> {
        Self::from_bits(bits)
    }
}

impl TryFrom<&[u8]> for BitVec {
    type Error = Error;

    fn try_from(bits: &[u8]) -> Result<Self> {
        Self::from_bits(bits.to_vec())
    }
}

impl From<BitVec> for Vec<u8> {
    fn from(bits: BitVec) -> Self {
        bits.0
    }
}

impl FromStr for BitVec {
    type Err = Error;

    /// Parses a string of `0`/`1` characters; `_` and whitespace are ignored.
    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .filter(|c| !c.is_whitespace() && *c != '_')
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidBit(other as u32 as u8)),
            })
            .collect::<Result<Vec<u8>>>()
            .map(Self)
    }
}

impl fmt::Display for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}
