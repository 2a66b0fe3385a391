//! Chip-level line coding.
//!
//! Manchester and PIE are used on the reader-to-device link; Manchester, FM0
//! and Miller (with subcarrier) on the device-to-reader link. FM0 and Miller
//! follow the EPC Gen2 baseband definitions with the line starting high.

use serde::{Deserialize, Serialize};

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// Ratio between the long high chip of a PIE "1" and its low chip.
pub const PIE_HIGH_RATIO: f64 = 2.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineScheme {
    None,
    #[default]
    Manchester,
    Pie,
    Fm0,
    Miller2,
    Miller4,
    Miller8,
}

impl LineScheme {
    /// Chips produced per input bit, for the fixed-rate schemes.
    pub fn chips_per_bit(self) -> Option<usize> {
        match self {
            LineScheme::None => Some(1),
            LineScheme::Manchester | LineScheme::Fm0 => Some(2),
            LineScheme::Miller2 => Some(4),
            LineScheme::Miller4 => Some(8),
            LineScheme::Miller8 => Some(16),
            LineScheme::Pie => None,
        }
    }

    fn miller_factor(self) -> Option<usize> {
        match self {
            LineScheme::Miller2 => Some(2),
            LineScheme::Miller4 => Some(4),
            LineScheme::Miller8 => Some(8),
            _ => None,
        }
    }
}

/// Binary chips with their timing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChipSeq {
    pub chips: Vec<u8>,
    /// Duration of one chip; for PIE the duration of the short chip.
    pub chip_duration_s: f64,
    /// Per-chip durations, present only for PIE.
    pub durations_s: Option<Vec<f64>>,
}

impl ChipSeq {
    pub fn new(chips: Vec<u8>, chip_duration_s: f64) -> Self {
        debug_assert!(chip_duration_s > 0.0);
        Self {
            chips,
            chip_duration_s,
            durations_s: None,
        }
    }

    pub fn len(&self) -> usize {
        self.chips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chips.is_empty()
    }

    pub fn total_duration_s(&self) -> f64 {
        match &self.durations_s {
            Some(d) => d.iter().sum(),
            None => self.chips.len() as f64 * self.chip_duration_s,
        }
    }

    /// Count of level changes between consecutive chips.
    pub fn transitions(&self) -> usize {
        self.chips.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Expands a variable-duration (PIE) sequence onto the uniform chip grid of
    /// `chip_duration_s`, so it can be fed to a chip-synchronous modulator.
    pub fn to_uniform_grid(&self) -> ChipSeq {
        let Some(durations) = &self.durations_s else {
            return self.clone();
        };
        let mut chips = Vec::new();
        for (&c, &d) in self.chips.iter().zip(durations) {
            let n = (d / self.chip_duration_s).round().max(1.0) as usize;
            chips.extend(std::iter::repeat_n(c, n));
        }
        ChipSeq::new(chips, self.chip_duration_s)
    }

    /// Inverse of [`ChipSeq::to_uniform_grid`]: merges runs into variable-length chips.
    pub fn from_uniform_grid(grid: &[u8], chip_duration_s: f64) -> ChipSeq {
        let mut chips = Vec::new();
        let mut durations = Vec::new();
        for run in grid.chunk_by(|a, b| a == b) {
            chips.push(run[0]);
            durations.push(run.len() as f64 * chip_duration_s);
        }
        ChipSeq {
            chips,
            chip_duration_s,
            durations_s: Some(durations),
        }
    }
}

pub fn line_encode(bits: &[u8], scheme: LineScheme, chip_duration_s: f64) -> Result<ChipSeq> {
    if bits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let chips = match scheme {
        LineScheme::None => return Err(Error::UnsupportedScheme(LineScheme::None)),
        LineScheme::Manchester => manchester_encode(bits),
        LineScheme::Fm0 => fm0_encode(bits),
        LineScheme::Pie => {
            let mut chips = Vec::with_capacity(2 * bits.len());
            let mut durations = Vec::with_capacity(2 * bits.len());
            for &b in bits {
                chips.extend([1, 0]);
                let high = if b == 1 { PIE_HIGH_RATIO } else { 1.0 };
                durations.extend([high * chip_duration_s, chip_duration_s]);
            }
            return Ok(ChipSeq {
                chips,
                chip_duration_s,
                durations_s: Some(durations),
            });
        }
        LineScheme::Miller2 | LineScheme::Miller4 | LineScheme::Miller8 => {
            miller_encode(bits, scheme.miller_factor().unwrap())
        }
    };
    Ok(ChipSeq::new(chips, chip_duration_s))
}

/// Decodes line-coded chips, returning the bits and the number of chip
/// patterns that were not valid codewords.
pub fn line_decode(chips: &ChipSeq, scheme: LineScheme) -> Result<(BitVec, usize)> {
    if chips.is_empty() {
        return Err(Error::EmptyInput);
    }
    match scheme {
        LineScheme::None => Err(Error::UnsupportedScheme(LineScheme::None)),
        LineScheme::Manchester => manchester_decode(&chips.chips),
        LineScheme::Fm0 => fm0_decode(&chips.chips),
        LineScheme::Pie => pie_decode(chips),
        LineScheme::Miller2 | LineScheme::Miller4 | LineScheme::Miller8 => {
            miller_decode(&chips.chips, scheme.miller_factor().unwrap())
        }
    }
}

pub(crate) fn manchester_encode(bits: &[u8]) -> Vec<u8> {
    bits.iter()
        .flat_map(|&b| if b == 0 { [1, 0] } else { [0, 1] })
        .collect()
}

pub(crate) fn manchester_decode(chips: &[u8]) -> Result<(BitVec, usize)> {
    if !chips.len().is_multiple_of(2) {
        return Err(Error::OddChipCount(chips.len()));
    }
    let mut violations = 0;
    let bits = chips
        .chunks_exact(2)
        .map(|pair| match (pair[0], pair[1]) {
            (1, 0) => false,
            (0, 1) => true,
            // {1,1} -> 1, {0,0} -> 0
            (a, _) => {
                violations += 1;
                a == 1
            }
        })
        .collect();
    Ok((bits, violations))
}

fn fm0_encode(bits: &[u8]) -> Vec<u8> {
    let mut level = 1u8;
    let mut chips = Vec::with_capacity(2 * bits.len());
    for &b in bits {
        // inversion at every bit boundary, extra mid-bit inversion for 0
        let first = level ^ 1;
        let second = if b == 0 { first ^ 1 } else { first };
        chips.extend([first, second]);
        level = second;
    }
    chips
}

fn fm0_decode(chips: &[u8]) -> Result<(BitVec, usize)> {
    if !chips.len().is_multiple_of(2) {
        return Err(Error::OddChipCount(chips.len()));
    }
    let mut level = 1u8;
    let mut violations = 0;
    let bits = chips
        .chunks_exact(2)
        .map(|pair| {
            if pair[0] == level {
                violations += 1;
            }
            level = pair[1];
            pair[0] == pair[1]
        })
        .collect();
    Ok((bits, violations))
}

/// Baseband Miller levels for each half bit, before the subcarrier.
fn miller_halves(bits: &[u8]) -> Vec<[u8; 2]> {
    let mut level = 1u8;
    let mut prev: Option<u8> = None;
    bits.iter()
        .map(|&b| {
            if b == 0 && prev == Some(0) {
                level ^= 1;
            }
            let first = level;
            if b == 1 {
                level ^= 1;
            }
            prev = Some(b);
            [first, level]
        })
        .collect()
}

fn miller_encode(bits: &[u8], m: usize) -> Vec<u8> {
    let mut chips = Vec::with_capacity(2 * m * bits.len());
    for halves in miller_halves(bits) {
        for level in halves {
            chips.extend((0..m).map(|k| level ^ (k % 2) as u8));
        }
    }
    chips
}

fn miller_decode(chips: &[u8], m: usize) -> Result<(BitVec, usize)> {
    let per_bit = 2 * m;
    if !chips.len().is_multiple_of(per_bit) {
        return Err(Error::OddChipCount(chips.len()));
    }
    let mut violations = 0;
    let mut halves = Vec::with_capacity(chips.len() / per_bit);
    for bit_chips in chips.chunks_exact(per_bit) {
        let mut levels = [0u8; 2];
        for (h, half) in bit_chips.chunks_exact(m).enumerate() {
            let votes = half
                .iter()
                .enumerate()
                .filter(|&(k, &c)| c ^ (k % 2) as u8 == 1)
                .count();
            if votes != 0 && votes != m {
                violations += 1;
            }
            levels[h] = (2 * votes >= m) as u8;
        }
        halves.push(levels);
    }
    let bits: BitVec = halves.iter().map(|h| h[0] != h[1]).collect();
    // check the boundary rule against a re-encode of the decision
    let expected = miller_halves(&bits);
    violations += expected.iter().zip(&halves).filter(|(e, h)| e != h).count();
    Ok((bits, violations))
}

fn pie_decode(seq: &ChipSeq) -> Result<(BitVec, usize)> {
    let Some(durations) = &seq.durations_s else {
        return Err(Error::UnsupportedScheme(LineScheme::Pie));
    };
    if !seq.chips.len().is_multiple_of(2) {
        return Err(Error::OddChipCount(seq.chips.len()));
    }
    let unit = seq.chip_duration_s;
    let split = 0.5 * (1.0 + PIE_HIGH_RATIO) * unit;
    let mut violations = 0;
    let bits = seq
        .chips
        .chunks_exact(2)
        .zip(durations.chunks_exact(2))
        .map(|(c, d)| {
            if c != [1, 0] || (d[1] - unit).abs() > 0.25 * unit {
                violations += 1;
            }
            d[0] > split
        })
        .collect();
    Ok((bits, violations))
}
