//! D2R timing acquisition sequences: m-sequences and Gold families built
//! from preferred pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linecode::ChipSeq;

/// Preferred pairs of primitive polynomials, exponents of the non-constant terms.
const PREFERRED_PAIRS: [(usize, &[usize], &[usize]); 3] = [
    (5, &[5, 2], &[5, 4, 3, 2]),
    (6, &[6, 1], &[6, 5, 2, 1]),
    (7, &[7, 3], &[7, 3, 2, 1]),
];

/// Members whose periodic autocorrelation peak is below this multiple of the
/// largest sidelobe are dropped from the family.
const MIN_PEAK_TO_SIDELOBE: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dtas {
    pub sequence: ChipSeq,
}

impl Dtas {
    pub fn chips(&self) -> &[u8] {
        &self.sequence.chips
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }
}

/// One period of the LFSR sequence for `x^n + sum x^e + 1`, seeded with all ones
/// so the sequence opens with an on-run.
fn m_sequence(exponents: &[usize]) -> Vec<u8> {
    let n = exponents[0];
    let len = (1 << n) - 1;
    let mut s = vec![1u8; n];
    while s.len() < len {
        let k = s.len() - n;
        let next = exponents[1..].iter().fold(s[k], |acc, &e| acc ^ s[k + e]);
        s.push(next);
    }
    s
}

pub(crate) fn periodic_correlation(a: &[u8], b: &[u8], shift: usize) -> i64 {
    let n = a.len();
    (0..n)
        .map(|i| if a[i] == b[(i + shift) % n] { 1 } else { -1 })
        .sum()
}

fn peak_to_sidelobe(s: &[u8]) -> f64 {
    let side = (1..s.len())
        .map(|k| periodic_correlation(s, s, k).abs())
        .max()
        .unwrap_or(0);
    s.len() as f64 / side.max(1) as f64
}

/// The Gold family of the given length: `u`, the `u ^ T^k v` members and `v`,
/// keeping only members with a clean autocorrelation peak.
fn family(length: usize) -> Result<Vec<Vec<u8>>> {
    let &(_, pu, pv) = PREFERRED_PAIRS
        .iter()
        .find(|(n, ..)| (1 << n) - 1 == length)
        .ok_or(Error::LengthTooShort(length))?;
    let u = m_sequence(pu);
    let v = m_sequence(pv);
    let gold = (0..length).map(|k| {
        u.iter()
            .enumerate()
            .map(|(i, &x)| x ^ v[(i + k) % length])
            .collect::<Vec<u8>>()
    });
    Ok(std::iter::once(u.clone())
        .chain(gold)
        .chain(std::iter::once(v.clone()))
        .filter(|s| peak_to_sidelobe(s) >= MIN_PEAK_TO_SIDELOBE)
        .collect())
}

/// D-TAS for a device. Index 0 is the m-sequence; lengths 31, 63 and 127 are
/// supported.
pub fn build_dtas(length: usize, device_index: usize) -> Result<Dtas> {
    if length < 31 {
        return Err(Error::LengthTooShort(length));
    }
    let fam = family(length)?;
    let size = fam.len();
    let chips = fam.into_iter().nth(device_index).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "D-TAS index {device_index} outside a family of {size}"
        ))
    })?;
    Ok(Dtas {
        sequence: ChipSeq::new(chips, 1.0 / 7500.0),
    })
}
