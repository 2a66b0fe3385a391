//! Tail-biting convolutional coding, wrap-around Viterbi decoding and
//! bit/block repetition for the device-to-reader link.

use serde::{Deserialize, Serialize};

use crate::bits::BitVec;
use crate::error::{Error, Result};

/// Code rates offered by the device-to-reader FEC.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CodeRate {
    #[serde(rename = "1/2")]
    Half,
    #[serde(rename = "1/3")]
    Third,
    #[serde(rename = "1/4")]
    Quarter,
    #[serde(rename = "1/6")]
    Sixth,
}

impl CodeRate {
    /// Output bits per input bit.
    pub const fn inverse(self) -> usize {
        match self {
            CodeRate::Half => 2,
            CodeRate::Third => 3,
            CodeRate::Quarter => 4,
            CodeRate::Sixth => 6,
        }
    }

    pub const ALL: [CodeRate; 4] = [
        CodeRate::Half,
        CodeRate::Third,
        CodeRate::Quarter,
        CodeRate::Sixth,
    ];
}

/// Supported constraint lengths.
pub const CONSTRAINT_LENGTHS: [usize; 4] = [4, 6, 7, 8];

/// Generator table, octal, MSB tapping the current input bit.
///
/// K = 7, rate 1/3 is the LTE tail-biting code. Rate 1/2 and 1/3 entries at
/// other lengths and all rate 1/4 entries outside K = 7 are maximum free
/// distance codes from the published tables (Proakis; Larsen for 1/4). Rate
/// 1/6 everywhere, and rate 1/4 at K = 7, repeat the rate-1/3 generators.
fn standard_generators(k: usize, rate: CodeRate) -> Option<&'static [u32]> {
    use CodeRate::*;
    Some(match (k, rate) {
        (4, Half) => &[0o15, 0o17],
        (6, Half) => &[0o53, 0o75],
        (7, Half) => &[0o133, 0o171],
        (8, Half) => &[0o247, 0o371],
        (4, Third) => &[0o13, 0o15, 0o17],
        (6, Third) => &[0o47, 0o53, 0o75],
        (7, Third) => &[0o133, 0o171, 0o165],
        (8, Third) => &[0o225, 0o331, 0o367],
        (4, Quarter) => &[0o13, 0o15, 0o15, 0o17],
        (6, Quarter) => &[0o53, 0o67, 0o71, 0o75],
        (7, Quarter) => &[0o133, 0o171, 0o165, 0o133],
        (8, Quarter) => &[0o235, 0o275, 0o313, 0o357],
        (4, Sixth) => &[0o13, 0o15, 0o17, 0o13, 0o15, 0o17],
        (6, Sixth) => &[0o47, 0o53, 0o75, 0o47, 0o53, 0o75],
        (7, Sixth) => &[0o133, 0o171, 0o165, 0o133, 0o171, 0o165],
        (8, Sixth) => &[0o225, 0o331, 0o367, 0o225, 0o331, 0o367],
        _ => return None,
    })
}

/// A rate 1/n feed-forward convolutional code.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvCode {
    pub constraint_length: usize,
    pub generators: Vec<u32>,
}

impl ConvCode {
    pub fn new(constraint_length: usize, generators: Vec<u32>) -> Result<Self> {
        if !(2..=16).contains(&constraint_length) {
            return Err(Error::InvalidConfig(format!(
                "constraint length {constraint_length}"
            )));
        }
        if generators.is_empty() {
            return Err(Error::InvalidConfig("no generator polynomials".into()));
        }
        if let Some(g) = generators
            .iter()
            .find(|&&g| g == 0 || g >> constraint_length != 0)
        {
            return Err(Error::InvalidConfig(format!(
                "generator {g:o} does not fit constraint length {constraint_length}"
            )));
        }
        Ok(Self {
            constraint_length,
            generators,
        })
    }

    /// Entry of the built-in generator table.
    pub fn standard(constraint_length: usize, rate: CodeRate) -> Result<Self> {
        let gens = standard_generators(constraint_length, rate).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "no code for K = {constraint_length}, rate {rate:?}"
            ))
        })?;
        Self::new(constraint_length, gens.to_vec())
    }

    /// The LTE K = 7 rate-1/3 tail-biting code.
    pub fn lte() -> Self {
        Self::standard(7, CodeRate::Third).unwrap()
    }

    /// Output bits per input bit.
    pub fn n_outputs(&self) -> usize {
        self.generators.len()
    }

    pub fn rate(&self) -> f64 {
        1.0 / self.n_outputs() as f64
    }

    fn memory(&self) -> usize {
        self.constraint_length - 1
    }

    /// Encoder outputs for each `K`-bit register value (current input in the MSB),
    /// packed LSB-first by generator index.
    fn output_table(&self) -> Vec<u32> {
        (0..1u32 << self.constraint_length)
            .map(|reg| {
                self.generators
                    .iter()
                    .enumerate()
                    .fold(0, |acc, (j, &g)| acc | (((reg & g).count_ones() & 1) << j))
            })
            .collect()
    }
}

/// Tail-biting encode: the register starts loaded with the last `K - 1` inputs,
/// so it also ends in that state. Outputs are interleaved per input bit.
pub fn conv_encode(bits: &[u8], code: &ConvCode) -> Result<BitVec> {
    if bits.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mem = code.memory();
    if bits.len() < mem {
        return Err(Error::InputTooShort {
            len: bits.len(),
            memory: mem,
        });
    }
    let table = code.output_table();
    let n = code.n_outputs();
    // state bit (mem - 1) holds the most recent past input
    let mut state = bits[bits.len() - mem..]
        .iter()
        .fold(0u32, |acc, &b| (acc >> 1) | ((b as u32) << (mem - 1)));
    let mut out = Vec::with_capacity(bits.len() * n);
    for &b in bits {
        let reg = ((b as u32) << mem) | state;
        let word = table[reg as usize];
        out.extend((0..n).map(|j| ((word >> j) & 1) as u8));
        state = reg >> 1;
    }
    Ok(BitVec::from_bits_unchecked(out))
}

/// Soft decisions: positive values favour bit 0, negative favour bit 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SoftBits(pub Vec<f64>);

impl SoftBits {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("soft values must be finite".into()));
        }
        Ok(Self(values))
    }

    /// Hard bits mapped to +-1.
    pub fn from_hard(bits: &[u8]) -> Self {
        Self(
            bits.iter()
                .map(|&b| if b == 0 { 1.0 } else { -1.0 })
                .collect(),
        )
    }

    /// Sign decisions; zero goes to bit 0.
    pub fn hard_decisions(&self) -> BitVec {
        self.0.iter().map(|&v| v < 0.0).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Circular passes over the block; decisions are kept from the last two.
const VITERBI_PASSES: usize = 3;

/// Wrap-around Viterbi decoder for tail-biting codes.
///
/// The trellis is run around the circular block three times starting from
/// equal metrics (two training passes). The survivor is traced back from the
/// best final state and each message bit is taken from whichever of the last
/// two passes leaves it furthest from a traceback edge.
pub fn viterbi_decode(soft: &SoftBits, code: &ConvCode, msg_len: usize) -> Result<BitVec> {
    let n = code.n_outputs();
    if soft.len() != msg_len * n {
        return Err(Error::LengthMismatch {
            expected: msg_len * n,
            got: soft.len(),
        });
    }
    let mem = code.memory();
    if msg_len < mem || msg_len == 0 {
        return Err(Error::InputTooShort {
            len: msg_len,
            memory: mem,
        });
    }
    let n_states = 1usize << mem;
    let table = code.output_table();
    // correlation metric of each possible output word against each received group
    let n_words = 1usize << n;
    let branch: Vec<f64> = soft
        .0
        .chunks_exact(n)
        .flat_map(|group| {
            (0..n_words).map(move |w| {
                group
                    .iter()
                    .enumerate()
                    .map(|(j, &s)| if (w >> j) & 1 == 0 { s } else { -s })
                    .sum::<f64>()
            })
        })
        .collect();

    let mut metrics = vec![0.0f64; n_states];
    let mut next = vec![0.0f64; n_states];
    let recorded = 2 * msg_len;
    let mut decisions = vec![0u8; recorded * n_states];
    let high = mem - 1;
    for pass in 0..VITERBI_PASSES {
        for t in 0..msg_len {
            let bm = &branch[t * n_words..(t + 1) * n_words];
            let step = (pass * msg_len + t).checked_sub(msg_len);
            for ns in 0..n_states {
                // the register value is (ns << 1) | lsb of the previous state
                let reg0 = (ns << 1) as u32;
                let reg1 = reg0 | 1;
                let m0 =
                    metrics[reg0 as usize & (n_states - 1)] + bm[table[reg0 as usize] as usize];
                let m1 =
                    metrics[reg1 as usize & (n_states - 1)] + bm[table[reg1 as usize] as usize];
                let pick1 = m1 > m0;
                next[ns] = if pick1 { m1 } else { m0 };
                if let Some(s) = step {
                    decisions[s * n_states + ns] = pick1 as u8;
                }
            }
            let best = next.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for (m, &x) in metrics.iter_mut().zip(&next) {
                *m = x - best;
            }
        }
    }

    let mut state = (0..n_states)
        .max_by(|&a, &b| metrics[a].total_cmp(&metrics[b]))
        .unwrap();
    let mut path = vec![0u8; recorded];
    for s in (0..recorded).rev() {
        // the input that led into `state` is its most significant bit
        path[s] = ((state >> high) & 1) as u8;
        let lsb = decisions[s * n_states + state] as usize;
        state = ((state << 1) | lsb) & (n_states - 1);
    }
    let half = msg_len / 2;
    let bits = (0..msg_len)
        .map(|i| if i < half { path[msg_len + i] } else { path[i] })
        .collect();
    Ok(BitVec::from_bits_unchecked(bits))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepetitionMode {
    /// Each bit repeated in place: b0 b0 b1 b1 ...
    #[default]
    Bit,
    /// The whole block repeated: b0 b1 ... b0 b1 ...
    Block,
}

pub fn repeat(bits: &[u8], factor: usize, mode: RepetitionMode) -> Result<BitVec> {
    if factor == 0 {
        return Err(Error::ZeroFactor);
    }
    let out = match mode {
        RepetitionMode::Bit => bits
            .iter()
            .flat_map(|&b| std::iter::repeat_n(b, factor))
            .collect(),
        RepetitionMode::Block => bits.repeat(factor),
    };
    Ok(BitVec::from_bits_unchecked(out))
}
