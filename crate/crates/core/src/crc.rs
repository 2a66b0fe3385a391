//! Transport-block CRC attachment and checking.
//!
//! Both generators are run as MSB-first shift registers with an all-zero
//! initial state and no output inversion.

use serde::{Deserialize, Serialize};

use crate::bits::{BitVec, MAX_TBS, TBS_FIELD_BITS};
use crate::error::{Error, Result};

/// Largest CRC input: a full transport block plus the optional in-band TBS field.
pub const MAX_CRC_PAYLOAD: usize = MAX_TBS + TBS_FIELD_BITS;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CrcMode {
    /// g(D) = D^6 + D^5 + 1
    Crc6,
    /// g(D) = D^16 + D^12 + D^5 + 1
    Crc16,
}

impl CrcMode {
    /// Number of parity bits.
    #[allow(clippy::len_without_is_empty)]
    pub const fn len(self) -> usize {
        match self {
            CrcMode::Crc6 => 6,
            CrcMode::Crc16 => 16,
        }
    }

    /// Generator coefficients including the leading term, bit `i` holding the
    /// coefficient of `D^i`.
    pub const fn generator(self) -> u32 {
        match self {
            CrcMode::Crc6 => (1 << 6) | (1 << 5) | 1,
            CrcMode::Crc16 => (1 << 16) | (1 << 12) | (1 << 5) | 1,
        }
    }

    /// Remainder of `bits(D) * D^len` modulo the generator.
    pub fn remainder(self, bits: &[u8]) -> u32 {
        let len = self.len();
        let mask = (1u32 << len) - 1;
        let taps = self.generator() & mask;
        let mut reg = 0u32;
        for &b in bits {
            let feedback = ((reg >> (len - 1)) & 1) ^ b as u32;
            reg = (reg << 1) & mask;
            if feedback == 1 {
                reg ^= taps;
            }
        }
        reg
    }
}

/// Picks the CRC length from the transport block size.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrcSelector {
    /// Largest TBS that still uses the 6-bit CRC.
    pub crc6_max_tbs: usize,
}

impl Default for CrcSelector {
    fn default() -> Self {
        Self { crc6_max_tbs: 32 }
    }
}

impl CrcSelector {
    pub fn select(&self, tbs: usize) -> Result<CrcMode> {
        if tbs == 0 {
            return Err(Error::EmptyPayload);
        }
        if tbs > MAX_TBS {
            return Err(Error::PayloadTooLong {
                len: tbs,
                max: MAX_TBS,
            });
        }
        Ok(if tbs <= self.crc6_max_tbs {
            CrcMode::Crc6
        } else {
            CrcMode::Crc16
        })
    }

    /// Recovers `(tbs, mode)` from the length of a CRC-attached frame, as a
    /// receiver must when the frame is delimited by a postamble.
    pub fn split_frame_len(&self, frame_len: usize) -> Result<(usize, CrcMode)> {
        for mode in [CrcMode::Crc6, CrcMode::Crc16] {
            if let Some(tbs) = frame_len.checked_sub(mode.len())
                && tbs >= 1
                && self.select(tbs).ok() == Some(mode)
            {
                return Ok((tbs, mode));
            }
        }
        Err(Error::MalformedFrame(format!(
            "no CRC mode yields a valid TBS from {frame_len} bits"
        )))
    }
}

pub fn select_crc(tbs: usize) -> Result<CrcMode> {
    CrcSelector::default().select(tbs)
}

/// Appends the CRC parity of `payload`, MSB first.
pub fn crc_attach(payload: &[u8], mode: CrcMode) -> Result<BitVec> {
    if payload.is_empty() {
        return Err(Error::EmptyPayload);
    }
    if payload.len() > MAX_CRC_PAYLOAD {
        return Err(Error::PayloadTooLong {
            len: payload.len(),
            max: MAX_CRC_PAYLOAD,
        });
    }
    let parity = mode.remainder(payload);
    let mut frame = BitVec::from_bits_unchecked(payload.to_vec());
    frame.extend_from_bits(&BitVec::from_uint(parity as u64, mode.len()));
    Ok(frame)
}

/// Verifies a CRC-attached frame and returns the payload with the parity removed.
pub fn crc_check(frame: &[u8], mode: CrcMode) -> Result<BitVec> {
    if frame.len() <= mode.len() {
        return Err(Error::FrameTooShort {
            len: frame.len(),
            crc_bits: mode.len(),
        });
    }
    if mode.remainder(frame) != 0 {
        return Err(Error::CrcFailure);
    }
    Ok(BitVec::from_bits_unchecked(
        frame[..frame.len() - mode.len()].to_vec(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Schoolbook long division of `payload * D^L` by the generator.
    fn long_division_oracle(payload: &[u8], generator: &[u8]) -> Vec<u8> {
        let l = generator.len() - 1;
        let mut dividend = payload.to_vec();
        dividend.extend(std::iter::repeat_n(0, l));
        for i in 0..payload.len() {
            if dividend[i] == 1 {
                for (j, &g) in generator.iter().enumerate() {
                    dividend[i + j] ^= g;
                }
            }
        }
        dividend[payload.len()..].to_vec()
    }

    const G6: [u8; 7] = [1, 1, 0, 0, 0, 0, 1];
    const G16: [u8; 17] = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1];

    #[test]
    fn generator_polynomials() {
        assert_eq!(CrcMode::Crc16.generator(), 0x11021);
        assert_eq!(CrcMode::Crc6.generator(), 0b110_0001);
    }

    #[test]
    fn zero_payload_has_zero_parity() {
        let frame = crc_attach(&[0; 20], CrcMode::Crc6).unwrap();
        assert_eq!(frame.as_slice(), &[0; 26]);
    }

    #[test]
    fn frame_lengths() {
        assert_eq!(crc_attach(&[1; 96], CrcMode::Crc16).unwrap().len(), 112);
        assert_eq!(crc_attach(&[1; 20], CrcMode::Crc6).unwrap().len(), 26);
    }

    #[test]
    fn short_pattern_matches_long_division() {
        let payload = [1, 0, 1, 1, 0, 0, 1, 1];
        let frame = crc_attach(&payload, CrcMode::Crc6).unwrap();
        assert_eq!(&frame[8..], long_division_oracle(&payload, &G6).as_slice());
        // frozen from the oracle
        assert_eq!(&frame[8..], &[1, 1, 1, 1, 1, 1]);
    }

    #[test]
    fn boundaries() {
        assert!(matches!(
            crc_attach(&[], CrcMode::Crc6),
            Err(Error::EmptyPayload)
        ));
        assert!(matches!(
            crc_attach(&[0; MAX_CRC_PAYLOAD + 1], CrcMode::Crc16),
            Err(Error::PayloadTooLong { .. })
        ));
        assert!(matches!(
            crc_check(&[0; 5], CrcMode::Crc6),
            Err(Error::FrameTooShort {
                len: 5,
                crc_bits: 6
            })
        ));
    }

    #[test]
    fn selection_threshold() {
        assert_eq!(select_crc(20).unwrap(), CrcMode::Crc6);
        assert_eq!(select_crc(32).unwrap(), CrcMode::Crc6);
        assert_eq!(select_crc(33).unwrap(), CrcMode::Crc16);
        assert_eq!(select_crc(96).unwrap(), CrcMode::Crc16);
        assert_eq!(select_crc(1000).unwrap(), CrcMode::Crc16);
        assert!(matches!(
            select_crc(1001),
            Err(Error::PayloadTooLong { .. })
        ));
        let custom = CrcSelector { crc6_max_tbs: 100 };
        assert_eq!(custom.select(96).unwrap(), CrcMode::Crc6);
    }

    #[test]
    fn frame_length_split() {
        let sel = CrcSelector::default();
        assert_eq!(sel.split_frame_len(26).unwrap(), (20, CrcMode::Crc6));
        assert_eq!(sel.split_frame_len(112).unwrap(), (96, CrcMode::Crc16));
        // 40 bits: Crc6 would give TBS 34 (> 32), Crc16 would give TBS 24 (<= 32)
        assert!(sel.split_frame_len(40).is_err());
    }

    #[test]
    fn every_single_and_double_flip_is_detected() {
        let payload: Vec<u8> = (0..96).map(|i| ((i * 7 + 3) % 5 % 2) as u8).collect();
        let frame = crc_attach(&payload, CrcMode::Crc16).unwrap().into_vec();
        assert_eq!(frame.len(), 112);
        for i in 0..frame.len() {
            let mut f = frame.clone();
            f[i] ^= 1;
            assert!(matches!(
                crc_check(&f, CrcMode::Crc16),
                Err(Error::CrcFailure)
            ));
            for j in i + 1..frame.len() {
                let mut g = f.clone();
                g[j] ^= 1;
                assert!(
                    matches!(crc_check(&g, CrcMode::Crc16), Err(Error::CrcFailure)),
                    "{i},{j}"
                );
            }
        }
    }

    fn mode() -> impl Strategy<Value = CrcMode> {
        prop_oneof![Just(CrcMode::Crc6), Just(CrcMode::Crc16)]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn round_trip(payload in proptest::collection::vec(0u8..2, 1..=MAX_TBS), m in mode()) {
            let frame = crc_attach(&payload, m).unwrap();
            let back = crc_check(&frame, m).unwrap();
            prop_assert_eq!(back.as_slice(), payload.as_slice());
        }
    }

    proptest! {
        #[test]
        fn agrees_with_long_division(payload in proptest::collection::vec(0u8..2, 1..200)) {
            let p6 = BitVec::from_uint(CrcMode::Crc6.remainder(&payload) as u64, 6);
            prop_assert_eq!(p6.to_vec(), long_division_oracle(&payload, &G6));
            let p16 = BitVec::from_uint(CrcMode::Crc16.remainder(&payload) as u64, 16);
            prop_assert_eq!(p16.to_vec(), long_division_oracle(&payload, &G16));
        }

        #[test]
        fn parity_is_linear(
            pair in (1usize..300).prop_flat_map(|n| (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
            )),
            m in mode(),
        ) {
            let (a, b) = pair;
            let x: Vec<u8> = a.iter().zip(&b).map(|(p, q)| p ^ q).collect();
            prop_assert_eq!(m.remainder(&x), m.remainder(&a) ^ m.remainder(&b));
        }
    }
}
