//! Device-to-reader link: backscatter transmitter and reader-side
//! non-coherent receiver.

mod dtas;
mod receiver;
mod waveform;

pub use dtas::{Dtas, build_dtas};
pub use receiver::{
    D2rDetection, D2rReceiverConfig, DtasSearch, RepetitionCombining, combine_repetitions,
    decode_pdrch, detect_d2r, egc_combine, locate_dtas, receive_pdrch,
};
pub use waveform::{
    MIDAMBLE, PdrchFrame, PdrchLayout, apply_small_shift, assemble_pdrch, baseband_modulate,
    build_pdrch_frame, pdrch_layout,
};

use serde::{Deserialize, Serialize};

use crate::bits::{MAX_TBS, TBS_FIELD_BITS};
use crate::crc::CrcSelector;
use crate::error::{Error, Result};
use crate::fec::{CodeRate, ConvCode, RepetitionMode};
use crate::frame::FrameEnding;
use crate::linecode::LineScheme;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    #[default]
    Ook,
    Bpsk,
    Msk,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftOption {
    /// Each Manchester codeword repeated R times within the bit.
    #[default]
    RepeatCodeword,
    /// XOR with a square wave of period T_b / R.
    SquareWaveMultiply,
}

/// Where the repetition stage sits relative to the FEC.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionStage {
    PreFec,
    #[default]
    PostFec,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FecSpec {
    pub constraint_length: usize,
    pub rate: CodeRate,
}

impl FecSpec {
    pub fn code(&self) -> Result<ConvCode> {
        ConvCode::standard(self.constraint_length, self.rate)
    }
}

/// Everything the reader tells the device about one PDRCH transmission.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct D2rSchedule {
    pub tbs: usize,
    pub chip_rate_cps: f64,
    /// Rate of the baseband samples on both sides of the link.
    pub sample_rate_hz: f64,
    pub line: LineScheme,
    pub modulation: Modulation,
    pub fec: Option<FecSpec>,
    pub repetition: usize,
    pub repetition_stage: RepetitionStage,
    pub repetition_mode: RepetitionMode,
    /// Small frequency shift factor; 0 disables the shift.
    pub shift_r: u32,
    pub shift_option: ShiftOption,
    /// Midamble after every this many line-coder input bits.
    pub midamble_period_bits: Option<usize>,
    pub ending: FrameEnding,
    pub dtas_length: usize,
    pub device_index: usize,
    pub crc: CrcSelector,
}

impl Default for D2rSchedule {
    fn default() -> Self {
        Self {
            tbs: 20,
            chip_rate_cps: 7500.0,
            sample_rate_hz: 1.92e6,
            line: LineScheme::Manchester,
            modulation: Modulation::Ook,
            fec: None,
            repetition: 1,
            repetition_stage: RepetitionStage::PostFec,
            repetition_mode: RepetitionMode::Bit,
            shift_r: 0,
            shift_option: ShiftOption::RepeatCodeword,
            midamble_period_bits: None,
            ending: FrameEnding::Postamble,
            dtas_length: 31,
            device_index: 0,
            crc: CrcSelector::default(),
        }
    }
}

impl D2rSchedule {
    pub fn with_tbs(tbs: usize) -> Self {
        Self {
            tbs,
            ..Self::default()
        }
    }

    pub fn chip_duration_s(&self) -> f64 {
        1.0 / self.chip_rate_cps
    }

    /// Small-shift frequency R / T_b, which is half the chip rate for every R.
    pub fn shift_frequency_hz(&self) -> f64 {
        self.chip_rate_cps / 2.0
    }

    pub fn samples_per_chip(&self) -> Result<usize> {
        samples_per_chip(self.sample_rate_hz, self.chip_rate_cps)
    }

    pub(crate) fn payload_bits(&self) -> usize {
        match self.ending {
            FrameEnding::TbsInControl => self.tbs + TBS_FIELD_BITS,
            FrameEnding::Postamble => self.tbs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tbs == 0 {
            return Err(Error::EmptyPayload);
        }
        if self.tbs > MAX_TBS {
            return Err(Error::PayloadTooLong {
                len: self.tbs,
                max: MAX_TBS,
            });
        }
        if self.repetition == 0 {
            return Err(Error::ZeroFactor);
        }
        if self.midamble_period_bits == Some(0) {
            return Err(Error::InvalidConfig(
                "midamble period must be positive".into(),
            ));
        }
        if let Some(f) = &self.fec {
            f.code()?;
        }
        self.samples_per_chip()?;
        if self.line == LineScheme::Pie {
            return Err(Error::UnsupportedScheme(LineScheme::Pie));
        }
        if self.shift_r > 0 {
            let ok = match self.shift_option {
                ShiftOption::RepeatCodeword => self.line == LineScheme::Manchester,
                ShiftOption::SquareWaveMultiply => {
                    matches!(self.line, LineScheme::Manchester | LineScheme::None)
                }
            };
            if !ok {
                return Err(Error::SchemeMismatch(self.line));
            }
        }
        Ok(())
    }
}

pub(crate) fn samples_per_chip(sample_rate_hz: f64, chip_rate_cps: f64) -> Result<usize> {
    let ratio = sample_rate_hz / chip_rate_cps;
    let n = ratio.round();
    if !ratio.is_finite() || n < 2.0 || (ratio - n).abs() > 1e-9 * n {
        return Err(Error::UnsupportedRate {
            sample_rate_hz,
            chip_rate_cps,
        });
    }
    Ok(n as usize)
}
