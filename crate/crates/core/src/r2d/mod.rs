//! Reader-to-device link: OOK-M DFT-s-OFDM transmitter and envelope receiver.

mod receiver;
mod timeline;
mod waveform;

pub use receiver::{
    AcquisitionConfig, AdaptiveWindow, Combining, DetectorConfig, EnvelopeDetector, Thresholding,
    TimingEstimate, acquire_timing, acquire_timing_with, decode_prdch, detect_chips,
    envelope_detect, max_detectable_chips, receive_prdch,
};
pub use timeline::ChipTimeline;
pub use waveform::{
    DataRate, PrdchFrame, PrdchTransmitter, Rtas, assemble_prdch, build_prdch_frame, build_rtas,
    ook_modulate, r2d_data_rate,
};

use serde::{Deserialize, Serialize};

use crate::crc::CrcSelector;
use crate::error::{Error, Result};
use crate::frame::FrameEnding;
use crate::linecode::LineScheme;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct R2dConfig {
    pub scs_hz: f64,
    pub m_chips_per_symbol: usize,
    pub n_subcarriers: usize,
    pub fft_size: usize,
    /// Rate of the device's envelope samples.
    pub device_sample_rate_hz: f64,
    pub ending: FrameEnding,
    pub line: LineScheme,
    pub crc: CrcSelector,
}

impl Default for R2dConfig {
    fn default() -> Self {
        Self {
            scs_hz: 15e3,
            m_chips_per_symbol: 4,
            n_subcarriers: 12,
            fft_size: 4096,
            device_sample_rate_hz: 1.92e6,
            ending: FrameEnding::Postamble,
            line: LineScheme::Manchester,
            crc: CrcSelector::default(),
        }
    }
}

impl R2dConfig {
    pub fn with_m(m: usize) -> Self {
        Self {
            m_chips_per_symbol: m,
            ..Self::default()
        }
    }

    pub fn tx_sample_rate_hz(&self) -> f64 {
        self.fft_size as f64 * self.scs_hz
    }

    pub fn chip_duration_s(&self) -> f64 {
        1.0 / (self.m_chips_per_symbol as f64 * self.scs_hz)
    }

    pub fn chip_rate_cps(&self) -> f64 {
        self.m_chips_per_symbol as f64 * self.scs_hz
    }

    /// FFT size matching the device sample rate, i.e. the device's view of the grid.
    pub fn device_fft_size(&self) -> usize {
        (self.device_sample_rate_hz / self.scs_hz).round() as usize
    }

    pub fn tx_timeline(&self) -> ChipTimeline {
        ChipTimeline::new(self.fft_size, self.m_chips_per_symbol)
    }

    pub fn device_timeline(&self) -> ChipTimeline {
        ChipTimeline::new(self.device_fft_size(), self.m_chips_per_symbol)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m_chips_per_symbol;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.scs_hz > 0.0) {
            return bad(format!("subcarrier spacing {}", self.scs_hz));
        }
        if m == 0 || self.n_subcarriers == 0 || !self.n_subcarriers.is_multiple_of(m) {
            return bad(format!(
                "{} subcarriers cannot carry {m} chips per symbol",
                self.n_subcarriers
            ));
        }
        if !self.fft_size.is_multiple_of(128)
            || self.fft_size < self.n_subcarriers
            || !self.fft_size.is_multiple_of(m)
        {
            return bad(format!(
                "fft size {} must be a multiple of 128",
                self.fft_size
            ));
        }
        let dev = self.device_sample_rate_hz / self.scs_hz;
        if (dev - dev.round()).abs() > 1e-9 || !(dev.round() as usize).is_multiple_of(128) {
            return bad(format!(
                "device rate {} is not a 128-multiple of the SCS",
                self.device_sample_rate_hz
            ));
        }
        if !self.fft_size.is_multiple_of(self.device_fft_size()) {
            return bad("device rate must divide the transmit rate".into());
        }
        if !matches!(self.line, LineScheme::Manchester | LineScheme::Pie) {
            return Err(Error::UnsupportedScheme(self.line));
        }
        Ok(())
    }
}
