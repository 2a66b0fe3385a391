use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::R2dConfig;
use crate::bits::{BitVec, MAX_TBS, TBS_FIELD_BITS};
use crate::crc::crc_attach;
use crate::error::{Error, Result};
use crate::frame::{FrameEnding, POSTAMBLE};
use crate::linecode::{ChipSeq, LineScheme, line_encode, manchester_encode};
use crate::signal::BasebandSignal;

const START_INDICATOR: [u8; 8] = [1, 1, 1, 0, 1, 0, 0, 1];
const CLOCK_ACQUISITION: [u8; 6] = [1, 0, 1, 0, 1, 0];

/// Reader timing acquisition signal sent ahead of the PRDCH.
#[derive(Clone, Debug, PartialEq)]
pub struct Rtas {
    pub start_indicator: ChipSeq,
    pub clock_acquisition: ChipSeq,
}

impl Rtas {
    pub fn chips(&self) -> Vec<u8> {
        [
            self.start_indicator.chips.as_slice(),
            &self.clock_acquisition.chips,
        ]
        .concat()
    }

    pub fn len(&self) -> usize {
        self.start_indicator.len() + self.clock_acquisition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The clock pattern keeps alternating until the R-TAS fills whole symbols.
pub fn build_rtas(cfg: &R2dConfig) -> Rtas {
    let chip = cfg.chip_duration_s();
    let m = cfg.m_chips_per_symbol.max(1);
    let mut clock = CLOCK_ACQUISITION.to_vec();
    while !(START_INDICATOR.len() + clock.len()).is_multiple_of(m) {
        clock.push(1 - clock[clock.len() - 1]);
    }
    Rtas {
        start_indicator: ChipSeq::new(START_INDICATOR.to_vec(), chip),
        clock_acquisition: ChipSeq::new(clock, chip),
    }
}

/// Chip-level layout of one PRDCH transmission.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrdchFrame {
    pub chips: Vec<u8>,
    pub rtas_chips: usize,
    pub data_chips: usize,
    pub postamble_chips: usize,
    pub pad_chips: usize,
}

impl PrdchFrame {
    pub fn n_symbols(&self, m: usize) -> usize {
        self.chips.len() / m
    }

    pub fn rtas_symbols(&self, m: usize) -> usize {
        self.rtas_chips / m
    }

    /// Symbols carrying line-coded data, counting a partly filled last one.
    pub fn data_symbols(&self, m: usize) -> usize {
        self.data_chips.div_ceil(m)
    }
}

pub fn build_prdch_frame(tb: &[u8], cfg: &R2dConfig) -> Result<PrdchFrame> {
    if tb.is_empty() {
        return Err(Error::EmptyPayload);
    }
    if tb.len() > MAX_TBS {
        return Err(Error::PayloadTooLong {
            len: tb.len(),
            max: MAX_TBS,
        });
    }
    let mode = cfg.crc.select(tb.len())?;
    let payload = match cfg.ending {
        FrameEnding::Postamble => tb.to_vec(),
        FrameEnding::TbsInControl => [
            BitVec::from_uint(tb.len() as u64, TBS_FIELD_BITS).as_slice(),
            tb,
        ]
        .concat(),
    };
    let coded = crc_attach(&payload, mode)?;
    let data = match cfg.line {
        LineScheme::Manchester => manchester_encode(&coded),
        LineScheme::Pie => {
            line_encode(&coded, LineScheme::Pie, cfg.chip_duration_s())?
                .to_uniform_grid()
                .chips
        }
        other => return Err(Error::UnsupportedScheme(other)),
    };
    let mut chips = build_rtas(cfg).chips();
    let rtas_chips = chips.len();
    let data_chips = data.len();
    chips.extend(data);
    let postamble_chips = match cfg.ending {
        FrameEnding::Postamble => {
            chips.extend(POSTAMBLE);
            POSTAMBLE.len()
        }
        FrameEnding::TbsInControl => 0,
    };
    let m = cfg.m_chips_per_symbol;
    let pad_chips = chips.len().next_multiple_of(m) - chips.len();
    chips.resize(chips.len() + pad_chips, 0);
    Ok(PrdchFrame {
        chips,
        rtas_chips,
        data_chips,
        postamble_chips,
        pad_chips,
    })
}

/// OOK-M DFT-s-OFDM modulator with FFT plans prepared once.
pub struct PrdchTransmitter {
    cfg: R2dConfig,
    dft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
}

impl PrdchTransmitter {
    pub fn new(cfg: &R2dConfig) -> Result<Self> {
        cfg.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            cfg: cfg.clone(),
            dft: planner.plan_fft_forward(cfg.n_subcarriers),
            ifft: planner.plan_fft_inverse(cfg.fft_size),
        })
    }

    pub fn config(&self) -> &R2dConfig {
        &self.cfg
    }

    /// Maps `M` chips per symbol onto the scheduled subcarriers.
    ///
    /// Each chip occupies `N/M` samples of the CP-stripped symbol. The cyclic
    /// prefix is filled from the middle of the first chip rather than the
    /// symbol tail, so it never creates a transition of its own.
    pub fn modulate(&self, chips: &[u8]) -> Result<Vec<Complex64>> {
        let m = self.cfg.m_chips_per_symbol;
        if !chips.len().is_multiple_of(m) {
            return Err(Error::ChipCountNotDivisibleByM {
                chips: chips.len(),
                per_symbol: m,
            });
        }
        if let Some(&b) = chips.iter().find(|&&c| c > 1) {
            return Err(Error::InvalidBit(b));
        }
        let n_sc = self.cfg.n_subcarriers;
        let n = self.cfg.fft_size;
        let spread = n_sc / m;
        let timeline = self.cfg.tx_timeline();
        let zero = Complex64::new(0.0, 0.0);
        // a half spread-sample delay puts chip edges on multiples of N/M
        let phase: Vec<Complex64> = (0..n_sc)
            .map(|k| {
                let f = subcarrier_offset(k, n_sc) as f64;
                Complex64::from_polar(1.0 / n_sc as f64, -2.0 * PI * f * 0.5 / n_sc as f64)
            })
            .collect();
        let n_symbols = chips.len() / m;
        let mut out = Vec::with_capacity(timeline.total_len(n_symbols));
        let mut buf = vec![zero; n_sc];
        let mut grid = vec![zero; n];
        let step = n / 128;
        for (l, sym) in chips.chunks(m).enumerate() {
            let cp = timeline.cp_len(l);
            if sym.iter().all(|&c| c == 0) {
                out.resize(out.len() + n + cp, zero);
                continue;
            }
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(sym[i / spread] as f64, 0.0);
            }
            self.dft.process(&mut buf);
            grid.fill(zero);
            for k in 0..n_sc {
                let bin = subcarrier_offset(k, n_sc).rem_euclid(n as isize) as usize;
                grid[bin] = buf[k] * phase[k];
            }
            self.ifft.process(&mut grid);
            let from = n / (2 * m) - (cp / step / 2) * step;
            out.extend_from_slice(&grid[from..from + cp]);
            out.extend_from_slice(&grid);
        }
        Ok(out)
    }

    pub fn modulate_signal(&self, chips: &[u8]) -> Result<BasebandSignal> {
        Ok(BasebandSignal::single(
            self.modulate(chips)?,
            self.cfg.tx_sample_rate_hz(),
        ))
    }
}

/// Signed frequency index of scheduled subcarrier `k`, centred on DC.
fn subcarrier_offset(k: usize, n_sc: usize) -> isize {
    if k < n_sc.div_ceil(2) {
        k as isize
    } else {
        k as isize - n_sc as isize
    }
}

pub fn ook_modulate(chips: &ChipSeq, cfg: &R2dConfig) -> Result<BasebandSignal> {
    let grid = chips.to_uniform_grid();
    PrdchTransmitter::new(cfg)?.modulate_signal(&grid.chips)
}

/// R-TAS, PRDCH and (optionally) postamble as one waveform.
pub fn assemble_prdch(tb: &[u8], cfg: &R2dConfig) -> Result<BasebandSignal> {
    let tx = PrdchTransmitter::new(cfg)?;
    let frame = build_prdch_frame(tb, cfg)?;
    tx.modulate_signal(&frame.chips)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DataRate {
    /// Transport-block bits per OFDM symbol.
    pub effective_bits_per_symbol: f64,
    /// Transport-block plus CRC bits per OFDM symbol.
    pub gross_bits_per_symbol: f64,
}

impl DataRate {
    /// Converts to bit/s given 14 symbols per slot.
    pub fn effective_bps(&self, scs_hz: f64) -> f64 {
        self.effective_bits_per_symbol * 14.0 * scs_hz / 15.0
    }
}

/// Symbols include the R-TAS and postamble overhead.
pub fn r2d_data_rate(
    tb_bits: usize,
    crc_bits: usize,
    total_ofdm_symbols: usize,
) -> Result<DataRate> {
    if total_ofdm_symbols == 0 {
        return Err(Error::ZeroSymbols);
    }
    let n = total_ofdm_symbols as f64;
    Ok(DataRate {
        effective_bits_per_symbol: tb_bits as f64 / n,
        gross_bits_per_symbol: (tb_bits + crc_bits) as f64 / n,
    })
}
