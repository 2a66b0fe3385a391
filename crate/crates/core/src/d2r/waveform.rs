//! PDRCH transmit chain.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{D2rSchedule, Modulation, RepetitionStage, ShiftOption, build_dtas, samples_per_chip};
use crate::bits::{BitVec, TBS_FIELD_BITS};
use crate::crc::crc_attach;
use crate::error::{Error, Result};
use crate::fec::{conv_encode, repeat};
use crate::frame::{FrameEnding, POSTAMBLE};
use crate::linecode::{ChipSeq, LineScheme, line_encode};
use crate::signal::BasebandSignal;

pub const MIDAMBLE: [u8; 8] = [1, 0, 0, 1, 0, 1, 1, 0];

/// Chip-level layout of a PDRCH frame, computable from the schedule alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PdrchLayout {
    pub dtas_chips: usize,
    /// Bits entering the line coder.
    pub coded_bits: usize,
    /// Chips per line-coder input bit after line coding and small shift.
    pub chips_per_coded_bit: usize,
    /// Frame chip index of each midamble.
    pub midamble_starts: Vec<usize>,
    pub postamble_chips: usize,
    pub samples_per_chip: usize,
    /// Length of the CRC-attached block before repetition and FEC.
    pub crc_block_bits: usize,
}

impl PdrchLayout {
    /// Data chips, midambles excluded.
    pub fn data_chips(&self) -> usize {
        self.coded_bits * self.chips_per_coded_bit
    }

    /// Chips between the D-TAS and the postamble.
    pub fn body_chips(&self) -> usize {
        self.data_chips() + MIDAMBLE.len() * self.midamble_starts.len()
    }

    pub fn total_chips(&self) -> usize {
        self.dtas_chips + self.body_chips() + self.postamble_chips
    }

    pub fn total_samples(&self) -> usize {
        self.total_chips() * self.samples_per_chip
    }

    /// Frame chip indices of the data chips, in order.
    pub fn data_chip_indices(&self) -> impl Iterator<Item = usize> + '_ {
        let period = self.midamble_starts.first().map(|s| s - self.dtas_chips);
        (0..self.data_chips()).map(move |k| {
            let passed = period.map_or(0, |p| k / p);
            self.dtas_chips + k + passed * MIDAMBLE.len()
        })
    }
}

pub fn pdrch_layout(sched: &D2rSchedule) -> Result<PdrchLayout> {
    sched.validate()?;
    let crc_block_bits = sched.payload_bits() + sched.crc.select(sched.tbs)?.len();
    let (pre, post) = match sched.repetition_stage {
        RepetitionStage::PreFec => (sched.repetition, 1),
        RepetitionStage::PostFec => (1, sched.repetition),
    };
    let fec_factor = match &sched.fec {
        Some(f) => f.code()?.n_outputs(),
        None => 1,
    };
    let coded_bits = crc_block_bits * pre * fec_factor * post;
    let chips_per_coded_bit = if sched.shift_r > 0 {
        2 * sched.shift_r as usize
    } else {
        sched
            .line
            .chips_per_bit()
            .ok_or(Error::UnsupportedScheme(sched.line))?
    };
    let dtas_chips = sched.dtas_length;
    let midamble_starts = match sched.midamble_period_bits {
        Some(p) => (1..=(coded_bits - 1) / p)
            .map(|k| dtas_chips + k * p * chips_per_coded_bit + (k - 1) * MIDAMBLE.len())
            .collect(),
        None => Vec::new(),
    };
    Ok(PdrchLayout {
        dtas_chips,
        coded_bits,
        chips_per_coded_bit,
        midamble_starts,
        postamble_chips: match sched.ending {
            FrameEnding::Postamble => POSTAMBLE.len(),
            FrameEnding::TbsInControl => 0,
        },
        samples_per_chip: sched.samples_per_chip()?,
        crc_block_bits,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdrchFrame {
    pub chips: ChipSeq,
    pub layout: PdrchLayout,
}

/// Line-coder input bits: CRC, repetition and FEC in scheduled order.
pub(crate) fn channel_code(tb: &[u8], sched: &D2rSchedule) -> Result<BitVec> {
    if tb.len() != sched.tbs {
        return Err(Error::LengthMismatch {
            expected: sched.tbs,
            got: tb.len(),
        });
    }
    let mut payload = BitVec::new();
    if sched.ending == FrameEnding::TbsInControl {
        payload.extend_from_bits(&BitVec::from_uint(sched.tbs as u64, TBS_FIELD_BITS));
    }
    payload.extend_from_bits(tb);
    let mut bits = crc_attach(&payload, sched.crc.select(sched.tbs)?)?;
    if sched.repetition_stage == RepetitionStage::PreFec {
        bits = repeat(&bits, sched.repetition, sched.repetition_mode)?;
    }
    if let Some(f) = &sched.fec {
        bits = conv_encode(&bits, &f.code()?)?;
    }
    if sched.repetition_stage == RepetitionStage::PostFec {
        bits = repeat(&bits, sched.repetition, sched.repetition_mode)?;
    }
    Ok(bits)
}

pub fn build_pdrch_frame(tb: &[u8], sched: &D2rSchedule) -> Result<PdrchFrame> {
    let layout = pdrch_layout(sched)?;
    let coded = channel_code(tb, sched)?;
    let chip_dur = sched.chip_duration_s();
    let mut data = match sched.line {
        LineScheme::None => ChipSeq::new(coded.into_vec(), chip_dur),
        line => line_encode(&coded, line, chip_dur)?,
    };
    if sched.shift_r > 0 {
        data = apply_small_shift(&data, sched)?;
    }
    let dtas = build_dtas(sched.dtas_length, sched.device_index)?;
    let mut chips = dtas.chips().to_vec();
    let block = sched
        .midamble_period_bits
        .map_or(usize::MAX, |p| p * layout.chips_per_coded_bit);
    for (i, piece) in data.chips.chunks(block).enumerate() {
        if i > 0 {
            chips.extend(MIDAMBLE);
        }
        chips.extend_from_slice(piece);
    }
    if sched.ending == FrameEnding::Postamble {
        chips.extend(POSTAMBLE);
    }
    debug_assert_eq!(chips.len(), layout.total_chips());
    Ok(PdrchFrame {
        chips: ChipSeq::new(chips, chip_dur),
        layout,
    })
}

/// Shifts the backscatter spectrum by R / T_b. `chips` are Manchester chips,
/// or raw coded bits when the line scheme is `None` (square wave only). The
/// output runs at the schedule's chip rate with 2R chips per bit.
pub fn apply_small_shift(chips: &ChipSeq, sched: &D2rSchedule) -> Result<ChipSeq> {
    let r = sched.shift_r;
    if r == 0 {
        return Err(Error::InvalidR(r));
    }
    let r = r as usize;
    let per_bit = match (sched.shift_option, sched.line) {
        (ShiftOption::RepeatCodeword, LineScheme::Manchester) => 2,
        (ShiftOption::SquareWaveMultiply, LineScheme::Manchester) => 2,
        (ShiftOption::SquareWaveMultiply, LineScheme::None) => 1,
        (_, line) => return Err(Error::SchemeMismatch(line)),
    };
    if !chips.len().is_multiple_of(per_bit) {
        return Err(Error::OddChipCount(chips.len()));
    }
    let out: Vec<u8> = match sched.shift_option {
        ShiftOption::RepeatCodeword => chips
            .chips
            .chunks_exact(2)
            .flat_map(|cw| cw.repeat(r))
            .collect(),
        ShiftOption::SquareWaveMultiply => {
            let up = 2 * r / per_bit;
            chips
                .chips
                .chunks_exact(per_bit)
                .flat_map(|unit| (0..2 * r).map(move |k| unit[k / up] ^ square_wave(k)))
                .collect()
        }
    };
    Ok(ChipSeq::new(out, sched.chip_duration_s()))
}

/// Square wave sampled at the output chip rate within one bit, starting high.
pub(crate) fn square_wave(k: usize) -> u8 {
    k.is_multiple_of(2) as u8
}

pub fn baseband_modulate(
    chips: &ChipSeq,
    modulation: Modulation,
    sample_rate_hz: f64,
) -> Result<BasebandSignal> {
    let spc = samples_per_chip(sample_rate_hz, 1.0 / chips.chip_duration_s)?;
    let mut out = Vec::with_capacity(chips.len() * spc);
    match modulation {
        Modulation::Ook => {
            for &c in &chips.chips {
                out.extend(std::iter::repeat_n(Complex64::new(c as f64, 0.0), spc));
            }
        }
        Modulation::Bpsk => {
            for &c in &chips.chips {
                out.extend(std::iter::repeat_n(
                    Complex64::new(2.0 * c as f64 - 1.0, 0.0),
                    spc,
                ));
            }
        }
        Modulation::Msk => {
            let step = std::f64::consts::FRAC_PI_2 / spc as f64;
            let mut phase = 0.0;
            for &c in &chips.chips {
                let dir = if c == 1 { 1.0 } else { -1.0 };
                for n in 0..spc {
                    out.push(Complex64::from_polar(1.0, phase + dir * step * n as f64));
                }
                phase += dir * std::f64::consts::FRAC_PI_2;
            }
        }
    }
    Ok(BasebandSignal::single(out, sample_rate_hz))
}

pub fn assemble_pdrch(tb: &[u8], sched: &D2rSchedule) -> Result<BasebandSignal> {
    let frame = build_pdrch_frame(tb, sched)?;
    baseband_modulate(&frame.chips, sched.modulation, sched.sample_rate_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::d2r::{FecSpec, build_dtas};
    use crate::fec::{CodeRate, RepetitionMode};
    use crate::linecode::manchester_encode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rustfft::FftPlanner;

    fn shifted(r: u32, option: ShiftOption, line: LineScheme) -> D2rSchedule {
        D2rSchedule {
            shift_r: r,
            shift_option: option,
            line,
            ..D2rSchedule::default()
        }
    }

    #[test]
    fn option_one_repeats_codewords() {
        let s = shifted(1, ShiftOption::RepeatCodeword, LineScheme::Manchester);
        let m = ChipSeq::new(manchester_encode(&[0, 1, 1]), 1.0 / 7500.0);
        assert_eq!(apply_small_shift(&m, &s).unwrap().chips, m.chips);
        let s = shifted(2, ShiftOption::RepeatCodeword, LineScheme::Manchester);
        let bit0 = ChipSeq::new(vec![1, 0], 1.0 / 7500.0);
        assert_eq!(
            apply_small_shift(&bit0, &s).unwrap().chips,
            vec![1, 0, 1, 0]
        );
    }

    #[test]
    fn shift_errors() {
        let bits = ChipSeq::new(vec![1, 0], 1.0 / 7500.0);
        assert!(matches!(
            apply_small_shift(
                &bits,
                &shifted(0, ShiftOption::RepeatCodeword, LineScheme::Manchester)
            ),
            Err(Error::InvalidR(0))
        ));
        assert!(matches!(
            apply_small_shift(
                &bits,
                &shifted(2, ShiftOption::RepeatCodeword, LineScheme::Fm0)
            ),
            Err(Error::SchemeMismatch(LineScheme::Fm0))
        ));
    }

    /// Strongest non-DC bin of the Bartlett-averaged spectrum of the +-1 chip
    /// waveform, with segments of `seg_chips` chips.
    fn spectral_peak_hz(chips: &[u8], chip_rate: f64, seg_chips: usize) -> (f64, f64) {
        let up = 8;
        let n = seg_chips * up;
        let fft = FftPlanner::new().plan_fft_forward(n);
        let mut psd = vec![0.0; n];
        for seg in chips.chunks_exact(seg_chips) {
            let mut buf: Vec<Complex64> = seg
                .iter()
                .flat_map(|&c| std::iter::repeat_n(Complex64::new(2.0 * c as f64 - 1.0, 0.0), up))
                .collect();
            fft.process(&mut buf);
            for (p, x) in psd.iter_mut().zip(&buf) {
                *p += x.norm_sqr();
            }
        }
        let k = (1..n / 2)
            .max_by(|&a, &b| psd[a].total_cmp(&psd[b]))
            .unwrap();
        let bin = chip_rate * up as f64 / n as f64;
        (k as f64 * bin, bin)
    }

    #[test]
    fn both_options_agree_and_shift_the_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let bits = BitVec::random(512, &mut rng);
        for r in [1u32, 2, 3, 4] {
            let o1 = apply_small_shift(
                &ChipSeq::new(manchester_encode(&bits), 1.0 / 7500.0),
                &shifted(r, ShiftOption::RepeatCodeword, LineScheme::Manchester),
            )
            .unwrap();
            let o2 = apply_small_shift(
                &ChipSeq::new(bits.to_vec(), 1.0 / 7500.0),
                &shifted(r, ShiftOption::SquareWaveMultiply, LineScheme::None),
            )
            .unwrap();
            let inverted: Vec<u8> = o2.chips.iter().map(|c| c ^ 1).collect();
            assert!(o1.chips == o2.chips || o1.chips == inverted);
            assert_eq!(o1.len(), bits.len() * 2 * r as usize);
            // R / T_b with T_b = 2R chips
            let target = r as f64 / (2.0 * r as f64 / 7500.0);
            // at R = 1 random Manchester has a broad lobe rather than a line
            for out in [&o1, &o2].into_iter().filter(|_| r > 1) {
                let (peak, bin) = spectral_peak_hz(&out.chips, 7500.0, 8 * r as usize);
                assert!((peak - target).abs() <= bin, "R={r}: {peak} vs {target}");
            }
        }
    }

    #[test]
    fn square_wave_on_manchester_chips() {
        let s = shifted(2, ShiftOption::SquareWaveMultiply, LineScheme::Manchester);
        // bit 0 = (1,0): upsampled 1,1,0,0 xor 1,0,1,0
        let out = apply_small_shift(&ChipSeq::new(vec![1, 0], 1.0 / 7500.0), &s).unwrap();
        assert_eq!(out.chips, vec![0, 1, 1, 0]);
    }

    #[test]
    fn modulation_mappings() {
        let c = |v: Vec<u8>| ChipSeq::new(v, 1.0 / 7500.0);
        let ook = baseband_modulate(&c(vec![1, 1, 1]), Modulation::Ook, 1.92e6).unwrap();
        assert_eq!(ook.len(), 768);
        assert!(
            ook.streams[0]
                .iter()
                .all(|&x| x == Complex64::new(1.0, 0.0))
        );
        let bpsk = baseband_modulate(&c(vec![1, 0]), Modulation::Bpsk, 1.92e6).unwrap();
        assert!(bpsk.streams[0][..256].iter().all(|x| x.re == 1.0));
        assert!(bpsk.streams[0][256..].iter().all(|x| x.re == -1.0));
        assert!(matches!(
            baseband_modulate(&c(vec![1]), Modulation::Ook, 10_000.0),
            Err(Error::UnsupportedRate { .. })
        ));
        assert!(baseband_modulate(&c(vec![1]), Modulation::Ook, 15_000.0).is_ok());
    }

    #[test]
    fn msk_phase_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chips = BitVec::random(200, &mut rng).into_vec();
        let spc = 16;
        let sig = baseband_modulate(
            &ChipSeq::new(chips.clone(), 1.0 / 7500.0),
            Modulation::Msk,
            7500.0 * spc as f64,
        )
        .unwrap();
        let x = &sig.streams[0];
        assert!(x.iter().all(|s| (s.norm() - 1.0).abs() < 1e-12));
        for w in x.windows(2) {
            assert!((w[1] * w[0].conj()).arg().abs() <= std::f64::consts::FRAC_PI_2 + 1e-9);
        }
        // oracle: unwrap the phase at chip starts
        let mut expected = 0.0f64;
        for (j, &c) in chips.iter().enumerate() {
            let got = x[j * spc].arg();
            let diff = (got - expected).rem_euclid(2.0 * std::f64::consts::PI);
            assert!(
                diff.min(2.0 * std::f64::consts::PI - diff) < 1e-9,
                "chip {j}"
            );
            expected += if c == 1 { 1.0 } else { -1.0 } * std::f64::consts::FRAC_PI_2;
        }
    }

    #[test]
    fn baseline_frame_layout() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for tbs in [20, 96] {
            let sched = D2rSchedule::with_tbs(tbs);
            let tb = BitVec::random(tbs, &mut rng);
            let frame = build_pdrch_frame(&tb, &sched).unwrap();
            let crc = if tbs == 20 { 6 } else { 16 };
            assert_eq!(frame.chips.len(), 31 + 2 * (tbs + crc) + 4);
            assert_eq!(&frame.chips.chips[..31], build_dtas(31, 0).unwrap().chips());
            assert_eq!(
                &frame.chips.chips[31..31 + 2 * tbs],
                manchester_encode(&tb).as_slice()
            );
            assert_eq!(&frame.chips.chips[frame.chips.len() - 4..], &POSTAMBLE);
        }
    }

    #[test]
    fn midamble_positions() {
        let sched = D2rSchedule {
            midamble_period_bits: Some(16),
            ..D2rSchedule::with_tbs(96)
        };
        let tb = BitVec::zeros(96);
        let frame = build_pdrch_frame(&tb, &sched).unwrap();
        let layout = &frame.layout;
        assert_eq!(layout.coded_bits, 112);
        // oracle: a midamble after bits 16, 32, ..., 96 but not after the last bit (112)
        let expected: Vec<usize> = (1..)
            .map(|k| 16 * k)
            .take_while(|&b| b < 112)
            .enumerate()
            .map(|(i, b)| 31 + 2 * b + 8 * i)
            .collect();
        assert_eq!(expected.len(), 6);
        assert_eq!(layout.midamble_starts, expected);
        for &s in &layout.midamble_starts {
            assert_eq!(&frame.chips.chips[s..s + 8], &MIDAMBLE);
        }
        let data: Vec<u8> = layout
            .data_chip_indices()
            .map(|i| frame.chips.chips[i])
            .collect();
        assert_eq!(data, manchester_encode(&channel_code(&tb, &sched).unwrap()));
    }

    #[test]
    fn length_accounting() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cases = [
            (20usize, None, 1usize, RepetitionStage::PostFec, 0u32, None),
            (
                96,
                Some((7, CodeRate::Third)),
                2,
                RepetitionStage::PreFec,
                0,
                Some(10),
            ),
            (
                50,
                Some((4, CodeRate::Half)),
                3,
                RepetitionStage::PostFec,
                2,
                Some(7),
            ),
            (
                33,
                Some((8, CodeRate::Sixth)),
                1,
                RepetitionStage::PostFec,
                3,
                None,
            ),
        ];
        for (tbs, fec, rep, stage, r, mid) in cases {
            for ending in [FrameEnding::Postamble, FrameEnding::TbsInControl] {
                let sched = D2rSchedule {
                    tbs,
                    fec: fec.map(|(k, rate)| FecSpec {
                        constraint_length: k,
                        rate,
                    }),
                    repetition: rep,
                    repetition_stage: stage,
                    repetition_mode: RepetitionMode::Block,
                    shift_r: r,
                    midamble_period_bits: mid,
                    ending,
                    ..D2rSchedule::default()
                };
                let tb = BitVec::random(tbs, &mut rng);
                let sig = assemble_pdrch(&tb, &sched).unwrap();
                let field = if ending == FrameEnding::TbsInControl {
                    10
                } else {
                    0
                };
                let crc = if tbs <= 32 { 6 } else { 16 };
                let inv_rate = fec.map_or(1, |(_, rate)| rate.inverse());
                let expansion = if r > 0 { 2 * r as usize } else { 2 };
                let coded = (tbs + field + crc) * rep * inv_rate;
                let n_mid = mid.map_or(0, |p| (coded - 1) / p);
                let post = if ending == FrameEnding::Postamble {
                    4
                } else {
                    0
                };
                let chips = coded * expansion + 31 + 8 * n_mid + post;
                assert_eq!(sig.len(), chips * 256);
            }
        }
    }

    #[test]
    fn tbs_limits() {
        let sched = D2rSchedule::with_tbs(1001);
        assert!(matches!(
            assemble_pdrch(&vec![0; 1001], &sched),
            Err(Error::PayloadTooLong { .. })
        ));
        assert!(matches!(
            assemble_pdrch(&[0; 19], &D2rSchedule::with_tbs(20)),
            Err(Error::LengthMismatch { .. })
        ));
    }
}
