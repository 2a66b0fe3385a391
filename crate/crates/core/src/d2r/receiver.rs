//! Reader-side PDRCH reception: D-TAS correlation, equal-gain combining,
//! per-chip detection with an adaptive threshold, and channel decoding.

use serde::{Deserialize, Serialize};

use super::waveform::{PdrchLayout, pdrch_layout, square_wave};
use super::{D2rSchedule, Dtas, Modulation, RepetitionStage, ShiftOption, build_dtas};
use crate::bits::{BitVec, TBS_FIELD_BITS};
use crate::crc::crc_check;
use crate::error::{Error, Result};
use crate::fec::{RepetitionMode, SoftBits, viterbi_decode};
use crate::frame::FrameEnding;
use crate::linecode::{ChipSeq, LineScheme, line_decode};
use crate::r2d::AdaptiveWindow;
use crate::signal::{BasebandSignal, EnvelopeSignal};
use crate::sync::{RunTemplate, clears_history_margin, prefix_sums};

/// Detection rule for the D-TAS correlator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtasSearch {
    /// Minimum of the peak's Pearson correlation times the square root of the
    /// template length in samples. For white envelope noise this is a
    /// standard-normal score.
    pub min_score: f64,
    /// The peak must exceed this multiple of the median correlator magnitude
    /// over earlier lags whose template window does not overlap the peak's.
    pub min_peak_ratio: f64,
    /// Largest start offset searched, in samples.
    pub search_window: Option<usize>,
}

impl Default for DtasSearch {
    fn default() -> Self {
        Self {
            min_score: 5.0,
            min_peak_ratio: 4.0,
            search_window: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepetitionCombining {
    Average,
    Majority,
    #[default]
    SoftSum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct D2rReceiverConfig {
    pub search: DtasSearch,
    pub adaptive_window_chips: usize,
    /// `Aligned` starts each window on a codeword boundary; `Causal` ends it
    /// at the current chip.
    pub adaptive_window: AdaptiveWindow,
    pub combining: RepetitionCombining,
}

impl Default for D2rReceiverConfig {
    fn default() -> Self {
        Self {
            search: DtasSearch::default(),
            adaptive_window_chips: 4,
            adaptive_window: AdaptiveWindow::Aligned,
            combining: RepetitionCombining::SoftSum,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct D2rDetection {
    /// First sample of the D-TAS.
    pub start_sample: usize,
    /// Chip statistic minus threshold for each data chip; positive means on.
    pub soft_chips: Vec<f64>,
    pub hard_chips: ChipSeq,
}

/// Per-sample mean of the antenna magnitudes.
pub fn egc_combine(rx: &BasebandSignal) -> EnvelopeSignal {
    let n = rx.n_antennas() as f64;
    let mut values = vec![0.0; rx.len()];
    for s in &rx.streams {
        // sqrt of norm_sqr is several times faster than hypot and exact enough here
        for (v, x) in values.iter_mut().zip(s) {
            *v += x.norm_sqr().sqrt();
        }
    }
    values.iter_mut().for_each(|v| *v /= n);
    EnvelopeSignal::raw(values, rx.sample_rate_hz)
}

/// Start sample of the D-TAS in a combined envelope.
pub fn locate_dtas(
    env: &EnvelopeSignal,
    dtas: &Dtas,
    samples_per_chip: usize,
    search: &DtasSearch,
) -> Result<usize> {
    let template = RunTemplate::new(dtas.chips(), |j| (j * samples_per_chip) as f64, 1.0);
    let prefix = prefix_sums(env.values.iter().copied());
    let corr = template.correlate(&prefix, search.search_window);
    let (peak, &best) = corr
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or(Error::DtasNotFound)?;
    let span = template.span();
    let seg = &env.values[peak..peak + span];
    let mean = seg.iter().sum::<f64>() / span as f64;
    let spread = seg.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
    let rho = best / (template.norm() * spread);
    if !(rho * (span as f64).sqrt() >= search.min_score) {
        return Err(Error::DtasNotFound);
    }
    if !clears_history_margin(&corr, peak, span, search.min_peak_ratio) {
        return Err(Error::DtasNotFound);
    }
    Ok(peak)
}

/// Chip statistics and thresholds for the data chips of a frame whose D-TAS
/// starts at `start_sample`. Midambles are skipped.
pub fn detect_d2r(
    env: &EnvelopeSignal,
    start_sample: usize,
    sched: &D2rSchedule,
    cfg: &D2rReceiverConfig,
) -> Result<D2rDetection> {
    let layout = pdrch_layout(sched)?;
    detect_with_layout(env, start_sample, &layout, sched.chip_duration_s(), cfg)
}

fn detect_with_layout(
    env: &EnvelopeSignal,
    start: usize,
    layout: &PdrchLayout,
    chip_duration_s: f64,
    cfg: &D2rReceiverConfig,
) -> Result<D2rDetection> {
    let w = cfg.adaptive_window_chips;
    if w == 0 {
        return Err(Error::InvalidConfig(
            "adaptive window must span at least one chip".into(),
        ));
    }
    let spc = layout.samples_per_chip;
    let needed = start + (layout.dtas_chips + layout.body_chips()) * spc;
    if needed > env.len() {
        return Err(Error::SignalTooShort {
            needed,
            available: env.len(),
        });
    }
    let stat: Vec<f64> = layout
        .data_chip_indices()
        .map(|j| {
            let s = start + j * spc;
            env.values[s..s + spc].iter().sum::<f64>() / spc as f64
        })
        .collect();
    let n = stat.len();
    let mut soft = Vec::with_capacity(n);
    let mut hard = Vec::with_capacity(n);
    for (k, &x) in stat.iter().enumerate() {
        let (lo, hi) = match cfg.adaptive_window {
            AdaptiveWindow::Aligned => {
                let hi = (k / 2 * 2 + w).min(n);
                (hi.saturating_sub(w), hi)
            }
            AdaptiveWindow::Causal => {
                let lo = (k + 1).saturating_sub(w);
                (lo, (lo + w).min(n))
            }
        };
        let thr = stat[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
        soft.push(x - thr);
        hard.push((x > thr) as u8);
    }
    Ok(D2rDetection {
        start_sample: start,
        soft_chips: soft,
        hard_chips: ChipSeq::new(hard, chip_duration_s),
    })
}

/// Merges `factor` copies of each value. Majority ties follow the sign of the sum.
pub fn combine_repetitions(
    soft: &SoftBits,
    factor: usize,
    mode: RepetitionMode,
    method: RepetitionCombining,
) -> Result<SoftBits> {
    if factor == 0 {
        return Err(Error::ZeroFactor);
    }
    if !soft.len().is_multiple_of(factor) {
        return Err(Error::LengthNotDivisible {
            len: soft.len(),
            factor,
        });
    }
    let n = soft.len() / factor;
    let copy = |i: usize, c: usize| match mode {
        RepetitionMode::Bit => soft.0[i * factor + c],
        RepetitionMode::Block => soft.0[c * n + i],
    };
    let out = (0..n)
        .map(|i| {
            let sum: f64 = (0..factor).map(|c| copy(i, c)).sum();
            match method {
                RepetitionCombining::SoftSum => sum,
                RepetitionCombining::Average => sum / factor as f64,
                RepetitionCombining::Majority => {
                    let votes: i64 = (0..factor)
                        .map(|c| if copy(i, c) < 0.0 { -1 } else { 1 })
                        .sum();
                    if votes > 0 || (votes == 0 && sum >= 0.0) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            }
        })
        .collect();
    Ok(SoftBits(out))
}

/// Soft line-coder input bits (positive favours 0) from the data chips.
fn soft_coded_bits(
    det: &D2rDetection,
    sched: &D2rSchedule,
    layout: &PdrchLayout,
) -> Result<SoftBits> {
    let s = &det.soft_chips;
    let cpb = layout.chips_per_coded_bit;
    let bits = s.chunks_exact(cpb);
    let out = if sched.shift_r > 0 {
        let r = sched.shift_r as usize;
        match (sched.shift_option, sched.line) {
            (ShiftOption::RepeatCodeword, _) => bits
                .map(|c| (0..r).map(|i| c[2 * i] - c[2 * i + 1]).sum())
                .collect(),
            (ShiftOption::SquareWaveMultiply, LineScheme::None) => bits
                .map(|c| {
                    c.iter()
                        .enumerate()
                        .map(|(k, v)| if square_wave(k) == 1 { *v } else { -v })
                        .sum()
                })
                .collect(),
            (ShiftOption::SquareWaveMultiply, _) => bits
                .map(|c| {
                    // a chip xor'ed with a high square-wave sample arrives inverted
                    let chip = |i: usize| -> f64 {
                        (i * r..(i + 1) * r)
                            .map(|k| if square_wave(k) == 1 { -c[k] } else { c[k] })
                            .sum()
                    };
                    chip(0) - chip(1)
                })
                .collect(),
        }
    } else {
        match sched.line {
            LineScheme::Manchester => bits.map(|c| c[0] - c[1]).collect(),
            LineScheme::None => s.iter().map(|v| -v).collect(),
            line => {
                let (hard, _) = line_decode(&det.hard_chips, line)?;
                return Ok(SoftBits::from_hard(&hard));
            }
        }
    };
    Ok(SoftBits(out))
}

/// Undoes the small shift, line coding, repetition and FEC, then checks the CRC.
pub fn decode_pdrch(
    det: &D2rDetection,
    sched: &D2rSchedule,
    method: RepetitionCombining,
) -> Result<BitVec> {
    let layout = pdrch_layout(sched)?;
    if det.soft_chips.len() != layout.data_chips() {
        return Err(Error::LengthMismatch {
            expected: layout.data_chips(),
            got: det.soft_chips.len(),
        });
    }
    let mut soft = soft_coded_bits(det, sched, &layout)?;
    let rep = sched.repetition;
    let bits = match &sched.fec {
        None => combine_repetitions(&soft, rep, sched.repetition_mode, method)?.hard_decisions(),
        Some(f) => {
            let code = f.code()?;
            if sched.repetition_stage == RepetitionStage::PostFec {
                soft = combine_repetitions(&soft, rep, sched.repetition_mode, method)?;
            }
            let decoded = viterbi_decode(&soft, &code, soft.len() / code.n_outputs())?;
            if sched.repetition_stage == RepetitionStage::PreFec {
                let votes = SoftBits::from_hard(&decoded);
                combine_repetitions(
                    &votes,
                    rep,
                    sched.repetition_mode,
                    RepetitionCombining::Majority,
                )?
                .hard_decisions()
            } else {
                decoded
            }
        }
    };
    let payload = crc_check(&bits, sched.crc.select(sched.tbs)?)?;
    match sched.ending {
        FrameEnding::Postamble => Ok(payload),
        FrameEnding::TbsInControl => {
            let field =
                BitVec::from_bits_unchecked(payload[..TBS_FIELD_BITS].to_vec()).to_uint() as usize;
            if field != sched.tbs {
                return Err(Error::MalformedFrame(format!(
                    "TBS field {field}, scheduled {}",
                    sched.tbs
                )));
            }
            Ok(BitVec::from_bits_unchecked(
                payload[TBS_FIELD_BITS..].to_vec(),
            ))
        }
    }
}

/// Full non-coherent reception of an OOK PDRCH.
pub fn receive_pdrch(
    rx: &BasebandSignal,
    sched: &D2rSchedule,
    cfg: &D2rReceiverConfig,
) -> Result<BitVec> {
    if sched.modulation != Modulation::Ook {
        return Err(Error::InvalidConfig(format!(
            "non-coherent reception needs OOK, got {:?}",
            sched.modulation
        )));
    }
    let layout = pdrch_layout(sched)?;
    let env = egc_combine(rx);
    let dtas = build_dtas(sched.dtas_length, sched.device_index)?;
    let start = locate_dtas(&env, &dtas, layout.samples_per_chip, &cfg.search)?;
    let det = detect_with_layout(&env, start, &layout, sched.chip_duration_s(), cfg)?;
    decode_pdrch(&det, sched, cfg.combining)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::add_awgn_with;
    use crate::d2r::{FecSpec, assemble_pdrch, build_pdrch_frame};
    use crate::fec::CodeRate;
    use num_complex::Complex64;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn loopback(sched: &D2rSchedule, seed: u64) -> (BitVec, BasebandSignal) {
        let tb = BitVec::random(sched.tbs, &mut rng(seed));
        (tb.clone(), assemble_pdrch(&tb, sched).unwrap())
    }

    #[test]
    fn baseline_noiseless_identity() {
        let cfg = D2rReceiverConfig::default();
        for tbs in [20, 96] {
            let sched = D2rSchedule::with_tbs(tbs);
            for n_rx in [1, 2] {
                for seed in 0..100 {
                    let (tb, sig) = loopback(&sched, seed);
                    let rx =
                        BasebandSignal::new(vec![sig.streams[0].clone(); n_rx], sig.sample_rate_hz)
                            .unwrap();
                    assert_eq!(
                        receive_pdrch(&rx, &sched, &cfg).unwrap(),
                        tb,
                        "tbs {tbs} n_rx {n_rx} seed {seed}"
                    );
                }
            }
        }
    }

    #[test]
    fn schedule_variants_loop_back() {
        let fec = Some(FecSpec {
            constraint_length: 7,
            rate: CodeRate::Third,
        });
        let base = D2rSchedule::with_tbs(40);
        let variants = [
            D2rSchedule {
                fec,
                ..base.clone()
            },
            D2rSchedule {
                repetition: 3,
                ..base.clone()
            },
            D2rSchedule {
                repetition: 2,
                repetition_mode: RepetitionMode::Block,
                ..base.clone()
            },
            D2rSchedule {
                fec,
                repetition: 2,
                repetition_stage: RepetitionStage::PreFec,
                ..base.clone()
            },
            D2rSchedule {
                shift_r: 3,
                ..base.clone()
            },
            D2rSchedule {
                shift_r: 2,
                shift_option: ShiftOption::SquareWaveMultiply,
                ..base.clone()
            },
            D2rSchedule {
                shift_r: 2,
                shift_option: ShiftOption::SquareWaveMultiply,
                line: LineScheme::None,
                fec,
                ..base.clone()
            },
            D2rSchedule {
                midamble_period_bits: Some(8),
                ending: FrameEnding::TbsInControl,
                ..base.clone()
            },
            D2rSchedule {
                line: LineScheme::Fm0,
                ..base.clone()
            },
            D2rSchedule {
                line: LineScheme::Miller4,
                ..base.clone()
            },
            D2rSchedule {
                line: LineScheme::None,
                ..base.clone()
            },
            D2rSchedule {
                device_index: 5,
                dtas_length: 63,
                ..base.clone()
            },
        ];
        for (i, sched) in variants.iter().enumerate() {
            for method in [
                RepetitionCombining::Average,
                RepetitionCombining::Majority,
                RepetitionCombining::SoftSum,
            ] {
                let (tb, sig) = loopback(sched, i as u64);
                let cfg = D2rReceiverConfig {
                    combining: method,
                    ..D2rReceiverConfig::default()
                };
                assert_eq!(
                    receive_pdrch(&sig.padded(777, 300), sched, &cfg).unwrap(),
                    tb,
                    "variant {i}"
                );
            }
        }
    }

    #[test]
    fn locate_is_shift_equivariant() {
        let sched = D2rSchedule::with_tbs(96);
        let dtas = build_dtas(31, 0).unwrap();
        let (_, sig) = loopback(&sched, 1);
        let search = DtasSearch::default();
        assert_eq!(
            locate_dtas(&egc_combine(&sig), &dtas, 256, &search).unwrap(),
            0
        );
        let delayed = egc_combine(&sig.padded(1000, 0));
        assert_eq!(locate_dtas(&delayed, &dtas, 256, &search).unwrap(), 1000);
        let windowed = DtasSearch {
            search_window: Some(500),
            ..search
        };
        assert!(locate_dtas(&delayed, &dtas, 256, &windowed).is_err());
    }

    #[test]
    fn noise_only_finds_nothing() {
        let dtas = build_dtas(31, 0).unwrap();
        for seed in 0..20 {
            let mut r = rng(seed);
            let noise: Vec<Complex64> = (0..80_000)
                .map(|_| {
                    Complex64::new(StandardNormal.sample(&mut r), StandardNormal.sample(&mut r))
                })
                .collect();
            let env = egc_combine(&BasebandSignal::single(noise, 1.92e6));
            assert!(matches!(
                locate_dtas(&env, &dtas, 256, &DtasSearch::default()),
                Err(Error::DtasNotFound)
            ));
        }
        let silent = EnvelopeSignal::raw(vec![0.0; 20_000], 1.92e6);
        assert!(locate_dtas(&silent, &dtas, 256, &DtasSearch::default()).is_err());
    }

    #[test]
    fn egc_definition() {
        let s: Vec<Complex64> = (0..50)
            .map(|i| Complex64::from_polar(1.0 + i as f64, i as f64))
            .collect();
        let one = egc_combine(&BasebandSignal::single(s.clone(), 1e6));
        let two = egc_combine(&BasebandSignal::new(vec![s.clone(), s.clone()], 1e6).unwrap());
        for (a, b) in one.values.iter().zip(&two.values) {
            assert!((a - b).abs() < 1e-12);
        }
        let half = egc_combine(
            &BasebandSignal::new(vec![vec![Complex64::new(0.0, 0.0); 50], s.clone()], 1e6).unwrap(),
        );
        for (h, x) in half.values.iter().zip(&s) {
            assert!((h - x.norm() / 2.0).abs() < 1e-12);
        }
    }

    /// Deflection (mean on - mean off)^2 / var(off) of per-chip means, with
    /// each antenna seeing its own Rayleigh gain. The per-sample SNR is high so
    /// magnitudes stay linear in the gain; for Rayleigh branches the expected
    /// deflections are then 1 + pi/4 (combined) against 3/2 (best branch).
    #[test]
    fn egc_beats_best_branch_on_average() {
        let mut r = rng(3);
        let (spc, chips, sigma) = (32usize, 40usize, 0.1);
        let (mut egc, mut best) = (0.0, 0.0);
        let fades = 1000;
        for _ in 0..fades {
            let g: Vec<Complex64> = (0..2)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut r);
                    let im: f64 = StandardNormal.sample(&mut r);
                    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                })
                .collect();
            let mut streams = vec![Vec::new(), Vec::new()];
            for c in 0..chips {
                let on = (c % 2) as f64;
                for _ in 0..spc {
                    for (a, st) in streams.iter_mut().enumerate() {
                        let n = Complex64::new(
                            StandardNormal.sample(&mut r),
                            StandardNormal.sample(&mut r),
                        ) * sigma;
                        st.push(g[a] * on + n);
                    }
                }
            }
            let deflection = |env: &EnvelopeSignal| {
                let means: Vec<f64> = env
                    .values
                    .chunks(spc)
                    .map(|c| c.iter().sum::<f64>() / spc as f64)
                    .collect();
                let on: Vec<f64> = means.iter().skip(1).step_by(2).copied().collect();
                let off: Vec<f64> = means.iter().step_by(2).copied().collect();
                let m = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                let (mon, moff) = (m(&on), m(&off));
                let var =
                    off.iter().map(|x| (x - moff).powi(2)).sum::<f64>() / (off.len() - 1) as f64;
                (mon - moff).powi(2) / var
            };
            let rx = BasebandSignal::new(streams.clone(), 1.0).unwrap();
            egc += deflection(&egc_combine(&rx));
            let singles = streams
                .into_iter()
                .map(|s| deflection(&egc_combine(&BasebandSignal::single(s, 1.0))));
            best += singles.fold(0.0, f64::max);
        }
        assert!(
            egc >= best,
            "egc {} best {}",
            egc / fades as f64,
            best / fades as f64
        );
    }

    #[test]
    fn detection_on_clean_envelope() {
        let sched = D2rSchedule {
            midamble_period_bits: Some(10),
            ..D2rSchedule::with_tbs(96)
        };
        let tb = BitVec::random(96, &mut rng(4));
        let frame = build_pdrch_frame(&tb, &sched).unwrap();
        let sig = assemble_pdrch(&tb, &sched).unwrap();
        let env = egc_combine(&sig);
        let data: Vec<u8> = frame
            .layout
            .data_chip_indices()
            .map(|j| frame.chips.chips[j])
            .collect();
        for window in [AdaptiveWindow::Aligned, AdaptiveWindow::Causal] {
            let cfg = D2rReceiverConfig {
                adaptive_window: window,
                ..D2rReceiverConfig::default()
            };
            let det = detect_d2r(&env, 0, &sched, &cfg).unwrap();
            assert_eq!(det.hard_chips.chips, data);
            assert_eq!(det.soft_chips.len(), data.len());
        }
        let short =
            EnvelopeSignal::raw(env.values[..env.len() - 2000].to_vec(), env.sample_rate_hz);
        assert!(matches!(
            detect_d2r(&short, 0, &sched, &D2rReceiverConfig::default()),
            Err(Error::SignalTooShort { .. })
        ));
    }

    #[test]
    fn adaptive_threshold_tracks_a_gain_step() {
        let sched = D2rSchedule::with_tbs(96);
        let tb = BitVec::random(96, &mut rng(6));
        let frame = build_pdrch_frame(&tb, &sched).unwrap();
        let mut env = egc_combine(&assemble_pdrch(&tb, &sched).unwrap());
        let n_data = frame.layout.data_chips();
        let step_chip = 31 + n_data / 2;
        let step_sample = step_chip * 256 + 100;
        for (i, v) in env.values.iter_mut().enumerate() {
            *v = if i >= step_sample {
                2.0 * *v + 0.3
            } else {
                *v + 0.1
            };
        }
        for window in [AdaptiveWindow::Aligned, AdaptiveWindow::Causal] {
            let cfg = D2rReceiverConfig {
                adaptive_window: window,
                ..D2rReceiverConfig::default()
            };
            let det = detect_d2r(&env, 0, &sched, &cfg).unwrap();
            for (k, (&got, &sent)) in det
                .hard_chips
                .chips
                .iter()
                .zip(&frame.chips.chips[31..])
                .enumerate()
            {
                let transient = (step_chip - 31..step_chip - 31 + 4).contains(&k);
                assert!(got == sent || transient, "{window:?} chip {k}");
            }
        }
    }

    #[test]
    fn repetition_combining_rules() {
        let s = SoftBits(vec![0.5, -2.0, 3.0]);
        for m in [
            RepetitionCombining::Average,
            RepetitionCombining::Majority,
            RepetitionCombining::SoftSum,
        ] {
            if m != RepetitionCombining::Majority {
                assert_eq!(
                    combine_repetitions(&s, 1, RepetitionMode::Bit, m).unwrap(),
                    s
                );
            }
        }
        let copies = SoftBits(vec![2.0, -1.0, 1.0]);
        assert_eq!(
            combine_repetitions(
                &copies,
                3,
                RepetitionMode::Bit,
                RepetitionCombining::Majority
            )
            .unwrap()
            .0,
            vec![1.0]
        );
        assert_eq!(
            combine_repetitions(
                &copies,
                3,
                RepetitionMode::Bit,
                RepetitionCombining::SoftSum
            )
            .unwrap()
            .0,
            vec![2.0]
        );
        let block = SoftBits(vec![1.0, -1.0, 3.0, -5.0]);
        assert_eq!(
            combine_repetitions(
                &block,
                2,
                RepetitionMode::Block,
                RepetitionCombining::Average
            )
            .unwrap()
            .0,
            vec![2.0, -3.0]
        );
        assert!(matches!(
            combine_repetitions(&s, 2, RepetitionMode::Bit, RepetitionCombining::Average),
            Err(Error::LengthNotDivisible { len: 3, factor: 2 })
        ));
    }

    /// Per-copy SNR at which soft-summed antipodal copies reach a BER of 1e-3.
    fn snr_at_ber(factor: usize, r: &mut ChaCha8Rng) -> f64 {
        let trials = 200_000;
        let ber = |snr_db: f64, r: &mut ChaCha8Rng| {
            let sigma = 10f64.powf(-snr_db / 20.0);
            let soft: Vec<f64> = (0..trials * factor)
                .map(|_| {
                    let n: f64 = StandardNormal.sample(r);
                    1.0 + sigma * n
                })
                .collect();
            let c = combine_repetitions(
                &SoftBits(soft),
                factor,
                RepetitionMode::Bit,
                RepetitionCombining::SoftSum,
            )
            .unwrap();
            c.0.iter().filter(|&&v| v < 0.0).count() as f64 / trials as f64
        };
        let mut prev = (-12.0, ber(-12.0, r));
        let mut snr = -12.0;
        loop {
            snr += 0.5;
            let b = ber(snr, r);
            if b <= 1e-3 {
                let t = (prev.1.ln() - 1e-3f64.ln()) / (prev.1.ln() - b.max(1e-6).ln());
                return prev.0 + t * (snr - prev.0);
            }
            prev = (snr, b);
        }
    }

    #[test]
    fn soft_sum_gain_matches_factor() {
        let mut r = rng(8);
        let single = snr_at_ber(1, &mut r);
        let quad = snr_at_ber(4, &mut r);
        let gain = single - quad;
        assert!((gain - 10.0 * 4f64.log10()).abs() <= 1.0, "gain {gain}");
    }

    #[test]
    fn fec_corrects_sparse_chip_flips() {
        let sched = D2rSchedule {
            fec: Some(FecSpec {
                constraint_length: 7,
                rate: CodeRate::Third,
            }),
            ..D2rSchedule::with_tbs(96)
        };
        let mut r = rng(12);
        for _ in 0..20 {
            let tb = BitVec::random(96, &mut r);
            let frame = build_pdrch_frame(&tb, &sched).unwrap();
            let mut chips: Vec<u8> = frame
                .layout
                .data_chip_indices()
                .map(|j| frame.chips.chips[j])
                .collect();
            let flips = chips.len() / 100;
            for _ in 0..flips {
                let k = r.random_range(0..chips.len());
                chips[k] ^= 1;
            }
            let det = D2rDetection {
                start_sample: 0,
                soft_chips: chips.iter().map(|&c| c as f64 - 0.5).collect(),
                hard_chips: ChipSeq::new(chips, sched.chip_duration_s()),
            };
            assert_eq!(
                decode_pdrch(&det, &sched, RepetitionCombining::SoftSum).unwrap(),
                tb
            );
        }
    }

    #[test]
    fn half_chip_misalignment_fails_cleanly() {
        let sched = D2rSchedule::with_tbs(96);
        let (_, sig) = loopback(&sched, 21);
        let env = egc_combine(&sig.padded(0, 512));
        let det = detect_d2r(&env, 128, &sched, &D2rReceiverConfig::default()).unwrap();
        match decode_pdrch(&det, &sched, RepetitionCombining::SoftSum) {
            Err(e) => assert!(e.is_block_error(), "{e}"),
            Ok(_) => panic!("misaligned frame passed the CRC"),
        }
    }

    #[test]
    fn awgn_at_high_snr_decodes() {
        let sched = D2rSchedule::with_tbs(20);
        let mut r = rng(30);
        for seed in 0..20 {
            let (tb, sig) = loopback(&sched, seed);
            let rx = sig.padded(3000, 500);
            let pref = rx.mean_power(3000..3000 + sig.len()) * rx.sample_rate_hz / 15e3;
            let noisy = add_awgn_with(&rx, 25.0, pref, &mut r).unwrap();
            assert_eq!(
                receive_pdrch(&noisy, &sched, &D2rReceiverConfig::default()).unwrap(),
                tb
            );
        }
    }

    #[test]
    fn coherent_modulations_are_rejected() {
        let sched = D2rSchedule {
            modulation: Modulation::Bpsk,
            ..D2rSchedule::default()
        };
        let (_, sig) = loopback(&sched, 0);
        assert!(matches!(
            receive_pdrch(&sig, &sched, &D2rReceiverConfig::default()),
            Err(Error::InvalidConfig(_))
        ));
    }
}
