use std::f64::consts::LN_2;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{ChipTimeline, R2dConfig, Rtas};
use crate::bits::{BitVec, MAX_TBS, TBS_FIELD_BITS};
use crate::crc::crc_check;
use crate::error::{Error, Result};
use crate::frame::{FrameEnding, POSTAMBLE};
use crate::linecode::{ChipSeq, LineScheme, manchester_decode};
use crate::signal::{BasebandSignal, EnvelopeSignal};
use crate::sync::{RunTemplate, clears_history_margin};

/// Low-pass cutoff of the envelope detector as a multiple of the chip rate.
pub const LPF_CUTOFF_PER_CHIP_RATE: f64 = 2.0;

/// Square-law detector followed by a single-pole low-pass and decimation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeDetector {
    pub cutoff_hz: f64,
    pub output_rate_hz: f64,
}

impl EnvelopeDetector {
    pub fn for_config(cfg: &R2dConfig) -> Self {
        Self {
            cutoff_hz: LPF_CUTOFF_PER_CHIP_RATE * cfg.chip_rate_cps(),
            output_rate_hz: cfg.device_sample_rate_hz,
        }
    }

    /// Power is summed across antenna streams.
    pub fn detect(&self, rx: &BasebandSignal) -> Result<EnvelopeSignal> {
        if rx.is_empty() {
            return Err(Error::EmptyInput);
        }
        let ratio = rx.sample_rate_hz / self.output_rate_hz;
        let d = ratio.round();
        if d < 1.0 || (ratio - d).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "cannot decimate {} Hz to {} Hz",
                rx.sample_rate_hz, self.output_rate_hz
            )));
        }
        let d = d as usize;
        let decay = (-2.0 * std::f64::consts::PI * self.cutoff_hz / rx.sample_rate_hz).exp();
        let a = 1.0 - decay;
        let mut y = 0.0;
        let mut values = Vec::with_capacity(rx.len() / d + 1);
        for i in 0..rx.len() {
            let p: f64 = rx.streams.iter().map(|s| s[i].norm_sqr()).sum();
            y += a * (p - y);
            if i % d == 0 {
                values.push(y);
            }
        }
        // a step between input samples n-1 and n reaches half height after
        // ln2 / -ln(decay) - 1 further samples
        let edge = LN_2 / -decay.ln() - 0.5;
        let centroid = decay / a;
        Ok(EnvelopeSignal {
            values,
            sample_rate_hz: self.output_rate_hz,
            edge_delay_samples: edge / d as f64,
            group_delay_samples: centroid / d as f64,
        })
    }
}

pub fn envelope_detect(rx: &BasebandSignal, cfg: &R2dConfig) -> Result<EnvelopeSignal> {
    EnvelopeDetector::for_config(cfg).detect(rx)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Thresholding {
    #[default]
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combining {
    #[default]
    MeanPerChip,
    MajorityPerSample,
}

/// Placement of the adaptive-threshold window around the current chip.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveWindow {
    /// The current chip and the preceding ones.
    #[default]
    Causal,
    /// Consecutive blocks starting at the first data chip, so each window
    /// covers whole Manchester codewords.
    Aligned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub thresholding: Thresholding,
    pub combining: Combining,
    pub adaptive_window_chips: usize,
    pub adaptive_window: AdaptiveWindow,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            thresholding: Thresholding::Fixed,
            combining: Combining::MeanPerChip,
            adaptive_window_chips: 4,
            adaptive_window: AdaptiveWindow::Causal,
        }
    }
}

impl DetectorConfig {
    pub fn new(thresholding: Thresholding, combining: Combining) -> Self {
        Self {
            thresholding,
            combining,
            ..Self::default()
        }
    }
}

/// Search limits for R-TAS acquisition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcquisitionConfig {
    /// Largest device clock error searched for.
    pub max_sfo_ppm: f64,
    /// Spacing of the chip-length hypotheses, relative to nominal.
    pub scale_step: f64,
    /// Only lags below this are searched; `None` searches the whole envelope.
    pub search_window: Option<usize>,
    /// Required ratio of the correlation peak to the median magnitude at
    /// earlier lags whose template window does not overlap the peak's.
    pub min_peak_ratio: f64,
    /// Required Pearson correlation between the R-TAS template and the
    /// envelope at the peak.
    pub min_correlation: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        Self {
            max_sfo_ppm: 1e5,
            scale_step: 0.01,
            search_window: None,
            min_peak_ratio: 4.0,
            min_correlation: 0.55,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingEstimate {
    /// Position of the frame's first sample, before any filter delay.
    pub frame_start: f64,
    pub frame_start_sample: usize,
    /// Device samples per nominal sample; below 1 when the device clock runs fast.
    pub scale: f64,
    pub chip_len_samples: f64,
    pub threshold: f64,
    pub on_level: f64,
    pub off_level: f64,
    /// Chips preceding the first data chip.
    pub rtas_chips: usize,
    pub timeline: ChipTimeline,
    group_delay: f64,
}

impl TimingEstimate {
    /// Envelope samples averaged for chip `j` (counted from the R-TAS start).
    pub fn chip_window(&self, j: usize) -> Range<usize> {
        let lo =
            self.frame_start + self.scale * self.timeline.core_start(j) as f64 + self.group_delay;
        let hi =
            self.frame_start + self.scale * self.timeline.core_end(j) as f64 + self.group_delay;
        let lo = lo.round().max(0.0) as usize;
        lo..(hi.round().max(0.0) as usize).max(lo + 1)
    }
}

pub fn acquire_timing(
    env: &EnvelopeSignal,
    rtas: &Rtas,
    cfg: &R2dConfig,
) -> Result<TimingEstimate> {
    acquire_timing_with(env, rtas, cfg, &AcquisitionConfig::default())
}

/// Finds the R-TAS by correlating against its zero-mean on/off template over
/// a grid of chip-length hypotheses, then refines start and chip length by a
/// least-squares fit of the observed edge crossings.
pub fn acquire_timing_with(
    env: &EnvelopeSignal,
    rtas: &Rtas,
    cfg: &R2dConfig,
    acq: &AcquisitionConfig,
) -> Result<TimingEstimate> {
    cfg.validate()?;
    let tl = cfg.device_timeline();
    let chips = rtas.chips();
    let n_r = chips.len();
    if n_r == 0 {
        return Err(Error::InvalidConfig("empty R-TAS".into()));
    }
    let prefix = env.prefix_sums();
    let dev = acq.max_sfo_ppm.abs() * 1e-6;
    let (lo, hi) = (1.0 / (1.0 + dev), 1.0 / (1.0 - dev).max(1e-3));
    let step = acq.scale_step;
    let scales: Vec<f64> = ((((lo - 1.0) / step).floor() as i64 - 1)
        ..=(((hi - 1.0) / step).ceil() as i64 + 1))
        .map(|i| 1.0 + i as f64 * step)
        .filter(|&s| s > 0.5)
        .collect();
    let template = |scale: f64| RunTemplate::new(&chips, |j| tl.occupied_start(j) as f64, scale);

    let mut best: Option<(f64, usize, f64)> = None;
    for &s in &scales {
        let t = template(s);
        let norm = t.norm();
        let corr = t.correlate(&prefix, acq.search_window);
        for (k, &c) in corr.iter().enumerate() {
            let score = c / norm;
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, k, s));
            }
        }
    }
    let Some((score, lag, scale)) = best else {
        return Err(Error::RtasNotFound);
    };
    if !(score > 0.0) {
        return Err(Error::RtasNotFound);
    }
    let t = template(scale);
    let corr = t.correlate(&prefix, acq.search_window);
    let span = t.span();
    let seg = &env.values[lag..lag + span];
    let seg_mean = seg.iter().sum::<f64>() / span as f64;
    let spread = seg
        .iter()
        .map(|x| (x - seg_mean).powi(2))
        .sum::<f64>()
        .sqrt();
    if !(score >= acq.min_correlation * spread) {
        return Err(Error::RtasNotFound);
    }
    if !clears_history_margin(&corr, lag, span, acq.min_peak_ratio) {
        return Err(Error::RtasNotFound);
    }

    let coarse = TimingEstimate {
        frame_start: lag as f64,
        frame_start_sample: lag,
        scale,
        chip_len_samples: scale * tl.chip_core_len() as f64,
        threshold: 0.0,
        on_level: 0.0,
        off_level: 0.0,
        rtas_chips: n_r,
        timeline: tl,
        group_delay: 0.0,
    };
    let coarse_threshold = {
        let means: Vec<f64> = (0..n_r)
            .map(|j| window_mean(&prefix, coarse.chip_window(j)))
            .collect();
        let level = |want: u8| {
            let v: Vec<f64> = (0..n_r)
                .filter(|&j| chips[j] == want)
                .map(|j| means[j])
                .collect();
            v.iter().sum::<f64>() / v.len().max(1) as f64
        };
        0.5 * (level(1) + level(0))
    };

    let (start, scale) =
        refine_by_edges(env, &chips, cfg, &coarse, coarse_threshold).unwrap_or((lag as f64, scale));
    let mut est = TimingEstimate {
        frame_start: start,
        frame_start_sample: start.round().max(0.0) as usize,
        scale,
        chip_len_samples: scale * tl.chip_core_len() as f64,
        group_delay: env.group_delay_samples,
        ..coarse
    };
    let si = rtas.start_indicator.len();
    let level = |want: u8| {
        let v: Vec<f64> = (0..si)
            .filter(|&j| chips[j] == want)
            .map(|j| window_mean(&prefix, est.chip_window(j)))
            .collect();
        v.iter().sum::<f64>() / v.len().max(1) as f64
    };
    let (on_level, off_level) = (level(1), level(0));
    est.on_level = on_level;
    est.off_level = off_level;
    est.threshold = 0.5 * (est.on_level + est.off_level);
    Ok(est)
}

/// Least-squares fit of threshold crossings against the crossings of a
/// noiselessly synthesized R-TAS envelope, which carries the same waveform
/// and filter shaping. For M > 1 edges at symbol starts are skipped, as the
/// cyclic prefix joins there.
fn refine_by_edges(
    env: &EnvelopeSignal,
    chips: &[u8],
    cfg: &R2dConfig,
    coarse: &TimingEstimate,
    thr: f64,
) -> Option<(f64, f64)> {
    let reference = reference_crossings(chips, cfg)?;
    let v = &env.values;
    let half = 0.5 * coarse.chip_len_samples;
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (j, r) in reference {
        let pred = coarse.frame_start + coarse.scale * r;
        if let Some(x) = nearest_crossing(v, thr, chips[j] == 1, pred, half) {
            pts.push((r, x));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let b = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    // reject fits that wander outside the coarse search
    if (b - coarse.scale).abs() > 0.05 {
        return None;
    }
    Some((my - b * mx, b))
}

/// Usable edges of the R-TAS and where a clean envelope crosses its
/// mid-level, in device samples from the frame start.
fn reference_crossings(chips: &[u8], cfg: &R2dConfig) -> Option<Vec<(usize, f64)>> {
    let tl = cfg.device_timeline();
    let m = cfg.m_chips_per_symbol;
    let mut padded = chips.to_vec();
    padded.resize(chips.len() + m, 0);
    let tx = super::PrdchTransmitter::new(cfg).ok()?;
    let lead_dev = tl.fft_size;
    let x = tx.modulate_signal(&padded).ok()?.padded(cfg.fft_size, 0);
    let env = EnvelopeDetector::for_config(cfg).detect(&x).ok()?;
    let prefix = env.prefix_sums();
    let at = |j: usize| {
        let lo = lead_dev as f64 + tl.core_start(j) as f64 + env.group_delay_samples;
        let hi = lead_dev as f64 + tl.core_end(j) as f64 + env.group_delay_samples;
        window_mean(&prefix, lo.round() as usize..hi.round() as usize)
    };
    let (mut on, mut off) = (Vec::new(), Vec::new());
    for (j, &c) in chips.iter().enumerate() {
        if c == 1 {
            on.push(at(j))
        } else {
            off.push(at(j))
        }
    }
    let thr = 0.5
        * (on.iter().sum::<f64>() / on.len().max(1) as f64
            + off.iter().sum::<f64>() / off.len().max(1) as f64);
    let half = 0.5 * tl.chip_core_len() as f64;
    let mut out = Vec::new();
    for j in 0..chips.len() {
        let prev = if j == 0 { 0 } else { chips[j - 1] };
        if prev == chips[j] || (j > 0 && m > 1 && tl.is_symbol_boundary(j)) {
            continue;
        }
        let pred = lead_dev as f64 + tl.occupied_start(j) as f64 + env.edge_delay_samples;
        if let Some(x) = nearest_crossing(&env.values, thr, chips[j] == 1, pred, half) {
            out.push((j, x - lead_dev as f64));
        }
    }
    Some(out)
}

/// Sub-sample position of the crossing of `thr` in the given direction closest to `pred`.
fn nearest_crossing(v: &[f64], thr: f64, rising: bool, pred: f64, half_width: f64) -> Option<f64> {
    let lo = (pred - half_width).floor().max(1.0) as usize;
    let hi = ((pred + half_width).ceil().max(0.0) as usize).min(v.len().saturating_sub(1));
    let mut found: Option<f64> = None;
    for i in lo..=hi {
        let (a, b) = (v[i - 1] - thr, v[i] - thr);
        let crosses = if rising {
            a < 0.0 && b >= 0.0
        } else {
            a >= 0.0 && b < 0.0
        };
        if crosses {
            let x = (i - 1) as f64 + a / (a - b);
            if found.is_none_or(|f| (x - pred).abs() < (f - pred).abs()) {
                found = Some(x);
            }
        }
    }
    found
}

fn window_mean(prefix: &[f64], w: Range<usize>) -> f64 {
    let hi = w.end.min(prefix.len() - 1);
    let lo = w.start.min(hi);
    if hi == lo {
        return 0.0;
    }
    (prefix[hi] - prefix[lo]) / (hi - lo) as f64
}

/// Number of data chips whose windows fit inside the envelope.
pub fn max_detectable_chips(env: &EnvelopeSignal, timing: &TimingEstimate) -> usize {
    let mut n = 0;
    while timing.chip_window(timing.rtas_chips + n).end <= env.len() {
        n += 1;
    }
    n
}

/// Slices `n_chips` data chips following the R-TAS.
pub fn detect_chips(
    env: &EnvelopeSignal,
    timing: &TimingEstimate,
    det: &DetectorConfig,
    n_chips: usize,
) -> Result<ChipSeq> {
    if det.adaptive_window_chips == 0 {
        return Err(Error::InvalidConfig(
            "adaptive window must span at least one chip".into(),
        ));
    }
    let first = timing.rtas_chips;
    let end = first + n_chips;
    let chip_duration = 1.0
        / (timing.timeline.chips_per_symbol as f64 * env.sample_rate_hz
            / timing.timeline.fft_size as f64);
    if n_chips == 0 {
        return Ok(ChipSeq::new(Vec::new(), chip_duration));
    }
    let needed = timing.chip_window(end - 1).end;
    if needed > env.len() {
        return Err(Error::SignalTooShort {
            needed,
            available: env.len(),
        });
    }
    let prefix = env.prefix_sums();
    let w = det.adaptive_window_chips;
    // causal windows reach back into the R-TAS
    let base = match (det.thresholding, det.adaptive_window) {
        (Thresholding::Adaptive, AdaptiveWindow::Causal) => first.saturating_sub(w - 1),
        _ => first,
    };
    let stat: Vec<f64> = (base..end)
        .map(|j| window_mean(&prefix, timing.chip_window(j)))
        .collect();
    let thresholds: Vec<f64> = (first..end)
        .map(|j| match det.thresholding {
            Thresholding::Fixed => timing.threshold,
            Thresholding::Adaptive => {
                let (lo, hi) = match det.adaptive_window {
                    AdaptiveWindow::Causal => ((j + 1).saturating_sub(w).max(base), j + 1),
                    AdaptiveWindow::Aligned => {
                        let lo = first + (j - first) / w * w;
                        (lo, (lo + w).min(end))
                    }
                };
                stat[lo - base..hi - base].iter().sum::<f64>() / (hi - lo) as f64
            }
        })
        .collect();
    let chips = (first..end)
        .zip(&thresholds)
        .map(|(j, &thr)| match det.combining {
            Combining::MeanPerChip => (stat[j - base] > thr) as u8,
            Combining::MajorityPerSample => {
                let win = timing.chip_window(j);
                let above = env.values[win.clone()].iter().filter(|&&v| v > thr).count();
                (2 * above >= win.len()) as u8
            }
        })
        .collect();
    Ok(ChipSeq::new(chips, chip_duration))
}

/// Line and CRC decoding of detected data chips. Chips past the end of the
/// frame are ignored.
pub fn decode_prdch(chips: &ChipSeq, cfg: &R2dConfig) -> Result<BitVec> {
    let grid = chips.to_uniform_grid().chips;
    match cfg.line {
        LineScheme::Manchester => decode_manchester(&grid, cfg),
        LineScheme::Pie => decode_pie(&grid, cfg),
        other => Err(Error::UnsupportedScheme(other)),
    }
}

fn decode_manchester(c: &[u8], cfg: &R2dConfig) -> Result<BitVec> {
    if !c.len().is_multiple_of(2) {
        return Err(Error::OddChipCount(c.len()));
    }
    match cfg.ending {
        FrameEnding::Postamble => {
            let pairs = c.len() / 2;
            let end = (0..pairs.saturating_sub(1))
                .find(|&i| c[2 * i..2 * i + 4] == POSTAMBLE)
                .ok_or_else(|| Error::MalformedFrame("postamble not found".into()))?;
            let (bits, _) = manchester_decode(&c[..2 * end])?;
            let (_, mode) = cfg.crc.split_frame_len(bits.len())?;
            crc_check(&bits, mode)
        }
        FrameEnding::TbsInControl => {
            if c.len() < 2 * TBS_FIELD_BITS {
                return Err(Error::MalformedFrame("truncated TBS field".into()));
            }
            let (field, _) = manchester_decode(&c[..2 * TBS_FIELD_BITS])?;
            let tbs = field.to_uint() as usize;
            let total = framed_len(tbs, cfg)?;
            if c.len() < 2 * total {
                return Err(Error::MalformedFrame(format!(
                    "{total} bits announced, {} chips received",
                    c.len()
                )));
            }
            let (bits, _) = manchester_decode(&c[..2 * total])?;
            let payload = crc_check(&bits, cfg.crc.select(tbs)?)?;
            Ok(BitVec::from_bits_unchecked(
                payload[TBS_FIELD_BITS..].to_vec(),
            ))
        }
    }
}

/// Bits of TBS field, transport block and CRC for an announced TBS.
fn framed_len(tbs: usize, cfg: &R2dConfig) -> Result<usize> {
    if tbs == 0 || tbs > MAX_TBS {
        return Err(Error::MalformedFrame(format!("announced TBS {tbs}")));
    }
    Ok(TBS_FIELD_BITS + tbs + cfg.crc.select(tbs)?.len())
}

/// PIE on the chip grid: a data-0 is `1,0` and a data-1 is `1,1,0`.
fn decode_pie(grid: &[u8], cfg: &R2dConfig) -> Result<BitVec> {
    let mut bits = BitVec::new();
    let mut i = 0;
    let want = |bits: &BitVec| -> Option<usize> {
        match cfg.ending {
            FrameEnding::TbsInControl if bits.len() >= TBS_FIELD_BITS => framed_len(
                BitVec::from_bits_unchecked(bits[..TBS_FIELD_BITS].to_vec()).to_uint() as usize,
                cfg,
            )
            .ok(),
            _ => None,
        }
    };
    loop {
        if let Some(total) = want(&bits)
            && bits.len() == total
        {
            break;
        }
        match grid.get(i..) {
            Some([1, 0, ..]) => {
                bits.push(false);
                i += 2;
            }
            Some([1, 1, 0, ..]) => {
                bits.push(true);
                i += 3;
            }
            Some([0, 0, 1, ..]) if cfg.ending == FrameEnding::Postamble => break,
            _ => {
                return Err(Error::MalformedFrame(format!(
                    "invalid PIE symbol at grid chip {i}"
                )));
            }
        }
    }
    match cfg.ending {
        FrameEnding::Postamble => {
            let (_, mode) = cfg.crc.split_frame_len(bits.len())?;
            crc_check(&bits, mode)
        }
        FrameEnding::TbsInControl => {
            let field =
                BitVec::from_bits_unchecked(bits[..TBS_FIELD_BITS].to_vec()).to_uint() as usize;
            let payload = crc_check(&bits, cfg.crc.select(field)?)?;
            Ok(BitVec::from_bits_unchecked(
                payload[TBS_FIELD_BITS..].to_vec(),
            ))
        }
    }
}

/// Detects every chip that fits after the R-TAS and decodes the frame.
pub fn receive_prdch(
    env: &EnvelopeSignal,
    timing: &TimingEstimate,
    cfg: &R2dConfig,
    det: &DetectorConfig,
) -> Result<BitVec> {
    let n = max_detectable_chips(env, timing) / 2 * 2;
    let chips = detect_chips(env, timing, det, n)?;
    decode_prdch(&chips, cfg)
}
