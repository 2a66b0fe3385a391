//! TDL-A fading, AWGN and device clock offset.

use std::f64::consts::PI;
use std::ops::Range;

use num_complex::Complex64;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::BasebandSignal;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// TDL-A normalized delays and powers (dB) from 3GPP TR 38.901.
pub const TDL_A: [(f64, f64); 23] = [
    (0.0000, -13.4),
    (0.3819, 0.0),
    (0.4025, -2.2),
    (0.5868, -4.0),
    (0.4610, -6.0),
    (0.5375, -8.2),
    (0.6708, -9.9),
    (0.5750, -10.5),
    (0.7618, -7.5),
    (1.5375, -15.9),
    (1.8978, -6.6),
    (2.2242, -16.7),
    (2.1718, -12.4),
    (2.4942, -15.2),
    (2.5119, -10.8),
    (3.0582, -11.3),
    (4.0810, -12.7),
    (4.4579, -16.2),
    (4.5695, -18.3),
    (4.7966, -18.9),
    (5.0066, -16.6),
    (5.3043, -19.9),
    (9.6586, -29.7),
];

/// Fading phase advance allowed between stored gain samples.
const MAX_PHASE_STEP: f64 = 0.01;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelProfile {
    #[default]
    TdlA,
    AwgnOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub profile: ChannelProfile,
    pub delay_spread_s: f64,
    pub velocity_mps: f64,
    pub carrier_hz: f64,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Sinusoids summed per tap by the fading generator.
    pub n_sinusoids: usize,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            profile: ChannelProfile::TdlA,
            delay_spread_s: 30e-9,
            velocity_mps: 3.0 / 3.6,
            carrier_hz: 0.9e9,
            n_tx: 1,
            n_rx: 1,
            n_sinusoids: 64,
            seed: 0,
        }
    }
}

impl ChannelConfig {
    pub fn doppler_hz(&self) -> f64 {
        self.velocity_mps * self.carrier_hz / SPEED_OF_LIGHT
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.delay_spread_s > 0.0
            && self.velocity_mps >= 0.0
            && self.carrier_hz > 0.0
            && self.n_tx >= 1
            && self.n_rx >= 1
            && self.n_sinusoids >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("channel config {self:?}")))
        }
    }
}

/// Complex tap gains of every (rx, tx) link, stored on a coarse time grid
/// and linearly interpolated per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub sample_rate_hz: f64,
    pub n_samples: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub tap_delays_s: Vec<f64>,
    tap_delays: Vec<usize>,
    /// Samples between stored gain points.
    step: usize,
    /// `[rx][tx][tap]` gain at sample `i * step`.
    grid: Vec<Vec<Vec<Vec<Complex64>>>>,
}

impl ChannelRealization {
    /// Time-invariant taps on a single link.
    pub fn static_taps(taps: &[(usize, Complex64)], n_samples: usize, sample_rate_hz: f64) -> Self {
        let n_points = n_samples.max(1) + 1;
        Self {
            sample_rate_hz,
            n_samples,
            n_tx: 1,
            n_rx: 1,
            tap_delays_s: taps
                .iter()
                .map(|&(d, _)| d as f64 / sample_rate_hz)
                .collect(),
            tap_delays: taps.iter().map(|&(d, _)| d).collect(),
            step: n_samples.max(1),
            grid: vec![vec![
                taps.iter()
                    .map(|&(_, g)| vec![g; 2.min(n_points)])
                    .collect(),
            ]],
        }
    }

    pub fn identity(n_samples: usize, sample_rate_hz: f64) -> Self {
        Self::static_taps(&[(0, Complex64::new(1.0, 0.0))], n_samples, sample_rate_hz)
    }

    pub fn n_taps(&self) -> usize {
        self.tap_delays.len()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate_hz
    }

    pub fn gain_at(&self, rx: usize, tx: usize, tap: usize, n: usize) -> Complex64 {
        let g = &self.grid[rx][tx][tap];
        let (i, frac) = (n / self.step, (n % self.step) as f64 / self.step as f64);
        if i + 1 >= g.len() {
            return g[g.len() - 1];
        }
        g[i] * (1.0 - frac) + g[i + 1] * frac
    }

    /// Gain of one tap at every sample.
    pub fn tap_gains(&self, rx: usize, tx: usize, tap: usize) -> Vec<Complex64> {
        (0..self.n_samples)
            .map(|n| self.gain_at(rx, tx, tap, n))
            .collect()
    }

    /// Sum over taps of the mean squared gain, averaged over links.
    pub fn mean_total_power(&self) -> f64 {
        let links = (self.n_rx * self.n_tx) as f64;
        let per_point: f64 = self
            .grid
            .iter()
            .flatten()
            .flatten()
            .map(|g| g.iter().map(|x| x.norm_sqr()).sum::<f64>() / g.len() as f64)
            .sum();
        per_point / links
    }
}

pub fn make_channel(
    cfg: &ChannelConfig,
    duration_s: f64,
    sample_rate_hz: f64,
) -> Result<ChannelRealization> {
    cfg.validate()?;
    if !(duration_s > 0.0) || !(sample_rate_hz > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "channel duration {duration_s} s at {sample_rate_hz} Hz"
        )));
    }
    let n_samples = (duration_s * sample_rate_hz).ceil() as usize;
    if cfg.profile == ChannelProfile::AwgnOnly {
        let mut chan = ChannelRealization::identity(n_samples, sample_rate_hz);
        let one = chan.grid[0][0].clone();
        chan.grid = vec![vec![one; cfg.n_tx]; cfg.n_rx];
        (chan.n_tx, chan.n_rx) = (cfg.n_tx, cfg.n_rx);
        return Ok(chan);
    }
    // taps landing on the same sample are merged; their powers add
    let total: f64 = TDL_A.iter().map(|&(_, db)| 10f64.powf(db / 10.0)).sum();
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for &(norm_delay, db) in &TDL_A {
        let d = (norm_delay * cfg.delay_spread_s * sample_rate_hz).round() as usize;
        let p = 10f64.powf(db / 10.0) / total;
        match merged.iter_mut().find(|(md, _)| *md == d) {
            Some(entry) => entry.1 += p,
            None => merged.push((d, p)),
        }
    }
    merged.sort_by_key(|&(d, _)| d);

    let fd = cfg.doppler_hz();
    let step = if fd > 0.0 {
        ((MAX_PHASE_STEP * sample_rate_hz / (2.0 * PI * fd)).floor() as usize).max(1)
    } else {
        n_samples.max(1)
    };
    let n_points = n_samples / step + 2;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid = (0..cfg.n_rx)
        .map(|_| {
            (0..cfg.n_tx)
                .map(|_| {
                    merged
                        .iter()
                        .map(|&(_, p)| {
                            sum_of_sinusoids(
                                &mut rng,
                                cfg.n_sinusoids,
                                p,
                                fd,
                                step as f64 / sample_rate_hz,
                                n_points,
                            )
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(ChannelRealization {
        sample_rate_hz,
        n_samples,
        n_tx: cfg.n_tx,
        n_rx: cfg.n_rx,
        tap_delays_s: merged
            .iter()
            .map(|&(d, _)| d as f64 / sample_rate_hz)
            .collect(),
        tap_delays: merged.iter().map(|&(d, _)| d).collect(),
        step,
        grid,
    })
}

/// Rayleigh process with a classical Doppler spectrum: equally spaced
/// arrival angles with a random common offset and random phases.
fn sum_of_sinusoids<R: Rng>(
    rng: &mut R,
    n: usize,
    power: f64,
    fd: f64,
    dt: f64,
    n_points: usize,
) -> Vec<Complex64> {
    let offset: f64 = rng.random();
    let paths: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let angle = 2.0 * PI * (i as f64 + offset) / n as f64;
            (
                2.0 * PI * fd * angle.cos() * dt,
                rng.random::<f64>() * 2.0 * PI,
            )
        })
        .collect();
    let amp = (power / n as f64).sqrt();
    (0..n_points)
        .map(|k| {
            paths
                .iter()
                .map(|&(w, phi)| Complex64::from_polar(amp, w * k as f64 + phi))
                .sum()
        })
        .collect()
}

/// Passes every transmit stream through its links and sums at each receiver.
pub fn apply_channel(signal: &BasebandSignal, chan: &ChannelRealization) -> Result<BasebandSignal> {
    if signal.n_antennas() != chan.n_tx {
        return Err(Error::AntennaMismatch {
            expected: chan.n_tx,
            got: signal.n_antennas(),
        });
    }
    if (signal.sample_rate_hz - chan.sample_rate_hz).abs() > 1e-6 * chan.sample_rate_hz
        || signal.len() > chan.n_samples
    {
        return Err(Error::DurationMismatch {
            signal_s: signal.duration_s(),
            channel_s: chan.duration_s(),
        });
    }
    let len = signal.len();
    let zero = Complex64::new(0.0, 0.0);
    let streams = (0..chan.n_rx)
        .map(|rx| {
            let mut out = vec![zero; len];
            for (tx, x) in signal.streams.iter().enumerate() {
                for (tap, &d) in chan.tap_delays.iter().enumerate() {
                    let g = &chan.grid[rx][tx][tap];
                    let mut n = d;
                    // walk the coarse grid, stepping the interpolated gain per sample
                    while n < len {
                        let i = n / chan.step;
                        let seg_end = ((i + 1) * chan.step).min(len);
                        let (g0, g1) = (g[i.min(g.len() - 1)], g[(i + 1).min(g.len() - 1)]);
                        let dg = (g1 - g0) / chan.step as f64;
                        let mut gain = g0 + dg * (n - i * chan.step) as f64;
                        for k in n..seg_end {
                            out[k] += gain * x[k - d];
                            gain += dg;
                        }
                        n = seg_end;
                    }
                }
            }
            out
        })
        .collect();
    BasebandSignal::new(streams, signal.sample_rate_hz)
}

/// Reference power for SNR over the occupied bandwidth: mean sample power in
/// `occupied` scaled by the ratio of sample rate to occupied bandwidth.
pub fn snr_reference_power(
    signal: &BasebandSignal,
    occupied: Range<usize>,
    occupied_bw_hz: f64,
) -> f64 {
    signal.mean_power(occupied) * signal.sample_rate_hz / occupied_bw_hz
}

/// Adds complex Gaussian noise of variance `signal_power_ref / 10^(snr/10)`.
/// `f64::INFINITY` disables the noise.
pub fn add_awgn(
    signal: &BasebandSignal,
    snr_db: f64,
    signal_power_ref: f64,
    seed: u64,
) -> Result<BasebandSignal> {
    add_awgn_with(
        signal,
        snr_db,
        signal_power_ref,
        &mut ChaCha8Rng::seed_from_u64(seed),
    )
}

pub fn add_awgn_with<R: Rng + ?Sized>(
    signal: &BasebandSignal,
    snr_db: f64,
    signal_power_ref: f64,
    rng: &mut R,
) -> Result<BasebandSignal> {
    if snr_db == f64::INFINITY {
        return Ok(signal.clone());
    }
    if !snr_db.is_finite() || !(signal_power_ref >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "SNR {snr_db} dB with reference power {signal_power_ref}"
        )));
    }
    let sigma = (signal_power_ref / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
    let streams = signal
        .streams
        .iter()
        .map(|s| {
            s.iter()
                .map(|&x| {
                    let re: f64 = StandardNormal.sample(rng);
                    let im: f64 = StandardNormal.sample(rng);
                    x + Complex64::new(re, im) * sigma
                })
                .collect()
        })
        .collect();
    Ok(BasebandSignal {
        streams,
        sample_rate_hz: signal.sample_rate_hz,
    })
}

/// Resamples as seen by a device whose clock is off by `ppm`: output sample
/// `n` is the input at `n * (1 + ppm * 1e-6)`, linearly interpolated.
pub fn apply_sfo(signal: &BasebandSignal, ppm: f64) -> Result<BasebandSignal> {
    if !(ppm.abs() <= 2e5) {
        return Err(Error::InvalidConfig(format!("SFO {ppm} ppm outside +-2e5")));
    }
    if ppm == 0.0 || signal.is_empty() {
        return Ok(signal.clone());
    }
    let factor = 1.0 + ppm * 1e-6;
    let n_out = ((signal.len() - 1) as f64 / factor).floor() as usize + 1;
    let streams = signal
        .streams
        .iter()
        .map(|s| {
            (0..n_out)
                .map(|n| {
                    let t = n as f64 * factor;
                    let i = t.floor() as usize;
                    let f = t - i as f64;
                    if i + 1 < s.len() {
                        s[i] * (1.0 - f) + s[i + 1] * f
                    } else {
                        s[s.len() - 1]
                    }
                })
                .collect()
        })
        .collect();
    Ok(BasebandSignal {
        streams,
        sample_rate_hz: signal.sample_rate_hz,
    })
}
