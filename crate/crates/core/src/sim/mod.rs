//! Monte-Carlo BLER harness: configuration, trial engine and export.

mod engine;
mod export;

pub use engine::{WORKERS_ENV, run_bler, run_r2d_variants, trial_seed};
pub use export::{CSV_HEADER, ExportFormat, SimResults, export_results, parse_csv, write_csv};

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelConfig;
use crate::d2r::{D2rReceiverConfig, D2rSchedule, Modulation};
use crate::error::{Error, Result};
use crate::r2d::{AcquisitionConfig, DetectorConfig, R2dConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    #[default]
    R2d,
    D2r,
}

/// Signal power that the SNR refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrReference {
    /// Power of the faded signal actually received in this trial.
    #[default]
    Measured,
    /// Power of the transmitted signal, i.e. the mean over fading.
    Average,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub link: Link,
    /// Transport block size; overrides `d2r.tbs`.
    pub tbs: usize,
    pub snr_db: Vec<f64>,
    pub min_blocks: usize,
    /// Stop a point early once every curve has this many errors.
    pub max_block_errors: Option<usize>,
    pub master_seed: u64,
    pub snr_reference: SnrReference,
    /// Each trial delays the frame by a uniform number of samples up to this.
    pub max_lead_in_samples: usize,
    /// Device clock offset applied on the reader-to-device link.
    pub sfo_ppm: f64,
    /// Bandwidth the D2R SNR is referred to.
    pub d2r_bandwidth_hz: f64,
    /// Reader antennas sending the same PRDCH waveform, power split evenly.
    pub r2d_tx_antennas: usize,
    pub r2d: R2dConfig,
    pub r2d_detector: DetectorConfig,
    pub r2d_acquisition: AcquisitionConfig,
    pub d2r: D2rSchedule,
    pub d2r_receiver: D2rReceiverConfig,
    /// `n_rx` sets the receive antennas; `n_tx` is ignored in favour of the
    /// per-link antenna counts.
    pub channel: ChannelConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            link: Link::R2d,
            tbs: 20,
            snr_db: sweep(-10.0, 2.0, 30.0).unwrap(),
            min_blocks: 2000,
            max_block_errors: Some(100),
            master_seed: 1,
            snr_reference: SnrReference::Measured,
            max_lead_in_samples: 256,
            sfo_ppm: 0.0,
            d2r_bandwidth_hz: 15e3,
            r2d_tx_antennas: 2,
            r2d: R2dConfig::default(),
            r2d_detector: DetectorConfig::default(),
            r2d_acquisition: AcquisitionConfig {
                max_sfo_ppm: 2e4,
                ..AcquisitionConfig::default()
            },
            d2r: D2rSchedule::default(),
            d2r_receiver: D2rReceiverConfig::default(),
            channel: ChannelConfig::default(),
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// The D2R schedule with the top-level TBS applied.
    pub fn d2r_schedule(&self) -> D2rSchedule {
        D2rSchedule {
            tbs: self.tbs,
            ..self.d2r.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.min_blocks < 100 {
            return bad(format!("min_blocks {} is below 100", self.min_blocks));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return bad("snr_db must be a nonempty list of finite values".into());
        }
        if self.snr_db.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snr_db must be strictly increasing".into());
        }
        if self.max_block_errors == Some(0) {
            return bad("max_block_errors must be positive".into());
        }
        if !(self.d2r_bandwidth_hz > 0.0) {
            return bad("d2r_bandwidth_hz must be positive".into());
        }
        let nested = |r: Result<()>| r.map_err(|e| Error::ConfigInvalid(e.to_string()));
        nested(self.channel.validate())?;
        if self.r2d_tx_antennas == 0 {
            return bad("r2d_tx_antennas must be positive".into());
        }
        match self.link {
            Link::R2d => {
                nested(self.r2d.validate())?;
                nested(self.r2d.crc.select(self.tbs).map(|_| ()))?;
                if self.sfo_ppm.abs() > 2e5 {
                    return bad(format!("sfo_ppm {} outside +-2e5", self.sfo_ppm));
                }
            }
            Link::D2r => {
                let sched = self.d2r_schedule();
                nested(sched.validate())?;
                if sched.modulation != Modulation::Ook {
                    return bad("the D2R receiver is non-coherent and needs OOK".into());
                }
                if !(1..=2).contains(&self.channel.n_rx) {
                    return bad(format!(
                        "{} receive antennas; 1 or 2 are supported",
                        self.channel.n_rx
                    ));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Inclusive `start:step:stop` grid.
pub fn sweep(start: f64, step: f64, stop: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
        return Err(Error::ConfigInvalid(format!(
            "bad sweep {start}:{step}:{stop}"
        )));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    // round away accumulated binary error so printed values stay short
    Ok((0..n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Parses `start:step:stop`, or a single value.
pub fn parse_sweep(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::ConfigInvalid(format!("bad SNR value {s:?}")))
    };
    match parts[..] {
        [v] => Ok(vec![num(v)?]),
        [a, b, c] => sweep(num(a)?, num(b)?, num(c)?),
        _ => Err(Error::ConfigInvalid(format!(
            "SNR sweep {text:?} is not start:step:stop"
        ))),
    }
}

/// One point of a BLER curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlerPoint {
    pub snr_db: f64,
    pub blocks: usize,
    pub block_errors: usize,
    pub bler: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95_halfwidth: f64,
}

impl BlerPoint {
    pub fn new(snr_db: f64, blocks: usize, block_errors: usize) -> Self {
        let p = if blocks == 0 {
            0.0
        } else {
            block_errors as f64 / blocks as f64
        };
        let ci = if blocks == 0 {
            0.0
        } else {
            1.96 * (p * (1.0 - p) / blocks as f64).sqrt()
        };
        Self {
            snr_db,
            blocks,
            block_errors,
            bler: p,
            ci95_halfwidth: ci,
        }
    }

    /// Whether the 95% intervals of two points intersect.
    pub fn overlaps(&self, other: &BlerPoint) -> bool {
        (self.bler - other.bler).abs() <= self.ci95_halfwidth + other.ci95_halfwidth
    }
}

/// SNR at which a curve first crosses `target` BLER, interpolating linearly in
/// SNR against log BLER. `None` if it never gets there.
pub fn snr_at_bler(points: &[BlerPoint], target: f64) -> Option<f64> {
    if points.first()?.bler <= target {
        return Some(points[0].snr_db);
    }
    points.windows(2).find(|w| w[1].bler <= target).map(|w| {
        let (a, b) = (w[0], w[1]);
        let ln = |p: f64| p.max(1e-6).ln();
        let t = (ln(a.bler) - ln(target)) / (ln(a.bler) - ln(b.bler));
        a.snr_db + t * (b.snr_db - a.snr_db)
    })
}
