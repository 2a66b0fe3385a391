//! Trial engine. Every trial draws all of its randomness from a seed derived
//! from (master seed, SNR index, trial index), so results do not depend on
//! how trials are spread over workers.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{BlerPoint, Link, SimConfig, SnrReference};
use crate::bits::BitVec;
use crate::channel::{
    ChannelConfig, add_awgn_with, apply_channel, apply_sfo, make_channel, snr_reference_power,
};
use crate::d2r::{assemble_pdrch, receive_pdrch};
use crate::error::{Error, Result};
use crate::r2d::{
    DetectorConfig, PrdchTransmitter, R2dConfig, Rtas, acquire_timing_with, build_prdch_frame,
    build_rtas, envelope_detect, receive_prdch,
};
use crate::signal::BasebandSignal;

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "AIOT_SIM_WORKERS";

/// Trials evaluated between stopping checks.
const BATCH: usize = 64;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn trial_seed(master: u64, snr_index: usize, trial: usize) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ snr_index as u64) ^ trial as u64)
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let n = match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => n,
            _ => {
                return Err(Error::ConfigInvalid(format!(
                    "{WORKERS_ENV}={v:?} is not a positive integer"
                )));
            }
        },
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("worker pool: {e}")))
}

/// Runs `trial` over the SNR grid; each call returns one block-error flag per curve.
fn run_points<F>(cfg: &SimConfig, n_curves: usize, trial: F) -> Result<Vec<Vec<BlerPoint>>>
where
    F: Fn(f64, &mut ChaCha8Rng) -> Result<Vec<bool>> + Sync,
{
    let pool = worker_pool()?;
    let mut curves = vec![Vec::with_capacity(cfg.snr_db.len()); n_curves];
    pool.install(|| -> Result<()> {
        for (i, &snr) in cfg.snr_db.iter().enumerate() {
            let mut errors = vec![0usize; n_curves];
            let mut blocks = 0;
            while blocks < cfg.min_blocks {
                let n = BATCH.min(cfg.min_blocks - blocks);
                let flags: Vec<Result<Vec<bool>>> = (blocks..blocks + n)
                    .into_par_iter()
                    .map(|t| {
                        trial(
                            snr,
                            &mut ChaCha8Rng::seed_from_u64(trial_seed(cfg.master_seed, i, t)),
                        )
                    })
                    .collect();
                for f in flags {
                    for (e, failed) in errors.iter_mut().zip(f?) {
                        *e += failed as usize;
                    }
                }
                blocks += n;
                if cfg
                    .max_block_errors
                    .is_some_and(|m| errors.iter().all(|&e| e >= m))
                {
                    break;
                }
            }
            for (curve, &e) in curves.iter_mut().zip(&errors) {
                curve.push(BlerPoint::new(snr, blocks, e));
            }
        }
        Ok(())
    })?;
    Ok(curves)
}

/// BLER curve for the configured link and receiver.
pub fn run_bler(cfg: &SimConfig) -> Result<Vec<BlerPoint>> {
    cfg.validate()?;
    let mut curves = match cfg.link {
        Link::R2d => run_r2d_variants(cfg, &[cfg.r2d_detector])?,
        Link::D2r => run_points(cfg, 1, |snr, rng| Ok(vec![d2r_trial(cfg, snr, rng)?]))?,
    };
    Ok(curves.remove(0))
}

/// R2D curves for several detectors, all fed with the same received frames.
pub fn run_r2d_variants(
    cfg: &SimConfig,
    detectors: &[DetectorConfig],
) -> Result<Vec<Vec<BlerPoint>>> {
    cfg.validate()?;
    if cfg.link != Link::R2d {
        return Err(Error::ConfigInvalid(
            "detector variants apply to the R2D link".into(),
        ));
    }
    // the device sees the waveform at its own sample rate, where an FFT of
    // this size produces the same samples as decimating the full-rate IFFT
    let dev_cfg = R2dConfig {
        fft_size: cfg.r2d.device_fft_size(),
        ..cfg.r2d.clone()
    };
    let tx = PrdchTransmitter::new(&dev_cfg)?;
    let rtas = build_rtas(&dev_cfg);
    run_points(cfg, detectors.len(), |snr, rng| {
        r2d_trial(cfg, &tx, &rtas, detectors, snr, rng)
    })
}

/// Sends `frame` from `n_tx` antennas through the trial's fading channel and adds
/// noise, with `lead` samples before it and `tail` after.
fn impair(
    cfg: &SimConfig,
    frame: &BasebandSignal,
    n_tx: usize,
    (lead, tail): (usize, usize),
    bw_hz: f64,
    snr_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<BasebandSignal> {
    let sig = frame.padded(lead, tail);
    let tx = if n_tx > 1 {
        sig.replicate(n_tx)
    } else {
        sig.clone()
    };
    let ch = ChannelConfig {
        seed: rng.random(),
        n_tx,
        ..cfg.channel.clone()
    };
    let faded = apply_channel(&tx, &make_channel(&ch, tx.duration_s(), tx.sample_rate_hz)?)?;
    let occupied = lead..lead + frame.len();
    // each link has unit mean power, so on average the receiver collects
    // the power of the unsplit frame
    let reference = match cfg.snr_reference {
        SnrReference::Measured => snr_reference_power(&faded, occupied, bw_hz),
        SnrReference::Average => snr_reference_power(&sig, occupied, bw_hz),
    };
    add_awgn_with(&faded, snr_db, reference, rng)
}

fn block_error<T: PartialEq>(r: Result<T>, expected: &T) -> Result<bool> {
    match r {
        Ok(v) => Ok(v != *expected),
        Err(e) if e.is_block_error() => Ok(true),
        Err(e) => Err(e),
    }
}

fn r2d_trial(
    cfg: &SimConfig,
    tx: &PrdchTransmitter,
    rtas: &Rtas,
    detectors: &[DetectorConfig],
    snr_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    let dev_cfg = tx.config();
    let tb = BitVec::random(cfg.tbs, rng);
    let frame = tx.modulate_signal(&build_prdch_frame(&tb, dev_cfg)?.chips)?;
    let lead = rng.random_range(0..=cfg.max_lead_in_samples);
    let tail = 2 * dev_cfg.fft_size;
    let bw = dev_cfg.n_subcarriers as f64 * dev_cfg.scs_hz;
    let mut rx = impair(
        cfg,
        &frame,
        cfg.r2d_tx_antennas,
        (lead, tail),
        bw,
        snr_db,
        rng,
    )?;
    if cfg.sfo_ppm != 0.0 {
        rx = apply_sfo(&rx, cfg.sfo_ppm)?;
    }
    let env = envelope_detect(&rx, dev_cfg)?;
    let chip = dev_cfg.fft_size / dev_cfg.m_chips_per_symbol;
    let mut acq = cfg.r2d_acquisition;
    acq.search_window
        .get_or_insert(cfg.max_lead_in_samples + 2 * chip + dev_cfg.fft_size);
    let timing = match acquire_timing_with(&env, rtas, dev_cfg, &acq) {
        Ok(t) => t,
        Err(e) if e.is_block_error() => return Ok(vec![true; detectors.len()]),
        Err(e) => return Err(e),
    };
    detectors
        .iter()
        .map(|det| block_error(receive_prdch(&env, &timing, dev_cfg, det), &tb))
        .collect()
}

fn d2r_trial(cfg: &SimConfig, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<bool> {
    let sched = cfg.d2r_schedule();
    let tb = BitVec::random(cfg.tbs, rng);
    let frame = assemble_pdrch(&tb, &sched)?;
    let lead = rng.random_range(0..=cfg.max_lead_in_samples);
    let spc = sched.samples_per_chip()?;
    let rx = impair(
        cfg,
        &frame,
        1,
        (lead, spc),
        cfg.d2r_bandwidth_hz,
        snr_db,
        rng,
    )?;
    let mut rcv = cfg.d2r_receiver;
    rcv.search
        .search_window
        .get_or_insert(cfg.max_lead_in_samples + spc);
    block_error(receive_pdrch(&rx, &sched, &rcv), &tb)
}
