//! Reader-to-device link at the device sample rate: faded, noisy PRDCH
//! frames through envelope detection, R-TAS acquisition and chip decisions.

use aiot_phy::BitVec;
use aiot_phy::channel::{
    ChannelConfig, add_awgn_with, apply_channel, make_channel, snr_reference_power,
};
use aiot_phy::r2d::{
    AcquisitionConfig, Combining, DetectorConfig, PrdchTransmitter, R2dConfig, Thresholding,
    acquire_timing_with, build_prdch_frame, build_rtas, envelope_detect, receive_prdch,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> aiot_phy::Result<()> {
    let snr_db = 14.0;
    let trials = 200;
    // 128-point FFT: the waveform the device sees after resampling to 1.92 Msps
    let cfg = R2dConfig {
        fft_size: 128,
        ..R2dConfig::with_m(2)
    };
    let tx = PrdchTransmitter::new(&cfg)?;
    let rtas = build_rtas(&cfg);
    let acq = AcquisitionConfig {
        search_window: Some(512),
        ..AcquisitionConfig::default()
    };
    let detectors = [
        DetectorConfig::new(Thresholding::Fixed, Combining::MeanPerChip),
        DetectorConfig::new(Thresholding::Adaptive, Combining::MeanPerChip),
        DetectorConfig::new(Thresholding::Fixed, Combining::MajorityPerSample),
        DetectorConfig::new(Thresholding::Adaptive, Combining::MajorityPerSample),
    ];
    let mut errors = [0; 4];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..trials {
        let tb = BitVec::random(96, &mut rng);
        let frame = tx
            .modulate_signal(&build_prdch_frame(&tb, &cfg)?.chips)?
            .padded(200, 256);
        let chan = make_channel(
            &ChannelConfig {
                seed: trial,
                ..ChannelConfig::default()
            },
            frame.duration_s(),
            frame.sample_rate_hz,
        )?;
        let faded = apply_channel(&frame, &chan)?;
        let reference = snr_reference_power(&faded, 200..frame.len() - 256, 180e3);
        let rx = add_awgn_with(&faded, snr_db, reference, &mut rng)?;

        let env = envelope_detect(&rx, &cfg)?;
        let timing = acquire_timing_with(&env, &rtas, &cfg, &acq);
        for (e, det) in errors.iter_mut().zip(&detectors) {
            let ok = timing
                .as_ref()
                .is_ok_and(|t| receive_prdch(&env, t, &cfg, det).is_ok_and(|got| got == tb));
            *e += !ok as usize;
        }
    }
    println!("TDL-A, TBS 96, M=2, {snr_db} dB, {trials} frames");
    for (det, e) in detectors.iter().zip(errors) {
        println!(
            "{:>9} {:>17}: BLER {:.3}",
            format!("{:?}", det.thresholding),
            format!("{:?}", det.combining),
            e as f64 / trials as f64
        );
    }
    Ok(())
}
