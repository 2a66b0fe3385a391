//! Device-to-reader link: OOK Manchester frames over TDL-A, received on one
//! and two antennas with equal-gain combining.

use aiot_phy::BitVec;
use aiot_phy::channel::{
    ChannelConfig, add_awgn_with, apply_channel, make_channel, snr_reference_power,
};
use aiot_phy::d2r::{D2rReceiverConfig, D2rSchedule, assemble_pdrch, receive_pdrch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> aiot_phy::Result<()> {
    let sched = D2rSchedule::with_tbs(20);
    let rcv = D2rReceiverConfig::default();
    let trials = 200;
    let lead = 300;
    println!("TDL-A, TBS {}, {trials} frames per point", sched.tbs);
    for snr_db in [6.0, 10.0, 14.0] {
        let mut line = format!("{snr_db:4} dB:");
        for n_rx in [1, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut errors = 0;
            for trial in 0..trials {
                let tb = BitVec::random(sched.tbs, &mut rng);
                let frame = assemble_pdrch(&tb, &sched)?.padded(lead, 256);
                let ch = ChannelConfig {
                    seed: trial,
                    n_rx,
                    ..ChannelConfig::default()
                };
                let faded = apply_channel(
                    &frame,
                    &make_channel(&ch, frame.duration_s(), frame.sample_rate_hz)?,
                )?;
                // noise referred to the 15 kHz signal bandwidth
                let reference = snr_reference_power(&faded, lead..frame.len() - 256, 15e3);
                let rx = add_awgn_with(&faded, snr_db, reference, &mut rng)?;
                errors += (receive_pdrch(&rx, &sched, &rcv).ok() != Some(tb)) as usize;
            }
            line += &format!("  {n_rx} rx BLER {:.3}", errors as f64 / trials as f64);
        }
        println!("{line}");
    }
    Ok(())
}
