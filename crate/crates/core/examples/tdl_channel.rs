//! TDL-A fading: tap layout at two sample rates, the Rayleigh envelope of a
//! constant input, and its time correlation against the Doppler frequency.

use aiot_phy::channel::{ChannelConfig, apply_channel, make_channel};
use aiot_phy::signal::BasebandSignal;
use num_complex::Complex64;

fn main() -> aiot_phy::Result<()> {
    let cfg = ChannelConfig::default();
    println!(
        "Doppler {:.2} Hz at {} km/h, {} GHz",
        cfg.doppler_hz(),
        cfg.velocity_mps * 3.6,
        cfg.carrier_hz / 1e9
    );
    for fs in [1.92e6, 61.44e6] {
        let chan = make_channel(&cfg, 1e-3, fs)?;
        let delays: Vec<String> = chan
            .tap_delays_s
            .iter()
            .map(|d| format!("{:.0}", d * 1e9))
            .collect();
        println!(
            "{:5.2} Msps: {:2} distinct taps at [{}] ns",
            fs / 1e6,
            chan.n_taps(),
            delays.join(", ")
        );
    }

    // constant input through many realizations: power and deep-fade statistics
    let fs = 1e4;
    let dur = 0.5;
    let ones = BasebandSignal::single(vec![Complex64::new(1.0, 0.0); (dur * fs) as usize], fs);
    let (mut power, mut fades, mut n) = (0.0, 0, 0);
    for seed in 0..200 {
        let chan = make_channel(
            &ChannelConfig {
                seed,
                ..cfg.clone()
            },
            dur,
            fs,
        )?;
        let out = apply_channel(&ones, &chan)?;
        for x in &out.streams[0] {
            power += x.norm_sqr();
            fades += (x.norm_sqr() < 0.1) as usize;
            n += 1;
        }
    }
    println!(
        "mean power {:.3}, P(|h|^2 < 0.1) = {:.3} (Rayleigh: {:.3})",
        power / n as f64,
        fades as f64 / n as f64,
        1.0 - (-0.1f64).exp()
    );

    // the envelope decorrelates after about 0.38 / f_D
    let chan = make_channel(
        &ChannelConfig {
            seed: 1,
            ..cfg.clone()
        },
        2.0,
        fs,
    )?;
    let g = chan.tap_gains(0, 0, 0);
    for lag_s in [0.01, 0.05, 0.1, 0.2] {
        let lag = (lag_s * fs) as usize;
        let c: Complex64 = g
            .iter()
            .zip(&g[lag..])
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            / (g.len() - lag) as f64;
        let p: f64 = g.iter().map(|x| x.norm_sqr()).sum::<f64>() / g.len() as f64;
        println!(
            "first-tap correlation at {:4.0} ms: {:+.2}",
            lag_s * 1e3,
            c.re / p
        );
    }
    Ok(())
}
