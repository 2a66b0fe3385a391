//! OOK-M DFT-spread-OFDM frames at the base station rate: symbol counts,
//! data rates and how much of the power lands in the scheduled resource block.

use aiot_phy::BitVec;
use aiot_phy::r2d::{PrdchTransmitter, R2dConfig, build_prdch_frame, r2d_data_rate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

fn main() -> aiot_phy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for tbs in [20, 96] {
        let tb = BitVec::random(tbs, &mut rng);
        for m in [1, 2, 4] {
            let cfg = R2dConfig::with_m(m);
            let frame = build_prdch_frame(&tb, &cfg)?;
            let tx = PrdchTransmitter::new(&cfg)?;
            let samples = tx.modulate(&frame.chips)?;
            let symbols = frame.n_symbols(m);
            let rate = r2d_data_rate(tbs, cfg.crc.select(tbs)?.len(), symbols)?;

            // power inside the 12 scheduled subcarriers over the whole frame
            let n = cfg.fft_size;
            let timeline = cfg.tx_timeline();
            let fft = FftPlanner::new().plan_fft_forward(n);
            let (mut total, mut inband) = (0.0, 0.0);
            for l in 0..symbols {
                let start = timeline.symbol_start(l) + timeline.cp_len(l);
                let mut sym = samples[start..start + n].to_vec();
                fft.process(&mut sym);
                total += sym.iter().map(|x| x.norm_sqr()).sum::<f64>();
                inband += (0..6)
                    .chain(n - 6..n)
                    .map(|k| sym[k].norm_sqr())
                    .sum::<f64>();
            }

            println!(
                "TBS {tbs:2} M={m}: {symbols:3} symbols ({:2} R-TAS), {:5.0} bit/s, {:6.2}% in band",
                frame.rtas_symbols(m),
                rate.effective_bps(cfg.scs_hz),
                100.0 * inband / total
            );
        }
    }
    Ok(())
}
