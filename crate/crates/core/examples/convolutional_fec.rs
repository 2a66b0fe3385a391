//! Tail-biting convolutional coding with soft Viterbi decoding over BPSK in
//! Gaussian noise, for each constraint length and rate.

use aiot_phy::BitVec;
use aiot_phy::fec::{
    CONSTRAINT_LENGTHS, CodeRate, ConvCode, SoftBits, conv_encode, viterbi_decode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> aiot_phy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sigma = 0.8;
    let noise = Normal::new(0.0, sigma).unwrap();
    let msg_len = 112;
    let blocks = 200;
    println!("channel sigma {sigma}, {blocks} blocks of {msg_len} bits");
    for k in CONSTRAINT_LENGTHS {
        for rate in CodeRate::ALL {
            let code = ConvCode::standard(k, rate)?;
            let mut bit_errors = 0;
            for _ in 0..blocks {
                let msg = BitVec::random(msg_len, &mut rng);
                let coded = conv_encode(&msg, &code)?;
                let rx: Vec<f64> = coded
                    .iter()
                    .map(|&b| 1.0 - 2.0 * b as f64 + noise.sample(&mut rng))
                    .collect();
                let decoded = viterbi_decode(&SoftBits::new(rx)?, &code, msg_len)?;
                bit_errors += decoded.hamming_distance(&msg);
            }
            println!(
                "K={k} rate 1/{}: BER {:.2e}",
                rate.inverse(),
                bit_errors as f64 / (blocks * msg_len) as f64
            );
        }
    }
    Ok(())
}
