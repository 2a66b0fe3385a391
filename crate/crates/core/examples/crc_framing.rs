//! Attach and check the CRC chosen for a transport block size.

use aiot_phy::BitVec;
use aiot_phy::crc::{crc_attach, crc_check, select_crc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> aiot_phy::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for tbs in [8, 20, 96] {
        let tb = BitVec::random(tbs, &mut rng);
        let mode = select_crc(tbs)?;
        let frame = crc_attach(&tb, mode)?;
        println!(
            "TBS {tbs:3}: {mode:?}, frame of {} bits, remainder {:#x}",
            frame.len(),
            mode.remainder(&tb)
        );

        assert_eq!(crc_check(&frame, mode)?, tb);
        let mut corrupted = frame.clone().into_vec();
        corrupted[tbs / 2] ^= 1;
        println!(
            "          one flipped bit -> {}",
            crc_check(&corrupted, mode).unwrap_err()
        );
    }
    Ok(())
}
