//! Every line code applied to the same bits, then decoded back.

use aiot_phy::BitVec;
use aiot_phy::linecode::{LineScheme, line_decode, line_encode};

fn main() -> aiot_phy::Result<()> {
    let bits = BitVec::from_bits(vec![0, 1, 1, 0, 1, 0, 0, 0])?;
    let chip_s = 1.0 / 7500.0;
    for scheme in [
        LineScheme::Manchester,
        LineScheme::Pie,
        LineScheme::Fm0,
        LineScheme::Miller2,
        LineScheme::Miller4,
        LineScheme::Miller8,
    ] {
        let chips = line_encode(&bits, scheme, chip_s)?;
        let (decoded, _) = line_decode(&chips, scheme)?;
        assert_eq!(decoded, bits);
        let shown: String = chips.chips.iter().map(|&c| char::from(b'0' + c)).collect();
        println!(
            "{:>10}: {:3} chips, {:5.2} ms, {:2} transitions  {shown}",
            format!("{scheme:?}"),
            chips.len(),
            chips.total_duration_s() * 1e3,
            chips.transitions()
        );
    }
    Ok(())
}
