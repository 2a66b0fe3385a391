//! Gold-family D-TAS sequences: periodic autocorrelation and the worst
//! cross-correlation between family members.

use aiot_phy::d2r::build_dtas;

fn periodic(a: &[u8], b: &[u8], shift: usize) -> i64 {
    let n = a.len();
    (0..n)
        .map(|i| if a[i] == b[(i + shift) % n] { 1 } else { -1 })
        .sum()
}

fn main() -> aiot_phy::Result<()> {
    for len in [31, 63, 127] {
        let mut family = Vec::new();
        while let Ok(d) = build_dtas(len, family.len()) {
            family.push(d.chips().to_vec());
        }
        let auto_side = (1..len)
            .map(|s| periodic(&family[0], &family[0], s))
            .collect::<std::collections::BTreeSet<_>>();
        let mut cross = 0;
        for i in 0..family.len() {
            for j in i + 1..family.len() {
                cross = cross.max(
                    (0..len)
                        .map(|s| periodic(&family[i], &family[j], s).abs())
                        .max()
                        .unwrap(),
                );
            }
        }
        println!(
            "length {len:3}: {:3} sequences, sidelobes of #0 {auto_side:?}, max |cross| {cross}",
            family.len()
        );
    }
    println!("{}", build_dtas(15, 0).unwrap_err());
    Ok(())
}
