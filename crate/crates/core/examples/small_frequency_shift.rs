//! Small frequency shift on the device-to-reader chips: both options, and
//! where the shift moves the spectral line.

use aiot_phy::BitVec;
use aiot_phy::d2r::{D2rSchedule, ShiftOption, build_pdrch_frame};
use aiot_phy::linecode::LineScheme;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use rustfft::num_complex::Complex64;

/// Frequency of the strongest non-DC line of a chip stream held for 8
/// samples per chip, averaged over segments of `seg` chips.
fn strongest_line(chips: &[u8], seg: usize, chip_s: f64) -> (f64, f64) {
    let up = 8;
    let n = seg * up;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut psd = vec![0.0; n];
    for block in chips.chunks_exact(seg) {
        let mut x: Vec<Complex64> = block
            .iter()
            .flat_map(|&c| std::iter::repeat_n(Complex64::new(2.0 * c as f64 - 1.0, 0.0), up))
            .collect();
        fft.process(&mut x);
        psd.iter_mut().zip(&x).for_each(|(p, v)| *p += v.norm_sqr());
    }
    let k = (1..n / 2)
        .max_by(|&a, &b| psd[a].total_cmp(&psd[b]))
        .unwrap();
    let bin = up as f64 / (n as f64 * chip_s);
    (k as f64 * bin, bin)
}

fn main() -> aiot_phy::Result<()> {
    let tb = BitVec::random(96, &mut ChaCha8Rng::seed_from_u64(2));
    let plain = build_pdrch_frame(&tb, &D2rSchedule::with_tbs(96))?
        .layout
        .data_chips();
    for r in [2, 4, 8] {
        for (option, line) in [
            (ShiftOption::RepeatCodeword, LineScheme::Manchester),
            (ShiftOption::SquareWaveMultiply, LineScheme::None),
        ] {
            let sched = D2rSchedule {
                shift_r: r,
                shift_option: option,
                line,
                ..D2rSchedule::with_tbs(96)
            };
            let frame = build_pdrch_frame(&tb, &sched)?;
            let start = frame.layout.dtas_chips;
            let data = &frame.chips.chips[start..start + frame.layout.data_chips()];
            let (line_hz, bin) = strongest_line(data, 16 * r as usize, frame.chips.chip_duration_s);
            println!(
                "R={r} {:>18}: {plain} -> {:4} data chips, strongest line {:5.0} Hz (bin {bin:.0} Hz), R/T_b = {:.0} Hz",
                format!("{option:?}"),
                data.len(),
                line_hz,
                sched.shift_frequency_hz()
            );
        }
    }
    Ok(())
}
