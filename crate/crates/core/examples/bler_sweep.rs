//! Short BLER sweeps on both links, written as CSV next to the binary.
//! Set AIOT_SIM_WORKERS to choose the number of threads.

use aiot_phy::r2d::{Combining, DetectorConfig, R2dConfig, Thresholding};
use aiot_phy::sim::{
    ExportFormat, Link, SimConfig, export_results, run_bler, run_r2d_variants, snr_at_bler, sweep,
};

fn main() -> aiot_phy::Result<()> {
    let base = SimConfig {
        snr_db: sweep(0.0, 4.0, 28.0)?,
        min_blocks: 200,
        ..SimConfig::default()
    };
    let dir = std::env::temp_dir();

    let r2d = SimConfig {
        tbs: 96,
        r2d: R2dConfig::with_m(2),
        ..base.clone()
    };
    let detectors = [
        DetectorConfig::new(Thresholding::Fixed, Combining::MeanPerChip),
        DetectorConfig::new(Thresholding::Adaptive, Combining::MeanPerChip),
    ];
    for (det, curve) in detectors.iter().zip(run_r2d_variants(&r2d, &detectors)?) {
        let path = dir.join(format!("r2d_tbs96_m2_{:?}.csv", det.thresholding).to_lowercase());
        export_results(&curve, &r2d, &path, ExportFormat::Csv)?;
        println!(
            "R2D {:?}: SNR at BLER 0.1 = {:?} dB -> {}",
            det.thresholding,
            snr_at_bler(&curve, 0.1),
            path.display()
        );
    }

    for n_rx in [1, 2] {
        let mut d2r = SimConfig {
            link: Link::D2r,
            ..base.clone()
        };
        d2r.channel.n_rx = n_rx;
        let curve = run_bler(&d2r)?;
        let path = dir.join(format!("d2r_tbs20_rx{n_rx}.json"));
        export_results(&curve, &d2r, &path, ExportFormat::Json)?;
        println!(
            "D2R {n_rx} rx: SNR at BLER 0.1 = {:?} dB -> {}",
            snr_at_bler(&curve, 0.1),
            path.display()
        );
    }
    Ok(())
}
