//! CSV and JSON output of BLER curves.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlerPoint, SimConfig};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "snr_db,blocks,block_errors,bler,ci95";

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

/// A curve together with the configuration that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimResults {
    pub config_hash: String,
    pub config: SimConfig,
    pub points: Vec<BlerPoint>,
}

pub fn write_csv(points: &[BlerPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{}",
            p.snr_db, p.blocks, p.block_errors, p.bler, p.ci95_halfwidth
        )
        .unwrap();
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<BlerPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::MalformedFrame("CSV header mismatch".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::MalformedFrame(format!("bad CSV row {line:?}"));
            if f.len() != 5 {
                return Err(bad());
            }
            Ok(BlerPoint {
                snr_db: f[0].parse().map_err(|_| bad())?,
                blocks: f[1].parse().map_err(|_| bad())?,
                block_errors: f[2].parse().map_err(|_| bad())?,
                bler: f[3].parse().map_err(|_| bad())?,
                ci95_halfwidth: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Writes a curve; JSON output also records the resolved config and its hash.
pub fn export_results(
    points: &[BlerPoint],
    cfg: &SimConfig,
    path: &Path,
    format: ExportFormat,
) -> Result<()> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let text = match format {
        ExportFormat::Csv => write_csv(points),
        ExportFormat::Json => {
            let res = SimResults {
                config_hash: cfg.hash(),
                config: cfg.clone(),
                points: points.to_vec(),
            };
            serde_json::to_string_pretty(&res).expect("results serialize") + "\n"
        }
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points() -> Vec<BlerPoint> {
        vec![
            BlerPoint::new(-2.0, 2000, 1500),
            BlerPoint::new(0.5, 2000, 37),
            BlerPoint::new(3.0, 2000, 0),
        ]
    }

    #[test]
    fn csv_shape_and_round_trip() {
        let csv = write_csv(&points());
        assert_eq!(csv.lines().count(), 4);
        assert_eq!(
            csv.lines().next().unwrap(),
            "snr_db,blocks,block_errors,bler,ci95"
        );
        assert_eq!(parse_csv(&csv).unwrap(), points());
        assert!(parse_csv("snr,blocks\n").is_err());
    }

    #[test]
    fn json_round_trip_with_hash() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.json");
        let cfg = SimConfig::default();
        export_results(&points(), &cfg, &path, ExportFormat::Json).unwrap();
        let back: SimResults =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back.points, points());
        assert_eq!(back.config, cfg);
        assert_eq!(back.config_hash, back.config.hash());
        assert!(export_results(&[], &cfg, &path, ExportFormat::Csv).is_err());
    }
}
