//! Command-line front end for the BLER harness, random-access rounds and
//! codec inspection.
//!
//! Exit status: 0 on success, 1 for configuration or usage errors, 2 when a
//! run fails.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use aiot_phy::crc::crc_attach;
use aiot_phy::d2r::{build_pdrch_frame, receive_pdrch};
use aiot_phy::linecode::ChipSeq;
use aiot_phy::r2d::{R2dConfig, Thresholding, build_prdch_frame, decode_prdch};
use aiot_phy::random_access::{PagingMsg, no_collision_probability, simulate_round};
use aiot_phy::sim::{
    ExportFormat, Link, SimConfig, export_results, parse_sweep, run_bler, trial_seed, write_csv,
};
use aiot_phy::{BitVec, Error};

#[derive(Parser)]
#[command(
    name = "aiot-sim",
    version,
    about = "Ambient-IoT physical layer link simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reader-to-device BLER sweep.
    R2dBler(BlerArgs),
    /// Device-to-reader BLER sweep.
    D2rBler(BlerArgs),
    /// Contention-based random-access rounds.
    RaSim(RaArgs),
    /// Encode one transport block and decode it back without noise.
    Codec(CodecArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ThresholdArg {
    Fixed,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    R2d,
    D2r,
}

#[derive(Args)]
struct BlerArgs {
    /// TOML file with simulation parameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// SNR grid in dB as start:step:stop, or a single value.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    tbs: Option<usize>,
    /// Chips per OFDM symbol (reader-to-device).
    #[arg(long, value_parser = ["1", "2", "4"])]
    m: Option<String>,
    /// Chip threshold of the device receiver (reader-to-device).
    #[arg(long, value_enum)]
    threshold: Option<ThresholdArg>,
    #[arg(long)]
    rx_antennas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Minimum blocks per SNR point.
    #[arg(long)]
    blocks: Option<usize>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
    format: ExportFormat,
}

#[derive(Args)]
struct RaArgs {
    #[arg(long, default_value_t = 10)]
    devices: usize,
    #[arg(long, default_value_t = 16)]
    occasions: usize,
    #[arg(long, default_value_t = 10_000)]
    rounds: usize,
    /// Probability that a device has harvested enough energy to answer.
    #[arg(long, default_value_t = 1.0)]
    energize_prob: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
    format: ExportFormat,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long, value_enum, default_value_t = LinkArg::R2d)]
    link: LinkArg,
    /// Transport block as a string of 0/1; random when absent.
    #[arg(long)]
    bits: Option<String>,
    #[arg(long, default_value_t = 20)]
    tbs: usize,
    #[arg(long, value_parser = ["1", "2", "4"], default_value = "4")]
    m: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ExportFormat::Csv)]
    format: ExportFormat,
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(_) | Error::InvalidConfig(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::R2dBler(args) => bler(Link::R2d, &args),
        Command::D2rBler(args) => bler(Link::D2r, &args),
        Command::RaSim(args) => ra_sim(&args),
        Command::Codec(args) => codec(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn resolve_config(link: Link, args: &BlerArgs) -> Result<SimConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
            SimConfig::from_toml_str(&text)?
        }
        None => SimConfig::default(),
    };
    cfg.link = link;
    if let Some(snr) = &args.snr {
        cfg.snr_db = parse_sweep(snr)?;
    }
    if let Some(tbs) = args.tbs {
        cfg.tbs = tbs;
    }
    if let Some(m) = &args.m {
        cfg.r2d.m_chips_per_symbol = m.parse().expect("restricted by the parser");
    }
    if let Some(t) = args.threshold {
        cfg.r2d_detector.thresholding = match t {
            ThresholdArg::Fixed => Thresholding::Fixed,
            ThresholdArg::Adaptive => Thresholding::Adaptive,
        };
    }
    if let Some(n) = args.rx_antennas {
        cfg.channel.n_rx = n;
    }
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(blocks) = args.blocks {
        cfg.min_blocks = blocks;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn bler(link: Link, args: &BlerArgs) -> Result<(), Failure> {
    let cfg = resolve_config(link, args)?;
    let points = run_bler(&cfg)?;
    match &args.out {
        Some(path) => export_results(&points, &cfg, path, args.format)?,
        None => match args.format {
            ExportFormat::Csv => print!("{}", write_csv(&points)),
            ExportFormat::Json => {
                let res = aiot_phy::sim::SimResults {
                    config_hash: cfg.hash(),
                    config: cfg,
                    points,
                };
                println!(
                    "{}",
                    serde_json::to_string_pretty(&res).expect("results serialize")
                );
            }
        },
    }
    Ok(())
}

#[derive(Serialize)]
struct RaSummary {
    devices: usize,
    occasions: usize,
    rounds: usize,
    energize_prob: f64,
    collision_free_rounds: usize,
    p_collision_free: f64,
    p_collision_free_theory: f64,
    responded: usize,
    resolved: usize,
    collided: usize,
    false_success: usize,
}

fn ra_sim(args: &RaArgs) -> Result<(), Failure> {
    if args.rounds == 0 || !(0.0..=1.0).contains(&args.energize_prob) {
        return Err(Failure::Config(
            "rounds must be positive and energize_prob within [0, 1]".into(),
        ));
    }
    let page = PagingMsg::contention_based(args.occasions)?;
    let mut s = RaSummary {
        devices: args.devices,
        occasions: args.occasions,
        rounds: args.rounds,
        energize_prob: args.energize_prob,
        collision_free_rounds: 0,
        p_collision_free: 0.0,
        p_collision_free_theory: no_collision_probability(args.devices, args.occasions),
        responded: 0,
        resolved: 0,
        collided: 0,
        false_success: 0,
    };
    for r in 0..args.rounds {
        let stats = simulate_round(
            args.devices,
            &page,
            args.energize_prob,
            trial_seed(args.seed, 0, r),
        );
        s.collision_free_rounds += stats.collision_free() as usize;
        s.responded += stats.responded;
        s.resolved += stats.resolved;
        s.collided += stats.collided;
        s.false_success += stats.false_success;
    }
    s.p_collision_free = s.collision_free_rounds as f64 / args.rounds as f64;
    let text = match args.format {
        ExportFormat::Csv => format!(
            "devices,occasions,rounds,energize_prob,collision_free_rounds,p_collision_free,p_collision_free_theory,responded,resolved,collided,false_success\n\
             {},{},{},{},{},{},{},{},{},{},{}\n",
            s.devices,
            s.occasions,
            s.rounds,
            s.energize_prob,
            s.collision_free_rounds,
            s.p_collision_free,
            s.p_collision_free_theory,
            s.responded,
            s.resolved,
            s.collided,
            s.false_success
        ),
        ExportFormat::Json => serde_json::to_string_pretty(&s).expect("summary serializes") + "\n",
    };
    emit(&text, args.out.as_ref())
}

#[derive(Serialize)]
struct CodecReport {
    link: &'static str,
    tbs: usize,
    transport_block: String,
    crc_bits: usize,
    coded_block: String,
    frame_chips: usize,
    chips: String,
    decoded: String,
    identical: bool,
}

fn bit_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| char::from(b'0' + b)).collect()
}

fn codec(args: &CodecArgs) -> Result<(), Failure> {
    let tb = match &args.bits {
        Some(s) => {
            let bits = s
                .chars()
                .map(|c| c.to_digit(2).map(|d| d as u8))
                .collect::<Option<Vec<u8>>>();
            BitVec::from_bits(
                bits.ok_or_else(|| Failure::Config(format!("--bits {s:?} is not a 0/1 string")))?,
            )
            .map_err(|e| Failure::Config(e.to_string()))?
        }
        None => BitVec::random(args.tbs, &mut ChaCha8Rng::seed_from_u64(args.seed)),
    };
    let tbs = tb.len();
    let config_err = |e: Error| Failure::Config(e.to_string());
    let report = match args.link {
        LinkArg::R2d => {
            let cfg = R2dConfig::with_m(args.m.parse().expect("restricted by the parser"));
            let mode = cfg.crc.select(tbs).map_err(config_err)?;
            let frame = build_prdch_frame(&tb, &cfg).map_err(config_err)?;
            let data = ChipSeq::new(
                frame.chips[frame.rtas_chips..].to_vec(),
                cfg.chip_duration_s(),
            );
            let decoded = decode_prdch(&data, &cfg)?;
            CodecReport {
                link: "r2d",
                tbs,
                transport_block: bit_string(&tb),
                crc_bits: mode.len(),
                coded_block: bit_string(&crc_attach(&tb, mode)?),
                frame_chips: frame.chips.len(),
                chips: bit_string(&frame.chips),
                identical: decoded == tb,
                decoded: bit_string(&decoded),
            }
        }
        LinkArg::D2r => {
            let sched = SimConfig {
                tbs,
                ..SimConfig::default()
            }
            .d2r_schedule();
            let mode = sched.crc.select(tbs).map_err(config_err)?;
            let frame = build_pdrch_frame(&tb, &sched).map_err(config_err)?;
            let signal = aiot_phy::d2r::assemble_pdrch(&tb, &sched)?;
            let decoded = receive_pdrch(&signal, &sched, &Default::default())?;
            CodecReport {
                link: "d2r",
                tbs,
                transport_block: bit_string(&tb),
                crc_bits: mode.len(),
                coded_block: bit_string(&crc_attach(&tb, mode)?),
                frame_chips: frame.chips.len(),
                chips: bit_string(&frame.chips.chips),
                identical: decoded == tb,
                decoded: bit_string(&decoded),
            }
        }
    };
    let text = match args.format {
        ExportFormat::Csv => format!(
            "link,tbs,transport_block,crc_bits,coded_block,frame_chips,chips,decoded,identical\n{},{},{},{},{},{},{},{},{}\n",
            report.link,
            report.tbs,
            report.transport_block,
            report.crc_bits,
            report.coded_block,
            report.frame_chips,
            report.chips,
            report.decoded,
            report.identical
        ),
        ExportFormat::Json => {
            serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
        }
    };
    emit(&text, args.out.as_ref())?;
    if report.identical {
        Ok(())
    } else {
        Err(Failure::Runtime(
            "decoded block differs from the input".into(),
        ))
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
