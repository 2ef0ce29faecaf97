use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sqzadapt_core::{Mode, ProtocolConfig};
use sqzadapt_harness::campaign::{self, bounds_rows};
use sqzadapt_harness::raw::{ingest_recorded, write_raw, RAW_FILE};
use sqzadapt_harness::report::write_outputs;
use sqzadapt_harness::{CampaignKind, CampaignReport, CampaignSpec, HarnessError, Meta, Result};

#[derive(Parser)]
#[command(name = "sqzadapt", version, about = "Adaptive squeezed-vacuum phase estimation campaigns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CampaignArgs {
    /// Campaign config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// One simulated run of the first protocol template.
    Simulate {
        #[command(flatten)]
        args: CampaignArgs,
        /// Also write the per-sample record to `raw_runs.csv`.
        #[arg(long)]
        emit_raw: bool,
    },
    /// Estimation statistics over the true-phase grid.
    SweepPhase(CampaignArgs),
    /// Posterior statistics at increasing sample counts.
    Scaling(CampaignArgs),
    /// Estimation with the true squeezing offset from its calibration.
    Robustness(CampaignArgs),
    /// Estimation over a grid of squeezing values.
    SweepSqueezing(CampaignArgs),
    /// Quantum and classical bounds, without estimation.
    Bounds {
        /// Squeezing parameter r.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        r: Option<f64>,
        /// Detection efficiency.
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        eta: Option<f64>,
        /// Measurement budget (per-sample bounds when omitted).
        #[arg(long, conflicts_with = "config")]
        m: Option<usize>,
        /// Include the adaptive CRB of this protocol mode.
        #[arg(long, value_parser = parse_mode, conflicts_with = "config")]
        mode: Option<Mode>,
        /// Bounds campaign config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the protocol on recorded samples.
    Replay {
        /// Raw sample CSV (stage, theta_rad, x).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        args: CampaignArgs,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    match s {
        "single" => Ok(Mode::Single),
        "two-param" => Ok(Mode::TwoParam),
        "three-param" => Ok(Mode::ThreeParam),
        _ => Err(format!("unknown mode {s:?} (single, two-param, three-param)")),
    }
}

fn load(args: &CampaignArgs, kind: Option<CampaignKind>) -> Result<(CampaignSpec, PathBuf)> {
    let spec = CampaignSpec::load(&args.config)?;
    if let Some(kind) = kind {
        if spec.kind != kind {
            return Err(HarnessError::Config(format!(
                "{} describes a {} campaign, not {}",
                args.config.display(),
                spec.kind.as_str(),
                kind.as_str()
            )));
        }
    }
    let out = args.out.clone().unwrap_or_else(|| spec.output_dir.clone());
    Ok((spec, out))
}

fn finish(command: &str, dir: &Path, report: &CampaignReport, spec: Option<&CampaignSpec>, threads: usize, started: String) -> Result<()> {
    let mut meta = Meta::new(command, report, spec, threads);
    meta.started_at = started;
    write_outputs(dir, report, &meta)?;
    eprintln!("wrote {} rows to {}", report.rows.len(), dir.join("report.csv").display());
    Ok(())
}

fn sweep(command: &str, args: &CampaignArgs, kind: CampaignKind) -> Result<()> {
    let started = chrono::Utc::now().to_rfc3339();
    let (spec, out) = load(args, Some(kind))?;
    let threads = campaign::threads_from_env()?;
    let report = campaign::run_campaign(&spec, threads)?;
    finish(command, &out, &report, Some(&spec), threads, started)
}

fn run(cli: Cli) -> Result<()> {
    let started = chrono::Utc::now().to_rfc3339();
    match cli.command {
        Command::Simulate { args, emit_raw } => {
            let (spec, out) = load(&args, None)?;
            let (report, record) = campaign::simulate_single(&spec)?;
            if emit_raw {
                std::fs::create_dir_all(&out).map_err(|e| HarnessError::Io { path: out.clone(), source: e })?;
                write_raw(&out.join(RAW_FILE), &record.samples)?;
            }
            finish("simulate", &out, &report, Some(&spec), 1, started)
        }
        Command::SweepPhase(args) => sweep("sweep-phase", &args, CampaignKind::PhaseSweep),
        Command::Scaling(args) => sweep("scaling", &args, CampaignKind::Scaling),
        Command::Robustness(args) => sweep("robustness", &args, CampaignKind::Robustness),
        Command::SweepSqueezing(args) => sweep("sweep-squeezing", &args, CampaignKind::SqueezingSweep),
        Command::Bounds { r, eta, m, mode, config, out } => {
            if let Some(path) = config {
                let args = CampaignArgs { config: path, out };
                return sweep("bounds", &args, CampaignKind::Bounds);
            }
            let (r, eta) = (r.unwrap_or_default(), eta.unwrap_or_default());
            let templates: Vec<ProtocolConfig> = match mode {
                None => vec![],
                Some(Mode::Single) => vec![ProtocolConfig::single(r, eta)],
                Some(Mode::TwoParam) => vec![ProtocolConfig::two_param(eta)],
                Some(Mode::ThreeParam) => vec![ProtocolConfig::three_param()],
            };
            let rows = bounds_rows(0, r, eta, &templates, m)?;
            let report = CampaignReport { kind: CampaignKind::Bounds, rows };
            let out = out.unwrap_or_else(|| PathBuf::from("sqzadapt-out"));
            finish("bounds", &out, &report, None, 1, started)
        }
        Command::Replay { data, args } => {
            let (spec, out) = load(&args, None)?;
            let samples = ingest_recorded(&data)?;
            let (report, _) = campaign::replay(&spec, samples)?;
            finish("replay", &out, &report, Some(&spec), 1, started)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
