use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use cranopt::sysmodel::SystemConfig;
use cranopt_cli::experiments::{run_oracle_check, run_rate_region, run_sum_rate, run_sweep_alpha};
use cranopt_cli::{
    pairs_of, parse_detectors, parse_schemes, parse_variant, CliError, CliResult, ExperimentKind,
    ExperimentSpec,
};

/// Experiment runner for the uplink C-RAN with hybrid RF/FSO fronthaul.
#[derive(Parser)]
#[command(name = "cranopt", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sum rate vs. the access-time fraction, with the GSS optimum marked.
    SweepAlpha(Common),
    /// Two-user achievable rate region plus the virtual-MAC bound.
    RateRegion(RateRegionArgs),
    /// Average sum rate vs. the MU transmit power.
    SumRate(SumRateArgs),
    /// Verify the solver against the independent oracles.
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; baseline parameters when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Root seed for all random streams.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of fading blocks.
    #[arg(long, default_value_t = 100)]
    blocks: usize,
    /// Quantizer: avq | rvq | dsc | all.
    #[arg(long, default_value = "all")]
    scheme: String,
    /// Detector: mmse | sic | all.
    #[arg(long, default_value = "all")]
    detector: String,
    /// FSO weather attenuation values (comma separated); the configured
    /// value when omitted.
    #[arg(long, value_delimiter = ',')]
    kappa: Vec<f64>,
    /// Inner loop: aco | maco.
    #[arg(long, default_value = "maco")]
    variant: String,
    /// Output CSV path; `<experiment>.csv` when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RateRegionArgs {
    #[command(flatten)]
    common: Common,
    /// Number of weight grid points for the first user.
    #[arg(long, default_value_t = 11)]
    mu_points: usize,
}

#[derive(Args)]
struct SumRateArgs {
    #[command(flatten)]
    common: Common,
    /// Transmit-power grid in dBm (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "0,4,8,12,16,20")]
    power_dbm: Vec<f64>,
}

fn build_spec(
    kind: ExperimentKind,
    common: &Common,
    mu_points: usize,
    power_dbm: Vec<f64>,
) -> CliResult<ExperimentSpec> {
    let cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            SystemConfig::from_toml_str(&text)?
        }
        None => SystemConfig::baseline(2, 2, 2, 2),
    };
    let mut cfg = cfg;
    cfg.solver.rng_seed = common.seed;
    let kappas = if common.kappa.is_empty() {
        vec![cfg.kappa_db_per_km]
    } else {
        common.kappa.clone()
    };
    let pairs = pairs_of(&parse_schemes(&common.scheme)?, &parse_detectors(&common.detector)?);
    let out = common
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", kind.name())));
    Ok(ExperimentSpec {
        kind,
        pairs,
        kappas,
        blocks: common.blocks,
        mu_points,
        power_dbm,
        out,
        seed: common.seed,
        variant: parse_variant(&common.variant)?,
        cfg,
    })
}

fn run() -> CliResult<()> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::Usage(e.to_string())),
    };
    match cli.cmd {
        Cmd::SweepAlpha(common) => {
            let spec = build_spec(ExperimentKind::SweepAlpha, &common, 0, Vec::new())?;
            run_sweep_alpha(&spec)?;
            eprintln!("wrote {}", spec.out.display());
            Ok(())
        }
        Cmd::RateRegion(args) => {
            let spec = build_spec(
                ExperimentKind::RateRegion,
                &args.common,
                args.mu_points,
                Vec::new(),
            )?;
            run_rate_region(&spec)?;
            eprintln!("wrote {}", spec.out.display());
            Ok(())
        }
        Cmd::SumRate(args) => {
            let spec = build_spec(
                ExperimentKind::SumRate,
                &args.common,
                0,
                args.power_dbm.clone(),
            )?;
            run_sum_rate(&spec)?;
            eprintln!("wrote {}", spec.out.display());
            Ok(())
        }
        Cmd::OracleCheck(common) => {
            let spec = build_spec(ExperimentKind::OracleCheck, &common, 0, Vec::new())?;
            let report = run_oracle_check(&spec)?;
            for c in &report.checks {
                println!(
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            eprintln!("wrote {}", spec.out.display());
            if report.all_pass() {
                Ok(())
            } else {
                let names: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed)
                    .map(|c| c.name.as_str())
                    .collect();
                Err(CliError::Check(names.join(", ")))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
