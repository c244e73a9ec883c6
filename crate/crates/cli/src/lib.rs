//! Experiment runner for the hybrid RF/FSO C-RAN toolkit: seeded Monte
//! Carlo sweeps over the access-time fraction, the rate region, and the
//! transmit power, plus a self-check against the independent oracles.
//!
//! Result files are CSV with a `#`-prefixed metadata block embedding the
//! fully resolved configuration and seed; identical spec and seed produce
//! byte-identical files.

pub mod experiments;
pub mod output;

use std::path::PathBuf;

use cranopt::optimizer::Variant;
use cranopt::rates::{Detector, Quantizer, SchemePair};
use cranopt::sysmodel::SystemConfig;

/// Failure classes mapped to process exit codes: usage errors exit 1,
/// failed verification checks exit 2, solver/runtime errors exit 3.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Check(String),
    Run(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Check(_) => 2,
            CliError::Run(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Check(m) => write!(f, "check failure: {m}"),
            CliError::Run(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<cranopt::Error> for CliError {
    fn from(e: cranopt::Error) -> Self {
        match e {
            cranopt::Error::ConfigParse(_) | cranopt::Error::InvalidConfig(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Run(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(format!("i/o: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SweepAlpha,
    RateRegion,
    SumRate,
    OracleCheck,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SweepAlpha => "sweep-alpha",
            ExperimentKind::RateRegion => "rate-region",
            ExperimentKind::SumRate => "sum-rate",
            ExperimentKind::OracleCheck => "oracle-check",
        }
    }
}

/// Fully resolved description of one experiment run.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub pairs: Vec<SchemePair>,
    pub kappas: Vec<f64>,
    pub blocks: usize,
    /// Grid points of the weight sweep (rate-region only).
    pub mu_points: usize,
    /// Transmit-power grid in dBm (sum-rate only).
    pub power_dbm: Vec<f64>,
    pub out: PathBuf,
    pub seed: u64,
    pub variant: Variant,
    pub cfg: SystemConfig,
}

impl ExperimentSpec {
    pub fn validate(&self) -> CliResult<()> {
        if self.blocks < 1 {
            return Err(CliError::Usage("blocks must be >= 1".into()));
        }
        if self.pairs.is_empty() {
            return Err(CliError::Usage("no scheme/detector pair selected".into()));
        }
        if self.kappas.is_empty() {
            return Err(CliError::Usage("empty kappa list".into()));
        }
        if self.kind == ExperimentKind::RateRegion {
            if self.cfg.k != 2 {
                return Err(CliError::Usage("rate-region needs K = 2".into()));
            }
            if self.mu_points < 2 {
                return Err(CliError::Usage("rate-region needs at least 2 weight points".into()));
            }
        }
        if self.kind == ExperimentKind::SumRate && self.power_dbm.is_empty() {
            return Err(CliError::Usage("empty power grid".into()));
        }
        self.cfg
            .validate()
            .map_err(|v| CliError::Usage(format!("invalid configuration: {}", v.join("; "))))
    }
}

/// Parse `avq|rvq|dsc|all`.
pub fn parse_schemes(s: &str) -> CliResult<Vec<Quantizer>> {
    match s {
        "avq" => Ok(vec![Quantizer::Avq]),
        "rvq" => Ok(vec![Quantizer::Rvq]),
        "dsc" => Ok(vec![Quantizer::Dsc]),
        "all" => Ok(vec![Quantizer::Avq, Quantizer::Rvq, Quantizer::Dsc]),
        other => Err(CliError::Usage(format!("unknown scheme '{other}'"))),
    }
}

/// Parse `mmse|sic|all`.
pub fn parse_detectors(s: &str) -> CliResult<Vec<Detector>> {
    match s {
        "mmse" => Ok(vec![Detector::Mmse]),
        "sic" => Ok(vec![Detector::Sic]),
        "all" => Ok(vec![Detector::Mmse, Detector::Sic]),
        other => Err(CliError::Usage(format!("unknown detector '{other}'"))),
    }
}

/// Parse `aco|maco`.
pub fn parse_variant(s: &str) -> CliResult<Variant> {
    match s {
        "aco" => Ok(Variant::Aco),
        "maco" => Ok(Variant::MAco),
        other => Err(CliError::Usage(format!("unknown variant '{other}'"))),
    }
}

/// Cartesian product of the selected quantizers and detectors.
pub fn pairs_of(schemes: &[Quantizer], detectors: &[Detector]) -> Vec<SchemePair> {
    let mut out = Vec::new();
    for &q in schemes {
        for &d in detectors {
            out.push(SchemePair::new(q, d));
        }
    }
    out
}
