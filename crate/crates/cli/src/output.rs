//! Deterministic CSV output with a `#`-prefixed metadata block.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::{CliResult, ExperimentSpec};

/// FNV-1a over the metadata content; serves as a reproducible run id.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Fixed-precision float formatting shared by all result files.
pub fn num(x: f64) -> String {
    format!("{x:.9e}")
}

fn spec_lines(spec: &ExperimentSpec) -> Vec<String> {
    let schemes: Vec<&str> = spec.pairs.iter().map(|p| p.quantizer.name()).collect();
    let detectors: Vec<&str> = spec.pairs.iter().map(|p| p.detector.name()).collect();
    let mut lines = vec![
        format!("experiment={}", spec.kind.name()),
        format!("seed={}", spec.seed),
        format!("blocks={}", spec.blocks),
        format!("variant={}", spec.variant.name()),
        format!("pairs={}", schemes.iter().zip(&detectors).map(|(s, d)| format!("{s}/{d}")).collect::<Vec<_>>().join(",")),
        format!("kappas={}", spec.kappas.iter().map(|k| num(*k)).collect::<Vec<_>>().join(",")),
    ];
    if spec.kind == crate::ExperimentKind::RateRegion {
        lines.push(format!("mu_points={}", spec.mu_points));
    }
    if spec.kind == crate::ExperimentKind::SumRate {
        lines.push(format!(
            "power_dbm={}",
            spec.power_dbm.iter().map(|p| num(*p)).collect::<Vec<_>>().join(",")
        ));
    }
    lines
}

/// Write a result file: metadata block (build id, spec, full resolved
/// configuration), one header line, then the data rows.
pub fn write_csv(spec: &ExperimentSpec, columns: &[&str], rows: &[String]) -> CliResult<()> {
    let mut meta = String::new();
    meta.push_str(&format!("# cranopt {}\n", env!("CARGO_PKG_VERSION")));
    for line in spec_lines(spec) {
        meta.push_str(&format!("# {line}\n"));
    }
    let cfg_toml = spec.cfg.to_toml_string();
    let mut body = String::new();
    body.push_str("# config_begin\n");
    for line in cfg_toml.lines() {
        body.push_str(&format!("# {line}\n"));
    }
    body.push_str("# config_end\n");

    let run_id = fnv1a64(format!("{meta}{body}").as_bytes());

    if let Some(dir) = spec.out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut f = fs::File::create(&spec.out)?;
    f.write_all(meta.as_bytes())?;
    writeln!(f, "# run_id={run_id:016x}")?;
    f.write_all(body.as_bytes())?;
    writeln!(f, "{}", columns.join(","))?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Minimal CSV reader for the files written above: returns (columns, rows),
/// skipping the metadata block. Used by tests and the check runner.
pub fn read_csv(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| crate::CliError::Run("empty result file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok((header, rows))
}
