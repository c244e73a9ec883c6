//! The four experiment runners.
//!
//! Blocks and grid points are dispatched to a rayon worker pool; every job
//! carries an index and the gathered rows are sorted on it before writing,
//! so scheduling cannot affect the output bytes.

use rayon::prelude::*;

use cranopt::channel::{capacities, draw_block, CapacityVector, ChannelRealization};
use cranopt::linalg::{ceye_scaled, logdet2_hpd, CMat, CVec, C64};
use cranopt::optimizer::{aco_inner, gss_outer, lemma1_transform, solve};
use cranopt::oracles::{
    brute_force_small, lemma_checkers, scalar_oracle, Fault, OracleGrids,
};
use cranopt::rates::{build_unified, Detector, Quantizer, SchemePair, Weights};
use cranopt::sysmodel::{noise_powers, Seeder, SystemConfig};

use crate::output::{num, write_csv};
use crate::{CliError, CliResult, ExperimentSpec};

const MBPS: f64 = 1e6;

fn block_inputs(cfg: &SystemConfig, seed: u64, block: u64) -> (ChannelRealization, CapacityVector) {
    let seeder = Seeder::new(seed);
    let real = draw_block(cfg, &seeder, block);
    let cap = capacities(&real, cfg);
    (real, cap)
}

/// Sum rate vs. the access-time fraction: one fading realization per
/// attenuation value, a 21-point grid over `alpha0` per scheme pair, and
/// the GSS optimum marked on every row.
pub fn run_sweep_alpha(spec: &ExperimentSpec) -> CliResult<()> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &kappa in &spec.kappas {
        let mut cfg = spec.cfg.clone();
        cfg.kappa_db_per_km = kappa;
        cfg.solver.rng_seed = spec.seed;
        let (real, cap) = block_inputs(&cfg, spec.seed, 0);
        for &pair in &spec.pairs {
            let up = build_unified(&cfg, &real.h, &cap, pair, &Weights::uniform(cfg.k))?;
            let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);

            let grid: Vec<usize> = (0..21).collect();
            let mut points: Vec<(usize, f64, f64)> = grid
                .par_iter()
                .map(|&i| {
                    let alpha0 = i as f64 / 20.0;
                    let out = aco_inner(&up, &tc, alpha0, spec.variant, &cfg.solver)?;
                    Ok((i, alpha0, out.t_bps))
                })
                .collect::<CliResult<_>>()?;
            points.sort_by_key(|&(i, _, _)| i);

            let sol = gss_outer(&up, &tc, spec.variant, &cfg.solver)?;
            for (_, alpha0, t_bps) in points {
                rows.push(format!(
                    "{},{},{},{},{},{},{}",
                    num(kappa),
                    pair.quantizer.name(),
                    pair.detector.name(),
                    num(alpha0),
                    num(t_bps / MBPS),
                    num(sol.alpha_star.alpha0),
                    num(sol.weighted_sum_rate / MBPS),
                ));
            }
        }
    }
    write_csv(
        spec,
        &["kappa_db_per_km", "scheme", "detector", "alpha0", "t_mbps", "alpha0_star", "t_star_mbps"],
        &rows,
    )
}

/// Per-user SIC rates of the virtual MAC bound (no quantization noise,
/// unconstrained fronthaul, all RF time on the access links), in the
/// original user order.
pub fn vmac_rates(cfg: &SystemConfig, real: &ChannelRealization, mu: &Weights) -> CliResult<Vec<f64>> {
    let cap = capacities(real, cfg);
    let up = build_unified(
        cfg,
        &real.h,
        &cap,
        SchemePair::new(Quantizer::Dsc, Detector::Sic),
        mu,
    )?;
    let d0 = CMat::zeros(up.mn(), up.mn());
    Ok(up.user_rates_original_order(1.0, &d0)?)
}

/// Membership of a two-user rate pair in the virtual-MAC region
/// (polymatroid with the per-user and sum-rate log-det bounds).
pub fn vmac_region_contains(
    cfg: &SystemConfig,
    real: &ChannelRealization,
    rates: &[f64],
    tol_rel: f64,
) -> CliResult<bool> {
    if cfg.k != 2 || rates.len() != 2 {
        return Err(CliError::Usage("virtual-MAC membership check needs K = 2".into()));
    }
    let (sigma2, _) = noise_powers(cfg);
    let mn = cfg.mn();
    let p = cfg.p_k_watt();
    let bound = |users: &[usize]| -> CliResult<f64> {
        let mut m = ceye_scaled(mn, sigma2);
        for &k in users {
            let hk: CVec = real.h.column(k).into();
            m += &hk * hk.adjoint() * C64::new(p, 0.0);
        }
        let num_ld = logdet2_hpd(&m)
            .ok_or_else(|| CliError::Run("virtual-MAC bound matrix not PD".into()))?;
        Ok(cfg.w_rf_hz * (num_ld - (mn as f64) * sigma2.log2()))
    };
    let i1 = bound(&[0])?;
    let i2 = bound(&[1])?;
    let i12 = bound(&[0, 1])?;
    let ok = rates[0] <= i1 * (1.0 + tol_rel)
        && rates[1] <= i2 * (1.0 + tol_rel)
        && rates[0] + rates[1] <= i12 * (1.0 + tol_rel);
    Ok(ok)
}

/// Achievable rate region for two users: sweep the first user's weight,
/// solve per block, average the per-user rates, and append the virtual-MAC
/// frontier.
pub fn run_rate_region(spec: &ExperimentSpec) -> CliResult<()> {
    spec.validate()?;
    let mut cfg = spec.cfg.clone();
    cfg.kappa_db_per_km = spec.kappas[0];
    cfg.solver.rng_seed = spec.seed;

    let mu_grid: Vec<f64> = (0..spec.mu_points)
        .map(|j| j as f64 / (spec.mu_points - 1) as f64)
        .collect();

    // jobs: (pair index or vmac, mu index, block)
    struct Job {
        pair: Option<SchemePair>,
        mu_idx: usize,
        block: u64,
    }
    let mut jobs = Vec::new();
    for (pi, _) in spec.pairs.iter().enumerate() {
        for mu_idx in 0..mu_grid.len() {
            for block in 0..spec.blocks as u64 {
                jobs.push(Job { pair: Some(spec.pairs[pi]), mu_idx, block });
            }
        }
    }
    for mu_idx in 0..mu_grid.len() {
        for block in 0..spec.blocks as u64 {
            jobs.push(Job { pair: None, mu_idx, block });
        }
    }

    let results: Vec<(usize, Vec<f64>)> = jobs
        .par_iter()
        .enumerate()
        .map(|(ji, job)| {
            let mu1 = mu_grid[job.mu_idx];
            let mu = Weights::new(vec![mu1, 1.0 - mu1])
                .map_err(|e| CliError::Run(e.to_string()))?;
            let (real, cap) = block_inputs(&cfg, spec.seed, job.block);
            let rates = match job.pair {
                Some(pair) => {
                    let up = build_unified(&cfg, &real.h, &cap, pair, &mu)?;
                    let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);
                    gss_outer(&up, &tc, spec.variant, &cfg.solver)?.user_rates
                }
                None => vmac_rates(&cfg, &real, &mu)?,
            };
            Ok((ji, rates))
        })
        .collect::<CliResult<_>>()?;
    let mut by_job = vec![Vec::new(); jobs.len()];
    for (ji, rates) in results {
        by_job[ji] = rates;
    }

    // average over blocks in job order
    let mut rows = Vec::new();
    let mut ji = 0;
    let mut emit = |label_scheme: &str, label_det: &str, mu_idx: usize, acc: &[f64]| {
        let mu1 = mu_grid[mu_idx];
        rows.push(format!(
            "{},{},{},{},{},{}",
            label_scheme,
            label_det,
            num(mu1),
            num(1.0 - mu1),
            num(acc[0] / spec.blocks as f64 / MBPS),
            num(acc[1] / spec.blocks as f64 / MBPS),
        ));
    };
    for pair in &spec.pairs {
        for mu_idx in 0..mu_grid.len() {
            let mut acc = vec![0.0; 2];
            for _ in 0..spec.blocks {
                acc[0] += by_job[ji][0];
                acc[1] += by_job[ji][1];
                ji += 1;
            }
            emit(pair.quantizer.name(), pair.detector.name(), mu_idx, &acc);
        }
    }
    for mu_idx in 0..mu_grid.len() {
        let mut acc = vec![0.0; 2];
        for _ in 0..spec.blocks {
            acc[0] += by_job[ji][0];
            acc[1] += by_job[ji][1];
            ji += 1;
        }
        emit("vmac", "sic", mu_idx, &acc);
    }

    write_csv(
        spec,
        &["scheme", "detector", "mu1", "mu2", "r1_mbps", "r2_mbps"],
        &rows,
    )
}

/// Average sum rate vs. the MU transmit power.
pub fn run_sum_rate(spec: &ExperimentSpec) -> CliResult<()> {
    spec.validate()?;
    let mut base = spec.cfg.clone();
    base.kappa_db_per_km = spec.kappas[0];
    base.solver.rng_seed = spec.seed;

    let mut jobs = Vec::new();
    for (gi, &p_dbm) in spec.power_dbm.iter().enumerate() {
        for (pi, &pair) in spec.pairs.iter().enumerate() {
            for block in 0..spec.blocks as u64 {
                jobs.push((gi, pi, block, p_dbm, pair));
            }
        }
    }
    let results: Vec<(usize, f64)> = jobs
        .par_iter()
        .enumerate()
        .map(|(ji, &(_, _, block, p_dbm, pair))| {
            let mut cfg = base.clone();
            cfg.p_k_dbm = p_dbm;
            let (real, cap) = block_inputs(&cfg, spec.seed, block);
            let up = build_unified(&cfg, &real.h, &cap, pair, &Weights::uniform(cfg.k))?;
            let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);
            let sol = gss_outer(&up, &tc, spec.variant, &cfg.solver)?;
            Ok((ji, sol.weighted_sum_rate))
        })
        .collect::<CliResult<_>>()?;
    let mut t_by_job = vec![0.0; jobs.len()];
    for (ji, t) in results {
        t_by_job[ji] = t;
    }

    let mut rows = Vec::new();
    let mut ji = 0;
    for &p_dbm in &spec.power_dbm {
        for pair in &spec.pairs {
            let mut acc = 0.0;
            for _ in 0..spec.blocks {
                acc += t_by_job[ji];
                ji += 1;
            }
            rows.push(format!(
                "{},{},{},{},{}",
                num(p_dbm),
                pair.quantizer.name(),
                pair.detector.name(),
                base.n,
                num(acc / spec.blocks as f64 / MBPS),
            ));
        }
    }
    write_csv(spec, &["p_dbm", "scheme", "detector", "n", "t_mbps"], &rows)
}

/// One verification check of the oracle-check runner.
#[derive(Debug, Clone)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct OracleCheckReport {
    pub checks: Vec<CheckLine>,
}

impl OracleCheckReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Run the oracle suite: the scalar closed-form reference against the full
/// pipeline, the exhaustive grid oracle against the pipeline, and the
/// randomized lemma checkers. Writes one CSV row per check.
pub fn run_oracle_check(spec: &ExperimentSpec) -> CliResult<OracleCheckReport> {
    run_oracle_check_with_fault(spec, Fault::None)
}

/// Same as [`run_oracle_check`] with a deliberate defect injected into one
/// checker; exercised by the exit-code tests.
pub fn run_oracle_check_with_fault(
    spec: &ExperimentSpec,
    fault: Fault,
) -> CliResult<OracleCheckReport> {
    spec.validate()?;
    let mut checks = Vec::new();

    // scalar closed-form oracle vs pipeline
    {
        let mut cfg = SystemConfig::baseline(1, 1, 1, 1);
        cfg.solver = spec.cfg.solver.clone();
        cfg.kappa_db_per_km = spec.kappas[0];
        let blocks = spec.blocks.min(50) as u64;
        let worst: CliResult<Vec<f64>> = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let (real, cap) = block_inputs(&cfg, spec.seed, block);
                let up = build_unified(
                    &cfg,
                    &real.h,
                    &cap,
                    SchemePair::new(Quantizer::Avq, Detector::Mmse),
                    &Weights::uniform(1),
                )?;
                let sol = solve(&up, spec.variant, &cfg.solver)?;
                let oracle = scalar_oracle(&cfg, &real).map_err(CliError::from)?;
                Ok((sol.weighted_sum_rate - oracle.t_star_bps).abs() / oracle.t_star_bps)
            })
            .collect();
        let worst = worst?.into_iter().fold(0.0_f64, f64::max);
        checks.push(CheckLine {
            name: "scalar-oracle-match".into(),
            passed: worst <= 0.01,
            detail: format!("worst rel err {worst:.3e} over {blocks} blocks, tol 1e-2"),
        });
    }

    // exhaustive grid oracle vs pipeline
    {
        let mut cfg = SystemConfig::baseline(2, 1, 2, 2);
        cfg.solver = spec.cfg.solver.clone();
        cfg.kappa_db_per_km = spec.kappas[0];
        let blocks = spec.blocks.min(20) as u64;
        let grids = OracleGrids::default();
        let spans: CliResult<Vec<(f64, f64)>> = (0..blocks)
            .into_par_iter()
            .map(|block| {
                let (real, cap) = block_inputs(&cfg, spec.seed, block);
                let up = build_unified(
                    &cfg,
                    &real.h,
                    &cap,
                    SchemePair::new(Quantizer::Avq, Detector::Sic),
                    &Weights::uniform(2),
                )?;
                let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);
                let sol = gss_outer(&up, &tc, spec.variant, &cfg.solver)?;
                let oracle = brute_force_small(&up, &tc, &grids, &[]).map_err(CliError::from)?;
                let rel = (sol.weighted_sum_rate - oracle.t_bps) / oracle.t_bps;
                Ok((rel, rel))
            })
            .collect();
        let spans = spans?;
        let low = spans.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
        let high = spans.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
        checks.push(CheckLine {
            name: "brute-force-match".into(),
            passed: low >= -0.02 && high <= 0.03,
            detail: format!(
                "pipeline vs grid over {blocks} blocks: rel in [{low:.3e}, {high:.3e}], bounds [-2e-2, 3e-2]"
            ),
        });
    }

    // randomized lemma sweeps
    {
        let report = lemma_checkers(spec.seed, 10_000, 1_000, fault);
        for c in &report.checks {
            checks.push(CheckLine {
                name: c.name.into(),
                passed: c.passed(),
                detail: format!(
                    "{} trials, {} failures, worst {:.3e}, tol {:.1e}",
                    c.trials, c.failures, c.worst, c.tolerance
                ),
            });
        }
    }

    let rows: Vec<String> = checks
        .iter()
        .map(|c| {
            format!(
                "{},{},{}",
                c.name,
                if c.passed { "pass" } else { "fail" },
                c.detail.replace(',', ";")
            )
        })
        .collect();
    write_csv(spec, &["check", "status", "detail"], &rows)?;
    Ok(OracleCheckReport { checks })
}
