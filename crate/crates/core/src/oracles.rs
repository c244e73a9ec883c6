//! Independent reference implementations used by tests and acceptance runs.
//!
//! Everything here recomputes its answers from scratch scalar arithmetic
//! (hand-rolled small determinants, bisection, exhaustive grids) so that
//! agreement with the solver is evidence rather than tautology. No
//! linear-algebra kernel is shared with the optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::channel::ChannelRealization;
use crate::linalg::{C64, CMat};
use crate::optimizer::{lemma1_transform, lemma2_value, TransformedConstraints};
use crate::rates::{DistortionPattern, UnifiedProblem};
use crate::sysmodel::{noise_powers, SystemConfig};
use crate::{Error, Result};

/// Determinant of a small complex matrix by cofactor expansion (n <= 4).
fn det_small(a: &CMat) -> C64 {
    let n = a.nrows();
    match n {
        0 => C64::new(1.0, 0.0),
        1 => a[(0, 0)],
        2 => a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)],
        3 => {
            a[(0, 0)] * (a[(1, 1)] * a[(2, 2)] - a[(1, 2)] * a[(2, 1)])
                - a[(0, 1)] * (a[(1, 0)] * a[(2, 2)] - a[(1, 2)] * a[(2, 0)])
                + a[(0, 2)] * (a[(1, 0)] * a[(2, 1)] - a[(1, 1)] * a[(2, 0)])
        }
        _ => {
            let mut acc = C64::new(0.0, 0.0);
            let mut sign = 1.0;
            for col in 0..n {
                let minor = CMat::from_fn(n - 1, n - 1, |i, j| {
                    a[(i + 1, if j < col { j } else { j + 1 })]
                });
                acc += a[(0, col)] * det_small(&minor) * C64::new(sign, 0.0);
                sign = -sign;
            }
            acc
        }
    }
}

/// `log2 det` of a small Hermitian matrix via the cofactor determinant.
fn log2_det_small(a: &CMat) -> f64 {
    let d = det_small(a);
    debug_assert!(d.im.abs() <= 1e-8 * d.re.abs().max(1e-300), "determinant not real");
    d.re.log2()
}

// ---------------------------------------------------------------------------
// Scalar closed-form oracle (single user, single RU, single antenna)
// ---------------------------------------------------------------------------

/// Scalar-case reference solution.
#[derive(Debug, Clone)]
pub struct ScalarOracle {
    pub alpha0_star: f64,
    pub d_star: f64,
    pub t_star_bps: f64,
    /// `(alpha0, rate)` over the search grid.
    pub profile: Vec<(f64, f64)>,
    /// Largest positive second difference of the profile, relative to the
    /// profile peak (nonpositive-within-tolerance means concave).
    pub max_convexity_defect: f64,
    /// Worst `|F(alpha0, d*)|` across the grid, relative to the capacity
    /// scale.
    pub max_root_residual: f64,
}

/// Root of the tight source-coding constraint
/// `F(alpha0, d) = alpha0 f_s log2((P|h|^2 + d + sigma^2)/d) - (1-alpha0) C_rf - C_fso`,
/// which is strictly decreasing in `d`. Returns `None` when the constraint
/// is slack for every representable distortion (the root underflows), and
/// an error when it cannot be met at all.
pub fn scalar_distortion_root(
    p_h2: f64,
    sigma2: f64,
    f_s: f64,
    c_rf_term: f64,
    c_fso: f64,
    alpha0: f64,
) -> Result<Option<f64>> {
    let budget = (1.0 - alpha0) * c_rf_term + c_fso;
    let f = |d: f64| alpha0 * f_s * ((p_h2 + d + sigma2) / d).log2() - budget;
    if alpha0 == 0.0 {
        return Ok(None);
    }
    if budget <= 0.0 {
        return Err(Error::Infeasible("no fronthaul budget for the quantizer".into()));
    }
    let d_floor = 1e-14 * sigma2;
    if f(d_floor) <= 0.0 {
        // constraint inactive below any distortion that could affect the rate
        return Ok(None);
    }
    let mut lo = d_floor;
    let mut hi = d_floor.max(sigma2);
    let mut guard = 0;
    while f(hi) > 0.0 {
        hi *= 4.0;
        guard += 1;
        if guard > 4000 {
            return Err(Error::Infeasible("source-coding constraint never satisfied".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Reference solution for the scalar system: 2001-point grid over `alpha0`,
/// a bisection root for the unique constraint-tight distortion at each grid
/// point, and a local ternary refinement of the grid maximizer. Also
/// verifies concavity of the rate profile along the way.
pub fn scalar_oracle(cfg: &SystemConfig, real: &ChannelRealization) -> Result<ScalarOracle> {
    if cfg.k != 1 || cfg.m != 1 || cfg.n != 1 || cfg.l != 1 {
        return Err(Error::Unsupported("scalar oracle needs K = M = N = L = 1".into()));
    }
    let (sigma2, varrho2) = noise_powers(cfg);
    let p_h2 = cfg.p_k_watt() * real.h[(0, 0)].norm_sqr();

    // scalar capacities, from scratch
    let f2 = real.f[0][(0, 0)].norm_sqr();
    let c_rf = cfg.w_rf_hz * (1.0 + cfg.pbar_watt() * f2 / varrho2).log2();
    let g = real.g[0];
    let pf = cfg.pfso_watt();
    let c_fso = 0.5
        * cfg.w_fso_hz
        * (1.0 + std::f64::consts::E * pf * pf * g * g / (2.0 * std::f64::consts::PI * cfg.delta2_a2))
            .log2();

    let rate_at = |alpha0: f64| -> Result<(f64, f64, f64)> {
        if alpha0 == 0.0 {
            return Ok((0.0, 0.0, 0.0));
        }
        let root = scalar_distortion_root(p_h2, sigma2, cfg.f_s_hz, c_rf, c_fso, alpha0)?;
        let d = root.unwrap_or(0.0);
        let rate = alpha0 * cfg.w_rf_hz * ((p_h2 + d + sigma2) / (d + sigma2)).log2();
        let residual = match root {
            Some(d) => {
                (alpha0 * cfg.f_s_hz * ((p_h2 + d + sigma2) / d).log2()
                    - (1.0 - alpha0) * c_rf
                    - c_fso)
                    .abs()
            }
            None => 0.0,
        };
        Ok((rate, d, residual))
    };

    const GRID: usize = 2001;
    let mut profile = Vec::with_capacity(GRID);
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut max_residual = 0.0_f64;
    for i in 0..GRID {
        let alpha0 = i as f64 / (GRID - 1) as f64;
        let (rate, _, residual) = rate_at(alpha0)?;
        max_residual = max_residual.max(residual);
        profile.push((alpha0, rate));
        if rate > best.1 {
            best = (i, rate);
        }
    }
    let peak = best.1.max(1e-300);

    // concavity of the profile: second differences must not be positive
    let mut defect = f64::NEG_INFINITY;
    for w in profile.windows(3) {
        let dd = w[0].1 - 2.0 * w[1].1 + w[2].1;
        defect = defect.max(dd / peak);
    }

    // ternary refinement around the grid maximizer
    let step = 1.0 / (GRID - 1) as f64;
    let mut lo = (best.0 as f64 * step - step).max(0.0);
    let mut hi = (best.0 as f64 * step + step).min(1.0);
    for _ in 0..100 {
        let x1 = lo + (hi - lo) / 3.0;
        let x2 = hi - (hi - lo) / 3.0;
        if rate_at(x1)?.0 >= rate_at(x2)?.0 {
            hi = x2;
        } else {
            lo = x1;
        }
    }
    let alpha0_star = 0.5 * (lo + hi);
    let (t_star, d_star, _) = rate_at(alpha0_star)?;

    let cap_scale = ((1.0 - 0.5) * c_rf + c_fso).abs().max(1.0);
    Ok(ScalarOracle {
        alpha0_star,
        d_star,
        t_star_bps: t_star,
        profile,
        max_convexity_defect: defect,
        max_root_residual: max_residual / cap_scale,
    })
}

// ---------------------------------------------------------------------------
// Exhaustive grid oracle for tiny diagonal-distortion problems
// ---------------------------------------------------------------------------

/// Grid resolution for the exhaustive oracle. Distortion axes are
/// log-spaced multiples of `sigma^2`.
#[derive(Debug, Clone)]
pub struct OracleGrids {
    pub alpha_points: usize,
    pub d_points: usize,
    pub d_lo_rel: f64,
    pub d_hi_rel: f64,
}

impl Default for OracleGrids {
    fn default() -> Self {
        Self { alpha_points: 81, d_points: 61, d_lo_rel: 1e-4, d_hi_rel: 1e4 }
    }
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub alpha0: f64,
    pub d_diag: Vec<f64>,
    pub r: Vec<f64>,
    pub t_bps: f64,
}

fn is_diagonal_problem(up: &UnifiedProblem) -> bool {
    match up.pattern {
        DistortionPattern::Diagonal => true,
        DistortionPattern::BlockDiagonal { block } => block == 1,
        DistortionPattern::Dense => up.mn() == 1,
    }
}

/// Exhaustive search over `alpha0` and a log-spaced diagonal-distortion
/// grid, for problems with at most 3 free distortion parameters. The rate
/// vector is set to the smallest C1-feasible choice and checked against the
/// fronthaul constraint through the explicit per-RU time split. Extra
/// diagonal candidates can be appended to the grid.
pub fn brute_force_small(
    up: &UnifiedProblem,
    tc: &TransformedConstraints,
    grids: &OracleGrids,
    extra_d: &[Vec<f64>],
) -> Result<BruteForceResult> {
    let mut best: Option<BruteForceResult> = None;
    for i in 0..grids.alpha_points {
        let alpha0 = if grids.alpha_points == 1 {
            1.0
        } else {
            i as f64 / (grids.alpha_points - 1) as f64
        };
        if let Some(cand) = brute_force_at_alpha(up, tc, alpha0, grids, extra_d)? {
            if best.as_ref().map_or(true, |b| cand.t_bps > b.t_bps) {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| Error::Infeasible("no feasible grid point".into()))
}

/// Best feasible grid point at one fixed `alpha0`; `None` when every grid
/// point is infeasible there.
pub fn brute_force_at_alpha(
    up: &UnifiedProblem,
    tc: &TransformedConstraints,
    alpha0: f64,
    grids: &OracleGrids,
    extra_d: &[Vec<f64>],
) -> Result<Option<BruteForceResult>> {
    let mn = up.mn();
    if !is_diagonal_problem(up) || mn > 3 {
        return Err(Error::Unsupported(
            "exhaustive oracle handles diagonal distortions with at most 3 axes".into(),
        ));
    }
    let sigma2 = up.sigma2;

    // per-antenna signal powers c_n (the diagonal of C({m}) for the RU
    // owning antenna n)
    let mut c_diag = vec![0.0; mn];
    for (s_idx, t) in up.t_s.iter().enumerate() {
        if up.s_bar[s_idx].len() == 1 {
            for (local, &ant) in t.iter().enumerate() {
                c_diag[ant] = up.c_s[s_idx][(local, local)].re;
            }
        }
    }

    let mut axis = Vec::with_capacity(grids.d_points);
    for j in 0..grids.d_points {
        let frac = if grids.d_points == 1 { 0.5 } else { j as f64 / (grids.d_points - 1) as f64 };
        let expo = grids.d_lo_rel.log10() + frac * (grids.d_hi_rel / grids.d_lo_rel).log10();
        axis.push(sigma2 * 10f64.powf(expo));
    }

    let mut candidates: Vec<Vec<f64>> = Vec::new();
    let mut idx = vec![0usize; mn];
    loop {
        candidates.push(idx.iter().map(|&j| axis[j]).collect());
        let mut carry = 0;
        loop {
            idx[carry] += 1;
            if idx[carry] < axis.len() {
                break;
            }
            idx[carry] = 0;
            carry += 1;
            if carry == mn {
                break;
            }
        }
        if carry == mn {
            break;
        }
    }
    candidates.extend_from_slice(extra_d);

    let mut best: Option<BruteForceResult> = None;
    for d_diag in &candidates {
        if d_diag.len() != mn || d_diag.iter().any(|&d| !(d > 0.0)) {
            continue;
        }
        // minimal C1-feasible rates: per-RU sums of per-antenna terms
        let mut r = vec![0.0; up.m];
        for m in 0..up.m {
            let mut req = 0.0;
            for n in 0..up.n {
                let ant = m * up.n + n;
                req += ((c_diag[ant] + d_diag[ant] + sigma2) / d_diag[ant]).log2();
            }
            r[m] = alpha0 * up.f_s_hz * req;
        }
        // fronthaul check through the explicit per-RU time split
        let mut used = 0.0;
        let mut ok = true;
        for m in 0..up.m {
            if tc.c_rf[m] > 0.0 {
                used += ((r[m] - tc.c_fso[m]) / tc.c_rf[m]).max(0.0);
            } else if r[m] > tc.c_fso[m] {
                ok = false;
                break;
            }
        }
        if !ok || used > 1.0 - alpha0 {
            continue;
        }

        // weighted sum rate via hand-rolled determinants
        let dmat = CMat::from_fn(mn, mn, |i, j| {
            if i == j {
                C64::new(d_diag[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let mut t_bps = 0.0;
        for k in 0..up.k_users {
            let num = log2_det_small(&(&up.v[k] + &dmat));
            let den = log2_det_small(&(&up.w[k] + &dmat));
            t_bps += up.mu[k] * alpha0 * up.w_rf_hz * (num - den);
        }
        if best.as_ref().map_or(true, |b| t_bps > b.t_bps) {
            best = Some(BruteForceResult { alpha0, d_diag: d_diag.clone(), r, t_bps });
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Randomized lemma checkers
// ---------------------------------------------------------------------------

/// Deliberate defect injection for exercising the failure path of the
/// oracle-check runner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    /// Flip the comparison in the time-split existence test.
    FlipLemma1,
}

#[derive(Debug, Clone)]
pub struct CheckCounts {
    pub name: &'static str,
    pub trials: usize,
    pub failures: usize,
    /// Worst observed error for the tolerance-based checks.
    pub worst: f64,
    pub tolerance: f64,
}

impl CheckCounts {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone)]
pub struct LemmaReport {
    pub checks: Vec<CheckCounts>,
}

impl LemmaReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed())
    }

    pub fn failing(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect()
    }
}

/// Randomized equivalence and inequality sweeps for the two transforms the
/// solver is built on:
///
/// - constraint transform: membership of the subset form must coincide with
///   the existence of a per-RU time split (tested with the minimal split
///   `alpha_m = [(r_m - C_fso)/C_rf]^+`), across `M in {1, 2, 3}`;
/// - log-det bound: value at `Y = X^{-1}` equals `log2|X^{-1}|`, and random
///   PSD `Y` never exceed the bound.
pub fn lemma_checkers(seed: u64, l1_trials: usize, l2_trials: usize, fault: Fault) -> LemmaReport {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    // constraint-transform equivalence
    let mut l1_failures = 0;
    for trial in 0..l1_trials {
        let m = trial % 3 + 1;
        let c_fso: Vec<f64> = (0..m).map(|_| 10f64.powf(4.0 + 4.0 * rng.random::<f64>())).collect();
        let c_rf: Vec<f64> = (0..m).map(|_| 10f64.powf(4.0 + 4.0 * rng.random::<f64>())).collect();
        let alpha0: f64 = rng.random();
        let r: Vec<f64> = (0..m)
            .map(|i| rng.random::<f64>() * 1.3 * (c_fso[i] + (1.0 - alpha0) * c_rf[i]))
            .collect();

        let tc = lemma1_transform(&c_fso, &c_rf);
        let transformed = tc.satisfied(&r, alpha0);

        let needed: f64 = (0..m).map(|i| ((r[i] - c_fso[i]) / c_rf[i]).max(0.0)).sum();
        let existence = match fault {
            Fault::None => needed <= 1.0 - alpha0,
            Fault::FlipLemma1 => needed > 1.0 - alpha0,
        };
        if transformed != existence {
            l1_failures += 1;
        }
    }

    // log-det bound: equality at the optimum and the inequality sweep
    let mut eq_failures = 0;
    let mut eq_worst = 0.0_f64;
    let mut sweep_failures = 0;
    let mut sweep_worst = 0.0_f64;
    let dim = 4;
    for _ in 0..l2_trials {
        let g = CMat::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let x = crate::linalg::hermitize(&(&g * g.adjoint())) + crate::linalg::ceye(dim);
        // independent bound: log2|X^{-1}| = -log2 det(X) by cofactor expansion
        let bound = -log2_det_small(&x);

        let x_inv = crate::linalg::inv_hpd(&x).expect("X is PD");
        let at_opt = lemma2_value(&x, &x_inv).expect("dims match");
        let eq_err = (at_opt - bound).abs();
        eq_worst = eq_worst.max(eq_err);
        if eq_err > 1e-9 {
            eq_failures += 1;
        }

        let gy = CMat::from_fn(dim, dim, |_, _| {
            C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        let y = crate::linalg::hermitize(&(&gy * gy.adjoint()))
            + crate::linalg::ceye(dim) * C64::new(1e-6, 0.0);
        let val = lemma2_value(&x, &y).expect("dims match");
        let excess = val - bound;
        sweep_worst = sweep_worst.max(excess);
        if excess > 1e-9 {
            sweep_failures += 1;
        }
    }

    LemmaReport {
        checks: vec![
            CheckCounts {
                name: "lemma1-equivalence",
                trials: l1_trials,
                failures: l1_failures,
                worst: l1_failures as f64,
                tolerance: 0.0,
            },
            CheckCounts {
                name: "lemma2-equality",
                trials: l2_trials,
                failures: eq_failures,
                worst: eq_worst,
                tolerance: 1e-9,
            },
            CheckCounts {
                name: "lemma2-inequality",
                trials: l2_trials,
                failures: sweep_failures,
                worst: sweep_worst,
                tolerance: 1e-9,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{capacities, draw_block};
    use crate::rates::{build_unified, Detector, Quantizer, SchemePair, Weights};
    use crate::sysmodel::Seeder;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn scalar_cfg() -> SystemConfig {
        SystemConfig::baseline(1, 1, 1, 1)
    }

    #[test]
    fn det_small_matches_diagonal() {
        let a = CMat::from_fn(4, 4, |i, j| {
            if i == j {
                C64::new(i as f64 + 1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        assert!(rel(det_small(&a).re, 24.0) < 1e-12);
    }

    #[test]
    fn scalar_root_properties() {
        let cfg = scalar_cfg();
        let (sigma2, _) = noise_powers(&cfg);
        let p_h2 = 50.0 * sigma2;
        let f_s = cfg.f_s_hz;
        let (c_rf, c_fso) = (3e8, 2e7);
        for alpha0 in [0.2, 0.5, 0.9, 1.0] {
            let d = scalar_distortion_root(p_h2, sigma2, f_s, c_rf, c_fso, alpha0)
                .unwrap()
                .expect("active constraint for these budgets");
            let lhs = alpha0 * f_s * ((p_h2 + d + sigma2) / d).log2();
            let rhs = (1.0 - alpha0) * c_rf + c_fso;
            assert!(rel(lhs, rhs) < 1e-10, "residual at alpha0 = {alpha0}");
        }
        // alpha0 = 0: no constraint, no rate
        assert!(scalar_distortion_root(p_h2, sigma2, f_s, c_rf, c_fso, 0.0).unwrap().is_none());
    }

    #[test]
    fn scalar_oracle_profile_shape() {
        let cfg = scalar_cfg();
        let seeder = Seeder::new(5);
        let real = draw_block(&cfg, &seeder, 0);
        let oracle = scalar_oracle(&cfg, &real).unwrap();

        assert_eq!(oracle.profile[0], (0.0, 0.0));
        assert!(oracle.t_star_bps > 0.0);
        assert!(oracle.max_root_residual < 1e-10, "{}", oracle.max_root_residual);
        assert!(oracle.max_convexity_defect <= 1e-9, "{}", oracle.max_convexity_defect);
        assert!((0.0..=1.0).contains(&oracle.alpha0_star));
        // the refined optimum cannot be worse than the grid
        let grid_best = oracle.profile.iter().map(|&(_, r)| r).fold(0.0, f64::max);
        assert!(oracle.t_star_bps >= grid_best - 1e-6 * grid_best);
    }

    #[test]
    fn brute_force_scalar_agrees_with_scalar_oracle() {
        let cfg = scalar_cfg();
        let seeder = Seeder::new(6);
        let real = draw_block(&cfg, &seeder, 1);
        let cap = capacities(&real, &cfg);
        let up = build_unified(
            &cfg,
            &real.h,
            &cap,
            SchemePair::new(Quantizer::Avq, Detector::Mmse),
            &Weights::uniform(1),
        )
        .unwrap();
        let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);
        let grids = OracleGrids { alpha_points: 201, d_points: 121, ..OracleGrids::default() };
        let bf = brute_force_small(&up, &tc, &grids, &[]).unwrap();
        let oracle = scalar_oracle(&cfg, &real).unwrap();
        // grid resolution bounds the gap
        assert!(rel(bf.t_bps, oracle.t_star_bps) < 0.02, "{} vs {}", bf.t_bps, oracle.t_star_bps);
        assert!(bf.t_bps <= oracle.t_star_bps * (1.0 + 1e-9));
    }

    #[test]
    fn brute_force_alpha_one_is_fso_only() {
        let cfg = SystemConfig::baseline(1, 1, 2, 2);
        let seeder = Seeder::new(7);
        let real = draw_block(&cfg, &seeder, 0);
        let cap = capacities(&real, &cfg);
        let up = build_unified(
            &cfg,
            &real.h,
            &cap,
            SchemePair::new(Quantizer::Avq, Detector::Mmse),
            &Weights::uniform(1),
        )
        .unwrap();
        let tc = lemma1_transform(&cap.c_fso, &cap.c_rf);
        // at alpha0 = 1 the RF fronthaul gets no time: zeroing its capacity
        // must not change anything
        let tc_fso_only = lemma1_transform(&cap.c_fso, &vec![0.0; cfg.m]);
        let grids = OracleGrids::default();
        let a = brute_force_at_alpha(&up, &tc, 1.0, &grids, &[]).unwrap().unwrap();
        let b = brute_force_at_alpha(&up, &tc_fso_only, 1.0, &grids, &[]).unwrap().unwrap();
        assert_eq!(a.d_diag, b.d_diag);
        assert!(rel(a.t_bps, b.t_bps) < 1e-12);
    }

    #[test]
    fn lemma_checkers_pass_and_fault_injection() {
        let report = lemma_checkers(11, 3000, 500, Fault::None);
        assert!(report.all_pass(), "failing: {:?}", report.failing());

        let injected = lemma_checkers(11, 3000, 500, Fault::FlipLemma1);
        assert!(!injected.all_pass());
        assert_eq!(injected.failing(), vec!["lemma1-equivalence"]);
    }
}
