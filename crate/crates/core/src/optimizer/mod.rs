//! Joint optimization of the RF time split and the quantization-noise
//! covariance matrices.
//!
//! Outer loop: golden section search over the access-time fraction `alpha0`
//! (the weighted sum rate is unimodal in `alpha0`; proven for the scalar
//! case, observed empirically in general). Inner loop: alternating convex
//! optimization over the distortion matrix `D`, the quantizer rates `r`,
//! and auxiliary matrices `B_k` (plus `A(S)` for the modified variant) that
//! convexify the log-det objective and the source-coding constraint.
//!
//! The fronthaul channel-coding constraint is first rewritten so that only
//! `alpha0` remains of the time-allocation vector: for every nonempty RU
//! subset `S`,
//!
//! ```text
//! sum_{m in S} r_m G_m(S) <= (1 - alpha0) G(S) + sum_{m in S} G_m(S) C_m^fso,
//! G_m(S) = prod_{m' in S} C_{m'}^rf / C_m^rf,   G(S) = prod_{m in S} C_m^rf.
//! ```
//!
//! The per-RU fractions are recovered afterwards as
//! `alpha_m = [(r_m - C_m^fso) / C_m^rf]^+`; any leftover RF time stays
//! unallocated and is reported as idle.

pub mod inner;

use std::time::{Duration, Instant};

use crate::linalg::{
    ceye_scaled, extract, hermitize, inv_hpd, logdet2_floored, logdet2_hpd, re_trace_prod, C64,
    CMat, LN2,
};
use crate::rates::{DistortionMatrix, QuantizerRates, UnifiedProblem, DISTORTION_FLOOR_REL};
use crate::sysmodel::SolverOptions;
use crate::{Error, Result};

pub use inner::{InnerContext, InnerProblem};

pub const GOLDEN_RATIO: f64 = 1.618033988749895;

/// Inner-loop flavor: `Aco` keeps the true source-coding constraint;
/// `MAco` replaces it with the linearized bound through `A(S)` and is the
/// default.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Aco,
    MAco,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Aco => "aco",
            Variant::MAco => "maco",
        }
    }
}

/// RF time-slot split: `alpha0` for the multiple-access links, `alpha_m`
/// per RU fronthaul link, and any unallocated remainder.
#[derive(Debug, Clone)]
pub struct TimeAllocation {
    pub alpha0: f64,
    pub alpha_m: Vec<f64>,
    pub idle: f64,
}

impl TimeAllocation {
    pub fn total(&self) -> f64 {
        self.alpha0 + self.alpha_m.iter().sum::<f64>() + self.idle
    }

    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (-1e-12..=1.0 + 1e-12).contains(&v);
        if !in_unit(self.alpha0)
            || !self.alpha_m.iter().all(|&a| in_unit(a))
            || !in_unit(self.idle)
        {
            return Err(Error::Numerical("time fractions outside [0, 1]".into()));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "time fractions sum to {} != 1",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Channel-coding constraint rewritten per RU subset (only `alpha0` left as
/// a time variable). RUs whose RF fronthaul capacity is zero degenerate to
/// plain caps `r_m <= C_m^fso` and are dropped from the product terms.
#[derive(Debug, Clone)]
pub struct TransformedConstraints {
    /// Nonempty subsets of the RUs with positive RF capacity.
    pub subsets: Vec<Vec<usize>>,
    /// `G_m(S)` aligned with `subsets[i]`.
    pub g_m: Vec<Vec<f64>>,
    /// `G(S)`.
    pub g: Vec<f64>,
    /// `sum_{m in S} G_m(S) C_m^fso`.
    pub fso_offset: Vec<f64>,
    /// RUs with zero RF fronthaul capacity.
    pub degenerate: Vec<usize>,
    pub c_fso: Vec<f64>,
    pub c_rf: Vec<f64>,
}

impl TransformedConstraints {
    /// Exact membership test of the transformed constraint set.
    pub fn satisfied(&self, r: &[f64], alpha0: f64) -> bool {
        for (i, s) in self.subsets.iter().enumerate() {
            let lhs: f64 = s.iter().zip(&self.g_m[i]).map(|(&m, &gm)| r[m] * gm).sum();
            if lhs > (1.0 - alpha0) * self.g[i] + self.fso_offset[i] {
                return false;
            }
        }
        self.degenerate.iter().all(|&m| r[m] <= self.c_fso[m])
    }
}

/// Rewrite the channel-coding constraint over every nonempty RU subset.
pub fn lemma1_transform(c_fso: &[f64], c_rf: &[f64]) -> TransformedConstraints {
    assert_eq!(c_fso.len(), c_rf.len());
    let m = c_rf.len();
    let nondeg: Vec<usize> = (0..m).filter(|&i| c_rf[i] > 0.0).collect();
    let degenerate: Vec<usize> = (0..m).filter(|&i| !(c_rf[i] > 0.0)).collect();

    let mut subsets = Vec::new();
    let mut g_m = Vec::new();
    let mut g = Vec::new();
    let mut fso_offset = Vec::new();
    for subset in crate::rates::nonempty_subsets(nondeg.len()) {
        let members: Vec<usize> = subset.iter().map(|&b| nondeg[b]).collect();
        let prod: f64 = members.iter().map(|&mm| c_rf[mm]).product();
        let gms: Vec<f64> = members.iter().map(|&mm| prod / c_rf[mm]).collect();
        let offset: f64 = members.iter().zip(&gms).map(|(&mm, &gm)| gm * c_fso[mm]).sum();
        subsets.push(members);
        g_m.push(gms);
        g.push(prod);
        fso_offset.push(offset);
    }
    TransformedConstraints {
        subsets,
        g_m,
        g,
        fso_offset,
        degenerate,
        c_fso: c_fso.to_vec(),
        c_rf: c_rf.to_vec(),
    }
}

/// `log2|Y| - Tr(YX)/ln2 + J/ln2`; maximized over PSD `Y` at `Y = X^{-1}`
/// with value `log2|X^{-1}|`. Singular `Y` yields negative infinity.
pub fn lemma2_value(x: &CMat, y: &CMat) -> Result<f64> {
    if x.nrows() != y.nrows() {
        return Err(Error::Dimension("lemma2_value operands".into()));
    }
    let j = x.nrows() as f64;
    let Some(ld_y) = logdet2_hpd(y) else {
        return Ok(f64::NEG_INFINITY);
    };
    Ok(ld_y - re_trace_prod(y, x) / LN2 + j / LN2)
}

/// Objective-side auxiliary matrices `B_k = (W_k + D)^{-1}`.
pub fn closed_form_b(d: &CMat, up: &UnifiedProblem) -> Result<Vec<CMat>> {
    up.w
        .iter()
        .map(|w| {
            inv_hpd(&(w + d)).ok_or_else(|| Error::Numerical("W_k + D not PD".into()))
        })
        .collect()
}

/// Constraint-side auxiliary matrices `A(S) = (C(S) + D_S + sigma^2 I)^{-1}`.
pub fn closed_form_a(d: &CMat, up: &UnifiedProblem) -> Result<Vec<CMat>> {
    up.t_s
        .iter()
        .zip(&up.c_s)
        .map(|(t, c)| {
            let d_s = extract(d, t, t);
            let mat = c + d_s + ceye_scaled(t.len(), up.sigma2);
            inv_hpd(&mat).ok_or_else(|| Error::Numerical("C(S) + D_S + sigma^2 I not PD".into()))
        })
        .collect()
}

/// Auxiliary matrices of one alternation round; `a` is populated for the
/// modified variant only.
#[derive(Debug, Clone)]
pub struct AuxiliaryMatrices {
    pub b: Vec<CMat>,
    pub a: Option<Vec<CMat>>,
}

impl AuxiliaryMatrices {
    pub fn compute(d: &CMat, up: &UnifiedProblem, variant: Variant) -> Result<Self> {
        Ok(Self {
            b: closed_form_b(d, up)?,
            a: match variant {
                Variant::MAco => Some(closed_form_a(d, up)?),
                Variant::Aco => None,
            },
        })
    }
}

/// Surrogate weighted sum rate (bits/sec) at fixed `B_k`:
/// `alpha0 W_rf sum_k mu_k (log2|V_k+D| + log2|B_k| - Tr(B_k(W_k+D))/ln2 + MN/ln2)`.
/// Equals the true weighted sum rate when `B_k = (W_k + D)^{-1}`.
pub fn surrogate_objective(up: &UnifiedProblem, alpha0: f64, d: &CMat, b: &[CMat]) -> Result<f64> {
    let mn = up.mn() as f64;
    let mut acc = 0.0;
    for k in 0..up.k_users {
        let ld_v = logdet2_hpd(&(&up.v[k] + d))
            .ok_or_else(|| Error::Numerical("V_k + D not PD".into()))?;
        let ld_b = logdet2_hpd(&b[k]).ok_or_else(|| Error::Numerical("B_k not PD".into()))?;
        let tr = re_trace_prod(&b[k], &(&up.w[k] + d));
        acc += up.mu[k] * (ld_v + ld_b - tr / LN2 + mn / LN2);
    }
    Ok(alpha0 * up.w_rf_hz * acc)
}

/// Upper bound on the quantizer requirement of subset `s_idx` induced by a
/// PSD matrix `a_s` (bits/sec). Tight when `a_s = A*(S)`.
pub fn requirement_upper_bound(
    up: &UnifiedProblem,
    s_idx: usize,
    d: &CMat,
    a_s: &CMat,
    alpha0: f64,
) -> Result<f64> {
    let t = &up.t_s[s_idx];
    let d_s = extract(d, t, t);
    let m_s = &up.c_s[s_idx] + &d_s + ceye_scaled(t.len(), up.sigma2);
    let ld_a = logdet2_hpd(a_s).ok_or_else(|| Error::Numerical("A(S) not PD".into()))?;
    let ld_ds = logdet2_floored(&d_s, DISTORTION_FLOOR_REL * up.sigma2)
        .ok_or_else(|| Error::Numerical("D_S singular after flooring".into()))?;
    let r_ub = -ld_a + re_trace_prod(a_s, &m_s) / LN2 - t.len() as f64 / LN2 - ld_ds;
    Ok(alpha0 * up.f_s_hz * r_ub)
}

/// Result of one inner subproblem solve.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub d: CMat,
    pub r: Vec<f64>,
    /// Surrogate objective at the returned point, bits/sec.
    pub t_surrogate_bps: f64,
    pub barrier_stages: usize,
    /// Final barrier weight; used to warm-start the next alternation round.
    pub barrier_t_final: f64,
}

/// Solve the convex inner subproblem at fixed `alpha0` and fixed auxiliary
/// matrices. `start` supplies a feasible warm start from the previous
/// alternation round; the returned objective never falls below the starting
/// point's by more than 1e-7 relative.
pub fn solve_inner_subproblem(
    up: &UnifiedProblem,
    tc: &TransformedConstraints,
    alpha0: f64,
    aux: &AuxiliaryMatrices,
    start: Option<(&CMat, &[f64])>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let ctx = InnerContext::new(up, tc, alpha0)?;
    solve_inner_with_ctx(&ctx, up, aux, start, None, opts)
}

fn solve_inner_with_ctx(
    ctx: &InnerContext,
    up: &UnifiedProblem,
    aux: &AuxiliaryMatrices,
    start: Option<(&CMat, &[f64])>,
    t0_hint: Option<f64>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let s2 = up.sigma2;
    let b_til: Vec<CMat> = aux.b.iter().map(|b| b * C64::new(s2, 0.0)).collect();
    let a_til: Option<Vec<CMat>> = aux
        .a
        .as_ref()
        .map(|mats| mats.iter().map(|a| a * C64::new(s2, 0.0)).collect());
    let prob = ctx.problem(b_til, a_til)?;

    let x0 = match start {
        Some((d, r)) => {
            let dtil = d * C64::new(1.0 / s2, 0.0);
            let rho: Vec<f64> = r.iter().map(|ri| ri / up.f_s_hz).collect();
            prob.feasible_start(&hermitize(&dtil), Some(&rho))?
        }
        None => {
            let d0 = ceye_scaled(up.mn(), opts.d0_scale);
            prob.feasible_start(&d0, None)?
        }
    };

    let t_incoming = prob.surrogate_norm(&prob.dtil(&x0));
    let t0 = t0_hint.unwrap_or(opts.barrier_t0).max(opts.barrier_t0);
    let (x_fin, stages, t_final) = inner::path_follow(
        &prob,
        x0.clone(),
        t0,
        opts.barrier_mult,
        opts.newton_tol,
        opts.subproblem_tol,
        300,
    )?;
    let t_fin = prob.surrogate_norm(&prob.dtil(&x_fin));

    // The subproblem is solved from a feasible point of a convex program;
    // if numerics ever regress the objective, fall back to the start.
    let x_best = if t_fin + 1e-7 * t_incoming.abs().max(1.0) < t_incoming {
        x0
    } else {
        x_fin
    };
    let t_best = prob.surrogate_norm(&prob.dtil(&x_best));
    if !t_best.is_finite() {
        return Err(Error::Numerical("non-finite inner objective".into()));
    }

    let d = prob.dtil(&x_best) * C64::new(s2, 0.0);
    let r: Vec<f64> = prob.rho(&x_best).iter().map(|rho| rho * up.f_s_hz).collect();
    Ok(InnerSolution {
        d: hermitize(&d),
        r,
        t_surrogate_bps: t_best * up.w_rf_hz,
        barrier_stages: stages,
        barrier_t_final: t_final,
    })
}

/// Outcome of the alternating inner loop at one `alpha0`.
#[derive(Debug, Clone)]
pub struct AcoOutcome {
    pub d: CMat,
    pub r: Vec<f64>,
    /// Surrogate objective of the final iteration, bits/sec.
    pub t_bps: f64,
    /// Objective after every iteration; nondecreasing up to solver noise.
    pub t_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Alternating convex optimization at fixed `alpha0`: update the auxiliary
/// matrices in closed form, then re-solve the inner subproblem, until the
/// objective moves less than `aco_epsilon_bps` or `n_max` is reached.
pub fn aco_inner(
    up: &UnifiedProblem,
    tc: &TransformedConstraints,
    alpha0: f64,
    variant: Variant,
    opts: &SolverOptions,
) -> Result<AcoOutcome> {
    let ctx = InnerContext::new(up, tc, alpha0)?;
    // D^0 = d0 I; when no rate vector can carry its quantizer output the
    // initialization is inflated until one can (the true requirement
    // shrinks as D grows).
    let (d0til, rho0) = ctx.bootstrap_point(&ceye_scaled(up.mn(), opts.d0_scale))?;
    let mut d = hermitize(&(d0til * C64::new(up.sigma2, 0.0)));
    let r0: Vec<f64> = rho0.iter().map(|rho| rho * up.f_s_hz).collect();
    let mut start: Option<(CMat, Vec<f64>)> = Some((d.clone(), r0));
    let mut t_prev = 0.0;
    let mut t0_hint = None;
    let mut t_history = Vec::new();
    let mut result: Option<AcoOutcome> = None;

    for i in 1..=opts.n_max {
        let aux = AuxiliaryMatrices::compute(&d, up, variant)?;
        let sol = solve_inner_with_ctx(
            &ctx,
            up,
            &aux,
            start.as_ref().map(|(dd, rr)| (dd, rr.as_slice())),
            t0_hint,
            opts,
        )?;
        // warm restart of the barrier path near the previous solution
        t0_hint = Some(sol.barrier_t_final / 1e3);
        d = sol.d.clone();
        start = Some((sol.d.clone(), sol.r.clone()));
        let t_cur = sol.t_surrogate_bps;
        t_history.push(t_cur);
        let converged = (t_cur - t_prev).abs() <= opts.aco_epsilon_bps;
        result = Some(AcoOutcome {
            d: sol.d,
            r: sol.r,
            t_bps: t_cur,
            t_history: t_history.clone(),
            iterations: i,
            converged,
        });
        if converged {
            break;
        }
        t_prev = t_cur;
    }
    Ok(result.expect("n_max >= 1"))
}

/// Trace of one golden section search run.
#[derive(Debug, Clone)]
pub struct GssOutcome {
    pub x_star: f64,
    pub iterations: usize,
    /// Interval length after each iteration, starting with the initial one.
    pub interval_lengths: Vec<f64>,
}

/// Golden section search for the maximum of a unimodal function on
/// `[lo, hi]`. Probes `lo + rho*delta` and `hi - rho*delta` with
/// `rho = 1 - 1/phi`; on a tie the right edge moves in.
pub fn golden_section_maximize(
    mut f: impl FnMut(f64) -> Result<f64>,
    mut lo: f64,
    mut hi: f64,
    eps: f64,
) -> Result<GssOutcome> {
    let rho = 1.0 - 1.0 / GOLDEN_RATIO;
    let mut lengths = vec![hi - lo];
    let mut iterations = 0;
    loop {
        let delta = hi - lo;
        let x1 = lo + rho * delta;
        let t1 = f(x1)?;
        let x2 = hi - rho * delta;
        let t2 = f(x2)?;
        if t1 >= t2 {
            hi = x2;
        } else {
            lo = x1;
        }
        iterations += 1;
        lengths.push(hi - lo);
        if (hi - lo).abs() <= eps {
            break;
        }
    }
    Ok(GssOutcome {
        x_star: 0.5 * (lo + hi),
        iterations,
        interval_lengths: lengths,
    })
}

/// Recover the per-RU RF time fractions from the optimized quantizer rates:
/// `alpha_m = [(r_m - C_m^fso) / C_m^rf]^+`. Leftover time is reported as
/// idle, not reassigned.
pub fn recover_alpha(
    r: &[f64],
    c_fso: &[f64],
    c_rf: &[f64],
    alpha0: f64,
) -> Result<TimeAllocation> {
    let alpha_m: Vec<f64> = r
        .iter()
        .zip(c_fso.iter().zip(c_rf))
        .map(|(&rm, (&fso, &rf))| {
            if rf > 0.0 {
                ((rm - fso) / rf).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    let used: f64 = alpha_m.iter().sum();
    let available = 1.0 - alpha0;
    if used > available + 1e-6 {
        return Err(Error::TimeAllocation { used, available });
    }
    let idle = (available - used).max(0.0);
    Ok(TimeAllocation { alpha0, alpha_m, idle })
}

/// Full solve: optimized time split, distortion matrix, quantizer rates,
/// per-user rates, and convergence diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub alpha_star: TimeAllocation,
    pub d_star: DistortionMatrix,
    pub r_star: QuantizerRates,
    /// Per-user rates in the original user order, bits/sec.
    pub user_rates: Vec<f64>,
    /// True weighted sum rate at the optimum, bits/sec.
    pub weighted_sum_rate: f64,
    pub gss_iterations: usize,
    /// Inner-loop iteration count of every GSS probe, then the final solve.
    pub aco_iterations: Vec<usize>,
    pub aco_converged: Vec<bool>,
    pub converged: bool,
    pub wall_time: Duration,
}

/// Nested solver: golden section search over `alpha0` with the alternating
/// inner loop evaluating each probe (restarted from scratch each time), then
/// a final inner solve at the midpoint and recovery of the RF time split.
pub fn gss_outer(
    up: &UnifiedProblem,
    tc: &TransformedConstraints,
    variant: Variant,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let t0 = Instant::now();
    let mut aco_iterations = Vec::new();
    let mut aco_converged = Vec::new();

    let gss = golden_section_maximize(
        |alpha0| {
            let out = aco_inner(up, tc, alpha0, variant, opts)?;
            aco_iterations.push(out.iterations);
            aco_converged.push(out.converged);
            Ok(out.t_bps)
        },
        0.0,
        1.0,
        opts.gss_epsilon,
    )?;

    let alpha0_star = gss.x_star;
    let final_run = aco_inner(up, tc, alpha0_star, variant, opts)?;
    aco_iterations.push(final_run.iterations);
    aco_converged.push(final_run.converged);

    let alloc = recover_alpha(&final_run.r, &up.cap.c_fso, &up.cap.c_rf, alpha0_star)?;
    alloc.validate()?;
    let violations = up.feasibility(alpha0_star, &alloc.alpha_m, &final_run.d, &final_run.r)?;
    if !violations.is_empty() {
        return Err(Error::Solver(format!(
            "solution violates constraints: {}",
            violations.join(", ")
        )));
    }

    let user_rates = up.user_rates_original_order(alpha0_star, &final_run.d)?;
    let weighted_sum_rate = up.weighted_sum_rate(alpha0_star, &final_run.d)?;
    let converged = aco_converged.iter().all(|&c| c);

    Ok(SolveResult {
        alpha_star: alloc,
        d_star: DistortionMatrix { d: final_run.d, pattern: up.pattern },
        r_star: QuantizerRates(final_run.r),
        user_rates,
        weighted_sum_rate,
        gss_iterations: gss.iterations,
        aco_iterations,
        aco_converged,
        converged,
        wall_time: t0.elapsed(),
    })
}

/// Convenience entry point used by the experiment runner: transform the
/// capacities, then run the nested solver.
pub fn solve(
    up: &UnifiedProblem,
    variant: Variant,
    opts: &SolverOptions,
) -> Result<SolveResult> {
    let tc = lemma1_transform(&up.cap.c_fso, &up.cap.c_rf);
    gss_outer(up, &tc, variant, opts)
}
