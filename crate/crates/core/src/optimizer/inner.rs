//! Structured-factor log-barrier solver for the inner `(D, r)` subproblem.
//!
//! For fixed `alpha0` and fixed auxiliary matrices the subproblem is
//!
//! ```text
//! maximize   T(D) = alpha0 sum_k mu_k ( log2|V_k + D|
//!                    + log2|B_k| - Tr(B_k (W_k + D))/ln2 + MN/ln2 )
//! subject to sum_{m in S} r_m >= alpha0 f_s R_S(D)    for S in S_bar   (C1)
//!            sum_{m in S} r_m / C_m^rf <= (1 - alpha0)
//!                    + sum_{m in S} C_m^fso / C_m^rf  for S subset M   (C2~)
//!            D in pattern, D >= 0                                      (C3)
//! ```
//!
//! `R_S` is either the true log-det ratio or its linearized upper bound
//! through the auxiliary `A(S)` matrices. The solver works on internally
//! normalized variables: `D = sigma^2 L L^H` with `L` a Cholesky-like factor
//! restricted to the quantizer pattern (which enforces C3 exactly), and
//! `rho = r / f_s`. C1 and C2~ are handled by a logarithmic barrier whose
//! weight grows geometrically; each barrier stage is minimized by BFGS with
//! backtracking line search.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{
    ceye, extract, hermitize, inv_hpd, logdet2_hpd, re_trace_prod, C64, CMat, LN2,
};
use crate::rates::{DistortionPattern, UnifiedProblem};
use crate::{Error, Result};

use super::TransformedConstraints;

/// One free parameter of the factor `L`.
#[derive(Debug, Clone, Copy)]
enum Param {
    /// Real diagonal entry `(i, i)`; one slot.
    Diag(usize),
    /// Complex strictly-lower entry `(i, j)`; two slots (re, im).
    Off(usize, usize),
}

/// Maps the flat variable vector onto the lower-triangular factor.
#[derive(Debug, Clone)]
pub struct FactorLayout {
    mn: usize,
    params: Vec<Param>,
    n_slots: usize,
    blocks: Vec<Vec<usize>>,
}

impl FactorLayout {
    pub fn new(pattern: DistortionPattern, mn: usize) -> Self {
        let blocks: Vec<Vec<usize>> = match pattern {
            DistortionPattern::Diagonal => (0..mn).map(|i| vec![i]).collect(),
            DistortionPattern::BlockDiagonal { block } => (0..mn / block)
                .map(|b| (b * block..(b + 1) * block).collect())
                .collect(),
            DistortionPattern::Dense => vec![(0..mn).collect()],
        };
        let mut params = Vec::new();
        for idx in &blocks {
            for i in 0..idx.len() {
                for j in 0..=i {
                    if i == j {
                        params.push(Param::Diag(idx[i]));
                    } else {
                        params.push(Param::Off(idx[i], idx[j]));
                    }
                }
            }
        }
        let n_slots = params
            .iter()
            .map(|p| match p {
                Param::Diag(_) => 1,
                Param::Off(..) => 2,
            })
            .sum();
        Self { mn, params, n_slots, blocks }
    }

    pub fn n_slots(&self) -> usize {
        self.n_slots
    }

    /// Assemble `L` from variable slots.
    fn build(&self, x: &[f64]) -> CMat {
        let mut l = CMat::zeros(self.mn, self.mn);
        let mut s = 0;
        for p in &self.params {
            match *p {
                Param::Diag(i) => {
                    l[(i, i)] = C64::new(x[s], 0.0);
                    s += 1;
                }
                Param::Off(i, j) => {
                    l[(i, j)] = C64::new(x[s], x[s + 1]);
                    s += 2;
                }
            }
        }
        l
    }

    /// Chain rule from a Hermitian gradient `G` on `D = L L^H` to the factor
    /// slots: with `P = G L`, the slope is `2 Re P_ij` / `2 Im P_ij`.
    fn grad_slots(&self, p_mat: &CMat, out: &mut [f64]) {
        let mut s = 0;
        for p in &self.params {
            match *p {
                Param::Diag(i) => {
                    out[s] += 2.0 * p_mat[(i, i)].re;
                    s += 1;
                }
                Param::Off(i, j) => {
                    out[s] += 2.0 * p_mat[(i, j)].re;
                    out[s + 1] += 2.0 * p_mat[(i, j)].im;
                    s += 2;
                }
            }
        }
    }

    /// Factor an in-pattern Hermitian PD matrix into slots (per-block
    /// Cholesky), escalating a diagonal jitter if needed.
    fn slots_from(&self, dtil: &CMat) -> Result<Vec<f64>> {
        let mut l_full = CMat::zeros(self.mn, self.mn);
        for idx in &self.blocks {
            let sub = extract(dtil, idx, idx);
            let mut jitter = 0.0;
            let scale = (0..sub.nrows()).map(|i| sub[(i, i)].re).fold(1e-300, f64::max);
            let chol = loop {
                let try_mat = &sub + ceye(sub.nrows()) * C64::new(jitter, 0.0);
                if let Some(c) = crate::linalg::cholesky(&try_mat) {
                    break c;
                }
                jitter = if jitter == 0.0 { 1e-14 * scale } else { jitter * 100.0 };
                if jitter > 1e-2 * scale {
                    return Err(Error::Numerical("cannot factor distortion matrix".into()));
                }
            };
            let l = chol.l();
            for (bi, &gi) in idx.iter().enumerate() {
                for (bj, &gj) in idx.iter().enumerate().take(bi + 1) {
                    l_full[(gi, gj)] = l[(bi, bj)];
                }
            }
        }
        let mut x = vec![0.0; self.n_slots];
        let mut s = 0;
        for p in &self.params {
            match *p {
                Param::Diag(i) => {
                    x[s] = l_full[(i, i)].re;
                    s += 1;
                }
                Param::Off(i, j) => {
                    x[s] = l_full[(i, j)].re;
                    x[s + 1] = l_full[(i, j)].im;
                    s += 2;
                }
            }
        }
        Ok(x)
    }
}

/// Normalized constant data shared by all inner iterations at one `alpha0`.
#[derive(Debug)]
pub struct InnerContext {
    pub alpha0: f64,
    pub mn: usize,
    pub m_rus: usize,
    v_til: Vec<CMat>,
    w_til: Vec<CMat>,
    c_til: Vec<CMat>,
    mu: Vec<f64>,
    t_s: Vec<Vec<usize>>,
    s_members: Vec<Vec<usize>>,
    /// C2~ rows over non-degenerate RUs: (members, f_s/C_rf coefficients,
    /// right-hand side).
    c2_rows: Vec<(Vec<usize>, Vec<f64>, f64)>,
    /// `rho_m <= C_fso_m / f_s` for RUs whose RF fronthaul capacity is zero.
    deg_caps: Vec<(usize, f64)>,
    layout: FactorLayout,
    pub sigma2: f64,
    pub f_s: f64,
    pub w_rf: f64,
}

impl InnerContext {
    pub fn new(up: &UnifiedProblem, tc: &TransformedConstraints, alpha0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha0) {
            return Err(Error::Solver(format!("alpha0 = {alpha0} outside [0, 1]")));
        }
        let s2 = up.sigma2;
        let inv = C64::new(1.0 / s2, 0.0);
        let v_til: Vec<CMat> = up.v.iter().map(|m| m * inv).collect();
        let w_til: Vec<CMat> = up.w.iter().map(|m| m * inv).collect();
        let c_til: Vec<CMat> = up.c_s.iter().map(|m| m * inv).collect();

        let mut c2_rows = Vec::with_capacity(tc.subsets.len());
        for (i, s) in tc.subsets.iter().enumerate() {
            let coeffs: Vec<f64> = s.iter().map(|&m| up.f_s_hz / tc.c_rf[m]).collect();
            let rhs = (1.0 - alpha0)
                + s.iter().map(|&m| tc.c_fso[m] / tc.c_rf[m]).sum::<f64>();
            debug_assert_eq!(tc.g[i] > 0.0, true);
            c2_rows.push((s.clone(), coeffs, rhs));
        }
        let deg_caps: Vec<(usize, f64)> = tc
            .degenerate
            .iter()
            .map(|&m| (m, tc.c_fso[m] / up.f_s_hz))
            .collect();

        Ok(Self {
            alpha0,
            mn: up.mn(),
            m_rus: up.m,
            v_til,
            w_til,
            c_til,
            mu: up.mu.clone(),
            t_s: up.t_s.clone(),
            s_members: up.s_bar.clone(),
            c2_rows,
            deg_caps,
            layout: FactorLayout::new(up.pattern, up.mn()),
            sigma2: s2,
            f_s: up.f_s_hz,
            w_rf: up.w_rf_hz,
        })
    }

    /// Normalized `B_k = (W_k + D)^{-1} sigma^2` from a normalized distortion.
    pub fn b_tilde(&self, dtil: &CMat) -> Result<Vec<CMat>> {
        self.w_til
            .iter()
            .map(|w| {
                inv_hpd(&(w + dtil))
                    .ok_or_else(|| Error::Numerical("W_k + D not positive definite".into()))
            })
            .collect()
    }

    /// Normalized `A(S) = (C(S) + D_S + sigma^2 I)^{-1} sigma^2`.
    pub fn a_tilde(&self, dtil: &CMat) -> Result<Vec<CMat>> {
        self.t_s
            .iter()
            .zip(&self.c_til)
            .map(|(t, c)| {
                let d_s = extract(dtil, t, t);
                inv_hpd(&(c + d_s + ceye(t.len())))
                    .ok_or_else(|| Error::Numerical("C(S) + D_S + sigma^2 I not PD".into()))
            })
            .collect()
    }

    /// True (variant-independent) requirement `R_S` at a normalized
    /// distortion, bits/sample.
    pub fn true_requirement(&self, s_idx: usize, dtil: &CMat) -> Option<f64> {
        let t = &self.t_s[s_idx];
        let d_s = extract(dtil, t, t);
        let ld_ds = logdet2_hpd(&d_s)?;
        let ld_m = logdet2_hpd(&(&self.c_til[s_idx] + &d_s + ceye(t.len())))?;
        Some(ld_m - ld_ds)
    }

    /// Minimal rates covering the given per-subset requirements, with a
    /// small margin.
    fn construct_rho(&self, reqs: &[f64]) -> Vec<f64> {
        let mut rho = vec![0.0_f64; self.m_rus];
        // singletons first
        for (s_idx, members) in self.s_members.iter().enumerate() {
            if members.len() == 1 {
                rho[members[0]] = rho[members[0]].max(reqs[s_idx]);
            }
        }
        // repair larger subsets in ascending size order (sums only grow)
        let mut order: Vec<usize> = (0..self.s_members.len()).collect();
        order.sort_by_key(|&i| self.s_members[i].len());
        for &s_idx in &order {
            let members = &self.s_members[s_idx];
            let sum: f64 = members.iter().map(|&m| rho[m]).sum();
            let deficit = reqs[s_idx] - sum;
            if deficit > 0.0 {
                for &m in members {
                    rho[m] += deficit / members.len() as f64;
                }
            }
        }
        let scale = reqs.iter().cloned().fold(0.0, f64::max).max(1e-3);
        for r in &mut rho {
            *r = *r * (1.0 + 1e-6) + 1e-9 * scale;
        }
        rho
    }

    fn strictly_feasible(&self, rho: &[f64], reqs: &[f64]) -> bool {
        for (s_idx, members) in self.s_members.iter().enumerate() {
            let sum: f64 = members.iter().map(|&m| rho[m]).sum();
            if !(sum - reqs[s_idx] > 0.0) {
                return false;
            }
        }
        for (members, coeffs, rhs) in &self.c2_rows {
            let used: f64 = members.iter().zip(coeffs).map(|(&m, &c)| rho[m] * c).sum();
            if !(rhs - used > 0.0) {
                return false;
            }
        }
        for &(m, cap) in &self.deg_caps {
            if !(cap - rho[m] > 0.0) {
                return false;
            }
        }
        rho.iter().all(|r| r.is_finite() && *r >= 0.0)
    }

    /// Find `(D, rho)` strictly feasible under the true source-coding
    /// requirement by inflating an initial scaled identity: inflation
    /// always shrinks the true requirement, so this terminates whenever a
    /// feasible point exists at this `alpha0`.
    pub fn bootstrap_point(&self, d0til: &CMat) -> Result<(CMat, Vec<f64>)> {
        let mut dtil = d0til.clone();
        for _ in 0..200 {
            let reqs: Option<Vec<f64>> = (0..self.s_members.len())
                .map(|s| self.true_requirement(s, &dtil).map(|v| self.alpha0 * v))
                .collect();
            if let Some(reqs) = reqs {
                let rho = self.construct_rho(&reqs);
                if self.strictly_feasible(&rho, &reqs) {
                    return Ok((dtil, rho));
                }
            }
            dtil *= C64::new(4.0, 0.0);
        }
        Err(Error::Infeasible(format!(
            "no strictly feasible point at alpha0 = {} (FSO capacity too small?)",
            self.alpha0
        )))
    }

    /// Bind auxiliary matrices for one alternation round.
    pub fn problem(&self, b_til: Vec<CMat>, a_til: Option<Vec<CMat>>) -> Result<InnerProblem<'_>> {
        let b_const: Vec<(f64, f64)> = b_til
            .iter()
            .zip(&self.w_til)
            .map(|(b, w)| {
                let ld = logdet2_hpd(b)
                    .ok_or_else(|| Error::Numerical("B_k not positive definite".into()))?;
                Ok((ld, re_trace_prod(b, w)))
            })
            .collect::<Result<_>>()?;
        let a_logdet: Vec<f64> = match &a_til {
            Some(mats) => mats
                .iter()
                .map(|a| {
                    logdet2_hpd(a)
                        .ok_or_else(|| Error::Numerical("A(S) not positive definite".into()))
                })
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        let n_constraints = self.s_members.len() + self.c2_rows.len() + self.deg_caps.len();
        Ok(InnerProblem {
            ctx: self,
            b_til,
            b_const,
            a_til,
            a_logdet,
            n_constraints,
        })
    }
}

/// Barrier subproblem with bound auxiliary matrices.
pub struct InnerProblem<'a> {
    ctx: &'a InnerContext,
    b_til: Vec<CMat>,
    /// `(log2|B_k|, Re Tr(B_k W_k))` per user.
    b_const: Vec<(f64, f64)>,
    a_til: Option<Vec<CMat>>,
    a_logdet: Vec<f64>,
    n_constraints: usize,
}

impl<'a> InnerProblem<'a> {
    pub fn nvars(&self) -> usize {
        self.ctx.layout.n_slots() + self.ctx.m_rus
    }

    pub fn n_constraints(&self) -> usize {
        self.n_constraints
    }

    /// Normalized distortion matrix at `x`.
    pub fn dtil(&self, x: &DVector<f64>) -> CMat {
        let l = self.ctx.layout.build(x.as_slice());
        hermitize(&(&l * l.adjoint()))
    }

    pub fn rho(&self, x: &DVector<f64>) -> Vec<f64> {
        x.as_slice()[self.ctx.layout.n_slots()..].to_vec()
    }

    /// Surrogate objective in W_rf-normalized units at a normalized
    /// distortion; equals the true weighted sum rate divided by `W_rf` when
    /// the auxiliary `B_k` are tight for this `D`.
    pub fn surrogate_norm(&self, dtil: &CMat) -> f64 {
        let a0 = self.ctx.alpha0;
        let mut acc = 0.0;
        for k in 0..self.ctx.mu.len() {
            let ld_v = logdet2_hpd(&(&self.ctx.v_til[k] + dtil)).unwrap_or(f64::NEG_INFINITY);
            let (ld_b, tr_bw) = self.b_const[k];
            let tr_bd = re_trace_prod(&self.b_til[k], dtil);
            acc += self.ctx.mu[k]
                * (ld_v + ld_b - (tr_bw + tr_bd) / LN2 + self.ctx.mn as f64 / LN2);
        }
        a0 * acc
    }

    /// Quantizer-rate requirement `R_S` (bits/sample, normalized) and its
    /// Hermitian gradient on the `S`-submatrix of the normalized distortion.
    fn requirement(&self, s_idx: usize, d_s: &CMat, with_grad: bool) -> Option<(f64, Option<CMat>)> {
        let ld_ds = logdet2_hpd(d_s)?;
        let m_s = &self.ctx.c_til[s_idx] + d_s + ceye(d_s.nrows());
        match &self.a_til {
            Some(a) => {
                let a_s = &a[s_idx];
                let val = -self.a_logdet[s_idx] + re_trace_prod(a_s, &m_s) / LN2
                    - d_s.nrows() as f64 / LN2
                    - ld_ds;
                let grad = if with_grad {
                    Some((a_s - inv_hpd(d_s)?) * C64::new(1.0 / LN2, 0.0))
                } else {
                    None
                };
                Some((val, grad))
            }
            None => {
                let ld_m = logdet2_hpd(&m_s)?;
                let val = ld_m - ld_ds;
                let grad = if with_grad {
                    Some((inv_hpd(&m_s)? - inv_hpd(d_s)?) * C64::new(1.0 / LN2, 0.0))
                } else {
                    None
                };
                Some((val, grad))
            }
        }
    }

    /// Requirement value at a normalized distortion, by subset index.
    pub fn requirement_at(&self, s_idx: usize, dtil: &CMat) -> Option<f64> {
        let t = &self.ctx.t_s[s_idx];
        let d_s = extract(dtil, t, t);
        self.requirement(s_idx, &d_s, false).map(|(v, _)| v)
    }

    /// Barrier objective `-T_norm - (1/t) sum ln(slacks)`; `None` when the
    /// point is infeasible or a factorization fails.
    pub fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        self.eval(x, t, false).map(|(f, _)| f)
    }

    /// Barrier objective and its analytic gradient.
    pub fn value_grad(&self, x: &DVector<f64>, t: f64) -> Option<(f64, DVector<f64>)> {
        self.eval(x, t, true).map(|(f, g)| (f, g.unwrap()))
    }

    fn eval(&self, x: &DVector<f64>, t: f64, with_grad: bool) -> Option<(f64, Option<DVector<f64>>)> {
        let ctx = self.ctx;
        let nfac = ctx.layout.n_slots();
        let a0 = ctx.alpha0;
        let l = ctx.layout.build(x.as_slice());
        let dtil = hermitize(&(&l * l.adjoint()));
        let rho = &x.as_slice()[nfac..];

        let mut g_d = CMat::zeros(ctx.mn, ctx.mn);
        let mut g_rho = vec![0.0; ctx.m_rus];

        // objective
        let mut t_norm = 0.0;
        for k in 0..ctx.mu.len() {
            let vk = &ctx.v_til[k] + &dtil;
            let ld_v = logdet2_hpd(&vk)?;
            let (ld_b, tr_bw) = self.b_const[k];
            let tr_bd = re_trace_prod(&self.b_til[k], &dtil);
            t_norm +=
                ctx.mu[k] * (ld_v + ld_b - (tr_bw + tr_bd) / LN2 + ctx.mn as f64 / LN2);
            if with_grad {
                let vk_inv = inv_hpd(&vk)?;
                let coef = C64::new(-a0 * ctx.mu[k] / LN2, 0.0);
                g_d += (vk_inv - &self.b_til[k]) * coef;
            }
        }
        t_norm *= a0;
        if !t_norm.is_finite() {
            return None;
        }
        let mut f = -t_norm;

        // C1 barriers
        for (s_idx, members) in ctx.s_members.iter().enumerate() {
            let t_set = &ctx.t_s[s_idx];
            let d_s = extract(&dtil, t_set, t_set);
            let (req, grad_s) = self.requirement(s_idx, &d_s, with_grad)?;
            let sum: f64 = members.iter().map(|&m| rho[m]).sum();
            let slack = sum - a0 * req;
            if !(slack > 0.0) || !slack.is_finite() {
                return None;
            }
            f -= slack.ln() / t;
            if with_grad {
                let w = a0 / (t * slack);
                let gs = grad_s.unwrap() * C64::new(w, 0.0);
                crate::linalg::embed_add(&mut g_d, t_set, &gs);
                for &m in members {
                    g_rho[m] -= 1.0 / (t * slack);
                }
            }
        }

        // C2~ barriers
        for (members, coeffs, rhs) in &ctx.c2_rows {
            let used: f64 = members.iter().zip(coeffs).map(|(&m, &c)| rho[m] * c).sum();
            let slack = rhs - used;
            if !(slack > 0.0) || !slack.is_finite() {
                return None;
            }
            f -= slack.ln() / t;
            if with_grad {
                for (&m, &c) in members.iter().zip(coeffs) {
                    g_rho[m] += c / (t * slack);
                }
            }
        }

        // caps of RUs with no RF fronthaul
        for &(m, cap) in &ctx.deg_caps {
            let slack = cap - rho[m];
            if !(slack > 0.0) || !slack.is_finite() {
                return None;
            }
            f -= slack.ln() / t;
            if with_grad {
                g_rho[m] += 1.0 / (t * slack);
            }
        }

        if !f.is_finite() {
            return None;
        }
        if !with_grad {
            return Some((f, None));
        }

        let mut grad = DVector::zeros(self.nvars());
        let p_mat = &g_d * &l;
        ctx.layout.grad_slots(&p_mat, &mut grad.as_mut_slice()[..nfac]);
        for m in 0..ctx.m_rus {
            grad[nfac + m] = g_rho[m];
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return None;
        }
        Some((f, Some(grad)))
    }

    /// Requirements of every subset under the constraint actually imposed
    /// by this problem (the linearized bound when `A(S)` is bound, the true
    /// log-det ratio otherwise), scaled by `alpha0`.
    fn scaled_requirements(&self, dtil: &CMat) -> Option<Vec<f64>> {
        (0..self.ctx.s_members.len())
            .map(|s| self.requirement_at(s, dtil).map(|v| self.ctx.alpha0 * v))
            .collect()
    }

    fn assemble_x(&self, dtil: &CMat, rho: &[f64]) -> Option<DVector<f64>> {
        let slots = self.ctx.layout.slots_from(dtil).ok()?;
        let mut x = DVector::zeros(self.nvars());
        x.as_mut_slice()[..slots.len()].copy_from_slice(&slots);
        for m in 0..self.ctx.m_rus {
            x[slots.len() + m] = rho[m];
        }
        Some(x)
    }

    /// Construct a strictly feasible starting point from an initial
    /// distortion (and rates, when available).
    ///
    /// When the supplied point is infeasible, scaled identities are probed.
    /// Under the linearized constraint the requirement is convex along that
    /// ray (the trace term grows with `D` while `-log|D_S|` shrinks), so the
    /// per-subset ray minimizers `|T_S| / Tr(A(S))` are included among the
    /// candidate scales.
    pub fn feasible_start(&self, d0til: &CMat, rho0: Option<&[f64]>) -> Result<DVector<f64>> {
        let ctx = self.ctx;

        // fast path: the warm start is usually already strictly feasible
        if let Some(reqs) = self.scaled_requirements(d0til) {
            if let Some(r0) = rho0 {
                if ctx.strictly_feasible(r0, &reqs) {
                    if let Some(x) = self.assemble_x(d0til, r0) {
                        return Ok(x);
                    }
                }
            }
            let rho = ctx.construct_rho(&reqs);
            if ctx.strictly_feasible(&rho, &reqs) {
                if let Some(x) = self.assemble_x(d0til, &rho) {
                    return Ok(x);
                }
            }
        }

        // probe scaled identities, including the surrogate ray minimizers
        let d0_diag = (0..ctx.mn).map(|i| d0til[(i, i)].re).fold(0.0, f64::max).max(1e-12);
        let mut scales = Vec::new();
        if let Some(a) = &self.a_til {
            for (s_idx, a_s) in a.iter().enumerate() {
                let tr: f64 = (0..a_s.nrows()).map(|i| a_s[(i, i)].re).sum();
                if tr > 0.0 {
                    let d_star = ctx.t_s[s_idx].len() as f64 / tr;
                    scales.push(d_star);
                }
            }
        }
        for j in 0..60 {
            scales.push(d0_diag * 4f64.powi(j));
        }
        for j in 1..12 {
            scales.push(d0_diag * 4f64.powi(-j));
        }
        for &scale in &scales {
            let dtil = ceye(ctx.mn) * C64::new(scale, 0.0);
            let Some(reqs) = self.scaled_requirements(&dtil) else {
                continue;
            };
            let rho = ctx.construct_rho(&reqs);
            if ctx.strictly_feasible(&rho, &reqs) {
                if let Some(x) = self.assemble_x(&dtil, &rho) {
                    return Ok(x);
                }
            }
        }
        Err(Error::Infeasible(format!(
            "no strictly feasible start at alpha0 = {} (FSO capacity too small?)",
            ctx.alpha0
        )))
    }
}

/// BFGS with backtracking (Armijo) line search on one barrier stage.
/// Returns the final iterate; never steps outside the barrier domain.
pub(crate) fn bfgs_stage(
    prob: &InnerProblem<'_>,
    mut x: DVector<f64>,
    t: f64,
    grad_tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = x.len();
    let (mut f, mut g) = prob
        .value_grad(&x, t)
        .ok_or_else(|| Error::Solver("barrier stage started infeasible".into()))?;
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut stalls = 0;

    for _ in 0..max_iter {
        if g.norm() <= grad_tol {
            break;
        }
        let mut p = -(&h_inv * &g);
        let mut slope = p.dot(&g);
        if !(slope < 0.0) {
            h_inv = DMatrix::identity(n, n);
            p = -g.clone();
            slope = p.dot(&g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &x + &p * step;
            if let Some((fc, gc)) = prob.value_grad(&cand, t) {
                if fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break; // no acceptable step at machine scale
        };

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // H <- (I - s y^T / sy) H (I - y s^T / sy) + s s^T / sy
            let rho_b = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            let shy = &s * (hy.transpose() * rho_b);
            h_inv = h_inv - (&shy + shy.transpose())
                + &s * s.transpose() * (rho_b * rho_b * yhy + rho_b);
        }

        let progress = (f - f_new).abs();
        x = x_new;
        g = g_new;
        if progress <= 1e-14 * (1.0 + f.abs()) {
            stalls += 1;
            if stalls >= 3 {
                f = f_new;
                break;
            }
        } else {
            stalls = 0;
        }
        f = f_new;
    }
    let _ = f;
    Ok(x)
}

/// Barrier path following: solve stages with geometrically growing weight
/// until the duality-gap proxy `n_constraints / t` drops below the target.
/// Returns the final iterate, the stage count, and the final weight (a warm
/// restart near the previous solution can skip the early stages).
pub(crate) fn path_follow(
    prob: &InnerProblem<'_>,
    x0: DVector<f64>,
    t0: f64,
    mult: f64,
    newton_tol: f64,
    gap_target: f64,
    max_iter: usize,
) -> Result<(DVector<f64>, usize, f64)> {
    let m = prob.n_constraints() as f64;
    let mut t = t0;
    let mut x = x0;
    let mut stages = 0;
    loop {
        // achievable gradient accuracy degrades as sqrt(t) near the boundary
        let tol = newton_tol * t.sqrt().max(1.0) * 10.0;
        x = bfgs_stage(prob, x, t, tol, max_iter)?;
        stages += 1;
        if m / t < gap_target || stages > 60 {
            break;
        }
        t *= mult;
    }
    Ok((x, stages, t))
}
