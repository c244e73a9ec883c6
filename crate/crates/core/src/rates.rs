//! Unified problem data and rate/constraint evaluation.
//!
//! For a chosen quantizer/detector pair the weighted sum rate maximization is
//! expressed through constant Hermitian matrices `V_k`, `W_k` (per user),
//! `C(S)` (per constrained RU subset `S`), the subset lists `S_bar`, `T_bar`,
//! and the distortion matrix `D` whose sparsity pattern encodes the
//! quantizer:
//!
//! - per-antenna VQ (AVQ): `D` diagonal, one rate constraint per RU;
//! - per-RU VQ (RVQ): `D` block diagonal (N x N blocks), one per RU;
//! - distributed source coding (DSC): `D` dense, one constraint per
//!   nonempty RU subset.
//!
//! User rate: `alpha0 * W_rf * log2 |V_k + D| / |W_k + D|`.
//! Quantizer output-rate requirement for subset `S`:
//! `alpha0 * f_s * log2 |C(S) + D_S + sigma^2 I| / |D_S|`, with
//! `D_S = I(T_S) D I(T_S)^T`.

use nalgebra::DMatrix;
use rand::Rng;

use crate::channel::CapacityVector;
use crate::linalg::{
    ceye_scaled, extract, hermitize, logdet2_floored, logdet2_hpd, min_eig, re_trace_prod, C64,
    CMat, CVec,
};
use crate::sysmodel::{noise_powers, SystemConfig};
use crate::{Error, Result};

/// Relative eigenvalue floor applied to `D_S` wherever `log|D_S|` is
/// evaluated; scaled by `sigma^2`.
pub const DISTORTION_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quantizer {
    Avq,
    Rvq,
    Dsc,
}

impl Quantizer {
    pub fn name(self) -> &'static str {
        match self {
            Quantizer::Avq => "avq",
            Quantizer::Rvq => "rvq",
            Quantizer::Dsc => "dsc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Mmse,
    Sic,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Mmse => "mmse",
            Detector::Sic => "sic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SchemePair {
    pub quantizer: Quantizer,
    pub detector: Detector,
}

impl SchemePair {
    pub fn new(quantizer: Quantizer, detector: Detector) -> Self {
        Self { quantizer, detector }
    }

    pub fn all() -> Vec<SchemePair> {
        let mut v = Vec::new();
        for q in [Quantizer::Avq, Quantizer::Rvq, Quantizer::Dsc] {
            for d in [Detector::Mmse, Detector::Sic] {
                v.push(SchemePair::new(q, d));
            }
        }
        v
    }
}

/// Per-user priority weights: nonnegative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(vec!["weights must be >= 0".into()]));
        }
        let sum: f64 = mu.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidConfig(vec![format!(
                "weights must sum to 1 (got {sum})"
            )]));
        }
        Ok(Self(mu))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Sparsity pattern of the distortion matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistortionPattern {
    Diagonal,
    /// Block diagonal with square blocks of the given size.
    BlockDiagonal { block: usize },
    Dense,
}

impl DistortionPattern {
    pub fn for_quantizer(q: Quantizer, n: usize) -> Self {
        match q {
            Quantizer::Avq => DistortionPattern::Diagonal,
            Quantizer::Rvq => DistortionPattern::BlockDiagonal { block: n },
            Quantizer::Dsc => DistortionPattern::Dense,
        }
    }

    /// Whether entry `(i, j)` may be nonzero.
    pub fn contains(&self, i: usize, j: usize) -> bool {
        match self {
            DistortionPattern::Diagonal => i == j,
            DistortionPattern::BlockDiagonal { block } => i / block == j / block,
            DistortionPattern::Dense => true,
        }
    }
}

/// Hermitian PSD distortion matrix with a scheme-dependent pattern.
#[derive(Debug, Clone)]
pub struct DistortionMatrix {
    pub d: CMat,
    pub pattern: DistortionPattern,
}

impl DistortionMatrix {
    pub fn validate(&self) -> Result<()> {
        let n = self.d.nrows();
        if self.d.ncols() != n {
            return Err(Error::Dimension("D must be square".into()));
        }
        let scale = self.d.iter().map(|z| z.norm()).fold(1e-300, f64::max);
        let defect = crate::linalg::hermitian_defect(&self.d);
        if defect > 1e-12 {
            return Err(Error::Numerical(format!("D not Hermitian (defect {defect:.2e})")));
        }
        for i in 0..n {
            for j in 0..n {
                if !self.pattern.contains(i, j) && self.d[(i, j)] != C64::new(0.0, 0.0) {
                    return Err(Error::Numerical(format!("D[{i},{j}] outside pattern")));
                }
            }
        }
        let trace_scale = (0..n).map(|i| self.d[(i, i)].re.abs()).sum::<f64>().max(scale);
        if min_eig(&self.d) < -1e-10 * trace_scale {
            return Err(Error::Numerical("D not PSD".into()));
        }
        Ok(())
    }
}

/// Per-RU quantizer output rates in bits/sec.
#[derive(Debug, Clone)]
pub struct QuantizerRates(pub Vec<f64>);

impl QuantizerRates {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) {
            return Err(Error::Numerical("quantizer rates must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Pseudo identity matrix of size `|A| x mn`: row i has a single one in
/// column `a[i]`.
pub fn selection_matrix(a: &[usize], mn: usize) -> Result<DMatrix<f64>> {
    let mut s = DMatrix::zeros(a.len(), mn);
    for (i, &idx) in a.iter().enumerate() {
        if idx >= mn {
            return Err(Error::IndexOutOfRange(format!("index {idx} >= {mn}")));
        }
        s[(i, idx)] = 1.0;
    }
    Ok(s)
}

/// Constant data of the unified weighted sum rate problem for one scheme
/// pair and one fading block. Users are stored in SIC decoding order
/// (ascending weight, ties by original index).
#[derive(Debug, Clone)]
pub struct UnifiedProblem {
    pub pair: SchemePair,
    pub m: usize,
    pub n: usize,
    pub k_users: usize,
    /// Sorted position -> original user index.
    pub order: Vec<usize>,
    /// Weights in sorted order.
    pub mu: Vec<f64>,
    /// Transmit powers in sorted order, Watt.
    pub p: Vec<f64>,
    /// Access channel with columns in sorted user order.
    pub h: CMat,
    /// `V_k`, `W_k` per sorted user.
    pub v: Vec<CMat>,
    pub w: Vec<CMat>,
    /// Constrained RU subsets (0-based), and `C(S)` / antenna sets aligned
    /// with them.
    pub s_bar: Vec<Vec<usize>>,
    pub c_s: Vec<CMat>,
    pub t_s: Vec<Vec<usize>>,
    /// C3 pattern sets.
    pub t_bar: Vec<Vec<usize>>,
    pub pattern: DistortionPattern,
    pub sigma2: f64,
    pub cap: CapacityVector,
    pub w_rf_hz: f64,
    pub f_s_hz: f64,
}

/// Antenna indices of the RUs in `s` (0-based, ascending).
fn antenna_set(s: &[usize], n: usize) -> Vec<usize> {
    let mut t = Vec::with_capacity(s.len() * n);
    for &m in s {
        for j in 0..n {
            t.push(m * n + j);
        }
    }
    t
}

/// All nonempty subsets of `0..m`, ordered by bitmask.
pub fn nonempty_subsets(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity((1usize << m) - 1);
    for mask in 1u32..(1u32 << m) {
        let mut s = Vec::new();
        for b in 0..m {
            if mask & (1 << b) != 0 {
                s.push(b);
            }
        }
        out.push(s);
    }
    out
}

/// Assemble the unified problem for a scheme pair.
pub fn build_unified(
    cfg: &SystemConfig,
    h: &CMat,
    cap: &CapacityVector,
    pair: SchemePair,
    mu: &Weights,
) -> Result<UnifiedProblem> {
    let (m, n, k) = (cfg.m, cfg.n, cfg.k);
    let mn = m * n;
    if h.nrows() != mn || h.ncols() != k {
        return Err(Error::Dimension("H shape".into()));
    }
    if mu.len() != k {
        return Err(Error::Dimension("weights length".into()));
    }
    if pair.quantizer == Quantizer::Dsc && m > 8 {
        return Err(Error::InvalidConfig(vec!["DSC subset bound".into()]));
    }

    // SIC decodes the users with smaller weights first; ties broken by
    // ascending user index for determinism.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        mu.as_slice()[a]
            .partial_cmp(&mu.as_slice()[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mu_sorted: Vec<f64> = order.iter().map(|&i| mu.as_slice()[i]).collect();
    let p: Vec<f64> = vec![cfg.p_k_watt(); k];
    let h_sorted = CMat::from_fn(mn, k, |r, c| h[(r, order[c])]);

    let (sigma2, _) = noise_powers(cfg);
    let eye = ceye_scaled(mn, sigma2);

    // Rank-one user terms P_j h_j h_j^H.
    let user_terms: Vec<CMat> = (0..k)
        .map(|j| {
            let hj: CVec = h_sorted.column(j).into();
            let outer = &hj * hj.adjoint();
            outer * C64::new(p[j], 0.0)
        })
        .collect();

    let mut v = Vec::with_capacity(k);
    let mut w = Vec::with_capacity(k);
    for kk in 0..k {
        let mut vk = eye.clone();
        let mut wk = eye.clone();
        for j in 0..k {
            let in_v = match pair.detector {
                Detector::Mmse => true,
                Detector::Sic => j >= kk,
            };
            let in_w = match pair.detector {
                Detector::Mmse => j != kk,
                Detector::Sic => j > kk,
            };
            if in_v {
                vk += &user_terms[j];
            }
            if in_w {
                wk += &user_terms[j];
            }
        }
        v.push(hermitize(&vk));
        w.push(hermitize(&wk));
    }

    let s_bar: Vec<Vec<usize>> = match pair.quantizer {
        Quantizer::Avq | Quantizer::Rvq => (0..m).map(|i| vec![i]).collect(),
        Quantizer::Dsc => nonempty_subsets(m),
    };
    let t_s: Vec<Vec<usize>> = s_bar.iter().map(|s| antenna_set(s, n)).collect();

    let sigma_p = CMat::from_fn(k, k, |i, j| {
        if i == j {
            C64::new(p[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let c_s: Vec<CMat> = t_s
        .iter()
        .map(|t| {
            let hs = CMat::from_fn(t.len(), k, |r, c| h_sorted[(t[r], c)]);
            let full = hermitize(&(&hs * &sigma_p * hs.adjoint()));
            match pair.quantizer {
                Quantizer::Avq => CMat::from_fn(t.len(), t.len(), |i, j| {
                    if i == j {
                        C64::new(full[(i, i)].re, 0.0)
                    } else {
                        C64::new(0.0, 0.0)
                    }
                }),
                Quantizer::Rvq | Quantizer::Dsc => full,
            }
        })
        .collect();

    let t_bar: Vec<Vec<usize>> = match pair.quantizer {
        Quantizer::Avq => (0..mn).map(|i| vec![i]).collect(),
        Quantizer::Rvq => (0..m).map(|i| antenna_set(&[i], n)).collect(),
        Quantizer::Dsc => vec![(0..mn).collect()],
    };

    Ok(UnifiedProblem {
        pair,
        m,
        n,
        k_users: k,
        order,
        mu: mu_sorted,
        p,
        h: h_sorted,
        v,
        w,
        s_bar,
        c_s,
        t_s,
        t_bar,
        pattern: DistortionPattern::for_quantizer(pair.quantizer, n),
        sigma2,
        cap: cap.clone(),
        w_rf_hz: cfg.w_rf_hz,
        f_s_hz: cfg.f_s_hz,
    })
}

impl UnifiedProblem {
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    /// Transmission rate of the user at sorted position `k` (bits/sec):
    /// `alpha0 * W_rf * log2 |V_k + D| / |W_k + D|`.
    pub fn user_rate(&self, alpha0: f64, d: &CMat, k: usize) -> Result<f64> {
        let num = logdet2_hpd(&(&self.v[k] + d))
            .ok_or_else(|| Error::Numerical("V_k + D not positive definite".into()))?;
        let den = logdet2_hpd(&(&self.w[k] + d))
            .ok_or_else(|| Error::Numerical("W_k + D not positive definite".into()))?;
        Ok((alpha0 * self.w_rf_hz * (num - den)).max(0.0))
    }

    /// Weighted sum rate (bits/sec).
    pub fn weighted_sum_rate(&self, alpha0: f64, d: &CMat) -> Result<f64> {
        let mut acc = 0.0;
        for k in 0..self.k_users {
            acc += self.mu[k] * self.user_rate(alpha0, d, k)?;
        }
        Ok(acc)
    }

    /// Per-user rates indexed by the original user order.
    pub fn user_rates_original_order(&self, alpha0: f64, d: &CMat) -> Result<Vec<f64>> {
        let mut rates = vec![0.0; self.k_users];
        for k in 0..self.k_users {
            rates[self.order[k]] = self.user_rate(alpha0, d, k)?;
        }
        Ok(rates)
    }

    /// Minimum aggregate quantizer output rate of subset `s_bar[s_idx]`
    /// (bits/sec):
    /// `alpha0 * f_s * log2 |C(S) + D_S + sigma^2 I| / |D_S|`,
    /// where the eigenvalues of `D_S` are floored at `1e-12 sigma^2`.
    pub fn quantizer_requirement(&self, s_idx: usize, d: &CMat, alpha0: f64) -> Result<f64> {
        let t = &self.t_s[s_idx];
        let d_s = extract(d, t, t);
        let num_mat = &self.c_s[s_idx] + &d_s + ceye_scaled(t.len(), self.sigma2);
        let num = logdet2_hpd(&num_mat)
            .ok_or_else(|| Error::Numerical("C(S) + D_S + sigma^2 I not PD".into()))?;
        let den = logdet2_floored(&d_s, DISTORTION_FLOOR_REL * self.sigma2)
            .ok_or_else(|| Error::Numerical("D_S singular after flooring".into()))?;
        Ok(alpha0 * self.f_s_hz * (num - den))
    }

    /// Check C1 (source coding) and C2 (fronthaul channel coding) at the
    /// given point; returns every violated constraint by name. Each
    /// inequality is given `1e-6` relative slack.
    pub fn feasibility(
        &self,
        alpha0: f64,
        alpha_m: &[f64],
        d: &CMat,
        r: &[f64],
    ) -> Result<Vec<String>> {
        const REL: f64 = 1e-6;
        if alpha_m.len() != self.m || r.len() != self.m {
            return Err(Error::Dimension("alpha_m and r must have one entry per RU".into()));
        }
        let mut violations = Vec::new();
        for (s_idx, s) in self.s_bar.iter().enumerate() {
            let req = self.quantizer_requirement(s_idx, d, alpha0)?;
            let sum: f64 = s.iter().map(|&m| r[m]).sum();
            if sum < req - REL * req.abs().max(1.0) {
                let ids: Vec<String> = s.iter().map(|m| (m + 1).to_string()).collect();
                violations.push(format!("C1 S={{{}}}", ids.join(",")));
            }
        }
        for m in 0..self.m {
            let cap = self.cap.c_fso[m] + alpha_m[m] * self.cap.c_rf[m];
            if r[m] > cap + REL * cap.abs().max(1.0) {
                violations.push(format!("C2 m={}", m + 1));
            }
        }
        Ok(violations)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterVariant {
    Direct,
    Woodbury,
}

/// SINR-optimal linear filter and its SINR for the user at sorted position
/// `k`, for quantization noise `D`.
///
/// `Direct` inverts the interference-plus-noise matrix of user k;
/// `Woodbury` forms the MSE-optimal filter through the Sherman-Morrison-
/// Woodbury identity (one shared `K x K` inversion) and evaluates its SINR
/// through the Rayleigh quotient. Both yield the same SINR.
pub fn mmse_filter(
    up: &UnifiedProblem,
    d: &CMat,
    k: usize,
    variant: FilterVariant,
) -> Result<(CVec, f64)> {
    let mn = up.mn();
    let hk: CVec = up.h.column(k).into();
    let pk = up.p[k];

    // interference-plus-noise matrix sum_{j != k} P_j h_j h_j^H + D + sigma^2 I
    let mut intf = d + ceye_scaled(mn, up.sigma2);
    for j in 0..up.k_users {
        if j == k {
            continue;
        }
        let hj: CVec = up.h.column(j).into();
        intf += &hj * hj.adjoint() * C64::new(up.p[j], 0.0);
    }
    let intf = hermitize(&intf);

    match variant {
        FilterVariant::Direct => {
            let inv = crate::linalg::inv_hpd(&intf)
                .ok_or_else(|| Error::Numerical("interference matrix not PD".into()))?;
            let m_k = &inv * &hk;
            let sinr = pk * (hk.adjoint() * &m_k)[(0, 0)].re;
            Ok((m_k, sinr))
        }
        FilterVariant::Woodbury => {
            let dbar = hermitize(&(d + ceye_scaled(mn, up.sigma2)));
            let dbar_inv = crate::linalg::inv_hpd(&dbar)
                .ok_or_else(|| Error::Numerical("D + sigma^2 I not PD".into()))?;
            let sigma_inv = CMat::from_fn(up.k_users, up.k_users, |i, j| {
                if i == j {
                    C64::new(1.0 / up.p[i], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let hdh = hermitize(&(up.h.adjoint() * &dbar_inv * &up.h));
            let core = crate::linalg::inv_hpd(&(sigma_inv + hdh))
                .ok_or_else(|| Error::Numerical("Woodbury core not PD".into()))?;
            let full_inv = &dbar_inv - &dbar_inv * &up.h * core * up.h.adjoint() * &dbar_inv;
            let m_k = (&full_inv * &hk) * C64::new(pk, 0.0);

            let num = pk * (m_k.adjoint() * &hk)[(0, 0)].norm_sqr();
            let den = re_trace_prod(&(&m_k * m_k.adjoint()), &intf);
            Ok((m_k, num / den))
        }
    }
}

/// Draw a random Hermitian PSD matrix restricted to `pattern`, scaled by
/// `scale`. Test support shared by unit, property, and acceptance suites.
pub fn random_distortion(
    pattern: DistortionPattern,
    mn: usize,
    scale: f64,
    rng: &mut impl Rng,
) -> CMat {
    let mut l = CMat::zeros(mn, mn);
    for i in 0..mn {
        for j in 0..=i {
            if !pattern.contains(i, j) {
                continue;
            }
            if i == j {
                l[(i, j)] = C64::new(0.2 + rng.random::<f64>(), 0.0);
            } else {
                l[(i, j)] = C64::new(
                    rng.random::<f64>() - 0.5,
                    rng.random::<f64>() - 0.5,
                );
            }
        }
    }
    let d = hermitize(&(&l * l.adjoint())) * C64::new(scale, 0.0);
    // re-zero the off-pattern entries that hermitize may have touched
    CMat::from_fn(mn, mn, |i, j| {
        if pattern.contains(i, j) {
            d[(i, j)]
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{capacities, draw_block};
    use crate::sysmodel::Seeder;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn setup(
        k: usize,
        m: usize,
        n: usize,
        pair: SchemePair,
        mu: Weights,
        block: u64,
    ) -> UnifiedProblem {
        let cfg = SystemConfig::baseline(k, m, n, 2);
        let seeder = Seeder::new(17);
        let real = draw_block(&cfg, &seeder, block);
        let cap = capacities(&real, &cfg);
        build_unified(&cfg, &real.h, &cap, pair, &mu).unwrap()
    }

    #[test]
    fn selection_matrix_worked_example() {
        // I(A) D I(B)^T with A = {1,2}, B = {1,3} picks [[d11,d13],[d21,d23]]
        let d = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let ia = selection_matrix(&[0, 1], 3).unwrap();
        let ib = selection_matrix(&[0, 2], 3).unwrap();
        let sub = &ia * &d * ib.transpose();
        assert_eq!(sub, DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 4.0, 6.0]));
    }

    #[test]
    fn selection_matrix_full_and_single() {
        let full = selection_matrix(&[0, 1, 2], 3).unwrap();
        assert_eq!(full, DMatrix::identity(3, 3));
        let single = selection_matrix(&[1], 2).unwrap();
        assert_eq!(single, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert!(selection_matrix(&[5], 3).is_err());
    }

    #[test]
    fn unified_single_user_detectors_agree() {
        let mu = Weights::uniform(1);
        let mmse = setup(1, 1, 2, SchemePair::new(Quantizer::Rvq, Detector::Mmse), mu.clone(), 0);
        let sic = setup(1, 1, 2, SchemePair::new(Quantizer::Rvq, Detector::Sic), mu, 0);
        assert_eq!(mmse.v[0], sic.v[0]);
        assert_eq!(mmse.w[0], sic.w[0]);
        // W_1 = sigma^2 I, V_1 = P h h^H + sigma^2 I
        assert_eq!(mmse.w[0], ceye_scaled(2, mmse.sigma2));
    }

    #[test]
    fn unified_first_decoded_user_matches_mmse() {
        let mu = Weights::uniform(3);
        let mmse = setup(3, 1, 2, SchemePair::new(Quantizer::Rvq, Detector::Mmse), mu.clone(), 1);
        let sic = setup(3, 1, 2, SchemePair::new(Quantizer::Rvq, Detector::Sic), mu, 1);
        assert_eq!(mmse.v[0], sic.v[0]);
        assert_eq!(mmse.w[0], sic.w[0]);
    }

    #[test]
    fn unified_subset_lists() {
        let mu = Weights::uniform(2);
        let avq = setup(2, 2, 2, SchemePair::new(Quantizer::Avq, Detector::Mmse), mu.clone(), 0);
        assert_eq!(avq.s_bar, vec![vec![0], vec![1]]);
        assert_eq!(avq.t_bar.len(), 4);
        let dsc = setup(2, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Mmse), mu, 0);
        assert_eq!(dsc.s_bar, vec![vec![0], vec![1], vec![0, 1]]);
        assert_eq!(dsc.t_bar, vec![vec![0, 1, 2, 3]]);
    }

    #[test]
    fn avq_c_matrices_are_diagonal_and_v_dominates_w() {
        let mu = Weights::new(vec![0.3, 0.7]).unwrap();
        for pair in SchemePair::all() {
            let up = setup(2, 2, 2, pair, mu.clone(), 3);
            for c in &up.c_s {
                assert!(min_eig(c) >= -1e-10, "C(S) PSD");
                if pair.quantizer == Quantizer::Avq {
                    for i in 0..c.nrows() {
                        for j in 0..c.ncols() {
                            if i != j {
                                assert_eq!(c[(i, j)], C64::new(0.0, 0.0));
                            }
                        }
                    }
                }
            }
            for k in 0..up.k_users {
                assert!(min_eig(&(&up.v[k] - &up.w[k])) >= -1e-12 * up.p[k]);
            }
        }
    }

    #[test]
    fn scalar_rate_matches_closed_form() {
        let mu = Weights::uniform(1);
        for det in [Detector::Mmse, Detector::Sic] {
            let up = setup(1, 1, 1, SchemePair::new(Quantizer::Avq, det), mu.clone(), 2);
            let d = CMat::zeros(1, 1);
            let h2 = up.h[(0, 0)].norm_sqr();
            let expected = 0.4 * up.w_rf_hz * (1.0 + up.p[0] * h2 / up.sigma2).log2();
            let got = up.user_rate(0.4, &d, 0).unwrap();
            assert!(rel(got, expected) < 1e-12);
            assert_eq!(up.user_rate(0.0, &d, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn sic_telescoping_identity() {
        let mu = Weights::uniform(3);
        let up = setup(3, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Sic), mu, 4);
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let d = random_distortion(up.pattern, up.mn(), up.sigma2, &mut rng);
        let alpha0 = 0.6;

        let sum: f64 = (0..3).map(|k| up.user_rate(alpha0, &d, k).unwrap()).sum();

        let mut total = d.clone() + ceye_scaled(up.mn(), up.sigma2);
        for j in 0..3 {
            let hj: CVec = up.h.column(j).into();
            total += &hj * hj.adjoint() * C64::new(up.p[j], 0.0);
        }
        let num = logdet2_hpd(&hermitize(&total)).unwrap();
        let den = logdet2_hpd(&(d + ceye_scaled(up.mn(), up.sigma2))).unwrap();
        let expected = alpha0 * up.w_rf_hz * (num - den);
        assert!(rel(sum, expected) < 1e-9, "telescoping: {sum} vs {expected}");
    }

    #[test]
    fn mmse_filter_matched_bound_and_rate_identity() {
        let mu = Weights::uniform(1);
        let up = setup(1, 2, 2, SchemePair::new(Quantizer::Rvq, Detector::Mmse), mu, 5);
        let d = CMat::zeros(4, 4);
        let (_, sinr) = mmse_filter(&up, &d, 0, FilterVariant::Direct).unwrap();
        let h2: f64 = up.h.column(0).iter().map(|z| z.norm_sqr()).sum();
        assert!(rel(sinr, up.p[0] * h2 / up.sigma2) < 1e-10);

        // log2(1 + sinr) equals the determinant-ratio rate (Sylvester)
        let rate_sinr = 0.7 * up.w_rf_hz * (1.0 + sinr).log2();
        let rate_det = up.user_rate(0.7, &d, 0).unwrap();
        assert!(rel(rate_sinr, rate_det) < 1e-8);
    }

    #[test]
    fn mmse_filter_variants_agree() {
        let mu = Weights::uniform(3);
        let up = setup(3, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Mmse), mu, 6);
        let mut rng = ChaCha12Rng::seed_from_u64(21);
        for trial in 0..100 {
            let d = random_distortion(up.pattern, up.mn(), up.sigma2, &mut rng);
            let k = trial % up.k_users;
            let (_, s1) = mmse_filter(&up, &d, k, FilterVariant::Direct).unwrap();
            let (_, s2) = mmse_filter(&up, &d, k, FilterVariant::Woodbury).unwrap();
            assert!(rel(s1, s2) < 1e-8, "trial {trial}: {s1} vs {s2}");
        }
    }

    #[test]
    fn quantizer_requirement_scalar_formula() {
        let mu = Weights::uniform(2);
        let up = setup(2, 1, 1, SchemePair::new(Quantizer::Avq, Detector::Mmse), mu, 7);
        let dval = 3.2e-13;
        let d = CMat::from_fn(1, 1, |_, _| C64::new(dval, 0.0));
        let c = up.c_s[0][(0, 0)].re;
        let expected = 0.5 * up.f_s_hz * ((c + dval + up.sigma2) / dval).log2();
        let got = up.quantizer_requirement(0, &d, 0.5).unwrap();
        assert!(rel(got, expected) < 1e-12);
    }

    #[test]
    fn dsc_singleton_matches_rvq_requirement() {
        let mu = Weights::uniform(2);
        let rvq = setup(2, 2, 2, SchemePair::new(Quantizer::Rvq, Detector::Mmse), mu.clone(), 8);
        let dsc = setup(2, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Mmse), mu, 8);
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        // block-diagonal D is valid for both patterns
        let d = random_distortion(rvq.pattern, rvq.mn(), rvq.sigma2, &mut rng);
        for m in 0..2 {
            let r_rvq = rvq.quantizer_requirement(m, &d, 0.7).unwrap();
            let idx = dsc.s_bar.iter().position(|s| s == &vec![m]).unwrap();
            let r_dsc = dsc.quantizer_requirement(idx, &d, 0.7).unwrap();
            assert!(rel(r_rvq, r_dsc) < 1e-12);
        }
    }

    #[test]
    fn requirement_vanishes_for_large_distortion() {
        let mu = Weights::uniform(1);
        let up = setup(1, 1, 1, SchemePair::new(Quantizer::Avq, Detector::Mmse), mu, 9);
        let d = CMat::from_fn(1, 1, |_, _| C64::new(1e12, 0.0));
        let req = up.quantizer_requirement(0, &d, 1.0).unwrap();
        assert!(req >= 0.0 && req < 1e-9 * up.f_s_hz, "req = {req}");
    }

    #[test]
    fn requirement_nonincreasing_in_d() {
        let mu = Weights::uniform(2);
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        for pair in SchemePair::all() {
            let up = setup(2, 2, 2, pair, mu.clone(), 10);
            let d = random_distortion(up.pattern, up.mn(), up.sigma2, &mut rng);
            for _ in 0..10 {
                let delta = random_distortion(up.pattern, up.mn(), 0.3 * up.sigma2, &mut rng);
                let bigger = &d + &delta;
                for s_idx in 0..up.s_bar.len() {
                    let a = up.quantizer_requirement(s_idx, &d, 0.8).unwrap();
                    let b = up.quantizer_requirement(s_idx, &bigger, 0.8).unwrap();
                    assert!(b <= a * (1.0 + 1e-12) + 1e-9, "{b} > {a}");
                }
            }
        }
    }

    #[test]
    fn rates_scale_linearly_in_alpha0() {
        let mu = Weights::uniform(2);
        let up = setup(2, 2, 2, SchemePair::new(Quantizer::Rvq, Detector::Sic), mu, 11);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let d = random_distortion(up.pattern, up.mn(), up.sigma2, &mut rng);
        let base = up.weighted_sum_rate(0.25, &d).unwrap();
        let double = up.weighted_sum_rate(0.5, &d).unwrap();
        assert!(rel(double, 2.0 * base) < 1e-12);
        let base_req = up.quantizer_requirement(0, &d, 0.25).unwrap();
        let req2 = up.quantizer_requirement(0, &d, 0.5).unwrap();
        assert!(rel(req2, 2.0 * base_req) < 1e-12);
    }

    #[test]
    fn sic_dominates_mmse_per_user() {
        let mu = Weights::new(vec![0.2, 0.3, 0.5]).unwrap();
        let mmse = setup(3, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Mmse), mu.clone(), 12);
        let sic = setup(3, 2, 2, SchemePair::new(Quantizer::Dsc, Detector::Sic), mu, 12);
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let d = random_distortion(mmse.pattern, mmse.mn(), mmse.sigma2, &mut rng);
        for k in 0..3 {
            let r_m = mmse.user_rate(0.5, &d, k).unwrap();
            let r_s = sic.user_rate(0.5, &d, k).unwrap();
            assert!(r_s >= r_m * (1.0 - 1e-12), "user {k}: SIC {r_s} < MMSE {r_m}");
        }
        // first decoded user: exactly equal determinant ratios
        let r_m = mmse.user_rate(0.5, &d, 0).unwrap();
        let r_s = sic.user_rate(0.5, &d, 0).unwrap();
        assert!(rel(r_m, r_s) < 1e-10);
    }

    #[test]
    fn weighted_sum_degenerate_and_uniform() {
        let up0 = setup(2, 1, 2, SchemePair::new(Quantizer::Rvq, Detector::Mmse), Weights::uniform(2), 13);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let d = random_distortion(up0.pattern, up0.mn(), up0.sigma2, &mut rng);
        let r0 = up0.user_rate(0.5, &d, 0).unwrap();
        let r1 = up0.user_rate(0.5, &d, 1).unwrap();
        let wsum = up0.weighted_sum_rate(0.5, &d).unwrap();
        assert!(rel(wsum, 0.5 * (r0 + r1)) < 1e-12);

        // mu = e_k picks out a single user's rate
        let cfg = SystemConfig::baseline(2, 1, 2, 2);
        let seeder = Seeder::new(17);
        let real = draw_block(&cfg, &seeder, 13);
        let cap = capacities(&real, &cfg);
        let mu = Weights::new(vec![0.0, 1.0]).unwrap();
        let up = build_unified(&cfg, &real.h, &cap, SchemePair::new(Quantizer::Rvq, Detector::Sic), &mu).unwrap();
        let wsum = up.weighted_sum_rate(0.5, &d).unwrap();
        // the weight-1 user is decoded last (position 1)
        assert!(rel(wsum, up.user_rate(0.5, &d, 1).unwrap()) < 1e-12);
    }

    #[test]
    fn sic_uniform_sum_invariant_under_reordering() {
        let cfg = SystemConfig::baseline(3, 2, 1, 2);
        let seeder = Seeder::new(23);
        let real = draw_block(&cfg, &seeder, 0);
        let cap = capacities(&real, &cfg);
        let pair = SchemePair::new(Quantizer::Rvq, Detector::Sic);
        let mu = Weights::uniform(3);
        let up = build_unified(&cfg, &real.h, &cap, pair, &mu).unwrap();

        // permute users: swap columns of H
        let perm = [2usize, 0, 1];
        let h2 = CMat::from_fn(real.h.nrows(), 3, |r, c| real.h[(r, perm[c])]);
        let up2 = build_unified(&cfg, &h2, &cap, pair, &mu).unwrap();

        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let d = random_distortion(up.pattern, up.mn(), up.sigma2, &mut rng);
        let a = up.weighted_sum_rate(0.4, &d).unwrap();
        let b = up2.weighted_sum_rate(0.4, &d).unwrap();
        assert!(rel(a, b) < 1e-9);
    }

    #[test]
    fn feasibility_reports_violations_by_name() {
        let mu = Weights::uniform(2);
        let up = setup(2, 2, 1, SchemePair::new(Quantizer::Rvq, Detector::Mmse), mu, 14);
        let d = ceye_scaled(2, up.sigma2);

        // r = 0, alpha0 = 0: C1 trivially holds (requirement 0), C2 holds
        let v = up.feasibility(0.0, &[0.0, 0.0], &d, &[0.0, 0.0]).unwrap();
        assert!(v.is_empty(), "{v:?}");

        // tight C2 boundary is ok
        let alpha_m = [0.2, 0.3];
        let r: Vec<f64> = (0..2)
            .map(|m| up.cap.c_fso[m] + alpha_m[m] * up.cap.c_rf[m])
            .collect();
        let req: Vec<f64> = (0..2)
            .map(|s| up.quantizer_requirement(s, &d, 0.5).unwrap())
            .collect();
        if r.iter().zip(&req).all(|(ri, qi)| ri >= qi) {
            let v = up.feasibility(0.5, &alpha_m, &d, &r).unwrap();
            assert!(v.is_empty(), "{v:?}");
        }

        // underfeed RU 1 only: C1 S={1} must be named
        let r_bad = [req[0] * 0.9, req[1] * 1.1];
        let v = up.feasibility(0.5, &[1.0, 1.0], &d, &r_bad).unwrap();
        assert!(v.contains(&"C1 S={1}".to_string()), "{v:?}");
        assert!(!v.contains(&"C1 S={2}".to_string()), "{v:?}");

        // violate C2 on RU 2
        let r_over = [req[0], up.cap.c_fso[1] + 0.5 * up.cap.c_rf[1]];
        let v = up.feasibility(0.5, &[1.0, 0.4], &d, &r_over).unwrap();
        assert!(v.contains(&"C2 m=2".to_string()), "{v:?}");
    }

    #[test]
    fn weights_validation() {
        assert!(Weights::new(vec![0.5, 0.5]).is_ok());
        assert!(Weights::new(vec![0.5, 0.6]).is_err());
        assert!(Weights::new(vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn distortion_matrix_validation() {
        let mut rng = ChaCha12Rng::seed_from_u64(10);
        let d = random_distortion(DistortionPattern::Diagonal, 3, 1.0, &mut rng);
        assert!(DistortionMatrix { d: d.clone(), pattern: DistortionPattern::Diagonal }.validate().is_ok());

        let mut bad = d.clone();
        bad[(0, 1)] = C64::new(0.1, 0.0);
        bad[(1, 0)] = C64::new(0.1, 0.0);
        assert!(DistortionMatrix { d: bad, pattern: DistortionPattern::Diagonal }.validate().is_err());

        let mut neg = d;
        neg[(0, 0)] = C64::new(-1.0, 0.0);
        assert!(DistortionMatrix { d: neg, pattern: DistortionPattern::Diagonal }.validate().is_err());
    }
}
