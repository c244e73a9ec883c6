//! Fading realizations for the three link types and per-block fronthaul
//! capacities.
//!
//! RF gains decompose as `beta = sqrt(beta_bar) * beta_tilde`: the two-slope
//! path-loss factor carries all distance dependence and the small-scale
//! coefficient is normalized to unit mean-square power (Rayleigh on the
//! access links, Rician on the RF fronthaul). FSO gains decompose as
//! `g = g_bar * g_tilde` with `g_tilde` a unit-mean Gamma-Gamma variate.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::linalg::{all_finite, C64, CMat};
use crate::sysmodel::{noise_powers, LinkKind, Seeder, SystemConfig};
use crate::{Error, Result};

/// One fading block: stacked access channels, per-RU fronthaul RF channels,
/// and per-RU FSO gains.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `MN x K`; rows `mN..(m+1)N` are the access channel of RU m.
    pub h: CMat,
    /// `L x N` RF fronthaul channel per RU.
    pub f: Vec<CMat>,
    /// Nonnegative FSO gain per RU.
    pub g: Vec<f64>,
}

impl ChannelRealization {
    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.h.nrows() != cfg.mn() || self.h.ncols() != cfg.k {
            return Err(Error::Dimension(format!(
                "H is {}x{}, expected {}x{}",
                self.h.nrows(),
                self.h.ncols(),
                cfg.mn(),
                cfg.k
            )));
        }
        if self.f.len() != cfg.m || self.g.len() != cfg.m {
            return Err(Error::Dimension("per-RU vectors".into()));
        }
        for fm in &self.f {
            if fm.nrows() != cfg.l || fm.ncols() != cfg.n {
                return Err(Error::Dimension("F_m shape".into()));
            }
            if !all_finite(fm) {
                return Err(Error::Numerical("non-finite F_m".into()));
            }
        }
        if !all_finite(&self.h) {
            return Err(Error::Numerical("non-finite H".into()));
        }
        if self.g.iter().any(|&g| !(g >= 0.0) || !g.is_finite()) {
            return Err(Error::Numerical("FSO gain must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// Per-RU fronthaul capacities in bits/sec.
#[derive(Debug, Clone)]
pub struct CapacityVector {
    pub c_fso: Vec<f64>,
    pub c_rf: Vec<f64>,
}

/// Two-slope average path gain
/// `[lambda sqrt(Gt Gr) / (4 pi d_ref)]^2 * (d_ref / d)^nu`.
fn path_loss(lambda: f64, g_tx_dbi: f64, g_rx_dbi: f64, d_ref: f64, d: f64, nu: f64) -> f64 {
    let gains = 10f64.powf((g_tx_dbi + g_rx_dbi) / 20.0);
    let near = (lambda * gains / (4.0 * std::f64::consts::PI * d_ref)).powi(2);
    near * (d_ref / d).powf(nu)
}

/// Average access-link path gain.
pub fn access_path_gain(cfg: &SystemConfig) -> f64 {
    path_loss(
        cfg.lambda_rf_m,
        cfg.g_tx_mu_dbi,
        cfg.g_rx_ru_dbi,
        cfg.d_ref_m,
        cfg.d_ac_m,
        cfg.nu,
    )
}

/// Average RF fronthaul path gain.
pub fn fronthaul_path_gain(cfg: &SystemConfig) -> f64 {
    path_loss(
        cfg.lambda_rf_m,
        cfg.g_tx_ru_dbi,
        cfg.g_rx_cu_dbi,
        cfg.d_ref_m,
        cfg.d_fr_m,
        cfg.nu,
    )
}

/// Rician direct-path power fraction `K/(K+1)` with `K = 10^(omega_db/10)`.
pub fn rician_direct_power_fraction(omega_db: f64) -> f64 {
    let k = 10f64.powf(omega_db / 10.0);
    k / (k + 1.0)
}

/// Average FSO gain `R * erf(sqrt(pi) r / (sqrt(2) phi d))^2 * 10^(-kappa d / 10)`.
pub fn fso_average_gain(cfg: &SystemConfig) -> f64 {
    let spread = erf(
        (std::f64::consts::PI).sqrt() * cfg.r_aperture_m
            / (2f64.sqrt() * cfg.phi_divergence_rad * cfg.d_fr_m),
    );
    cfg.r_responsivity * spread * spread * 10f64.powf(-cfg.kappa_db_per_km * cfg.d_fr_m / 10.0)
}

/// Error function by rational approximation (Abramowitz & Stegun 7.1.26),
/// absolute error below 1.5e-7.
pub fn erf(x: f64) -> f64 {
    const P: f64 = 0.3275911;
    const A: [f64; 5] = [0.254829592, -0.284496736, 1.421413741, -1.453152027, 1.061405429];
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + P * x);
    let mut poly = 0.0;
    for &a in A.iter().rev() {
        poly = t * (poly + a);
    }
    sign * (1.0 - poly * (-x * x).exp())
}

fn cn01(rng: &mut ChaCha12Rng) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Stacked access channel `H`: entries `sqrt(beta_bar) * h_tilde` with
/// `h_tilde ~ CN(0, 1)` (Rayleigh). Rows of RU m come from the stream
/// `(block, Access, m)`.
pub fn draw_access(cfg: &SystemConfig, seeder: &Seeder, block: u64) -> CMat {
    let amp = access_path_gain(cfg).sqrt();
    let mut h = CMat::zeros(cfg.mn(), cfg.k);
    for m in 0..cfg.m {
        let mut rng = seeder.stream(block, LinkKind::Access, m as u64);
        for row in 0..cfg.n {
            for col in 0..cfg.k {
                h[(m * cfg.n + row, col)] = cn01(&mut rng) * C64::new(amp, 0.0);
            }
        }
    }
    h
}

/// Per-RU RF fronthaul channels: entries `sqrt(beta_bar) * f_tilde` where
/// `|f_tilde|` is Rician with K-factor `10^(omega_db/10)`, `E|f_tilde|^2 = 1`,
/// the scattered part circularly symmetric and the direct part drawn with a
/// uniform phase.
pub fn draw_fronthaul_rf(cfg: &SystemConfig, seeder: &Seeder, block: u64) -> Vec<CMat> {
    let amp = fronthaul_path_gain(cfg).sqrt();
    let kf = 10f64.powf(cfg.omega_db / 10.0);
    let direct = (kf / (kf + 1.0)).sqrt();
    let scatter = (1.0 / (kf + 1.0)).sqrt();
    (0..cfg.m)
        .map(|m| {
            let mut rng = seeder.stream(block, LinkKind::FronthaulRf, m as u64);
            CMat::from_fn(cfg.l, cfg.n, |_, _| {
                let psi = rng.random::<f64>() * std::f64::consts::TAU;
                let los = C64::new(psi.cos(), psi.sin()) * C64::new(direct, 0.0);
                let nlos = cn01(&mut rng) * C64::new(scatter, 0.0);
                (los + nlos) * C64::new(amp, 0.0)
            })
        })
        .collect()
}

/// Per-RU FSO gains `g = g_bar * g_tilde` with `g_tilde` the product of two
/// independent unit-mean Gamma variates with shapes Theta and Phi.
pub fn draw_fso(cfg: &SystemConfig, seeder: &Seeder, block: u64) -> Vec<f64> {
    let gbar = fso_average_gain(cfg);
    let gx = Gamma::new(cfg.theta, 1.0 / cfg.theta).expect("theta > 0");
    let gy = Gamma::new(cfg.phi, 1.0 / cfg.phi).expect("phi > 0");
    (0..cfg.m)
        .map(|m| {
            let mut rng = seeder.stream(block, LinkKind::Fso, m as u64);
            let x: f64 = gx.sample(&mut rng);
            let y: f64 = gy.sample(&mut rng);
            gbar * x * y
        })
        .collect()
}

/// Draw a full fading block.
pub fn draw_block(cfg: &SystemConfig, seeder: &Seeder, block: u64) -> ChannelRealization {
    ChannelRealization {
        h: draw_access(cfg, seeder, block),
        f: draw_fronthaul_rf(cfg, seeder, block),
        g: draw_fso(cfg, seeder, block),
    }
}

/// IM/DD FSO achievable rate
/// `(W_fso / 2) log2(1 + e Pfso^2 g^2 / (2 pi delta^2))`, bits/sec.
pub fn fso_capacity(g: f64, cfg: &SystemConfig) -> f64 {
    let p = cfg.pfso_watt();
    let arg = std::f64::consts::E * p * p * g * g / (2.0 * std::f64::consts::PI * cfg.delta2_a2);
    0.5 * cfg.w_fso_hz * (1.0 + arg).log2()
}

/// Exact waterfilling over the nonzero singular-value modes.
#[derive(Debug, Clone)]
pub struct Waterfill {
    /// Water level; 0 when no mode is usable.
    pub mu: f64,
    /// Inverse-SNR levels `noise / chi_j^2` of the usable modes, ascending.
    pub levels: Vec<f64>,
    /// Number of active modes.
    pub active: usize,
}

impl Waterfill {
    /// Allocated power `sum_j [mu - level_j]^+`.
    pub fn allocated_power(&self) -> f64 {
        self.levels.iter().take(self.active).map(|l| self.mu - l).sum()
    }

    /// Capacity in bits/sec for RF bandwidth `w_hz`.
    pub fn capacity(&self, w_hz: f64) -> f64 {
        w_hz * self
            .levels
            .iter()
            .take(self.active)
            .map(|l| (self.mu / l).log2())
            .sum::<f64>()
    }
}

/// Solve `sum_j [mu - noise/chi_j^2]^+ = power` exactly over the sorted
/// levels. `sv2` holds squared singular values; zero modes are dropped.
pub fn waterfilling(sv2: &[f64], noise: f64, power: f64) -> Waterfill {
    let mut levels: Vec<f64> = sv2
        .iter()
        .filter(|&&s| s > 0.0)
        .map(|&s| noise / s)
        .collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if levels.is_empty() || power <= 0.0 {
        return Waterfill { mu: 0.0, levels, active: 0 };
    }
    // The set of k with (power + sum_{i<=k} level_i)/k > level_k is a prefix;
    // the optimum is its largest element.
    let mut best_k = 1;
    let mut best_mu = power + levels[0];
    let mut running = levels[0];
    for k in 2..=levels.len() {
        running += levels[k - 1];
        let mu = (power + running) / k as f64;
        if mu > levels[k - 1] {
            best_k = k;
            best_mu = mu;
        }
    }
    Waterfill { mu: best_mu, levels, active: best_k }
}

/// RF fronthaul capacity of one RU via optimal waterfilling (bits/sec).
pub fn rf_fronthaul_capacity(f_m: &CMat, cfg: &SystemConfig) -> f64 {
    let (_, varrho2) = noise_powers(cfg);
    let sv = f_m.clone().svd(false, false).singular_values;
    let sv2: Vec<f64> = sv.iter().map(|s| s * s).collect();
    waterfilling(&sv2, varrho2, cfg.pbar_watt()).capacity(cfg.w_rf_hz)
}

/// Both fronthaul capacities for every RU.
pub fn capacities(real: &ChannelRealization, cfg: &SystemConfig) -> CapacityVector {
    CapacityVector {
        c_fso: real.g.iter().map(|&g| fso_capacity(g, cfg)).collect(),
        c_rf: real.f.iter().map(|f| rf_fronthaul_capacity(f, cfg)).collect(),
    }
}
