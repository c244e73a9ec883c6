//! System configuration, unit conversions, noise powers, and the
//! deterministic seeding contract for all randomness.
//!
//! Powers are stored in dBm, bandwidths in Hz, distances in meters, exactly
//! as they appear in the configuration file. Conversions to linear units
//! happen at the point of use. The receiver noise power is
//! `[sigma^2]_dBm = N0 + 10 log10(W_rf / 1 MHz) + NF`, i.e. dB-domain
//! addition with the bandwidth expressed in MHz (the PSD is per MHz); the
//! RU-side and CU-side RF noise powers are equal.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// dBm to Watt: `10^((p - 30)/10)`.
pub fn dbm_to_watt(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

/// Watt to dBm: `10 log10(p) + 30`.
pub fn watt_to_dbm(p_w: f64) -> f64 {
    10.0 * p_w.log10() + 30.0
}

/// Algorithmic knobs for the nested GSS / ACO solver.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// GSS termination threshold on the bracketing interval length.
    pub gss_epsilon: f64,
    /// ACO termination threshold on the surrogate objective, bits/sec.
    pub aco_epsilon_bps: f64,
    /// Maximum ACO inner iterations.
    pub n_max: usize,
    /// Inner-loop initialization `D = d0_scale * sigma^2 * I`.
    pub d0_scale: f64,
    /// Initial log-barrier weight.
    pub barrier_t0: f64,
    /// Geometric growth factor of the barrier weight.
    pub barrier_mult: f64,
    /// Gradient tolerance of the quasi-Newton barrier stages.
    pub newton_tol: f64,
    /// Target on the duality-gap proxy (constraint count / barrier weight),
    /// in units of the W_rf-normalized objective.
    pub subproblem_tol: f64,
    /// Root seed; every random stream is derived from it.
    pub rng_seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            gss_epsilon: 0.01,
            aco_epsilon_bps: 1e4, // 0.01 Mbps
            n_max: 50,
            d0_scale: 1.0,
            barrier_t0: 1.0,
            barrier_mult: 10.0,
            newton_tol: 1e-8,
            subproblem_tol: 1e-6,
            rng_seed: 1,
        }
    }
}

/// All physical and algorithmic parameters of one scenario.
///
/// Field names carry the unit; the TOML configuration file uses one key per
/// field and rejects unknown keys.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of mobile users.
    pub k: usize,
    /// Number of remote radio units.
    pub m: usize,
    /// RF antennas per RU.
    pub n: usize,
    /// RF antennas at the CU.
    pub l: usize,

    /// Per-MU transmit power.
    pub p_k_dbm: f64,
    /// Per-RU RF fronthaul transmit power.
    pub pbar_m_dbm: f64,
    /// Per-RU FSO transmit power.
    pub pfso_m_dbm: f64,

    pub w_rf_hz: f64,
    pub w_fso_hz: f64,
    /// I/Q sampling rate of the RU quantizers.
    pub f_s_hz: f64,

    pub n0_dbm_per_mhz: f64,
    pub nf_db: f64,
    /// Shot-noise variance at the FSO receivers, A^2.
    pub delta2_a2: f64,

    pub d_ac_m: f64,
    pub d_fr_m: f64,
    pub d_ref_m: f64,
    /// RF path-loss exponent.
    pub nu: f64,

    pub lambda_rf_m: f64,
    pub lambda_fso_m: f64,

    /// Access-link antenna gains (MU transmit, RU receive).
    pub g_tx_mu_dbi: f64,
    pub g_rx_ru_dbi: f64,
    /// Fronthaul-link antenna gains (RU transmit, CU receive).
    pub g_tx_ru_dbi: f64,
    pub g_rx_cu_dbi: f64,

    /// Rician K-factor of the RF fronthaul fading, dB.
    pub omega_db: f64,
    /// Gamma-Gamma shape parameters of the FSO fading.
    pub theta: f64,
    pub phi: f64,
    /// FSO weather attenuation; the FSO average gain carries the factor
    /// `10^(-kappa * d_fr_m / 10)` with the fronthaul distance in meters.
    pub kappa_db_per_km: f64,

    /// Photodetector responsivity.
    pub r_responsivity: f64,
    /// Receive aperture radius, m.
    pub r_aperture_m: f64,
    /// Laser beam divergence angle, rad.
    pub phi_divergence_rad: f64,

    #[serde(default)]
    pub solver: SolverOptions,
}

impl SystemConfig {
    /// Baseline scenario parameters; dimensions are supplied by the caller.
    pub fn baseline(k: usize, m: usize, n: usize, l: usize) -> Self {
        Self {
            k,
            m,
            n,
            l,
            p_k_dbm: 16.0,
            pbar_m_dbm: 33.0,
            pfso_m_dbm: 13.0,
            w_rf_hz: 40e6,
            w_fso_hz: 1e9,
            f_s_hz: 40e6,
            n0_dbm_per_mhz: -114.0,
            nf_db: 5.0,
            delta2_a2: 1e-14,
            d_ac_m: 100.0,
            d_fr_m: 500.0,
            d_ref_m: 5.0,
            nu: 3.5,
            lambda_rf_m: 85.7e-3,
            lambda_fso_m: 1550e-9,
            g_tx_mu_dbi: 0.0,
            g_rx_ru_dbi: 10.0,
            g_tx_ru_dbi: 10.0,
            g_rx_cu_dbi: 10.0,
            omega_db: 6.0,
            theta: 2.23,
            phi: 1.54,
            kappa_db_per_km: 50e-3,
            r_responsivity: 0.5,
            r_aperture_m: 0.1,
            phi_divergence_rad: 2e-3,
            solver: SolverOptions::default(),
        }
    }

    /// Parse from TOML text; unknown keys are errors.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SystemConfig =
            toml::from_str(s).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate().map_err(Error::InvalidConfig)?;
        Ok(cfg)
    }

    /// Serialize the fully resolved configuration to TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every invariant; returns the violated ones by name.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut v = Vec::new();
        if self.k < 1 {
            v.push("K >= 1".to_string());
        }
        if self.m < 1 {
            v.push("M >= 1".to_string());
        }
        if self.n < 1 {
            v.push("N >= 1".to_string());
        }
        if self.l < 1 {
            v.push("L >= 1".to_string());
        }
        // The constraint transform enumerates 2^M - 1 subsets for every
        // scheme, and DSC additionally quantizes over them.
        if self.m > 8 {
            v.push("DSC subset bound".to_string());
        }
        let positives: &[(&str, f64)] = &[
            ("w_rf_hz > 0", self.w_rf_hz),
            ("w_fso_hz > 0", self.w_fso_hz),
            ("f_s_hz > 0", self.f_s_hz),
            ("delta2_a2 > 0", self.delta2_a2),
            ("d_ac_m > 0", self.d_ac_m),
            ("d_fr_m > 0", self.d_fr_m),
            ("d_ref_m > 0", self.d_ref_m),
            ("lambda_rf_m > 0", self.lambda_rf_m),
            ("lambda_fso_m > 0", self.lambda_fso_m),
            ("theta > 0", self.theta),
            ("phi > 0", self.phi),
            ("r_responsivity > 0", self.r_responsivity),
            ("r_aperture_m > 0", self.r_aperture_m),
            ("phi_divergence_rad > 0", self.phi_divergence_rad),
        ];
        for (name, val) in positives {
            if !(*val > 0.0) || !val.is_finite() {
                v.push((*name).to_string());
            }
        }
        if !(self.f_s_hz >= self.w_rf_hz) {
            v.push("f_s_hz >= w_rf_hz".to_string());
        }
        if !(self.solver.gss_epsilon > 0.0) {
            v.push("gss_epsilon > 0".to_string());
        }
        if !(self.solver.aco_epsilon_bps > 0.0) {
            v.push("aco_epsilon_bps > 0".to_string());
        }
        if self.solver.n_max < 1 {
            v.push("n_max >= 1".to_string());
        }
        if !(self.solver.d0_scale > 0.0) {
            v.push("d0_scale > 0".to_string());
        }
        if !(self.solver.barrier_t0 > 0.0) || !(self.solver.barrier_mult > 1.0) {
            v.push("barrier parameters".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(v)
        }
    }

    /// Per-MU transmit power in Watt.
    pub fn p_k_watt(&self) -> f64 {
        dbm_to_watt(self.p_k_dbm)
    }

    pub fn pbar_watt(&self) -> f64 {
        dbm_to_watt(self.pbar_m_dbm)
    }

    pub fn pfso_watt(&self) -> f64 {
        dbm_to_watt(self.pfso_m_dbm)
    }

    /// Total RU antenna count `M * N`.
    pub fn mn(&self) -> usize {
        self.m * self.n
    }
}

/// Noise powers `(sigma^2, varrho^2)` in Watt at the RU and CU RF receivers.
/// Both are equal by construction.
pub fn noise_powers(cfg: &SystemConfig) -> (f64, f64) {
    let dbm = cfg.n0_dbm_per_mhz + 10.0 * (cfg.w_rf_hz / 1e6).log10() + cfg.nf_db;
    let w = dbm_to_watt(dbm);
    (w, w)
}

/// Which fading process a random stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkKind {
    Access,
    FronthaulRf,
    Fso,
}

impl LinkKind {
    fn tag(self) -> u64 {
        match self {
            LinkKind::Access => 1,
            LinkKind::FronthaulRf => 2,
            LinkKind::Fso => 3,
        }
    }
}

/// Derives independent random streams from a single root seed.
///
/// Stream identity is `(block index, link type, RU index)`, so realizations
/// for distinct blocks can be generated concurrently in any order and still
/// reproduce bit-identically.
#[derive(Debug, Clone, Copy)]
pub struct Seeder {
    pub seed: u64,
}

impl Seeder {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, block: u64, link: LinkKind, ru: u64) -> ChaCha12Rng {
        // splitmix64 chain over the stream coordinates, expanded to the
        // full 256-bit ChaCha key.
        let mut s = splitmix64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        s = splitmix64(s ^ block.wrapping_mul(0xbf58_476d_1ce4_e5b9));
        s = splitmix64(s ^ link.tag().wrapping_mul(0x94d0_49bb_1331_11eb));
        s = splitmix64(s ^ ru.wrapping_mul(0xd6e8_feb8_6659_fd93));
        let mut key = [0u8; 32];
        for chunk in 0..4 {
            s = splitmix64(s);
            key[chunk * 8..(chunk + 1) * 8].copy_from_slice(&s.to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
