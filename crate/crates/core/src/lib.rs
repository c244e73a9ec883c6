//! Simulator and optimization toolkit for the uplink of a C-RAN whose remote
//! radio units forward compressed receive signals to the central unit over
//! hybrid RF/FSO fronthaul links.
//!
//! The toolkit jointly optimizes the RF time split between the multiple-access
//! and fronthaul links and the quantization-noise covariance matrices of the
//! RU compressors, for every pairing of a quantizer (per-antenna VQ, per-RU
//! VQ, distributed source coding) with a CU detector (linear MMSE, SIC).
//! The solver nests alternating convex optimization inside a golden section
//! search over the access-time fraction.
//!
//! Module layout:
//! - [`sysmodel`]: configuration, unit conversions, noise powers, seeding.
//! - [`channel`]: fading draws and fronthaul link capacities.
//! - [`rates`]: unified problem data, detector rates, quantizer constraints.
//! - [`optimizer`]: constraint/objective transforms and the nested solver.
//! - [`oracles`]: independent brute-force and closed-form references used by
//!   tests; intentionally shares no linear-algebra kernels with `optimizer`.

pub mod channel;
pub mod error;
pub mod linalg;
pub mod optimizer;
pub mod oracles;
pub mod rates;
pub mod sysmodel;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
