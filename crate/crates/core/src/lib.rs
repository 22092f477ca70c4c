//! Uplink exposure-index minimization for RIS-assisted cells.
//!
//! A base station with `M` antennas serves `K` single-antenna users, helped
//! by a reconfigurable intelligent surface (RIS) with `N` passive phase
//! shifters. Zero-forcing reception fixes the beamformer and the minimum
//! transmit powers for the users' target spectral efficiencies; the RIS
//! phases are then tuned by dual gradient descent to minimize the population
//! exposure index (sum of reference SAR times transmit power) subject to the
//! per-device power cap.
//!
//! Module map:
//! - [`linalg`]: complex dense kernels (pseudo-inverse, Gram inverse, outer products)
//! - [`scenario`]: geometry, 3GPP path loss, Rician/Rayleigh channel synthesis
//! - [`exposure`]: exposure index and rate-satisfaction ratio
//! - [`zf_link`]: ZF beamformer, SINR, minimum powers for target rates
//! - [`lagrangian`]: weighted effective channel, Lagrangian value, analytic
//!   gradient and Hessian in the phases
//! - [`optimizer`]: optimal-step sub-algorithm, dual gradient descent,
//!   baseline and quantized phase strategies
//! - [`harness`]: Monte Carlo sweeps and CSV emission
//! - [`check`]: finite-difference validation of the analytic derivatives

pub mod check;
pub mod error;
pub mod exposure;
pub mod harness;
pub mod lagrangian;
pub mod linalg;
pub mod optimizer;
pub mod scenario;
pub mod zf_link;

pub use error::Error;
pub use linalg::{CMatrix, CVector};

/// Crate-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
