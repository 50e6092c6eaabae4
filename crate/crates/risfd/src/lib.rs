//! Joint base-station / RIS beamforming optimizer and Monte-Carlo simulator
//! for RIS-assisted full-duplex networks.
//!
//! The library maximizes the downlink sum rate of a full-duplex base station
//! under an uplink QoS constraint, by alternating between:
//!
//! - an active-beamforming subproblem solved by successive convex
//!   approximation (SCA) over the precoder columns, and
//! - a passive RIS phase subproblem solved by penalty convex-concave
//!   programming (PCCP) over the unit-modulus reflection vector,
//!
//! with the outer loop driven by a Lagrangian-dual / Dinkelbach rewrite of
//! the sum-of-log-ratios objective. Convex subproblems are solved by the
//! self-contained log-barrier QCQP solver in [`qcqp`].
//!
//! Module map:
//! - [`cplx`] — dense complex matrices, quadratic forms, real embedding
//! - [`qcqp`] — interior-point solver for convex QCQPs over real variables
//! - [`channel`] — Rician channel generation from scenario geometry
//! - [`system`] — SINRs, rates, and the affine-in-theta cascade decomposition
//! - [`transforms`] — Lagrangian dual / Dinkelbach transforms and UL QoS budget
//! - [`bs`] — active BS beamforming subproblem (SCA)
//! - [`ris`] — passive RIS phase subproblem (SCA + PCCP)
//! - [`fris`] — the alternating-optimization orchestrator
//! - [`baselines`] — MRT / MRC / half-duplex / no-RIS comparison schemes
//! - [`experiment`] — seeded Monte-Carlo harness, CSV output, plot scripts

pub mod baselines;
pub mod bs;
pub mod channel;
pub mod cplx;
pub mod experiment;
pub mod fris;
pub mod qcqp;
pub mod ris;
pub mod system;
pub mod transforms;

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not Hermitian (residual {residual:.3e} > tol {tol:.3e})")]
    NotHermitian { residual: f64, tol: f64 },
    #[error("problem infeasible: {0}")]
    Infeasible(String),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
