//! Numerical laboratory for the Keller-Segel system with density-suppressed
//! motility and indirect signal production
//!
//! ```text
//! u_t = Δ(γ(v) u) - u f(u)
//! τ v_t = Δv - v + h
//! δ h_t + h = u
//! ```
//!
//! with homogeneous Neumann conditions. The crate provides mass-conserving
//! semi-implicit solvers, the auxiliary-function identities and Lyapunov
//! energy used to validate them, and experiment drivers for critical-mass
//! and damping studies.

// `!(x > 0.0)` is used on purpose so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auxiliary;
pub mod diagnostics;
pub mod discretization;
pub mod error;
pub mod experiments;
pub mod initdata;
pub mod model;
pub mod stepper;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
