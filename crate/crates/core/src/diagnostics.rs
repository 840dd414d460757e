//! Per-level observables: norms, the Lyapunov functional F, its
//! dissipation D, and the discrete energy-law residual.
//!
//! For `γ = e^{-v}`, `τ = δ = 1` the pair
//!
//! ```text
//! F = ∫(u ln u - u v) + ½(‖v‖² + ‖∇v‖²) + ½‖Δv - v + h‖²
//! D = ∫ u e^{-v} |∇(ln u - v)|² + ‖∇(Δv - v + h)‖² + 2‖Δv - v + h‖²
//! ```
//!
//! satisfies `dF/dt + D = 0`. The discrete D evaluates the first integrand
//! on faces with the logarithmic mean of `u e^{-v}` as face coefficient,
//! `Σ trans (φ_j - φ_i)(ξ_j - ξ_i)` with `ξ = ln u - v`, `φ = e^ξ`; together
//! with the summation-by-parts gradient this makes the identity exact for the
//! spatially discrete system.

use crate::discretization::Field;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::stepper::State;

/// Regularization of `ln u` inside D.
pub const LN_REGULARIZATION: f64 = 1e-14;
/// Values of `u` below this contribute nothing to `u ln u`.
pub const ULN_CUTOFF: f64 = 1e-300;

/// Scalar observables at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticsRecord {
    /// Index of the time level within its run.
    pub step: usize,
    pub t: f64,
    /// Step size that produced this level; 0 for the initial level.
    pub dt: f64,
    pub mass: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub v_l2: f64,
    pub v_linf: f64,
    pub gradv_l2: f64,
    pub gradv_linf: f64,
    pub h_l1: f64,
    pub h_linf: f64,
    pub energy: Option<f64>,
    pub dissipation: Option<f64>,
    pub r1: Option<f64>,
    pub r2: Option<f64>,
}

/// Norm block of a [`DiagnosticsRecord`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Norms {
    pub mass: f64,
    pub u_l2: f64,
    pub u_linf: f64,
    pub v_l2: f64,
    pub v_linf: f64,
    pub gradv_l2: f64,
    pub gradv_linf: f64,
    pub h_l1: f64,
    pub h_linf: f64,
}

pub fn norms(state: &State) -> Norms {
    let grid = state.grid();
    Norms {
        mass: state.u.integrate(),
        u_l2: state.u.l2(),
        u_linf: state.u.linf(),
        v_l2: state.v.l2(),
        v_linf: state.v.linf(),
        gradv_l2: state.v.grad_sq_integral().sqrt(),
        gradv_linf: grid.face_grad_max(state.v.values()),
        h_l1: state.h.l1(),
        h_linf: state.h.linf(),
    }
}

impl DiagnosticsRecord {
    pub fn capture(
        step: usize,
        state: &State,
        dt: f64,
        energy: Option<(f64, f64)>,
        residuals: (Option<f64>, Option<f64>),
    ) -> Self {
        let n = norms(state);
        DiagnosticsRecord {
            step,
            t: state.t,
            dt,
            mass: n.mass,
            u_l2: n.u_l2,
            u_linf: n.u_linf,
            v_l2: n.v_l2,
            v_linf: n.v_linf,
            gradv_l2: n.gradv_l2,
            gradv_linf: n.gradv_linf,
            h_l1: n.h_l1,
            h_linf: n.h_linf,
            energy: energy.map(|e| e.0),
            dissipation: energy.map(|e| e.1),
            r1: residuals.0,
            r2: residuals.1,
        }
    }
}

fn check_regime(state: &State, params: &ModelParams) -> Result<()> {
    if !params.is_energy_regime() {
        return Err(Error::Regime(format!(
            "motility {:?}, tau = {}, delta = {}",
            params.motility, params.tau, params.delta
        )));
    }
    let min = state.u.min();
    if min < -crate::stepper::POSITIVITY_TOL {
        return Err(Error::Positivity { field: "u", min });
    }
    Ok(())
}

/// `Δ_h v - v + h`, which equals `v_t` along solutions.
fn signal_defect(state: &State) -> Field {
    let lap = state.v.laplacian();
    let vals = lap
        .values()
        .iter()
        .zip(state.v.values())
        .zip(state.h.values())
        .map(|((l, v), h)| l - v + h)
        .collect();
    Field::new(state.grid().clone(), vals).expect("finite state")
}

/// Lyapunov functional F, with `0 ln 0 = 0`.
pub fn lyapunov_f(state: &State, params: &ModelParams) -> Result<f64> {
    check_regime(state, params)?;
    let grid = state.grid();
    let w = grid.weights();
    let u = state.u.values();
    let v = state.v.values();
    let entropy: f64 = (0..u.len())
        .map(|i| {
            let ui = u[i];
            let uln = if ui > ULN_CUTOFF { ui * ui.ln() } else { 0.0 };
            w[i] * (uln - ui * v[i])
        })
        .sum();
    let v_sq: f64 = state.v.l2().powi(2);
    let gradv_sq = state.v.grad_sq_integral();
    let z = signal_defect(state);
    let z_sq = z.l2().powi(2);
    Ok(entropy + 0.5 * (v_sq + gradv_sq) + 0.5 * z_sq)
}

/// Dissipation D; nonnegative up to rounding.
pub fn dissipation_d(state: &State, params: &ModelParams) -> Result<f64> {
    check_regime(state, params)?;
    let grid = state.grid();
    let xi: Vec<f64> = state
        .u
        .values()
        .iter()
        .zip(state.v.values())
        .map(|(&u, &v)| (u.max(0.0) + LN_REGULARIZATION).ln() - v)
        .collect();
    let phi: Vec<f64> = xi.iter().map(|x| x.exp()).collect();
    let cell_term: f64 = grid
        .faces()
        .iter()
        .map(|f| f.trans * (phi[f.hi] - phi[f.lo]) * (xi[f.hi] - xi[f.lo]))
        .sum();
    let z = signal_defect(state);
    Ok(cell_term + z.grad_sq_integral() + 2.0 * z.l2().powi(2))
}

/// `|(F_{k+1} - F_k)/dt + (D_k + D_{k+1})/2|` for consecutive records.
pub fn energy_residual(prev: &DiagnosticsRecord, next: &DiagnosticsRecord) -> Result<f64> {
    if next.step != prev.step + 1 {
        return Err(Error::InvalidArgument(format!(
            "records {} and {} are not consecutive",
            prev.step, next.step
        )));
    }
    let (Some(f0), Some(f1), Some(d0), Some(d1)) =
        (prev.energy, next.energy, prev.dissipation, next.dissipation)
    else {
        return Err(Error::InvalidArgument("records lack F or D".into()));
    };
    Ok(step_energy_residual(f0, f1, d0, d1, next.dt))
}

/// Residual of the discrete energy law over one step of size `dt`.
pub fn step_energy_residual(f0: f64, f1: f64, d0: f64, d1: f64, dt: f64) -> f64 {
    ((f1 - f0) / dt + 0.5 * (d0 + d1)).abs()
}

/// Per-step slack allowed for F to increase: `10 dt (dt + h²)(1 + |F|)`.
pub fn monotonicity_tolerance(dt: f64, h: f64, f: f64) -> f64 {
    10.0 * dt * (dt + h * h) * (1.0 + f.abs())
}
