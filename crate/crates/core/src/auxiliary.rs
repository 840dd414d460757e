//! Auxiliary functions co-evolved with the solution, used as
//! solver-validation oracles.
//!
//! With `A = I - Δ` (Neumann) and `L = τ∂_t - Δ + I`:
//!
//! * `w = A⁻¹[u]`, `η = A⁻¹[h]`, `φ = u γ(v)`, `G(u) = A⁻¹[u f(u)]`;
//! * `L[Ψ] = φ`, `Ψ(0) = 0`, and `ψ = A⁻¹[Ψ]`;
//! * `L[g] = G(u)`, `g(0) = 0`;
//! * `L[ρ] = 0`, `ρ(0) = w₀ - (δ/τ)(h₀ + Δv₀ - v₀) - v₀`.
//!
//! Along solutions `w_t + φ + G(u) = A⁻¹[φ]` and
//! `w + τΨ + τg = τψ + δv_t + v + ρ`. The discrete residuals of both
//! identities vanish at first order in dt.

use crate::discretization::{solve_shifted_helmholtz_with, Coefficient, Field, SolverOptions};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::stepper::State;

const AUX_SOLVER: SolverOptions = SolverOptions { rtol: 1e-13, max_iter_factor: 10 };

fn a_inv(rhs: &Field) -> Result<Field> {
    solve_shifted_helmholtz_with(Coefficient::Scalar(1.0), 1.0, rhs, None, AUX_SOLVER)
}

/// Backward-Euler step of `L[X] = forcing`.
fn heat_step(prev: &Field, forcing: Option<&Field>, tau: f64, dt: f64) -> Result<Field> {
    let r = tau / dt;
    let rhs = match forcing {
        Some(f) => prev.zip_map(f, |x, g| r * x + g),
        None => prev.map(|x| r * x),
    };
    solve_shifted_helmholtz_with(Coefficient::Scalar(r + 1.0), 1.0, &rhs, Some(prev), AUX_SOLVER)
}

fn phi_of(state: &State, params: &ModelParams) -> Field {
    state.u.zip_map(&state.v, |u, v| u * params.motility.gamma(v.max(0.0)))
}

fn g_of(state: &State, params: &ModelParams) -> Result<Field> {
    if params.source.is_zero() {
        return Ok(Field::zeros(state.grid().clone()));
    }
    let uf = state.u.map(|u| u * params.source.eval_unchecked(u.max(0.0)));
    a_inv(&uf)
}

/// Auxiliary fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxState {
    pub t: f64,
    pub w: Field,
    pub eta: Field,
    /// Ψ, forced by φ.
    pub big_psi: Field,
    /// ψ = A⁻¹[Ψ].
    pub psi: Field,
    pub g: Field,
    pub rho: Field,
    /// φ = u γ(v).
    pub phi: Field,
    /// A⁻¹[φ].
    pub inv_phi: Field,
    /// G(u) = A⁻¹[u f(u)].
    pub source_term: Field,
    /// v_t: the analytic value at t = 0, afterwards the stepper's backward difference.
    pub v_t: Field,
    /// `w` and step size of the previous level, once a step has been taken.
    pub prev: Option<(Field, f64)>,
}

/// Auxiliary state for the initial level.
pub fn init_aux(state: &State, params: &ModelParams) -> Result<AuxState> {
    let grid = state.grid().clone();
    let w = a_inv(&state.u)?;
    let eta = a_inv(&state.h)?;
    let phi = phi_of(state, params);
    let inv_phi = a_inv(&phi)?;
    let source_term = g_of(state, params)?;
    let lap_v = state.v.laplacian();
    let v_t_vals: Vec<f64> = lap_v
        .values()
        .iter()
        .zip(state.v.values())
        .zip(state.h.values())
        .map(|((l, v), h)| (h + l - v) / params.tau)
        .collect();
    let v_t = Field::new(grid.clone(), v_t_vals)?;
    let rho_vals: Vec<f64> = w
        .values()
        .iter()
        .zip(v_t.values())
        .zip(state.v.values())
        .map(|((w0, vt), v0)| w0 - params.delta * vt - v0)
        .collect();
    let rho = Field::new(grid.clone(), rho_vals)?;
    Ok(AuxState {
        t: state.t,
        w,
        eta,
        big_psi: Field::zeros(grid.clone()),
        psi: Field::zeros(grid.clone()),
        g: Field::zeros(grid),
        rho,
        phi,
        inv_phi,
        source_term,
        v_t,
        prev: None,
    })
}

/// Advances the auxiliary fields alongside one stepper step `prev → next`.
pub fn step_aux(
    aux: &AuxState,
    prev: &State,
    next: &State,
    params: &ModelParams,
    dt: f64,
) -> Result<AuxState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let tau = params.tau;
    let phi = phi_of(next, params);
    let source_term = g_of(next, params)?;
    let big_psi = heat_step(&aux.big_psi, Some(&phi), tau, dt)?;
    let g = heat_step(&aux.g, Some(&source_term), tau, dt)?;
    let rho = heat_step(&aux.rho, None, tau, dt)?;
    let w = a_inv(&next.u)?;
    let eta = a_inv(&next.h)?;
    let psi = a_inv(&big_psi)?;
    let inv_phi = a_inv(&phi)?;
    let v_t = next.v.zip_map(&prev.v, |a, b| (a - b) / dt);
    Ok(AuxState {
        t: next.t,
        w,
        eta,
        big_psi,
        psi,
        g,
        rho,
        phi,
        inv_phi,
        source_term,
        v_t,
        prev: Some((aux.w.clone(), dt)),
    })
}

impl AuxState {
    /// `‖(wⁿ⁺¹ - wⁿ)/dt + φ + G(u) - A⁻¹[φ]‖_∞`.
    pub fn identity1_residual(&self) -> Result<f64> {
        let (w_prev, dt) =
            self.prev.as_ref().ok_or_else(|| Error::MissingHistory("identity 1 needs w at the previous level".into()))?;
        let mut max = 0.0_f64;
        for i in 0..self.w.len() {
            let r = (self.w.values()[i] - w_prev.values()[i]) / dt + self.phi.values()[i]
                + self.source_term.values()[i]
                - self.inv_phi.values()[i];
            max = max.max(r.abs());
        }
        Ok(max)
    }

    /// Smallest value among `w`, `η`, `Ψ`, `ψ`.
    pub fn min_nonnegative_part(&self) -> f64 {
        [&self.w, &self.eta, &self.big_psi, &self.psi].iter().map(|f| f.min()).fold(f64::INFINITY, f64::min)
    }
}

/// Free-function form of [`AuxState::identity1_residual`].
pub fn identity1_residual(aux: &AuxState) -> Result<f64> {
    aux.identity1_residual()
}

/// `‖w + τΨ + τg - τψ - δ v_t - v - ρ‖_∞` at the level of `state`.
pub fn identity2_residual(aux: &AuxState, state: &State, params: &ModelParams) -> f64 {
    let (tau, delta) = (params.tau, params.delta);
    let mut max = 0.0_f64;
    for i in 0..aux.w.len() {
        let r = aux.w.values()[i] + tau * aux.big_psi.values()[i] + tau * aux.g.values()[i]
            - tau * aux.psi.values()[i]
            - delta * aux.v_t.values()[i]
            - state.v.values()[i]
            - aux.rho.values()[i];
        max = max.max(r.abs());
    }
    max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretization::{build_grid, Geometry, Resolution};
    use crate::stepper::step;

    fn constant(c: f64) -> State {
        let grid = build_grid(Geometry::RadialDisk { radius: 1.0 }, Resolution::uniform(32)).unwrap();
        let f = Field::constant(grid, c);
        State::new(0.0, f.clone(), f.clone(), f).unwrap()
    }

    #[test]
    fn constant_data() {
        let c = 1.4;
        let params = ModelParams::default();
        let s0 = constant(c);
        let aux = init_aux(&s0, &params).unwrap();
        assert!(aux.w.values().iter().all(|w| (w - c).abs() < 1e-10));
        assert!(aux.rho.linf() < 1e-10);
        assert!(identity2_residual(&aux, &s0, &params) < 1e-9);
        assert!(matches!(aux.identity1_residual(), Err(Error::MissingHistory(_))));

        let s1 = step(&s0, &params, 0.1).unwrap();
        let aux1 = step_aux(&aux, &s0, &s1, &params, 0.1).unwrap();
        assert!(aux1.identity1_residual().unwrap() < 1e-10);
        assert!(identity2_residual(&aux1, &s1, &params) < 1e-9);
    }

    #[test]
    fn unforced_psi_stays_zero() {
        let grid = build_grid(Geometry::Interval { length: 1.0 }, Resolution::uniform(16)).unwrap();
        let z = Field::zeros(grid);
        let next = heat_step(&z, Some(&z.clone()), 1.0, 0.1).unwrap();
        assert_eq!(next.linf(), 0.0);
    }

    #[test]
    fn rho_decays_exponentially() {
        let grid = build_grid(Geometry::Interval { length: 1.0 }, Resolution::uniform(16)).unwrap();
        let tau = 2.0;
        let t_end = 1.0;
        let mut errs = Vec::new();
        for steps in [50usize, 100, 200] {
            let dt = t_end / steps as f64;
            let mut rho = Field::constant(grid.clone(), 3.0);
            for _ in 0..steps {
                rho = heat_step(&rho, None, tau, dt).unwrap();
            }
            errs.push((rho.max() - 3.0 * (-t_end / tau).exp()).abs());
        }
        assert!(errs[0] < 1e-2);
        assert!(errs[0] / errs[1] > 1.8 && errs[1] / errs[2] > 1.8, "{errs:?}");
    }
}
