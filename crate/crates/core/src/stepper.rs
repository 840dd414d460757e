//! Semi-implicit, mass-conserving time integration.
//!
//! One step advances `(u, v, h)` in the order u → h → v:
//!
//! 1. with `c = γ(vⁿ)/max γ(vⁿ)` frozen, solve
//!    `(diag(1/c) - dt max γ(vⁿ) Δ_h) φ = uⁿ - dt uⁿ f(uⁿ)` and set `uⁿ⁺¹ = φ / c`;
//! 2. `hⁿ⁺¹ = e^{-dt/δ} hⁿ + (1 - e^{-dt/δ}) (uⁿ + uⁿ⁺¹) / 2`;
//! 3. solve `((τ/dt + 1) I - Δ_h) vⁿ⁺¹ = (τ/dt) vⁿ + hⁿ⁺¹`.
//!
//! The quadrature-weighted sum of `Δ_h φ` vanishes identically, so for
//! `f ≡ 0` the mass `∫u` is conserved up to the linear-solver residual.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::auxiliary::{self, AuxState};
use crate::diagnostics::{self, DiagnosticsRecord};
use crate::discretization::{
    solve_shifted_helmholtz_with, Coefficient, Field, Grid, SolverOptions,
};
use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Pointwise floor below which a field counts as negative.
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Largest `ln(γ_max/γ)` resolved by the u-step; motility ratios beyond
/// `e^690` are treated as `e^690`.
const MAX_LN_GAMMA_RATIO: f64 = 690.0;

/// Linear-solver settings used inside the stepper.
pub const STEP_SOLVER: SolverOptions = SolverOptions { rtol: 1e-13, max_iter_factor: 10 };

/// Solution at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
    pub v: Field,
    pub h: Field,
}

impl State {
    pub fn new(t: f64, u: Field, v: Field, h: Field) -> Result<State> {
        let n = u.len();
        if v.len() != n || h.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: v.len().max(h.len()) });
        }
        let state = State { t, u, v, h };
        state.check()?;
        Ok(state)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn mass(&self) -> f64 {
        self.u.integrate()
    }

    /// Finite values and `min(u, v, h) ≥ -POSITIVITY_TOL`.
    pub fn check(&self) -> Result<()> {
        for (name, f) in [("u", &self.u), ("v", &self.v), ("h", &self.h)] {
            if !f.is_finite() {
                return Err(Error::NonFinite(name.into()));
            }
            let min = f.min();
            if min < -POSITIVITY_TOL {
                return Err(Error::Positivity { field: name, min });
            }
        }
        Ok(())
    }

    /// Smallest value over the three fields.
    pub fn min_value(&self) -> f64 {
        self.u.min().min(self.v.min()).min(self.h.min())
    }
}

/// Adaptive time-step controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepControls {
    pub dt_max: f64,
    pub dt_min: f64,
    /// Safety factor θ applied to the accuracy bound.
    pub safety: f64,
    /// Largest admissible relative change of any field per step.
    pub max_rel_change: f64,
    /// Positivity coefficient: `dt max f(u)₊ ≤ c_pos`.
    pub c_pos: f64,
}

impl Default for StepControls {
    fn default() -> Self {
        StepControls { dt_max: 0.05, dt_min: 1e-9, safety: 0.9, max_rel_change: 0.05, c_pos: 0.5 }
    }
}

impl StepControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_max && self.dt_max.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < dt_min <= dt_max, got dt_min = {}, dt_max = {}",
                self.dt_min, self.dt_max
            )));
        }
        for (name, x) in [("safety", self.safety), ("c_pos", self.c_pos)] {
            if !(x > 0.0 && x <= 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1], got {x}")));
            }
        }
        if !(self.max_rel_change > 0.0 && self.max_rel_change.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "max_rel_change must be positive, got {}",
                self.max_rel_change
            )));
        }
        Ok(())
    }
}

/// Advances `state` by `dt`.
pub fn step(state: &State, params: &ModelParams, dt: f64) -> Result<State> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    let grid = state.grid();
    let u = state.u.values();
    let v = state.v.values();

    // u-step in the variable φ = γ(v) u, with γ scaled by its largest value
    // on the grid so that 1/γ stays representable
    let ln_g: Vec<f64> = v.iter().map(|&vi| params.motility.ln_gamma(vi.max(0.0))).collect();
    let ln_ref = ln_g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !ln_ref.is_finite() {
        return Err(Error::NonFinite("ln gamma(v)".into()));
    }
    let inv_c: Vec<f64> = ln_g.iter().map(|l| (ln_ref - l).min(MAX_LN_GAMMA_RATIO).exp()).collect();
    let beta = dt * ln_ref.exp();
    let rhs: Vec<f64> = if params.source.is_zero() {
        u.to_vec()
    } else {
        u.iter().map(|&ui| ui - dt * ui * params.source.eval_unchecked(ui.max(0.0))).collect()
    };
    let u_new = if beta > 0.0 {
        let rhs = Field::from_parts(grid.clone(), rhs);
        let guess = Field::from_parts(grid.clone(), u.iter().zip(&inv_c).map(|(a, ic)| a / ic).collect());
        let phi = solve_shifted_helmholtz_with(
            Coefficient::Nodal(&inv_c),
            beta,
            &rhs,
            Some(&guess),
            STEP_SOLVER,
        )?;
        phi.values().iter().zip(&inv_c).map(|(p, ic)| p * ic).collect()
    } else {
        // γ underflows everywhere: no transport at double precision
        rhs
    };

    // exact exponential update of δ h_t + h = u with trapezoidal u
    let decay = (-dt / params.delta).exp();
    let h_new: Vec<f64> = state
        .h
        .values()
        .iter()
        .zip(u)
        .zip(&u_new)
        .map(|((&h, &a), &b)| decay * h + (1.0 - decay) * 0.5 * (a + b))
        .collect();

    let tau_dt = params.tau / dt;
    let v_rhs: Vec<f64> = v.iter().zip(&h_new).map(|(&vi, &hi)| tau_dt * vi + hi).collect();
    let v_new = solve_shifted_helmholtz_with(
        Coefficient::Scalar(tau_dt + 1.0),
        1.0,
        &Field::from_parts(grid.clone(), v_rhs),
        Some(&state.v),
        STEP_SOLVER,
    )?;

    let next = State {
        t: state.t + dt,
        u: Field::from_parts(grid.clone(), u_new),
        v: v_new,
        h: Field::from_parts(grid.clone(), h_new),
    };
    next.check()?;
    Ok(next)
}

/// Outcome of [`choose_dt`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DtChoice {
    pub dt: f64,
    /// Set when the constraints asked for less than `dt_min`.
    pub clamped: bool,
}

/// Largest relative time derivative `max_X ‖X_t‖_∞ / max(‖X‖_∞, m/|Ω|)`
/// over the three fields, evaluated from the equations at `state`.
pub fn relative_rate(state: &State, params: &ModelParams) -> f64 {
    let grid = state.grid();
    let u = state.u.values();
    let v = state.v.values();
    let h = state.h.values();
    let scale = (state.mass().abs() / grid.measure()).max(1e-300);

    let phi: Vec<f64> = u.iter().zip(v).map(|(&a, &b)| a * params.motility.gamma(b.max(0.0))).collect();
    let lap_phi = grid.laplacian(&phi);
    let u_rate = u
        .iter()
        .zip(&lap_phi)
        .map(|(&ui, &l)| (l - ui * params.source.eval_unchecked(ui.max(0.0))).abs())
        .fold(0.0, f64::max);
    let lap_v = grid.laplacian(v);
    let v_rate = v
        .iter()
        .zip(&lap_v)
        .zip(h)
        .map(|((&vi, &l), &hi)| (l - vi + hi).abs() / params.tau)
        .fold(0.0, f64::max);
    let h_rate = h.iter().zip(u).map(|(&hi, &ui)| (ui - hi).abs() / params.delta).fold(0.0, f64::max);

    let rel = |rate: f64, f: &Field| rate / f.linf().max(scale);
    rel(u_rate, &state.u).max(rel(v_rate, &state.v)).max(rel(h_rate, &state.h))
}

/// `dt = min(dt_max, c_pos / (max f(u)₊ + ε), θ ρ_max / rate)`, clamped to `dt_min`.
pub fn choose_dt(state: &State, params: &ModelParams, controls: &StepControls) -> DtChoice {
    const EPS: f64 = 1e-12;
    let mut dt = controls.dt_max;
    if !params.source.is_zero() {
        let fmax = state
            .u
            .values()
            .iter()
            .map(|&ui| params.source.eval_unchecked(ui.max(0.0)).max(0.0))
            .fold(0.0, f64::max);
        if fmax > 0.0 {
            dt = dt.min(controls.c_pos / (fmax + EPS));
        }
    }
    let rate = relative_rate(state, params);
    if rate > 0.0 {
        dt = dt.min(controls.safety * controls.max_rel_change / rate);
    }
    if dt < controls.dt_min {
        DtChoice { dt: controls.dt_min, clamped: true }
    } else {
        DtChoice { dt, clamped: false }
    }
}

/// Everything [`run`] needs besides the initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub params: ModelParams,
    pub controls: StepControls,
    pub horizon: f64,
    /// Emit a diagnostics record every this many steps (and at the end).
    pub diagnostics_every: usize,
    /// Times at which full snapshots are stored; the stepper lands on them exactly.
    pub snapshot_times: Vec<f64>,
    pub track_aux: bool,
    pub track_energy: bool,
    /// When set, every step uses this dt (the last one is shortened to hit the horizon).
    pub fixed_dt: Option<f64>,
    pub max_steps: usize,
}

impl RunSpec {
    pub fn new(params: ModelParams, horizon: f64) -> Self {
        RunSpec {
            params,
            controls: StepControls::default(),
            horizon,
            diagnostics_every: 1,
            snapshot_times: Vec::new(),
            track_aux: false,
            track_energy: false,
            fixed_dt: None,
            max_steps: 50_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controls.validate()?;
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidArgument(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::InvalidArgument("diagnostics cadence must be >= 1".into()));
        }
        if self.track_energy && !self.params.is_energy_regime() {
            return Err(Error::Regime("energy tracking requested".into()));
        }
        if let Some(dt) = self.fixed_dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return Err(Error::InvalidArgument(format!("fixed dt must be positive, got {dt}")));
            }
        }
        Ok(())
    }
}

/// Lyapunov pair at one time level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySample {
    pub step: usize,
    pub t: f64,
    /// Step that produced this level (0 for the initial level).
    pub dt: f64,
    pub f: f64,
    pub d: f64,
}

/// Result of [`run`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub final_state: State,
    pub records: Vec<DiagnosticsRecord>,
    pub snapshots: Vec<State>,
    /// Per-step `(F, D)` when energy tracking is on.
    pub energy: Vec<EnergySample>,
    /// Per-step identity residuals `(t, R1, R2)` when aux tracking is on;
    /// R1 is NaN at the initial level.
    pub identities: Vec<(f64, f64, f64)>,
    pub aux: Option<AuxState>,
    pub steps: usize,
    /// Number of steps where the controls asked for less than `dt_min`.
    pub clamped_steps: usize,
    pub retries: usize,
}

const MAX_HALVINGS: usize = 10;

/// Integrates from `initial` to `initial.t + spec.horizon`.
pub fn run(initial: State, spec: &RunSpec) -> Result<RunOutput> {
    spec.validate()?;
    initial.check()?;
    let params = &spec.params;
    let t0 = initial.t;
    let t_end = t0 + spec.horizon;

    let mut snapshot_times: Vec<f64> =
        spec.snapshot_times.iter().map(|s| t0 + s).filter(|&s| s <= t_end).collect();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut next_snap = 0;
    let mut snapshots = Vec::new();
    while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= t0 {
        snapshots.push(initial.clone());
        next_snap += 1;
    }

    let mut aux = if spec.track_aux { Some(auxiliary::init_aux(&initial, params)?) } else { None };
    let mut energy = Vec::new();
    let mut identities = Vec::new();
    let mut current = initial;
    let mut records = Vec::new();

    let energy_pair = |s: &State| -> Result<(f64, f64)> {
        Ok((diagnostics::lyapunov_f(s, params)?, diagnostics::dissipation_d(s, params)?))
    };
    let mut last_energy = None;
    if spec.track_energy {
        let (f, d) = energy_pair(&current)?;
        energy.push(EnergySample { step: 0, t: current.t, dt: 0.0, f, d });
        last_energy = Some((f, d));
    }
    let residuals = |aux: &Option<AuxState>, s: &State| -> (Option<f64>, Option<f64>) {
        match aux {
            Some(a) => (a.identity1_residual().ok(), Some(auxiliary::identity2_residual(a, s, params))),
            None => (None, None),
        }
    };
    let init_res = residuals(&aux, &current);
    if let (r1, Some(r2)) = init_res {
        identities.push((current.t, r1.unwrap_or(f64::NAN), r2));
    }
    records.push(DiagnosticsRecord::capture(0, &current, 0.0, last_energy, init_res));

    let mut steps = 0usize;
    let mut clamped_steps = 0usize;
    let mut retries = 0usize;
    // relative tolerance on hitting output times
    let t_eps = 1e-12 * t_end.abs().max(1.0);

    while current.t < t_end - t_eps {
        if steps >= spec.max_steps {
            return Err(Error::StepFailed {
                t: current.t,
                halvings: 0,
                cause: Box::new(Error::InvalidArgument(format!("step cap {} reached", spec.max_steps))),
            });
        }
        let mut dt = match spec.fixed_dt {
            Some(dt) => dt,
            None => {
                let choice = choose_dt(&current, params, &spec.controls);
                if choice.clamped {
                    clamped_steps += 1;
                }
                choice.dt
            }
        };
        let mut target = t_end;
        if next_snap < snapshot_times.len() {
            target = target.min(snapshot_times[next_snap]);
        }
        if current.t + dt > target - t_eps {
            dt = target - current.t;
        }

        let mut attempt = 0;
        let next = loop {
            match step(&current, params, dt) {
                Ok(next) => break next,
                Err(e) => {
                    if attempt >= MAX_HALVINGS {
                        return Err(Error::StepFailed { t: current.t, halvings: attempt, cause: Box::new(e) });
                    }
                    attempt += 1;
                    retries += 1;
                    dt *= 0.5;
                }
            }
        };
        let mut next = next;
        // land exactly on output times
        if (next.t - target).abs() <= t_eps {
            next.t = target;
        }
        steps += 1;

        if let Some(a) = aux.as_mut() {
            *a = auxiliary::step_aux(a, &current, &next, params, dt)?;
        }
        if spec.track_energy {
            let (f, d) = energy_pair(&next)?;
            energy.push(EnergySample { step: steps, t: next.t, dt, f, d });
            last_energy = Some((f, d));
        }
        let res = residuals(&aux, &next);
        if let (Some(r1), Some(r2)) = res {
            identities.push((next.t, r1, r2));
        }

        let done = next.t >= t_end - t_eps;
        if steps.is_multiple_of(spec.diagnostics_every) || done {
            records.push(DiagnosticsRecord::capture(steps, &next, dt, last_energy, res));
        }
        while next_snap < snapshot_times.len() && snapshot_times[next_snap] <= next.t + t_eps {
            snapshots.push(next.clone());
            next_snap += 1;
        }
        current = next;
    }

    Ok(RunOutput {
        final_state: current,
        records,
        snapshots,
        energy,
        identities,
        aux,
        steps,
        clamped_steps,
        retries,
    })
}
