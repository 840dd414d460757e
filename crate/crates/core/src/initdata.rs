//! Initial data: constants, compact bumps, and the concentrating family
//! whose Lyapunov energy diverges to `-∞` for supercritical mass.
//!
//! The concentrating family on the disk is built from
//!
//! ```text
//! ū_λ(x)   = 8λ² / (1 + λ²|x|²)²
//! v̄_λ,r(x) = 2 ln((1 + λ²r²) / (1 + λ²|x|²)) + ln 8
//! u₀ = a ū_λ φ,   v₀ = a v̄_λ,r φ,   h₀ = -Δv₀ + v₀ + K
//! ```
//!
//! with a radial cutoff `φ` equal to 1 on `B_{r₁}` and 0 outside `B_r`.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics;
use crate::discretization::{Field, Geometry, Grid};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::stepper::State;

/// Smoothstep bridge `1 - 10s³ + 15s⁴ - 6s⁵`, C² at both ends.
fn bridge(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// Radial cutoff profile.
pub fn cutoff_profile(radius: f64, r: f64, r1: f64) -> f64 {
    if radius <= r1 {
        1.0
    } else if radius >= r {
        0.0
    } else {
        bridge((radius - r1) / (r - r1))
    }
}

/// Cutoff equal to 1 on `B_{r₁}`, 0 outside `B_r`, radially nonincreasing.
pub fn cutoff(grid: &Arc<Grid>, r: f64, r1: f64) -> Result<Field> {
    if !(r1 > 0.0 && r1 < r) {
        return Err(Error::InvalidArgument(format!("cutoff needs 0 < r1 < r, got r1 = {r1}, r = {r}")));
    }
    let values = (0..grid.len()).map(|i| cutoff_profile(grid.radius_of(i), r, r1)).collect();
    Field::new(grid.clone(), values)
}

/// `ū_λ(ρ)`.
pub fn bubble(lambda: f64, rho: f64) -> f64 {
    let q = 1.0 + lambda * lambda * rho * rho;
    8.0 * lambda * lambda / (q * q)
}

/// `v̄_λ,r(ρ)`.
pub fn bubble_potential(lambda: f64, r: f64, rho: f64) -> f64 {
    let l2 = lambda * lambda;
    2.0 * ((1.0 + l2 * r * r) / (1.0 + l2 * rho * rho)).ln() + 8f64.ln()
}

/// Parameters of the concentrating family (centered at the origin).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlowupFamilyParams {
    pub lambda: f64,
    pub r: f64,
    pub r1: f64,
    pub mass: f64,
}

impl BlowupFamilyParams {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let Geometry::RadialDisk { radius } = grid.geometry() else {
            return Err(Error::InitData("the concentrating family is generated on the radial disk only".into()));
        };
        if !(self.lambda >= 1.0 && self.lambda.is_finite()) {
            return Err(Error::InitData(format!("lambda must be >= 1, got {}", self.lambda)));
        }
        if !(self.r1 > 0.0 && self.r1 < self.r && self.r < 1.0) {
            return Err(Error::InitData(format!(
                "need 0 < r1 < r < 1, got r1 = {}, r = {}",
                self.r1, self.r
            )));
        }
        if !(2.0 * self.r < radius) {
            return Err(Error::InitData(format!(
                "B_2r(0) must lie inside the disk: 2r = {} >= R = {radius}",
                2.0 * self.r
            )));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InitData(format!("mass must be positive, got {}", self.mass)));
        }
        if grid.h() > 0.2 / self.lambda {
            return Err(Error::InitData(format!(
                "grid spacing {} does not resolve the concentration scale 1/lambda = {} (need h <= 0.2/lambda)",
                grid.h(),
                1.0 / self.lambda
            )));
        }
        Ok(())
    }
}

/// Concentrating initial datum with its amplitude `a` and shift `K`.
#[derive(Debug, Clone)]
pub struct BlowupData {
    pub state: State,
    pub amplitude: f64,
    pub shift: f64,
}

/// Bisection for the root of an increasing function on `[lo, hi]`.
fn bisect_increasing(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let (flo, fhi) = (f(lo), f(hi));
    if !(flo <= 0.0 && fhi >= 0.0) {
        return Err(Error::InitData(format!(
            "amplitude bracket [{lo}, {hi}] does not contain a root (residuals {flo:.3e}, {fhi:.3e}); grid too coarse?"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Builds `(u₀, v₀, h₀)` from the concentrating family with `∫u₀ = m`.
pub fn blowup_data(grid: &Arc<Grid>, params: &BlowupFamilyParams) -> Result<BlowupData> {
    params.validate(grid)?;
    let BlowupFamilyParams { lambda, r, r1, mass } = *params;
    let phi = cutoff(grid, r, r1)?;
    let n = grid.len();
    let base_u: Vec<f64> =
        (0..n).map(|i| bubble(lambda, grid.radius_of(i)) * phi.values()[i]).collect();
    let base_v: Vec<f64> =
        (0..n).map(|i| bubble_potential(lambda, r, grid.radius_of(i)) * phi.values()[i]).collect();
    let base_mass = grid.integrate(&base_u);

    let lo = mass / (8.0 * PI);
    let hi = mass * (1.0 + r1 * r1) / (8.0 * PI * r1 * r1);
    let amplitude = bisect_increasing(lo, hi, |a| a * base_mass - mass)?;

    let u: Vec<f64> = base_u.iter().map(|x| amplitude * x).collect();
    let v: Vec<f64> = base_v.iter().map(|x| amplitude * x).collect();
    let lap = grid.laplacian(&v);
    let elliptic: Vec<f64> = v.iter().zip(&lap).map(|(vi, li)| vi - li).collect();
    let min = elliptic.iter().copied().fold(f64::INFINITY, f64::min);
    let shift = (-min).max(0.0) + 1e-12;
    let h: Vec<f64> = elliptic.iter().map(|e| e + shift).collect();

    let state = State::new(
        0.0,
        Field::new(grid.clone(), u)?,
        Field::new(grid.clone(), v)?,
        Field::new(grid.clone(), h)?,
    )?;
    Ok(BlowupData { state, amplitude, shift })
}

/// `F(u₀, v₀, h₀)` along a list of concentration parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySweep {
    /// `(λ, F)` pairs in input order.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope of F against `ln λ`.
    pub slope: f64,
    /// Shift `K` per point.
    pub shifts: Vec<f64>,
    /// `F - K²|Ω|/2` per point: F without the constant defect contributed by `h₀ = -Δv₀ + v₀ + K`.
    pub shift_free: Vec<f64>,
    /// Least-squares slope of `shift_free` against `ln λ`.
    pub shift_free_slope: f64,
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn energy_vs_lambda(
    grid: &Arc<Grid>,
    mass: f64,
    r: f64,
    r1: f64,
    lambdas: &[f64],
) -> Result<EnergySweep> {
    if lambdas.len() < 2 || lambdas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("lambda list must be increasing with at least two entries".into()));
    }
    let params = ModelParams::default();
    let mut points = Vec::with_capacity(lambdas.len());
    let mut shifts = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let data = blowup_data(grid, &BlowupFamilyParams { lambda, r, r1, mass })?;
        points.push((lambda, diagnostics::lyapunov_f(&data.state, &params)?));
        shifts.push(data.shift);
    }
    let ln_l: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let f: Vec<f64> = points.iter().map(|p| p.1).collect();
    let measure = grid.measure();
    let shift_free: Vec<f64> = f.iter().zip(&shifts).map(|(f, k)| f - 0.5 * k * k * measure).collect();
    Ok(EnergySweep {
        slope: ls_slope(&ln_l, &f),
        shift_free_slope: ls_slope(&ln_l, &shift_free),
        points,
        shifts,
        shift_free,
    })
}

/// Compactly supported bump with constant signal levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BumpParams {
    /// Bump center; ignored on the disk, where the bump sits at the origin.
    #[serde(default)]
    pub center: [f64; 2],
    pub width: f64,
    pub mass: f64,
    #[serde(default)]
    pub v_level: f64,
    #[serde(default)]
    pub h_level: f64,
    /// Amplitude of multiplicative uniform noise on the bump (0 = none).
    #[serde(default)]
    pub perturbation: f64,
    #[serde(default)]
    pub seed: u64,
}

/// `(1 - s²)³` on `s < 1`: C² with compact support.
fn bump_profile(s: f64) -> f64 {
    if s >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        q * q * q
    }
}

pub fn bump_data(grid: &Arc<Grid>, params: &BumpParams) -> Result<State> {
    let BumpParams { center, width, mass, v_level, h_level, perturbation, seed } = *params;
    if !(width > 2.0 * grid.h()) {
        return Err(Error::InitData(format!("bump width {width} must exceed 2h = {}", 2.0 * grid.h())));
    }
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::InitData(format!("mass must be positive, got {mass}")));
    }
    if !(v_level >= 0.0 && h_level >= 0.0) {
        return Err(Error::InitData("signal levels must be nonnegative".into()));
    }
    if !(0.0..1.0).contains(&perturbation) {
        return Err(Error::InitData(format!("perturbation must lie in [0, 1), got {perturbation}")));
    }
    let inside = match grid.geometry() {
        Geometry::Interval { length } => center[0] - width > 0.0 && center[0] + width < length,
        Geometry::Rectangle { lx, ly } => {
            center[0] - width > 0.0
                && center[0] + width < lx
                && center[1] - width > 0.0
                && center[1] + width < ly
        }
        Geometry::RadialDisk { radius } => width < radius,
    };
    if !inside {
        return Err(Error::InitData(format!("bump support (center {center:?}, width {width}) leaves the domain")));
    }
    let c = if grid.geometry().is_radial() { [0.0, 0.0] } else { center };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = grid
        .coords()
        .iter()
        .map(|&[x, y]| {
            let d = if grid.dimension() == 2 { (x - c[0]).hypot(y - c[1]) } else { (x - c[0]).abs() };
            let noise = if perturbation > 0.0 { 1.0 + perturbation * rng.gen_range(-1.0..1.0) } else { 1.0 };
            bump_profile(d / width) * noise
        })
        .collect();
    let total = grid.integrate(&raw);
    if !(total > 0.0) {
        return Err(Error::InitData("bump misses every grid node".into()));
    }
    let u: Vec<f64> = raw.iter().map(|x| x * mass / total).collect();
    State::new(
        0.0,
        Field::new(grid.clone(), u)?,
        Field::constant(grid.clone(), v_level),
        Field::constant(grid.clone(), h_level),
    )
}

pub fn constant_data(grid: &Arc<Grid>, u: f64, v: f64, h: f64) -> Result<State> {
    if !(u > 0.0 && v >= 0.0 && h >= 0.0) {
        return Err(Error::InitData(format!("constant data needs u > 0, v, h >= 0; got ({u}, {v}, {h})")));
    }
    State::new(
        0.0,
        Field::constant(grid.clone(), u),
        Field::constant(grid.clone(), v),
        Field::constant(grid.clone(), h),
    )
}
