//! Shifted Helmholtz solves `(diag(alpha) - beta Δ_h) z = rhs`.
//!
//! Multiplying by the quadrature weights gives the symmetric positive
//! definite system `(W diag(alpha) + beta K) z = W rhs`, where `K` is the
//! face stiffness matrix. One-dimensional grids (interval, disk) are
//! tridiagonal and solved directly; rectangles use Jacobi-preconditioned CG.

use crate::discretization::{Field, Grid};
use crate::error::{Error, Result};

/// Diagonal coefficient of the operator.
#[derive(Debug, Clone, Copy)]
pub enum Coefficient<'a> {
    Scalar(f64),
    Nodal(&'a [f64]),
}

impl Coefficient<'_> {
    #[inline]
    fn at(&self, i: usize) -> f64 {
        match self {
            Coefficient::Scalar(a) => *a,
            Coefficient::Nodal(a) => a[i],
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        match self {
            Coefficient::Scalar(a) => {
                if !(a.is_finite() && *a > 0.0) {
                    return Err(Error::InvalidArgument(format!("alpha must be positive, got {a}")));
                }
            }
            Coefficient::Nodal(a) => {
                if a.len() != n {
                    return Err(Error::LengthMismatch { expected: n, got: a.len() });
                }
                if let Some(bad) = a.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                    return Err(Error::InvalidArgument(format!(
                        "alpha must be positive everywhere, found {bad}"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl From<f64> for Coefficient<'_> {
    fn from(a: f64) -> Self {
        Coefficient::Scalar(a)
    }
}

impl<'a> From<&'a Field> for Coefficient<'a> {
    fn from(f: &'a Field) -> Self {
        Coefficient::Nodal(f.values())
    }
}

impl<'a> From<&'a [f64]> for Coefficient<'a> {
    fn from(f: &'a [f64]) -> Self {
        Coefficient::Nodal(f)
    }
}

/// Convergence controls. The residual test is
/// `‖alpha z - beta Δ_h z - rhs‖_∞ ≤ rtol (1 + ‖rhs‖_∞)`, relaxed to the
/// rounding level of evaluating the operator when that is larger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub rtol: f64,
    /// CG iteration cap as a multiple of the node count.
    pub max_iter_factor: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { rtol: 1e-10, max_iter_factor: 10 }
    }
}

/// `diag(alpha) z - beta Δ_h z`.
pub fn apply_shifted_helmholtz(alpha: Coefficient<'_>, beta: f64, z: &Field) -> Field {
    let grid = z.grid();
    let lap = grid.laplacian(z.values());
    let values = z
        .values()
        .iter()
        .zip(&lap)
        .enumerate()
        .map(|(i, (zi, li))| alpha.at(i) * zi - beta * li)
        .collect();
    Field::from_parts(grid.clone(), values)
}

/// Solves `(diag(alpha) - beta Δ_h) z = rhs` with default options.
pub fn solve_shifted_helmholtz(alpha: Coefficient<'_>, beta: f64, rhs: &Field) -> Result<Field> {
    solve_shifted_helmholtz_with(alpha, beta, rhs, None, SolverOptions::default())
}

/// `A⁻¹[rhs]` for `A = I - Δ_h`.
pub fn inverse_helmholtz(rhs: &Field) -> Result<Field> {
    solve_shifted_helmholtz(Coefficient::Scalar(1.0), 1.0, rhs)
}

/// Full-control variant; `guess` seeds the iterative solver.
pub fn solve_shifted_helmholtz_with(
    alpha: Coefficient<'_>,
    beta: f64,
    rhs: &Field,
    guess: Option<&Field>,
    opts: SolverOptions,
) -> Result<Field> {
    let grid = rhs.grid();
    let n = grid.len();
    alpha.check(n)?;
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    if !rhs.is_finite() {
        return Err(Error::NonFinite("helmholtz rhs".into()));
    }
    let rhs_scale = 1.0 + rhs.linf();
    let target = opts.rtol * rhs_scale;

    let inf_norm = |r: &[f64]| r.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let (z, err, target) = if grid.is_chain() {
        let mut z = tridiagonal_solve(grid, alpha, beta, rhs.values());
        let res = residual(grid, alpha, beta, &z, rhs.values());
        let mut err = inf_norm(&res);
        let target = target.max(rounding_floor(grid, alpha, beta, &z, rhs.values()));
        // one round of iterative refinement if the direct solve lost accuracy
        if err > target {
            let corr = tridiagonal_solve(grid, alpha, beta, &res);
            z.iter_mut().zip(&corr).for_each(|(a, c)| *a += c);
            err = inf_norm(&residual(grid, alpha, beta, &z, rhs.values()));
        }
        (z, err, target)
    } else {
        // CG's recursive residual drifts from the true one: iterate to half the
        // target and restart from the current iterate if the true residual misses
        let mut z = guess.map(|g| g.values().to_vec()).unwrap_or_else(|| vec![0.0; n]);
        let mut restarts = 0;
        loop {
            z = pcg_solve(grid, alpha, beta, rhs.values(), z, 0.5 * target, opts.max_iter_factor * n)?;
            let err = inf_norm(&residual(grid, alpha, beta, &z, rhs.values()));
            let floor = target.max(rounding_floor(grid, alpha, beta, &z, rhs.values()));
            if err <= floor || restarts == PCG_RESTARTS {
                break (z, err, floor);
            }
            restarts += 1;
        }
    };
    if !(err <= target) || z.iter().any(|x| !x.is_finite()) {
        return Err(Error::SolverNonConvergence { iterations: 0, residual: err });
    }
    Ok(Field::from_parts(grid.clone(), z))
}

const PCG_RESTARTS: usize = 3;

/// Attainable residual level: a small multiple of machine epsilon times the
/// magnitude of the terms summed when evaluating the residual at each node.
fn rounding_floor(grid: &Grid, alpha: Coefficient<'_>, beta: f64, z: &[f64], rhs: &[f64]) -> f64 {
    let w = grid.weights();
    let mut mag: Vec<f64> = (0..z.len()).map(|i| rhs[i].abs() + (alpha.at(i) * z[i]).abs()).collect();
    for face in grid.faces() {
        let t = beta * face.trans * (z[face.hi].abs() + z[face.lo].abs());
        mag[face.lo] += t / w[face.lo];
        mag[face.hi] += t / w[face.hi];
    }
    16.0 * f64::EPSILON * mag.iter().fold(0.0_f64, |m, x| m.max(*x))
}

/// `rhs - (alpha z - beta Δ_h z)`, unweighted.
fn residual(grid: &Grid, alpha: Coefficient<'_>, beta: f64, z: &[f64], rhs: &[f64]) -> Vec<f64> {
    let lap = grid.laplacian(z);
    rhs.iter()
        .zip(z)
        .zip(&lap)
        .enumerate()
        .map(|(i, ((b, zi), li))| b - (alpha.at(i) * zi - beta * li))
        .collect()
}

/// Thomas algorithm on the weighted symmetric tridiagonal system. The
/// matrix is strictly diagonally dominant, so no pivoting is needed.
fn tridiagonal_solve(grid: &Grid, alpha: Coefficient<'_>, beta: f64, rhs: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let w = grid.weights();
    // off[k] couples nodes k and k + 1
    let mut off = vec![0.0; n.saturating_sub(1)];
    for face in grid.faces() {
        debug_assert_eq!(face.hi, face.lo + 1);
        off[face.lo] = beta * face.trans;
    }
    let diag = |i: usize| {
        let left = if i > 0 { off[i - 1] } else { 0.0 };
        let right = if i + 1 < n { off[i] } else { 0.0 };
        w[i] * alpha.at(i) + left + right
    };

    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let b0 = diag(0);
    if n > 1 {
        c_prime[0] = -off[0] / b0;
    }
    d_prime[0] = w[0] * rhs[0] / b0;
    for i in 1..n {
        let a = -off[i - 1];
        let denom = diag(i) - a * c_prime[i - 1];
        if i + 1 < n {
            c_prime[i] = -off[i] / denom;
        }
        d_prime[i] = (w[i] * rhs[i] - a * d_prime[i - 1]) / denom;
    }
    let mut z = vec![0.0; n];
    z[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        z[i] = d_prime[i] - c_prime[i] * z[i + 1];
    }
    z
}

/// Weighted operator `W diag(alpha) z + beta K z`.
fn apply_weighted(grid: &Grid, alpha: Coefficient<'_>, beta: f64, z: &[f64], out: &mut [f64]) {
    let w = grid.weights();
    for i in 0..z.len() {
        out[i] = w[i] * alpha.at(i) * z[i];
    }
    for face in grid.faces() {
        let flux = beta * face.trans * (z[face.hi] - z[face.lo]);
        out[face.lo] -= flux;
        out[face.hi] += flux;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pcg_solve(
    grid: &Grid,
    alpha: Coefficient<'_>,
    beta: f64,
    rhs: &[f64],
    mut x: Vec<f64>,
    target: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = grid.len();
    let w = grid.weights();
    let mut diag: Vec<f64> = (0..n).map(|i| w[i] * alpha.at(i)).collect();
    for face in grid.faces() {
        diag[face.lo] += beta * face.trans;
        diag[face.hi] += beta * face.trans;
    }

    let mut ax = vec![0.0; n];
    apply_weighted(grid, alpha, beta, &x, &mut ax);
    let mut r: Vec<f64> = (0..n).map(|i| w[i] * rhs[i] - ax[i]).collect();
    // residual in the unweighted (pointwise) norm
    let unweighted = |r: &[f64]| r.iter().zip(w).fold(0.0_f64, |m, (ri, wi)| m.max((ri / wi).abs()));
    let mut err = unweighted(&r);
    if err <= target {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        apply_weighted(grid, alpha, beta, &p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        err = unweighted(&r);
        if err <= target || err <= rounding_floor(grid, alpha, beta, &x, rhs) {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let ratio = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + ratio * p[i];
        }
    }
    Err(Error::SolverNonConvergence { iterations: max_iter, residual: err })
}
