//! Grids, quadrature, Neumann stencils and shifted-Helmholtz solves.

mod field;
mod grid;
mod helmholtz;

pub use field::Field;
pub use grid::{build_grid, Geometry, Grid, Resolution, MIN_NODES};
pub use helmholtz::{
    apply_shifted_helmholtz, inverse_helmholtz, solve_shifted_helmholtz,
    solve_shifted_helmholtz_with, Coefficient, SolverOptions,
};
