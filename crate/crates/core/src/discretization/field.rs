use std::sync::Arc;

use crate::discretization::Grid;
use crate::error::{Error, Result};

/// Nodal values on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Field {
    /// Wraps `values`, rejecting length mismatches and non-finite entries.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Field> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field".into()));
        }
        Ok(Field { grid, values })
    }

    /// Skips the finiteness scan; callers check where it matters.
    pub(crate) fn from_parts(grid: Arc<Grid>, values: Vec<f64>) -> Field {
        debug_assert_eq!(grid.len(), values.len());
        Field { grid, values }
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Field {
        let n = grid.len();
        Field { grid, values: vec![c; n] }
    }

    pub fn zeros(grid: Arc<Grid>) -> Field {
        Field::constant(grid, 0.0)
    }

    /// Samples `f` at node coordinates.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn([f64; 2]) -> f64) -> Field {
        let values = grid.coords().iter().map(|&c| f(c)).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field::from_parts(self.grid.clone(), self.values.iter().map(|&x| f(x)).collect())
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Field {
        debug_assert!(Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid);
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Field::from_parts(self.grid.clone(), values)
    }

    pub fn integrate(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn laplacian(&self) -> Field {
        Field::from_parts(self.grid.clone(), self.grid.laplacian(&self.values))
    }

    pub fn grad_sq_integral(&self) -> f64 {
        self.grid.grad_sq_integral(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn l1(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, x)| w * x.abs()).sum()
    }

    pub fn l2(&self) -> f64 {
        self.grid.weights().iter().zip(&self.values).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
    }

    /// `‖self - other‖_∞`.
    pub fn dist_inf(&self, other: &Field) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
