use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible node count along any axis.
pub const MIN_NODES: usize = 8;

/// Domain shape. Lengths are physical extents; the disk is discretized in
/// the radial variable only (radially symmetric fields).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
    RadialDisk { radius: f64 },
}

impl Geometry {
    /// Lebesgue measure of the domain.
    pub fn measure(&self) -> f64 {
        match *self {
            Geometry::Interval { length } => length,
            Geometry::Rectangle { lx, ly } => lx * ly,
            Geometry::RadialDisk { radius } => PI * radius * radius,
        }
    }

    pub fn is_radial(&self) -> bool {
        matches!(self, Geometry::RadialDisk { .. })
    }
}

/// Node counts per axis. `ny` is ignored by one-dimensional geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub nx: usize,
    pub ny: usize,
}

impl Resolution {
    pub fn uniform(n: usize) -> Self {
        Resolution { nx: n, ny: n }
    }

    pub fn axes(nx: usize, ny: usize) -> Self {
        Resolution { nx, ny }
    }
}

/// Interior cell face shared by two nodes. `trans` is the face measure
/// divided by the node distance, so the flux form of the Laplacian reads
/// `w_i (Δf)_i = Σ trans (f_j - f_i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Face {
    pub lo: usize,
    pub hi: usize,
    pub trans: f64,
    pub dist: f64,
}

/// Cell-centered finite-volume grid with homogeneous Neumann boundaries.
///
/// Boundary faces carry zero flux, which is the ghost-node reflection of the
/// centered stencil. Nodes never sit on the boundary, and on the disk the
/// first node is at `r = dr/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    geometry: Geometry,
    nx: usize,
    ny: usize,
    spacing: [f64; 2],
    coords: Vec<[f64; 2]>,
    weights: Vec<f64>,
    faces: Vec<Face>,
}

/// Builds a grid and checks every structural invariant.
pub fn build_grid(geometry: Geometry, resolution: Resolution) -> Result<Arc<Grid>> {
    Grid::build(geometry, resolution).map(Arc::new)
}

fn check_len(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value > 0.0) {
        return Err(Error::InvalidGrid(format!("{name} must be positive, got {value}")));
    }
    Ok(())
}

fn check_count(name: &str, n: usize) -> Result<()> {
    if n < MIN_NODES {
        return Err(Error::InvalidGrid(format!(
            "{name} = {n} is below the minimum of {MIN_NODES} nodes"
        )));
    }
    Ok(())
}

impl Grid {
    pub fn build(geometry: Geometry, resolution: Resolution) -> Result<Grid> {
        let grid = match geometry {
            Geometry::Interval { length } => {
                check_len("length", length)?;
                check_count("nx", resolution.nx)?;
                let n = resolution.nx;
                let h = length / n as f64;
                let coords = (0..n).map(|i| [(i as f64 + 0.5) * h, 0.0]).collect();
                let weights = vec![h; n];
                let faces = (0..n - 1)
                    .map(|i| Face { lo: i, hi: i + 1, trans: 1.0 / h, dist: h })
                    .collect();
                Grid { geometry, nx: n, ny: 1, spacing: [h, h], coords, weights, faces }
            }
            Geometry::Rectangle { lx, ly } => {
                check_len("lx", lx)?;
                check_len("ly", ly)?;
                check_count("nx", resolution.nx)?;
                check_count("ny", resolution.ny)?;
                let (nx, ny) = (resolution.nx, resolution.ny);
                let hx = lx / nx as f64;
                let hy = ly / ny as f64;
                let mut coords = Vec::with_capacity(nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        coords.push([(i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy]);
                    }
                }
                let weights = vec![hx * hy; nx * ny];
                let mut faces = Vec::with_capacity(2 * nx * ny);
                for j in 0..ny {
                    for i in 0..nx {
                        let k = i + nx * j;
                        if i + 1 < nx {
                            faces.push(Face { lo: k, hi: k + 1, trans: hy / hx, dist: hx });
                        }
                        if j + 1 < ny {
                            faces.push(Face { lo: k, hi: k + nx, trans: hx / hy, dist: hy });
                        }
                    }
                }
                Grid { geometry, nx, ny, spacing: [hx, hy], coords, weights, faces }
            }
            Geometry::RadialDisk { radius } => {
                check_len("radius", radius)?;
                check_count("nx", resolution.nx)?;
                let n = resolution.nx;
                let dr = radius / n as f64;
                let coords: Vec<[f64; 2]> =
                    (0..n).map(|i| [(i as f64 + 0.5) * dr, 0.0]).collect();
                // exact annulus areas: pi((i+1)^2 - i^2) dr^2 = 2 pi r_i dr
                let weights = coords.iter().map(|c| 2.0 * PI * c[0] * dr).collect();
                let faces = (0..n - 1)
                    .map(|i| {
                        let rf = (i + 1) as f64 * dr;
                        Face { lo: i, hi: i + 1, trans: 2.0 * PI * rf / dr, dist: dr }
                    })
                    .collect();
                Grid { geometry, nx: n, ny: 1, spacing: [dr, dr], coords, weights, faces }
            }
        };
        grid.check_invariants()?;
        Ok(grid)
    }

    fn check_invariants(&self) -> Result<()> {
        let total: f64 = self.weights.iter().sum();
        let measure = self.geometry.measure();
        if ((total - measure) / measure).abs() > 1e-12 {
            return Err(Error::InvalidGrid(format!(
                "quadrature weights sum to {total}, expected {measure}"
            )));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidGrid("non-positive spacing".into()));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `(nx, ny)`; one-dimensional grids report `ny = 1`.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn spacing(&self) -> [f64; 2] {
        self.spacing
    }

    /// Largest spacing over the axes.
    pub fn h(&self) -> f64 {
        self.spacing[0].max(self.spacing[1])
    }

    pub fn measure(&self) -> f64 {
        self.geometry.measure()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Node coordinates; `[x, 0]` on the interval, `[r, 0]` on the disk.
    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn dimension(&self) -> usize {
        match self.geometry {
            Geometry::Rectangle { .. } => 2,
            _ => 1,
        }
    }

    /// Distance of node `i` to the origin of the geometry's coordinates.
    pub fn radius_of(&self, i: usize) -> f64 {
        let [x, y] = self.coords[i];
        x.hypot(y)
    }

    pub(crate) fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// True when node `i` only couples to `i - 1` and `i + 1`.
    pub(crate) fn is_chain(&self) -> bool {
        self.ny == 1
    }

    /// Quadrature sum `Σ w_i f_i`, accumulated in node order.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        debug_assert_eq!(f.len(), self.len());
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// Discrete Neumann Laplacian written into `out`.
    pub fn laplacian_into(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.len());
        out.iter_mut().for_each(|o| *o = 0.0);
        for face in &self.faces {
            let flux = face.trans * (f[face.hi] - f[face.lo]);
            out[face.lo] += flux;
            out[face.hi] -= flux;
        }
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o /= w;
        }
    }

    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.laplacian_into(f, &mut out);
        out
    }

    /// `∫|∇f|²` as the face sum `Σ trans (f_j - f_i)²`, which equals
    /// `-Σ w_i f_i (Δf)_i` identically.
    pub fn grad_sq_integral(&self, f: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|face| {
                let d = f[face.hi] - f[face.lo];
                face.trans * d * d
            })
            .sum()
    }

    /// Largest normal difference quotient over interior faces.
    pub fn face_grad_max(&self, f: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|face| ((f[face.hi] - f[face.lo]) / face.dist).abs())
            .fold(0.0, f64::max)
    }
}
