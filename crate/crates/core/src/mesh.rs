//! Uniform one-dimensional grids and the discrete operators built on them.
//!
//! Two geometries cover every domain the lab uses:
//!
//! * `Interval` — the segment [-extent, extent], symmetric about 0;
//! * `Radial`  — radii [0, extent] of a ball in `dim` dimensions, with the
//!   origin treated as a symmetry axis (not a boundary).
//!
//! The discrete Laplacian is the standard second-order three-point stencil;
//! on radial grids it is f'' + (dim-1)/r f', with the symmetry limit
//! 2*dim*(f_1 - f_0)/h^2 at r = 0. Quadrature is the trapezoid rule against
//! the geometric measure (dx, or omega_{dim-1} r^{dim-1} dr), optionally
//! weighted by the Gaussian exp(-|y|^2/4); sums always run left to right so
//! results are bit-reproducible.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Geometry of a grid: a symmetric interval or the radii of a ball.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum GridKind {
    Interval,
    Radial,
}

/// A uniform 1-D grid. Immutable after construction; share via `Arc`.
#[derive(Clone, Debug)]
pub struct Grid {
    pub kind: GridKind,
    /// Ambient dimension: 1 for intervals, >= 1 for radial grids.
    pub dim: u32,
    /// Interval grids span [-extent, extent]; radial grids span [0, extent].
    pub extent: f64,
    /// Strictly increasing, uniformly spaced nodes (m + 1 of them).
    pub nodes: Vec<f64>,
    /// Node spacing.
    pub h: f64,
}

/// Fewest cells a grid may have: below this the stencil and the quadrature
/// are too coarse to mean anything.
pub const MIN_CELLS: usize = 8;

/// Largest moment order `k` accepted by [`weighted_moment_integral`].
pub const MAX_MOMENT: u32 = 6;

/// Build a uniform grid with `m` cells (`m + 1` nodes).
///
/// Interval grids require `dim == 1` and place a node exactly at 0 when `m`
/// is even; radial grids place the first node exactly at r = 0.
pub fn build_grid(kind: GridKind, dim: u32, extent: f64, m: usize) -> Result<Grid> {
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "grid extent must be positive and finite, got {}",
            extent
        )));
    }
    if m < MIN_CELLS {
        return Err(Error::InvalidArgument(format!(
            "grid needs at least {} cells, got {}",
            MIN_CELLS, m
        )));
    }
    if dim < 1 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if kind == GridKind::Interval && dim != 1 {
        return Err(Error::InvalidArgument(format!(
            "interval grids are one-dimensional, got dim = {}",
            dim
        )));
    }
    let md = m as f64;
    let nodes: Vec<f64> = match kind {
        // (2i - m) * extent / m: antisymmetric by construction, node m/2 is
        // exactly 0.0 for even m, endpoints are exactly +-extent.
        GridKind::Interval => (0..=m)
            .map(|i| (2 * i as i64 - m as i64) as f64 * extent / md)
            .collect(),
        GridKind::Radial => (0..=m).map(|i| i as f64 * extent / md).collect(),
    };
    let h = match kind {
        GridKind::Interval => 2.0 * extent / md,
        GridKind::Radial => extent / md,
    };
    Ok(Grid { kind, dim, extent, nodes, h })
}

impl Grid {
    /// Number of cells (nodes are `0..=cells()`).
    pub fn cells(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Leftmost coordinate.
    pub fn lo(&self) -> f64 {
        self.nodes[0]
    }

    /// Rightmost coordinate.
    pub fn hi(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Whether `x` lies within the closed extent (tiny rounding slack).
    pub fn contains(&self, x: f64) -> bool {
        let slack = 1e-12 * (self.hi() - self.lo());
        x >= self.lo() - slack && x <= self.hi() + slack
    }

    /// Stability factor of the stencil: the diffusion step limit is
    /// h^2 / (2 * dim_factor).
    pub fn dim_factor(&self) -> f64 {
        match self.kind {
            GridKind::Interval => 1.0,
            GridKind::Radial => self.dim as f64,
        }
    }

    /// Indices that carry Dirichlet data: both endpoints of an interval, the
    /// outer radius only for a radial grid (r = 0 is interior by symmetry).
    pub fn boundary_indices(&self) -> Vec<usize> {
        match self.kind {
            GridKind::Interval => vec![0, self.cells()],
            GridKind::Radial => vec![self.cells()],
        }
    }

    /// Precompute the three-diagonal Laplacian stencil. Row i of the output
    /// is lap[i] = sub[i]*f[i-1] + diag[i]*f[i] + sup[i]*f[i+1], with
    /// boundary rows identically zero.
    pub fn laplacian_stencil(&self) -> Stencil {
        let m = self.cells();
        let inv_h2 = 1.0 / (self.h * self.h);
        let mut sub = vec![0.0; m + 1];
        let mut diag = vec![0.0; m + 1];
        let mut sup = vec![0.0; m + 1];
        match self.kind {
            GridKind::Interval => {
                for i in 1..m {
                    sub[i] = inv_h2;
                    diag[i] = -2.0 * inv_h2;
                    sup[i] = inv_h2;
                }
            }
            GridKind::Radial => {
                let n = self.dim as f64;
                // Symmetry limit at r = 0: 2*dim*(f_1 - f_0)/h^2.
                diag[0] = -2.0 * n * inv_h2;
                sup[0] = 2.0 * n * inv_h2;
                for i in 1..m {
                    let drift = (n - 1.0) / (2.0 * self.h * self.nodes[i]);
                    sub[i] = inv_h2 - drift;
                    diag[i] = -2.0 * inv_h2;
                    sup[i] = inv_h2 + drift;
                }
            }
        }
        Stencil { sub, diag, sup }
    }

    /// Trapezoid weights for the geometric measure: dx on intervals,
    /// omega_{dim-1} r^{dim-1} dr on radial grids.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        let m = self.cells();
        let mut w = vec![self.h; m + 1];
        w[0] = 0.5 * self.h;
        w[m] = 0.5 * self.h;
        if self.kind == GridKind::Radial {
            let omega = unit_sphere_area(self.dim);
            let n = self.dim as f64;
            for (wi, &r) in w.iter_mut().zip(&self.nodes) {
                *wi *= omega * r.powf(n - 1.0);
            }
        }
        w
    }
}

/// Tridiagonal stencil coefficients for the discrete Laplacian.
pub struct Stencil {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Stencil {
    /// Apply the stencil to `f`, writing into `out` (boundary rows get 0).
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        let m = f.len() - 1;
        out[0] = self.diag[0] * f[0] + self.sup[0] * f[1];
        for i in 1..m {
            out[i] = self.sub[i] * f[i - 1] + self.diag[i] * f[i] + self.sup[i] * f[i + 1];
        }
        out[m] = 0.0;
    }
}

/// Surface area of the unit sphere in `dim` dimensions:
/// 2 pi^(dim/2) / Gamma(dim/2). (2 for dim 1, 2 pi for dim 2, 4 pi for 3.)
pub fn unit_sphere_area(dim: u32) -> f64 {
    use std::f64::consts::PI;
    2.0 * PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// Gamma(n/2) for positive integer n, via Gamma(x+1) = x Gamma(x) from
/// Gamma(1/2) = sqrt(pi) and Gamma(1) = 1.
fn gamma_half(n: u32) -> f64 {
    let mut x = if n % 2 == 0 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    while k < n {
        x *= k as f64 / 2.0;
        k += 2;
    }
    x
}

/// Scalar samples attached to a grid at one instant of time.
#[derive(Clone, Debug)]
pub struct Field {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
    pub time: f64,
}

impl Field {
    /// Wrap `values` on `grid`, checking length and finiteness.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>, time: f64) -> Result<Field> {
        if values.len() != grid.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but the grid has {} nodes",
                values.len(),
                grid.nodes.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "field value at node {} is not finite",
                bad
            )));
        }
        Ok(Field { grid, values, time })
    }

    /// Sample a function of the coordinate onto the grid.
    pub fn sample<F: Fn(f64) -> f64>(grid: &Arc<Grid>, time: f64, f: F) -> Result<Field> {
        let values: Vec<f64> = grid.nodes.iter().map(|&x| f(x)).collect();
        Field::new(Arc::clone(grid), values, time)
    }

    /// Largest |value| and the coordinate where it is attained (first hit on
    /// ties, scanning left to right).
    pub fn max_abs(&self) -> (f64, f64) {
        let mut best = 0.0_f64;
        let mut at = self.grid.nodes[0];
        for (&v, &x) in self.values.iter().zip(&self.grid.nodes) {
            if v.abs() > best {
                best = v.abs();
                at = x;
            }
        }
        (best, at)
    }

    /// Zero out the Dirichlet boundary entries.
    pub fn impose_dirichlet(&mut self) {
        for i in self.grid.boundary_indices() {
            self.values[i] = 0.0;
        }
    }
}

/// Discrete Laplacian of a field. Boundary rows of the output are zero.
pub fn laplacian(f: &Field) -> Field {
    let stencil = f.grid.laplacian_stencil();
    let mut out = vec![0.0; f.values.len()];
    stencil.apply(&f.values, &mut out);
    Field { grid: Arc::clone(&f.grid), values: out, time: f.time }
}

/// First derivative along the coordinate: centered differences at interior
/// nodes, one-sided at interval endpoints and the outer radius. At r = 0 on
/// radial grids the derivative is 0 by symmetry (the mirrored centered
/// difference), since smooth radial profiles are even there.
pub fn gradient(f: &Field) -> Field {
    let m = f.grid.cells();
    let h = f.grid.h;
    let v = &f.values;
    let mut out = vec![0.0; m + 1];
    for i in 1..m {
        out[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    out[0] = match f.grid.kind {
        GridKind::Interval => (v[1] - v[0]) / h,
        GridKind::Radial => 0.0,
    };
    out[m] = (v[m] - v[m - 1]) / h;
    Field { grid: Arc::clone(&f.grid), values: out, time: f.time }
}

/// Squared gradient, node by node.
pub fn gradient_sq(f: &Field) -> Field {
    let mut g = gradient(f);
    for v in &mut g.values {
        *v *= *v;
    }
    g
}

/// Trapezoid integral of nodal `values` against the geometric measure.
/// Summation is a single left-to-right pass.
pub fn integrate(grid: &Grid, values: &[f64]) -> f64 {
    let w = grid.quadrature_weights();
    let mut acc = 0.0;
    for (v, wi) in values.iter().zip(&w) {
        acc += v * wi;
    }
    acc
}

/// Trapezoid integral of `values` against the Gaussian-weighted measure
/// exp(-|y|^2/4) d(measure).
pub fn integrate_gauss(grid: &Grid, values: &[f64]) -> f64 {
    let w = grid.quadrature_weights();
    let mut acc = 0.0;
    for ((v, wi), &y) in values.iter().zip(&w).zip(&grid.nodes) {
        acc += v * wi * (-y * y / 4.0).exp();
    }
    acc
}

/// Integral of f(y) |y|^(2k) exp(-|y|^2/4) over the grid, trapezoid rule,
/// fixed summation order. Moments up to k = 6 are supported.
pub fn weighted_moment_integral(f: &Field, k: u32) -> Result<f64> {
    if k > MAX_MOMENT {
        return Err(Error::UnsupportedMoment { k, max: MAX_MOMENT });
    }
    let w = f.grid.quadrature_weights();
    let mut acc = 0.0;
    for ((v, wi), &y) in f.values.iter().zip(&w).zip(&f.grid.nodes) {
        let y2 = y * y;
        acc += v * wi * y2.powi(k as i32) * (-y2 / 4.0).exp();
    }
    Ok(acc)
}

/// Piecewise-linear interpolation of `f` at `x`. Exact (bitwise) at nodes;
/// points outside the extent are an error.
pub fn interpolate(f: &Field, x: f64) -> Result<f64> {
    let g = &f.grid;
    if !g.contains(x) {
        return Err(Error::OutOfDomain { x, lo: g.lo(), hi: g.hi() });
    }
    let m = g.cells();
    let t = (x - g.lo()) / g.h;
    // Bitwise-exact return at nodes; floor-based lookup would otherwise blur
    // node hits by one rounding error.
    let nearest = t.round() as usize;
    if nearest <= m && g.nodes[nearest] == x {
        return Ok(f.values[nearest]);
    }
    let i = (t.floor() as usize).min(m - 1);
    let frac = (x - g.nodes[i]) / g.h;
    Ok(f.values[i] * (1.0 - frac) + f.values[i + 1] * frac)
}
