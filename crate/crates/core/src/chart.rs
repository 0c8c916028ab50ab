//! Reference chart and height fields.
//!
//! The moving interface is parameterized over a fixed reference surface
//! `F_*: T^2 -> Omega` equipped with a transversal unit field `nu`; a height
//! field `gamma` places the interface at `Phi(p) = F_*(p) + gamma(p) nu(p)`.
//! Nothing downstream assumes the interface is a graph over the horizontal
//! torus: tilted `nu` and curved `F_*` go through the same code path.

use crate::error::{Error, Result};
use crate::grid::{ChartGrid, DerivScheme};
use ndarray::Array2;

/// Three chart fields bundled as an R^3-valued map on the grid.
#[derive(Clone, Debug)]
pub struct VecField2 {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub z: Array2<f64>,
}

impl VecField2 {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        VecField2 { x: Array2::zeros((n1, n2)), y: Array2::zeros((n1, n2)), z: Array2::zeros((n1, n2)) }
    }

    pub fn from_fn(grid: &ChartGrid, f: impl Fn(f64, f64) -> [f64; 3]) -> Self {
        let mut v = VecField2::zeros(grid.n1, grid.n2);
        for i in 0..grid.n1 {
            for j in 0..grid.n2 {
                let (x, y) = grid.coords(i, j);
                let val = f(x, y);
                v.x[[i, j]] = val[0];
                v.y[[i, j]] = val[1];
                v.z[[i, j]] = val[2];
            }
        }
        v
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 3] {
        [self.x[[i, j]], self.y[[i, j]], self.z[[i, j]]]
    }

    pub fn set(&mut self, i: usize, j: usize, v: [f64; 3]) {
        self.x[[i, j]] = v[0];
        self.y[[i, j]] = v[1];
        self.z[[i, j]] = v[2];
    }

    pub fn component(&self, c: usize) -> &Array2<f64> {
        match c {
            0 => &self.x,
            1 => &self.y,
            _ => &self.z,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        VecField2 { x: &self.x * s, y: &self.y * s, z: &self.z * s }
    }

    pub fn add(&self, other: &Self) -> Self {
        VecField2 { x: &self.x + &other.x, y: &self.y + &other.y, z: &self.z + &other.z }
    }

    pub fn max_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for ((a, b), c) in self.x.iter().zip(self.y.iter()).zip(self.z.iter()) {
            m = m.max((a * a + b * b + c * c).sqrt());
        }
        m
    }
}

pub(crate) fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn norm3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// The fixed coordinate scaffold: immersion `F_*`, transversal field `nu`,
/// and the C^1 validity radius for height fields.
#[derive(Clone)]
pub struct ReferenceChart {
    pub grid: ChartGrid,
    /// Per-node immersion point of the reference surface in `T^2 x (-1,1)`.
    pub immersion: VecField2,
    /// Per-node unit transversal vector.
    pub nu: VecField2,
    /// C^1 validity radius for height fields.
    pub closeness_delta: f64,
    /// Required clearance of the reference surface from the walls `z = +-1`.
    pub wall_clearance: f64,
}

impl ReferenceChart {
    /// Flat torus at height `z0` with vertical transversal `e3`.
    pub fn flat(n: usize, z0: f64, scheme: DerivScheme) -> Result<Self> {
        let grid = ChartGrid::new(n, n, scheme);
        let immersion = VecField2::from_fn(&grid, |x, y| [x, y, z0]);
        let nu = VecField2::from_fn(&grid, |_, _| [0.0, 0.0, 1.0]);
        Self::new(grid, immersion, nu, 0.3, 0.1)
    }

    /// Same chart with a different C^1 validity radius.
    pub fn with_closeness(mut self, delta: f64) -> Self {
        self.closeness_delta = delta;
        self
    }

    /// General chart. Validates unit `nu`, transversality against the discrete
    /// normal of `F_*`, and wall clearance.
    pub fn new(
        grid: ChartGrid,
        immersion: VecField2,
        nu: VecField2,
        closeness_delta: f64,
        wall_clearance: f64,
    ) -> Result<Self> {
        let chart = ReferenceChart { grid, immersion, nu, closeness_delta, wall_clearance };
        chart.validate()?;
        Ok(chart)
    }

    fn validate(&self) -> Result<()> {
        let g = &self.grid;
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let nu = self.nu.at(i, j);
                let len = norm3(nu);
                if (len - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "nu not unit length at ({i},{j}): |nu| = {len:.15}"
                    )));
                }
                let z = self.immersion.z[[i, j]];
                if 1.0 - z.abs() < self.wall_clearance {
                    return Err(Error::InvalidInput(format!(
                        "reference surface too close to wall at ({i},{j}): z = {z}"
                    )));
                }
            }
        }
        // discrete normal of F_* must stay transversal to nu; differentiate
        // only the periodic part of the immersion
        let lin_x = g.field_from_fn(|x, _| x);
        let lin_y = g.field_from_fn(|_, y| y);
        let px = &self.immersion.x - &lin_x;
        let py = &self.immersion.y - &lin_y;
        let mut fx = [g.deriv(&px, 0), g.deriv(&py, 0), g.deriv(&self.immersion.z, 0)];
        let mut fy = [g.deriv(&px, 1), g.deriv(&py, 1), g.deriv(&self.immersion.z, 1)];
        fx[0].mapv_inplace(|v| v + 1.0);
        fy[1].mapv_inplace(|v| v + 1.0);
        for i in 0..g.n1 {
            for j in 0..g.n2 {
                let tx = [fx[0][[i, j]], fx[1][[i, j]], fx[2][[i, j]]];
                let ty = [fy[0][[i, j]], fy[1][[i, j]], fy[2][[i, j]]];
                let mut n = cross3(tx, ty);
                let len = norm3(n);
                if len <= 0.0 {
                    return Err(Error::InvalidInput(format!("degenerate reference tangents at ({i},{j})")));
                }
                for c in &mut n {
                    *c /= len;
                }
                // orient to positive z before checking (flat charts give +e3)
                let n = if n[2] < 0.0 { [-n[0], -n[1], -n[2]] } else { n };
                let dot = dot3(self.nu.at(i, j), n);
                if dot < 0.9 {
                    return Err(Error::InvalidInput(format!(
                        "transversality failure at ({i},{j}): nu . n_* = {dot:.4} < 9/10"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.grid.n1
    }
}

/// A height field over the reference chart.
#[derive(Clone, Debug)]
pub struct HeightField {
    pub gamma: Array2<f64>,
}

impl HeightField {
    pub fn zero(chart: &ReferenceChart) -> Self {
        HeightField { gamma: chart.grid.zeros() }
    }

    pub fn from_fn(chart: &ReferenceChart, f: impl Fn(f64, f64) -> f64) -> Self {
        HeightField { gamma: chart.grid.field_from_fn(f) }
    }

    /// C^1 smallness gate: max |gamma| and max |grad gamma| below the chart's
    /// validity radius.
    pub fn validate(&self, chart: &ReferenceChart) -> Result<()> {
        let g = &chart.grid;
        let max_g = g.max_abs(&self.gamma);
        let gx = g.deriv(&self.gamma, 0);
        let gy = g.deriv(&self.gamma, 1);
        let mut max_grad = 0.0f64;
        for (a, b) in gx.iter().zip(gy.iter()) {
            max_grad = max_grad.max((a * a + b * b).sqrt());
        }
        if max_g > chart.closeness_delta || max_grad > chart.closeness_delta {
            return Err(Error::ChartViolation(format!(
                "height field outside validity ball: max|gamma| = {max_g:.4e}, max|grad gamma| = {max_grad:.4e}, delta = {}",
                chart.closeness_delta
            )));
        }
        Ok(())
    }
}
