//! Periodic chart grid over the unit torus with a switchable derivative scheme.

use crate::fft::Spectral2;
use ndarray::Array2;
use std::sync::Arc;

/// Differentiation scheme for chart fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivScheme {
    /// Fourier-spectral derivatives (default).
    Spectral,
    /// 2nd-order central finite differences.
    Fd2,
    /// 4th-order central finite differences.
    Fd4,
}

/// An `n1 x n2` periodic grid on `[0,1)^2` carrying planned transforms.
#[derive(Clone)]
pub struct ChartGrid {
    pub n1: usize,
    pub n2: usize,
    pub scheme: DerivScheme,
    pub spectral: Arc<Spectral2>,
}

impl ChartGrid {
    pub fn new(n1: usize, n2: usize, scheme: DerivScheme) -> Self {
        assert!(n1 >= 4 && n2 >= 4, "chart grid too small");
        ChartGrid { n1, n2, scheme, spectral: Arc::new(Spectral2::new(n1, n2)) }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    /// Grid coordinates of node (i, j) in [0,1)^2.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 / self.n1 as f64, j as f64 / self.n2 as f64)
    }

    pub fn field_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((self.n1, self.n2), |(i, j)| {
            let (x, y) = self.coords(i, j);
            f(x, y)
        })
    }

    pub fn zeros(&self) -> Array2<f64> {
        Array2::zeros((self.n1, self.n2))
    }

    /// Partial derivative along axis 0 (x) or 1 (y) with the configured scheme.
    pub fn deriv(&self, f: &Array2<f64>, axis: usize) -> Array2<f64> {
        match self.scheme {
            DerivScheme::Spectral => self.spectral.deriv(f, axis),
            DerivScheme::Fd2 => self.fd_deriv(f, axis, &[(1, 0.5)]),
            DerivScheme::Fd4 => self.fd_deriv(f, axis, &[(1, 2.0 / 3.0), (2, -1.0 / 12.0)]),
        }
    }

    /// Central finite difference: sum of c * (f(i+off) - f(i-off)) / h.
    fn fd_deriv(&self, f: &Array2<f64>, axis: usize, stencil: &[(usize, f64)]) -> Array2<f64> {
        let (n1, n2) = (self.n1, self.n2);
        let n_axis = if axis == 0 { n1 } else { n2 };
        let h = 1.0 / n_axis as f64;
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let mut acc = 0.0;
                for &(off, c) in stencil {
                    let (ip, im) = if axis == 0 {
                        (((i + off) % n1, j), ((i + n1 - off) % n1, j))
                    } else {
                        ((i, (j + off) % n2), (i, (j + n2 - off) % n2))
                    };
                    acc += c * (f[[ip.0, ip.1]] - f[[im.0, im.1]]);
                }
                out[[i, j]] = acc / h;
            }
        }
        out
    }

    /// Plain (unweighted) grid mean.
    pub fn mean(&self, f: &Array2<f64>) -> f64 {
        f.sum() / (self.n1 * self.n2) as f64
    }

    /// Integral over the torus (unit area) of `f` against the weight `w`.
    pub fn integral_weighted(&self, f: &Array2<f64>, w: &Array2<f64>) -> f64 {
        let cell = 1.0 / (self.n1 * self.n2) as f64;
        f.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() * cell
    }

    pub fn max_abs(&self, f: &Array2<f64>) -> f64 {
        f.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    /// Discrete L2 norm with unit-area normalization.
    pub fn l2_norm(&self, f: &Array2<f64>) -> f64 {
        (f.iter().map(|x| x * x).sum::<f64>() / (self.n1 * self.n2) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn fd_orders() {
        // error ratio between N and 2N grids should match the scheme order
        let err = |n: usize, scheme: DerivScheme| {
            let g = ChartGrid::new(n, n, scheme);
            let f = g.field_from_fn(|x, _| (2.0 * PI * x).sin());
            let fx = g.deriv(&f, 0);
            let exact = g.field_from_fn(|x, _| 2.0 * PI * (2.0 * PI * x).cos());
            g.max_abs(&(&fx - &exact))
        };
        let r2 = err(16, DerivScheme::Fd2) / err(32, DerivScheme::Fd2);
        let r4 = err(16, DerivScheme::Fd4) / err(32, DerivScheme::Fd4);
        assert!(r2 > 3.5 && r2 < 4.5, "fd2 ratio {}", r2);
        assert!(r4 > 13.0 && r4 < 19.0, "fd4 ratio {}", r4);
        assert!(err(16, DerivScheme::Spectral) < 1e-12);
    }
}
