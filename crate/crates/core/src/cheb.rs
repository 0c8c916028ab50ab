//! Chebyshev-Lobatto collocation in the slab-normal direction.
//!
//! Vertical profiles are represented on Gauss-Lobatto nodes mapped to the
//! parameter interval [0,1]; differentiation uses the barycentric form of the
//! spectral differentiation matrix, integration uses Clenshaw-Curtis weights.

use nalgebra::{DMatrix, DVector};

#[derive(Clone)]
pub struct Cheb {
    pub n: usize,
    /// Ascending collocation nodes in [0, 1].
    pub s: Vec<f64>,
    /// Spectral differentiation matrix d/ds.
    pub d: DMatrix<f64>,
    /// Clenshaw-Curtis quadrature weights on [0, 1].
    pub w: Vec<f64>,
}

impl Cheb {
    pub fn new(n: usize) -> Self {
        assert!(n >= 4, "need at least 4 collocation nodes");
        let m = n - 1;
        let s: Vec<f64> = (0..n)
            .map(|j| 0.5 * (1.0 - (std::f64::consts::PI * j as f64 / m as f64).cos()))
            .collect();

        // barycentric weights for Lobatto nodes: (-1)^j, halved at the ends
        let bw: Vec<f64> = (0..n)
            .map(|j| {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == m {
                    0.5 * sign
                } else {
                    sign
                }
            })
            .collect();

        let mut d = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut row_sum = 0.0;
            for j in 0..n {
                if i != j {
                    let v = (bw[j] / bw[i]) / (s[i] - s[j]);
                    d[(i, j)] = v;
                    row_sum += v;
                }
            }
            d[(i, i)] = -row_sum;
        }

        // quadrature weights: solve V^T w = moments of Chebyshev polynomials
        // mapped to [0,1]; the Chebyshev Vandermonde at Lobatto nodes is
        // well-conditioned at these sizes.
        let mut v = DMatrix::zeros(n, n);
        let mut moments = DVector::zeros(n);
        for k in 0..n {
            for j in 0..n {
                let x = 2.0 * s[j] - 1.0;
                v[(k, j)] = cheb_t(k, x);
            }
            // int_{-1}^{1} T_k = 0 (k odd), 2/(1-k^2) (k even); scale 1/2 for [0,1]
            moments[k] = if k % 2 == 1 { 0.0 } else { 1.0 / (1.0 - (k * k) as f64) };
        }
        let w_vec = v
            .lu()
            .solve(&moments)
            .expect("Chebyshev quadrature weights solve failed");
        let w = w_vec.iter().copied().collect();

        Cheb { n, s, d, w }
    }

    /// Derivative of a sampled profile.
    pub fn deriv(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += self.d[(i, j)] * f[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Integral over [0,1] of a sampled profile.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(self.w.iter()).map(|(a, b)| a * b).sum()
    }

    /// Index range of the `m` nodes nearest to `s` (for local interpolation).
    pub fn stencil(&self, s: f64, m: usize) -> (usize, usize) {
        let mut lo = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        lo = lo.saturating_sub(m / 2 - 1).min(self.n - m);
        (lo, lo + m)
    }

    /// Barycentric Lagrange interpolation on a local stencil of `m` nodes.
    pub fn interp_local(&self, f: &[f64], s: f64, m: usize) -> f64 {
        let (lo, hi) = self.stencil(s, m);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in lo..hi {
            let diff = s - self.s[j];
            if diff.abs() < 1e-14 {
                return f[j];
            }
            // local barycentric weights
            let mut w = 1.0;
            for k in lo..hi {
                if k != j {
                    w /= self.s[j] - self.s[k];
                }
            }
            num += w / diff * f[j];
            den += w / diff;
        }
        num / den
    }
}

fn cheb_t(k: usize, x: f64) -> f64 {
    // stable enough for k < ~100 via the trig form
    if x.abs() <= 1.0 {
        (k as f64 * x.acos()).cos()
    } else {
        let t = x.abs().max(1.0);
        let y = (k as f64 * (t + (t * t - 1.0).sqrt()).ln()).cosh();
        if x < 0.0 && k % 2 == 1 {
            -y
        } else {
            y
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_and_quadrature() {
        let ch = Cheb::new(17);
        let f: Vec<f64> = ch.s.iter().map(|&s| (3.0 * s).exp()).collect();
        let df = ch.deriv(&f);
        for (j, &s) in ch.s.iter().enumerate() {
            let exact = 3.0 * (3.0 * s).exp();
            assert!((df[j] - exact).abs() < 1e-9, "deriv error at node {j}");
        }
        let integral = ch.integrate(&f);
        let exact = ((3.0f64).exp() - 1.0) / 3.0;
        assert!((integral - exact).abs() < 1e-12);
    }

    #[test]
    fn local_interpolation() {
        let ch = Cheb::new(21);
        let f: Vec<f64> = ch.s.iter().map(|&s| (2.0 * std::f64::consts::PI * s).sin()).collect();
        for &s in &[0.13, 0.5, 0.77, 0.97] {
            let v = ch.interp_local(&f, s, 4);
            let exact = (2.0 * std::f64::consts::PI * s).sin();
            assert!((v - exact).abs() < 2e-3, "interp error at {s}: {}", (v - exact).abs());
        }
    }
}
