//! Planned 2-D Fourier transforms and spectral derivatives on the unit torus.
//!
//! All chart fields live on an `n1 x n2` periodic grid over `[0,1)^2`; the
//! wavevector of mode `(m1, m2)` is `2*pi*(m1, m2)` with negative frequencies
//! folded in the usual FFT order. Derivative multipliers zero the Nyquist
//! column, which keeps the differentiation matrix antisymmetric and discrete
//! integration by parts exact to roundoff.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Planned transforms and wavenumber tables for one grid size.
pub struct Spectral2 {
    pub n1: usize,
    pub n2: usize,
    fwd1: Arc<dyn Fft<f64>>,
    inv1: Arc<dyn Fft<f64>>,
    fwd2: Arc<dyn Fft<f64>>,
    inv2: Arc<dyn Fft<f64>>,
    /// Wavenumbers along axis 0, Nyquist zeroed.
    pub k1: Vec<f64>,
    /// Wavenumbers along axis 1, Nyquist zeroed.
    pub k2: Vec<f64>,
    /// Signed integer frequencies (Nyquist kept) along each axis.
    pub freq1: Vec<i64>,
    pub freq2: Vec<i64>,
}

fn wavenumbers(n: usize) -> (Vec<f64>, Vec<i64>) {
    let mut k = vec![0.0; n];
    let mut fr = vec![0i64; n];
    for m in 0..n {
        let f = if m <= n / 2 { m as i64 } else { m as i64 - n as i64 };
        fr[m] = f;
        // zero the Nyquist mode in derivatives (even n only has one)
        if n % 2 == 0 && m == n / 2 {
            k[m] = 0.0;
        } else {
            k[m] = 2.0 * std::f64::consts::PI * f as f64;
        }
    }
    (k, fr)
}

impl Spectral2 {
    pub fn new(n1: usize, n2: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd1 = planner.plan_fft_forward(n1);
        let inv1 = planner.plan_fft_inverse(n1);
        let fwd2 = planner.plan_fft_forward(n2);
        let inv2 = planner.plan_fft_inverse(n2);
        let (k1, freq1) = wavenumbers(n1);
        let (k2, freq2) = wavenumbers(n2);
        Spectral2 { n1, n2, fwd1, inv1, fwd2, inv2, k1, k2, freq1, freq2 }
    }

    /// Forward 2-D transform of a real field (unnormalized).
    pub fn to_modes(&self, f: &Array2<f64>) -> Array2<Complex64> {
        let mut c = f.mapv(|x| Complex64::new(x, 0.0));
        self.fft2_inplace(&mut c, true);
        c
    }

    /// Inverse 2-D transform, returning the real part (normalized).
    pub fn to_grid(&self, modes: &Array2<Complex64>) -> Array2<f64> {
        let mut c = modes.clone();
        self.fft2_inplace(&mut c, false);
        let scale = 1.0 / (self.n1 * self.n2) as f64;
        c.mapv(|z| z.re * scale)
    }

    fn fft2_inplace(&self, c: &mut Array2<Complex64>, forward: bool) {
        let (n1, n2) = (self.n1, self.n2);
        // axis 1: rows are contiguous in standard layout
        let mut row = vec![Complex64::default(); n2];
        for i in 0..n1 {
            for j in 0..n2 {
                row[j] = c[[i, j]];
            }
            if forward {
                self.fwd2.process(&mut row);
            } else {
                self.inv2.process(&mut row);
            }
            for j in 0..n2 {
                c[[i, j]] = row[j];
            }
        }
        // axis 0
        let mut col = vec![Complex64::default(); n1];
        for j in 0..n2 {
            for i in 0..n1 {
                col[i] = c[[i, j]];
            }
            if forward {
                self.fwd1.process(&mut col);
            } else {
                self.inv1.process(&mut col);
            }
            for i in 0..n1 {
                c[[i, j]] = col[i];
            }
        }
    }

    /// Spectral partial derivative along `axis` (0 or 1).
    pub fn deriv(&self, f: &Array2<f64>, axis: usize) -> Array2<f64> {
        let mut m = self.to_modes(f);
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let k = if axis == 0 { self.k1[i] } else { self.k2[j] };
                m[[i, j]] *= Complex64::new(0.0, k);
            }
        }
        self.to_grid(&m)
    }

    /// Zero every mode with |freq| above 2/3 of the resolved band (both axes).
    pub fn dealias_23(&self, f: &Array2<f64>) -> Array2<f64> {
        let mut m = self.to_modes(f);
        let c1 = (self.n1 as i64) / 3;
        let c2 = (self.n2 as i64) / 3;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                if self.freq1[i].abs() > c1 || self.freq2[j].abs() > c2 {
                    m[[i, j]] = Complex64::new(0.0, 0.0);
                }
            }
        }
        self.to_grid(&m)
    }

    /// Complex amplitude of the mode with integer frequencies `(m1, m2)`,
    /// normalized so that `f = amp * exp(2*pi*i*(m1 x + m2 y)) + c.c.` gives
    /// back `amp`.
    pub fn mode_amplitude(&self, f: &Array2<f64>, m1: i64, m2: i64) -> Complex64 {
        let modes = self.to_modes(f);
        let i = self.freq1.iter().position(|&fr| fr == m1).expect("mode m1 not resolved");
        let j = self.freq2.iter().position(|&fr| fr == m2).expect("mode m2 not resolved");
        modes[[i, j]] / (self.n1 * self.n2) as f64
    }

    /// Discrete Sobolev norm squared: sum over modes of (1+|k|^2)^s |f_hat|^2.
    pub fn hs_norm_sq(&self, f: &Array2<f64>, s: f64) -> f64 {
        let modes = self.to_modes(f);
        let scale = 1.0 / ((self.n1 * self.n2) as f64);
        let mut acc = 0.0;
        for i in 0..self.n1 {
            for j in 0..self.n2 {
                let k2 = self.k1[i] * self.k1[i] + self.k2[j] * self.k2[j];
                let w = (1.0 + k2).powf(s);
                acc += w * modes[[i, j]].norm_sqr() * scale * scale;
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use std::f64::consts::PI;

    fn grid_field(n: usize, f: impl Fn(f64, f64) -> f64) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| f(i as f64 / n as f64, j as f64 / n as f64))
    }

    #[test]
    fn roundtrip_and_derivative() {
        let n = 32;
        let sp = Spectral2::new(n, n);
        let f = grid_field(n, |x, y| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let back = sp.to_grid(&sp.to_modes(&f));
        for (a, b) in f.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let fx = sp.deriv(&f, 0);
        let exact = grid_field(n, |x, y| 2.0 * PI * (2.0 * PI * x).cos() * (4.0 * PI * y).cos());
        for (a, b) in fx.iter().zip(exact.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn integration_by_parts_exact() {
        let n = 24;
        let sp = Spectral2::new(n, n);
        let f = grid_field(n, |x, y| (2.0 * PI * x).sin() + 0.3 * (2.0 * PI * (x + 2.0 * y)).cos());
        let g = grid_field(n, |x, y| (4.0 * PI * y).sin() - 0.7 * (2.0 * PI * (2.0 * x - y)).cos());
        let fx = sp.deriv(&f, 0);
        let gx = sp.deriv(&g, 0);
        let lhs: f64 = fx.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = f.iter().zip(gx.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs + rhs).abs() < 1e-10, "ibp residual {}", lhs + rhs);
    }

    #[test]
    fn mode_amplitude_extraction() {
        let n = 16;
        let sp = Spectral2::new(n, n);
        let f = grid_field(n, |x, _| 0.25 * (2.0 * PI * x).cos());
        let amp = sp.mode_amplitude(&f, 1, 0);
        assert!((amp.re - 0.125).abs() < 1e-12 && amp.im.abs() < 1e-12);
    }
}
