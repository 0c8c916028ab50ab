//! The modified curvature map and its numerical inverse.
//!
//! `K[gamma] = kappa(Phi_gamma) + a^2 gamma` is a diffeomorphism near the
//! reference surface once `a` dominates the curvature linearization, so the
//! interface can be evolved through `kappa_a = K[gamma]` instead of `gamma`.

use crate::chart::{HeightField, ReferenceChart};
use crate::error::{Error, Result};
use crate::geometry::{immerse, SurfaceGeometry};
use ndarray::Array2;
use num_complex::Complex64;

/// Modified curvature field `kappa_a` together with its map constant.
#[derive(Clone, Debug)]
pub struct KappaAField {
    pub kappa_a: Array2<f64>,
    pub a: f64,
}

/// Tuning knobs of the inverse map.
#[derive(Clone, Debug)]
pub struct InvertOptions {
    /// Convergence tolerance on `|K[gamma] - kappa_a|_inf`; scaled by `a^2`
    /// so it tracks the conditioning of the map.
    pub tol_over_a2: f64,
    pub max_iter: usize,
    /// Validity ball radius around the reference curvature, max norm.
    pub kappa_ball: f64,
}

impl Default for InvertOptions {
    fn default() -> Self {
        InvertOptions { tol_over_a2: 1e-10, max_iter: 200, kappa_ball: 50.0 }
    }
}

/// Minimum admissible map constant.
pub const A_MIN: f64 = 1.0;

/// Forward map: `kappa_a(p) = kappa(Phi(p)) + a^2 gamma(p)`.
pub fn forward_k(chart: &ReferenceChart, h: &HeightField, a: f64) -> Result<KappaAField> {
    if a < A_MIN {
        return Err(Error::InvalidInput(format!("curvature map constant a = {a} below minimum {A_MIN}")));
    }
    let sg = immerse(chart, h)?;
    Ok(KappaAField { kappa_a: &sg.kappa + &(&h.gamma * (a * a)), a })
}

/// Forward map when the surface geometry is already available.
pub fn forward_k_with(sg: &SurfaceGeometry, h: &HeightField, a: f64) -> KappaAField {
    KappaAField { kappa_a: &sg.kappa + &(&h.gamma * (a * a)), a }
}

fn precondition(chart: &ReferenceChart, r: &Array2<f64>, a: f64) -> Array2<f64> {
    // Fourier symbol of the flat-state linearization of K is |k|^2 + a^2,
    // so (a^2 - Lap)^{-1} makes the fixed-point update contract on every
    // resolvable mode instead of only the low ones.
    let sp = &chart.grid.spectral;
    let mut m = sp.to_modes(r);
    for i in 0..sp.n1 {
        for j in 0..sp.n2 {
            let k2 = sp.k1[i] * sp.k1[i] + sp.k2[j] * sp.k2[j];
            m[[i, j]] *= Complex64::new(1.0 / (a * a + k2), 0.0);
        }
    }
    sp.to_grid(&m)
}

/// Inverse map: find `gamma` with `K[gamma] = kappa_a`, starting from `guess`.
///
/// The update is the damped fixed point `gamma += P (kappa_a - K[gamma])`
/// with the flat-symbol preconditioner `P = (a^2 - Lap)^{-1}`; within the
/// validity ball the result does not depend on the guess.
pub fn invert_k(
    chart: &ReferenceChart,
    ka: &KappaAField,
    guess: &HeightField,
    opts: &InvertOptions,
) -> Result<HeightField> {
    let a = ka.a;
    let tol = opts.tol_over_a2 * a * a;
    // validity gate on the data itself
    let ref_kappa = immerse(chart, &HeightField::zero(chart))?.kappa;
    let dev = chart.grid.max_abs(&(&ka.kappa_a - &ref_kappa));
    if dev > opts.kappa_ball * a * a {
        return Err(Error::InvalidInput(format!(
            "kappa_a deviates from the reference curvature by {dev:.3e}, outside the validity ball"
        )));
    }

    let mut gamma = guess.clone();
    let mut last_res = f64::INFINITY;
    for it in 0..opts.max_iter {
        gamma.validate(chart).map_err(|_| {
            Error::ChartViolation(format!("invert_k iterate left the valid set at iteration {it}"))
        })?;
        let cur = forward_k(chart, &gamma, a)?;
        let r = &ka.kappa_a - &cur.kappa_a;
        let res = chart.grid.max_abs(&r);
        if res <= tol {
            return Ok(gamma);
        }
        if res > 10.0 * last_res.max(tol) && it > 3 {
            return Err(Error::NoConvergence(format!(
                "invert_k diverging at iteration {it}: residual {res:.3e}"
            )));
        }
        last_res = last_res.min(res);
        gamma = HeightField { gamma: &gamma.gamma + &precondition(chart, &r, a) };
    }
    Err(Error::NoConvergence(format!(
        "invert_k: residual did not reach {tol:.3e} in {} iterations",
        opts.max_iter
    )))
}

/// Directional derivative of the forward map: `dK[gamma](delta)` by centered
/// finite differencing of `K` along `delta`.
pub fn dk_apply(
    chart: &ReferenceChart,
    base: &HeightField,
    delta: &Array2<f64>,
    a: f64,
) -> Result<Array2<f64>> {
    let scale = chart.grid.max_abs(delta).max(1e-30);
    let eps = 1e-6 * chart.closeness_delta / scale;
    let hp = HeightField { gamma: &base.gamma + &(delta * eps) };
    let hm = HeightField { gamma: &base.gamma - &(delta * eps) };
    let kp = forward_k(chart, &hp, a)?;
    let km = forward_k(chart, &hm, a)?;
    Ok((&kp.kappa_a - &km.kappa_a) / (2.0 * eps))
}

/// Solve the linearized map `dK[gamma](x) = rhs` (used to recover the height
/// rate from the kappa_a rate). Same preconditioned iteration as `invert_k`.
pub fn dk_solve(
    chart: &ReferenceChart,
    base: &HeightField,
    rhs: &Array2<f64>,
    a: f64,
    tol_over_a2: f64,
    max_iter: usize,
) -> Result<Array2<f64>> {
    let tol = (tol_over_a2 * a * a * chart.grid.max_abs(rhs).max(1.0)).max(1e-13);
    let mut x = precondition(chart, rhs, a);
    for _ in 0..max_iter {
        let r = rhs - &dk_apply(chart, base, &x, a)?;
        if chart.grid.max_abs(&r) <= tol {
            return Ok(x);
        }
        x = &x + &precondition(chart, &r, a);
    }
    // finite-difference noise floors the achievable residual; accept if the
    // remaining defect is already at that floor
    let r = rhs - &dk_apply(chart, base, &x, a)?;
    let res = chart.grid.max_abs(&r);
    if res <= 1e3 * tol {
        return Ok(x);
    }
    Err(Error::NoConvergence(format!("dk_solve stalled at residual {res:.3e} (tol {tol:.3e})")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DerivScheme;
    use std::f64::consts::PI;

    fn flat(n: usize) -> ReferenceChart {
        ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap().with_closeness(0.6)
    }

    #[test]
    fn forward_trivial_cases() {
        let chart = flat(32);
        let a = 10.0;
        let z = forward_k(&chart, &HeightField::zero(&chart), a).unwrap();
        assert!(chart.grid.max_abs(&z.kappa_a) < 1e-12);

        let c = 0.02;
        let shifted = forward_k(&chart, &HeightField::from_fn(&chart, |_, _| c), a).unwrap();
        for v in shifted.kappa_a.iter() {
            assert!((v - a * a * c).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_linearization_oracle() {
        // gamma = eps sin(2 pi x): kappa_a ~ (4 pi^2 + a^2) eps sin(2 pi x)
        let chart = flat(64);
        let a = 10.0;
        let eps = 1e-6;
        let ka = forward_k(
            &chart,
            &HeightField::from_fn(&chart, |x, _| eps * (2.0 * PI * x).sin()),
            a,
        )
        .unwrap();
        let factor = 4.0 * PI * PI + a * a;
        let mut max_err = 0.0f64;
        for i in 0..64 {
            for j in 0..64 {
                let (x, _) = chart.grid.coords(i, j);
                let expect = factor * eps * (2.0 * PI * x).sin();
                max_err = max_err.max((ka.kappa_a[[i, j]] - expect).abs());
            }
        }
        assert!(max_err < 1e-3 * factor * eps, "linearization error {max_err:.3e}");
    }

    #[test]
    fn invert_roundtrip_and_guess_independence() {
        let chart = flat(48);
        let a = 10.0;
        let h = HeightField::from_fn(&chart, |x, y| {
            0.05 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()
        });
        let ka = forward_k(&chart, &h, a).unwrap();
        let opts = InvertOptions::default();

        let rec = invert_k(&chart, &ka, &HeightField::zero(&chart), &opts).unwrap();
        let err = chart.grid.max_abs(&(&rec.gamma - &h.gamma));
        assert!(err < 1e-8, "roundtrip error {err:.3e}");

        // different admissible guess, same answer
        let guess2 = HeightField::from_fn(&chart, |x, _| 0.02 * (4.0 * PI * x).cos());
        let rec2 = invert_k(&chart, &ka, &guess2, &opts).unwrap();
        let drift = chart.grid.max_abs(&(&rec2.gamma - &rec.gamma));
        assert!(drift < 1e-8, "guess dependence {drift:.3e}");

        // the other roundtrip direction
        let ka2 = forward_k(&chart, &rec, a).unwrap();
        assert!(chart.grid.max_abs(&(&ka2.kappa_a - &ka.kappa_a)) <= opts.tol_over_a2 * a * a * 1.01);
    }

    #[test]
    fn invert_linearization_oracle() {
        // ka = delta sin(2 pi y) -> gamma ~ delta sin(2 pi y) / (a^2 + 4 pi^2)
        let chart = flat(48);
        let a = 10.0;
        let delta = 1e-4;
        let ka = KappaAField {
            kappa_a: chart.grid.field_from_fn(|_, y| delta * (2.0 * PI * y).sin()),
            a,
        };
        let gamma = invert_k(&chart, &ka, &HeightField::zero(&chart), &InvertOptions::default()).unwrap();
        let denom = a * a + 4.0 * PI * PI;
        let mut max_err = 0.0f64;
        for i in 0..48 {
            for j in 0..48 {
                let (_, y) = chart.grid.coords(i, j);
                let expect = delta * (2.0 * PI * y).sin() / denom;
                max_err = max_err.max((gamma.gamma[[i, j]] - expect).abs());
            }
        }
        assert!(max_err < 1e-2 * delta / denom, "invert linearization error {max_err:.3e}");
    }

    #[test]
    fn flat_data_inverts_to_zero() {
        let chart = flat(32);
        let ka = KappaAField { kappa_a: chart.grid.zeros(), a: 10.0 };
        let gamma = invert_k(&chart, &ka, &HeightField::zero(&chart), &InvertOptions::default()).unwrap();
        assert!(chart.grid.max_abs(&gamma.gamma) < 1e-12);
    }

    #[test]
    fn observed_contraction() {
        // successive residuals of the fixed point shrink on a curved case
        let chart = flat(32);
        let a = 10.0;
        let h = HeightField::from_fn(&chart, |x, y| 0.06 * (2.0 * PI * (x + y)).sin());
        let ka = forward_k(&chart, &h, a).unwrap();
        let mut gamma = HeightField::zero(&chart);
        let mut last = f64::INFINITY;
        let mut shrunk = true;
        for _ in 0..12 {
            let cur = forward_k(&chart, &gamma, a).unwrap();
            let r = &ka.kappa_a - &cur.kappa_a;
            let res = chart.grid.max_abs(&r);
            if res < 1e-13 {
                break;
            }
            if res >= last {
                shrunk = false;
            }
            last = res;
            gamma = HeightField { gamma: &gamma.gamma + &precondition(&chart, &r, a) };
        }
        assert!(shrunk, "fixed point failed to contract monotonically");
    }

    #[test]
    fn dk_solve_recovers_direction() {
        let chart = flat(32);
        let a = 10.0;
        let base = HeightField::from_fn(&chart, |x, _| 0.03 * (2.0 * PI * x).sin());
        let delta = chart.grid.field_from_fn(|x, y| 0.01 * (2.0 * PI * (x - y)).cos());
        let rhs = dk_apply(&chart, &base, &delta, a).unwrap();
        let x = dk_solve(&chart, &base, &rhs, a, 1e-10, 100).unwrap();
        let err = chart.grid.max_abs(&(&x - &delta));
        assert!(err < 1e-6 * chart.grid.max_abs(&delta).max(1e-12), "dk_solve error {err:.3e}");
    }
}
