//! Syrovatskij stability diagnostics and the planar dispersion analyzer.
//!
//! Large tangential magnetic fields suppress the Kelvin-Helmholtz growth
//! driven by the tangential velocity jump. The usable pointwise form is the
//! functional `Upsilon`: the infimum over unit tangent directions and surface
//! points of
//! `rho+/(rho+ + rho-) (a.h+)^2 + rho-/(rho+ + rho-) (a.h-)^2
//!  - rho+ rho-/(rho+ + rho-)^2 (a.w)^2`,
//! whose positivity is implied by the strict Syrovatskij condition.

use crate::chart::{cross3, dot3, norm3, VecField2};
use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use ndarray::Array2;
use num_complex::Complex64;

/// Direction-grid resolution for the Upsilon scan.
pub const UPSILON_DIRECTIONS: usize = 720;

/// Density weights of the stability form.
#[derive(Clone, Copy, Debug)]
pub struct Densities {
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl Densities {
    pub fn sum(&self) -> f64 {
        self.rho_plus + self.rho_minus
    }

    pub fn c_plus(&self) -> f64 {
        self.rho_plus / self.sum()
    }

    pub fn c_minus(&self) -> f64 {
        self.rho_minus / self.sum()
    }

    pub fn c_w(&self) -> f64 {
        self.rho_plus * self.rho_minus / (self.sum() * self.sum())
    }
}

/// The stability quadratic form at one point, as a function of the angle in
/// an orthonormal tangent basis: `Q(theta) = a0 + a1 cos(2 theta) + a2 sin(2 theta)`.
fn form_coefficients(
    e1: [f64; 3],
    e2: [f64; 3],
    hp: [f64; 3],
    hm: [f64; 3],
    w: [f64; 3],
    rho: Densities,
) -> (f64, f64, f64) {
    let mut a0 = 0.0;
    let mut a1 = 0.0;
    let mut a2 = 0.0;
    for (c, v) in [(rho.c_plus(), hp), (rho.c_minus(), hm), (-rho.c_w(), w)] {
        let p = dot3(e1, v);
        let q = dot3(e2, v);
        // (p cos + q sin)^2 = (p^2+q^2)/2 + (p^2-q^2)/2 cos 2t + p q sin 2t
        a0 += c * 0.5 * (p * p + q * q);
        a1 += c * 0.5 * (p * p - q * q);
        a2 += c * p * q;
    }
    (a0, a1, a2)
}

/// Result of the Upsilon scan.
#[derive(Clone, Debug)]
pub struct UpsilonResult {
    pub value: f64,
    /// Grid node attaining the infimum.
    pub argmin_node: (usize, usize),
    /// Minimizing unit tangent direction (ambient components).
    pub argmin_direction: [f64; 3],
}

fn orthonormal_tangent_basis(sg: &SurfaceGeometry, i: usize, j: usize) -> ([f64; 3], [f64; 3]) {
    let t1 = sg.t1.at(i, j);
    let n1 = norm3(t1);
    let e1 = [t1[0] / n1, t1[1] / n1, t1[2] / n1];
    let t2 = sg.t2.at(i, j);
    let d = dot3(t2, e1);
    let mut e2 = [t2[0] - d * e1[0], t2[1] - d * e1[1], t2[2] - d * e1[2]];
    let n2 = norm3(e2);
    for c in &mut e2 {
        *c /= n2;
    }
    (e1, e2)
}

/// Evaluate `Upsilon` over the surface by a direction grid with one Newton
/// polish on the best candidate per node.
pub fn upsilon(
    sg: &SurfaceGeometry,
    h_plus: &VecField2,
    h_minus: &VecField2,
    w: &VecField2,
    rho: Densities,
) -> UpsilonResult {
    let (n1g, n2g) = sg.grid.shape();
    let mut best = f64::INFINITY;
    let mut best_node = (0, 0);
    let mut best_dir = [1.0, 0.0, 0.0];
    let dtheta = std::f64::consts::PI / UPSILON_DIRECTIONS as f64;
    for i in 0..n1g {
        for j in 0..n2g {
            let (e1, e2) = orthonormal_tangent_basis(sg, i, j);
            let (a0, a1, a2) = form_coefficients(e1, e2, h_plus.at(i, j), h_minus.at(i, j), w.at(i, j), rho);
            // scan half a turn (the form has period pi)
            let mut loc_best = f64::INFINITY;
            let mut loc_theta = 0.0;
            for t in 0..UPSILON_DIRECTIONS {
                let theta = t as f64 * dtheta;
                let q = a0 + a1 * (2.0 * theta).cos() + a2 * (2.0 * theta).sin();
                if q < loc_best {
                    loc_best = q;
                    loc_theta = theta;
                }
            }
            // one Newton step on Q(theta)
            let dq = -2.0 * a1 * (2.0 * loc_theta).sin() + 2.0 * a2 * (2.0 * loc_theta).cos();
            let ddq = -4.0 * a1 * (2.0 * loc_theta).cos() - 4.0 * a2 * (2.0 * loc_theta).sin();
            if ddq.abs() > 1e-14 {
                let theta = loc_theta - dq / ddq;
                let q = a0 + a1 * (2.0 * theta).cos() + a2 * (2.0 * theta).sin();
                if q < loc_best {
                    loc_best = q;
                    loc_theta = theta;
                }
            }
            if loc_best < best {
                best = loc_best;
                best_node = (i, j);
                let (c, s) = (loc_theta.cos(), loc_theta.sin());
                best_dir = [
                    c * e1[0] + s * e2[0],
                    c * e1[1] + s * e2[1],
                    c * e1[2] + s * e2[2],
                ];
            }
        }
    }
    UpsilonResult { value: best, argmin_node: best_node, argmin_direction: best_dir }
}

/// Strict Syrovatskij margin per node:
/// `(rho+ + rho-) |h+ x h-|^2 - rho+ |h+ x w|^2 - rho- |h- x w|^2`.
pub fn syro_strict_margin(
    h_plus: &VecField2,
    h_minus: &VecField2,
    w: &VecField2,
    rho: Densities,
) -> Array2<f64> {
    let (n1, n2) = h_plus.x.dim();
    Array2::from_shape_fn((n1, n2), |(i, j)| {
        let hp = h_plus.at(i, j);
        let hm = h_minus.at(i, j);
        let wv = w.at(i, j);
        let chh = cross3(hp, hm);
        let cpw = cross3(hp, wv);
        let cmw = cross3(hm, wv);
        rho.sum() * dot3(chh, chh) - rho.rho_plus * dot3(cpw, cpw) - rho.rho_minus * dot3(cmw, cmw)
    })
}

/// Strict condition holds iff the margin is positive everywhere.
pub fn check_syro_strict(
    h_plus: &VecField2,
    h_minus: &VecField2,
    w: &VecField2,
    rho: Densities,
) -> (bool, Array2<f64>) {
    let margin = syro_strict_margin(h_plus, h_minus, w, rho);
    let ok = margin.iter().all(|&m| m > 0.0);
    (ok, margin)
}

/// The two classical Syrovatskij conditions: the energy inequality (strict)
/// and the cross-product inequality (non-strict).
pub fn check_syr_classical(
    h_plus: &VecField2,
    h_minus: &VecField2,
    w: &VecField2,
    rho: Densities,
) -> (bool, bool) {
    let (n1, n2) = h_plus.x.dim();
    let mut first = true;
    let mut second = true;
    for i in 0..n1 {
        for j in 0..n2 {
            let hp = h_plus.at(i, j);
            let hm = h_minus.at(i, j);
            let wv = w.at(i, j);
            let lhs1 = rho.rho_plus * dot3(hp, hp) + rho.rho_minus * dot3(hm, hm);
            let rhs1 = rho.rho_plus * rho.rho_minus / rho.sum() * dot3(wv, wv);
            if !(lhs1 > rhs1) {
                first = false;
            }
            let chh = cross3(hp, hm);
            let cpw = cross3(hp, wv);
            let cmw = cross3(hm, wv);
            let lhs2 = rho.sum() * dot3(chh, chh);
            let rhs2 = rho.rho_plus * dot3(cpw, cpw) + rho.rho_minus * dot3(cmw, cmw);
            if lhs2 < rhs2 {
                second = false;
            }
        }
    }
    (first, second)
}

/// Strong stability condition `|h+ x h-| > max(|h+ x w|, |h- x w|)`.
pub fn check_strong_stability(h_plus: &VecField2, h_minus: &VecField2, w: &VecField2) -> bool {
    let (n1, n2) = h_plus.x.dim();
    for i in 0..n1 {
        for j in 0..n2 {
            let hp = h_plus.at(i, j);
            let hm = h_minus.at(i, j);
            let wv = w.at(i, j);
            let lhs = norm3(cross3(hp, hm));
            let rhs = norm3(cross3(hp, wv)).max(norm3(cross3(hm, wv)));
            if !(lhs > rhs) {
                return false;
            }
        }
    }
    true
}

/// Pointwise min-eigenvalue of the stability tensor restricted to the
/// tangent plane (the tensor form of the condition).
pub fn tensor_form_min_eig(
    sg: &SurfaceGeometry,
    h_plus: &VecField2,
    h_minus: &VecField2,
    w: &VecField2,
    rho: Densities,
) -> Array2<f64> {
    let (n1, n2) = sg.grid.shape();
    Array2::from_shape_fn((n1, n2), |(i, j)| {
        let (e1, e2) = orthonormal_tangent_basis(sg, i, j);
        let (a0, a1, a2) = form_coefficients(e1, e2, h_plus.at(i, j), h_minus.at(i, j), w.at(i, j), rho);
        // Q(theta) = a0 + a1 cos + a2 sin has extremes a0 +/- sqrt(a1^2+a2^2),
        // which are exactly the eigenvalues of the restricted 2x2 tensor
        a0 - (a1 * a1 + a2 * a2).sqrt()
    })
}

/// Report of the randomized implication test between the strict condition,
/// `Upsilon > 0`, and the tensor form.
#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub samples: usize,
    pub strict_holds: usize,
    pub violations: usize,
    pub classical_violations: usize,
    pub homogeneity_violations: usize,
}

/// Randomized self-test of the implication chain on constant tangent data
/// over a flat chart. Uses a deterministic linear congruential stream so the
/// report is reproducible.
pub fn lemma61_equivalence_test(sg: &SurfaceGeometry, n_samples: usize, seed: u64) -> EquivalenceReport {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut unit = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64) / ((1u64 << 53) as f64)
    };
    let (n1, n2) = sg.grid.shape();
    let mut report = EquivalenceReport {
        samples: n_samples,
        strict_holds: 0,
        violations: 0,
        classical_violations: 0,
        homogeneity_violations: 0,
    };
    for _ in 0..n_samples {
        let rho = Densities { rho_plus: 0.2 + 2.0 * unit(), rho_minus: 0.2 + 2.0 * unit() };
        let rand_tangent = |u1: f64, u2: f64| -> [f64; 3] { [2.0 * u1 - 1.0, 2.0 * u2 - 1.0, 0.0] };
        let hp_v = rand_tangent(unit(), unit());
        let hm_v = rand_tangent(unit(), unit());
        let w_v = rand_tangent(unit(), unit());
        let hp = VecField2::from_fn(&sg.grid, |_, _| hp_v);
        let hm = VecField2::from_fn(&sg.grid, |_, _| hm_v);
        let w = VecField2::from_fn(&sg.grid, |_, _| w_v);

        let (strict, _) = check_syro_strict(&hp, &hm, &w, rho);
        if strict {
            report.strict_holds += 1;
            let ups = upsilon(sg, &hp, &hm, &w, rho);
            if ups.value <= 0.0 {
                report.violations += 1;
            }
            let te = tensor_form_min_eig(sg, &hp, &hm, &w, rho);
            let min_te = te.iter().fold(f64::INFINITY, |m, &x| m.min(x));
            if min_te < ups.value - 1e-9 {
                report.violations += 1;
            }
            // strict implies the classical pair
            let (c1, c2) = check_syr_classical(&hp, &hm, &w, rho);
            if !(c1 && c2) {
                report.classical_violations += 1;
            }
        }
        // quadratic homogeneity on scaled data
        let s = 0.5 + 2.0 * unit();
        let hp_s = hp.scale(s);
        let hm_s = hm.scale(s);
        let w_s = w.scale(s);
        let u1 = upsilon(sg, &hp, &hm, &w, rho).value;
        let u2 = upsilon(sg, &hp_s, &hm_s, &w_s, rho).value;
        if (u2 - s * s * u1).abs() > 1e-9 * (1.0 + u1.abs() * s * s) {
            report.homogeneity_violations += 1;
        }
        let _ = (n1, n2);
    }
    report
}

/// Flat-state dispersion relation of the curvature evolution: returns
/// `omega^2` for wavevector `k`; the mode is stable iff `omega^2 >= 0`.
///
/// This is a derived composition of the flat-interface operator symbols
/// (`sigma_A(k) = |k|^2 sigma_Ntilde(k)` with `sigma_N = |k| tanh(|k| d)`),
/// validated against brute-force symbol evaluation and measured growth rates
/// rather than quoted from a closed-form source.
#[allow(clippy::too_many_arguments)]
pub fn dispersion_rate(
    k: [f64; 2],
    rho: Densities,
    depth_plus: f64,
    depth_minus: f64,
    h_plus: [f64; 2],
    h_minus: [f64; 2],
    w: [f64; 2],
    alpha: f64,
) -> Result<(f64, bool)> {
    let kmag = (k[0] * k[0] + k[1] * k[1]).sqrt();
    if kmag == 0.0 {
        return Err(Error::ZeroWavevector);
    }
    let sig_p = kmag * (kmag * depth_plus).tanh() / rho.rho_plus;
    let sig_m = kmag * (kmag * depth_minus).tanh() / rho.rho_minus;
    let sig_ntilde = sig_p * sig_m / (sig_p + sig_m);
    let sig_a = kmag * kmag * sig_ntilde;
    let dot2 = |a: [f64; 2]| a[0] * k[0] + a[1] * k[1];
    let omega2 = alpha * alpha * sig_a - rho.c_w() * dot2(w).powi(2)
        + (rho.rho_plus * dot2(h_plus).powi(2) + rho.rho_minus * dot2(h_minus).powi(2)) / rho.sum();
    Ok((omega2, omega2 >= 0.0))
}

/// Largest unstable |k| along a direction: positive root of
/// `alpha^2 sigma_A(|k|) = (negative part at unit |k|) |k|^2` by bisection.
pub fn unstable_band_edge(
    rho: Densities,
    depth_plus: f64,
    depth_minus: f64,
    h_plus: [f64; 2],
    h_minus: [f64; 2],
    w: [f64; 2],
    alpha: f64,
    khat: [f64; 2],
    k_upper: f64,
) -> Option<f64> {
    if alpha == 0.0 {
        return None;
    }
    let omega2 = |kmag: f64| {
        let k = [khat[0] * kmag, khat[1] * kmag];
        dispersion_rate(k, rho, depth_plus, depth_minus, h_plus, h_minus, w, alpha)
            .map(|(o, _)| o)
            .unwrap_or(f64::INFINITY)
    };
    let probe = omega2(1e-3);
    if probe >= 0.0 {
        // stable at long waves: no band to cut off
        return None;
    }
    let (mut lo, mut hi) = (1e-3, k_upper);
    if omega2(hi) < 0.0 {
        return Some(hi);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if omega2(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-8 * k_upper {
            break;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Least-squares fit of `omega^2` from a uniformly sampled complex mode
/// amplitude series, via second differences: `a'' = -omega^2 a`.
pub fn fit_omega_squared(series: &[Complex64], dt: f64) -> Result<(f64, f64)> {
    if series.len() < 5 {
        return Err(Error::InsufficientSamples { need: 5, got: series.len() });
    }
    let n = series.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut d2 = Vec::with_capacity(n - 2);
    for i in 1..n - 1 {
        let dd = (series[i + 1] - 2.0 * series[i] + series[i - 1]) / (dt * dt);
        d2.push(dd);
        num += (dd * series[i].conj()).re;
        den += series[i].norm_sqr();
    }
    if den < 1e-300 {
        return Err(Error::InvalidInput("mode amplitude identically zero".into()));
    }
    let omega2 = -num / den;
    // relative fit residual
    let mut res = 0.0;
    let mut sig = 0.0;
    for (i, dd) in d2.iter().enumerate() {
        let model = -omega2 * series[i + 1];
        res += (dd - model).norm_sqr();
        sig += dd.norm_sqr();
    }
    let rel = (res / sig.max(1e-300)).sqrt();
    if rel > 0.10 {
        return Err(Error::NonlinearContamination(rel));
    }
    Ok((omega2, rel))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{HeightField, ReferenceChart};
    use crate::geometry::immerse;
    use crate::grid::DerivScheme;
    use std::f64::consts::PI;

    fn flat_sg(n: usize) -> SurfaceGeometry {
        let chart = ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap();
        immerse(&chart, &HeightField::zero(&chart)).unwrap()
    }

    fn consts(sg: &SurfaceGeometry, v: [f64; 3]) -> VecField2 {
        VecField2::from_fn(&sg.grid, |_, _| v)
    }

    #[test]
    fn upsilon_closed_forms() {
        let sg = flat_sg(8);
        let rho = Densities { rho_plus: 1.0, rho_minus: 1.0 };
        let hp = consts(&sg, [1.0, 0.0, 0.0]);
        let hm = consts(&sg, [0.0, 1.0, 0.0]);

        // w = (c, c): closed form Upsilon = 1/2 - c^2/2
        for c in [0.3, 0.8, 1.2] {
            let w = consts(&sg, [c, c, 0.0]);
            let ups = upsilon(&sg, &hp, &hm, &w, rho);
            let exact = 0.5 - 0.5 * c * c;
            assert!(
                (ups.value - exact).abs() < 1e-6,
                "upsilon({c}) = {} vs exact {exact}",
                ups.value
            );
        }

        // w = 0: min eigenvalue of (h+ (x) h+ + h- (x) h-)/2 = 1/2
        let w0 = consts(&sg, [0.0, 0.0, 0.0]);
        let ups = upsilon(&sg, &hp, &hm, &w0, rho);
        assert!((ups.value - 0.5).abs() < 1e-9);

        // pure Kelvin-Helmholtz: h = 0 gives -c_w |w|^2
        let z = consts(&sg, [0.0, 0.0, 0.0]);
        let w = consts(&sg, [0.6, -0.3, 0.0]);
        let ups = upsilon(&sg, &z, &z, &w, rho);
        let expect = -rho.c_w() * (0.36 + 0.09);
        assert!((ups.value - expect).abs() < 1e-9, "KH upsilon {}", ups.value);
    }

    #[test]
    fn syro_margins_and_thresholds() {
        let sg = flat_sg(4);
        let rho = Densities { rho_plus: 1.0, rho_minus: 1.0 };
        let hp = consts(&sg, [1.0, 0.0, 0.0]);
        let hm = consts(&sg, [0.0, 1.0, 0.0]);
        for c in [0.5, 0.99, 1.01, 1.3] {
            let w = consts(&sg, [c, c, 0.0]);
            let (ok, margin) = check_syro_strict(&hp, &hm, &w, rho);
            let expect = 2.0 - 2.0 * c * c;
            assert!((margin[[0, 0]] - expect).abs() < 1e-12, "margin {}", margin[[0, 0]]);
            assert_eq!(ok, c < 1.0, "strict threshold at c=1");
            // strong stability: |h+ x h-| = 1 against |h+- x w| = c
            assert_eq!(check_strong_stability(&hp, &hm, &w), c < 1.0);
            // classical (1.6) threshold at c^2 = 2 (here |h|^2 sum = 2, c_w |w|^2 = c^2)
            let (c1, c2) = check_syr_classical(&hp, &hm, &w, rho);
            assert_eq!(c1, c * c < 2.0, "(1.6) at c={c}");
            assert_eq!(c2, c <= 1.0, "(1.7) at c={c}");
        }
        // parallel fields: strict fails whenever w is not parallel
        let hm_par = consts(&sg, [2.0, 0.0, 0.0]);
        let w = consts(&sg, [0.0, 0.5, 0.0]);
        let (ok, _) = check_syro_strict(&hp, &hm_par, &w, rho);
        assert!(!ok);
        let (_, c2) = check_syr_classical(&hp, &hm_par, &w, rho);
        assert!(!c2);
    }

    #[test]
    fn equivalence_chain_randomized() {
        let sg = flat_sg(4);
        let report = lemma61_equivalence_test(&sg, 2000, 0x5eed);
        assert!(report.strict_holds > 100, "too few strict samples: {}", report.strict_holds);
        assert_eq!(report.violations, 0);
        assert_eq!(report.classical_violations, 0);
        assert_eq!(report.homogeneity_violations, 0);
    }

    #[test]
    fn dispersion_limits() {
        let rho = Densities { rho_plus: 1.0, rho_minus: 1.0 };
        // classical KH limit: h = 0, alpha = 0
        let (o2, stable) = dispersion_rate(
            [2.0 * PI, 0.0],
            rho,
            1.0,
            1.0,
            [0.0, 0.0],
            [0.0, 0.0],
            [1.0, 0.0],
            0.0,
        )
        .unwrap();
        assert!(!stable);
        let expect = -0.25 * (2.0 * PI).powi(2);
        assert!((o2 - expect).abs() < 1e-12, "KH omega^2 {o2}");

        // alpha = 0 sign agreement with the Upsilon form along k-hat
        let sg = flat_sg(4);
        let mut state = 77u64;
        let mut unit = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((state >> 11) as f64) / ((1u64 << 53) as f64)
        };
        for _ in 0..1000 {
            let rho = Densities { rho_plus: 0.3 + unit(), rho_minus: 0.3 + unit() };
            let hp = [2.0 * unit() - 1.0, 2.0 * unit() - 1.0];
            let hm = [2.0 * unit() - 1.0, 2.0 * unit() - 1.0];
            let w = [2.0 * unit() - 1.0, 2.0 * unit() - 1.0];
            let ang = 2.0 * PI * unit();
            let khat = [ang.cos(), ang.sin()];
            let k = [2.0 * PI * khat[0], 2.0 * PI * khat[1]];
            let (o2, _) = dispersion_rate(k, rho, 1.0, 1.0, hp, hm, w, 0.0).unwrap();
            // the Upsilon integrand at direction k-hat
            let q = rho.c_plus() * (hp[0] * khat[0] + hp[1] * khat[1]).powi(2)
                + rho.c_minus() * (hm[0] * khat[0] + hm[1] * khat[1]).powi(2)
                - rho.c_w() * (w[0] * khat[0] + w[1] * khat[1]).powi(2);
            assert!(
                (o2 >= 0.0) == (q >= -1e-15),
                "sign mismatch: omega2 = {o2}, q = {q}"
            );
            let _ = &sg;
        }

        // evenness in k and field-flip invariance
        let rho = Densities { rho_plus: 1.3, rho_minus: 0.7 };
        let (a, _) =
            dispersion_rate([2.0 * PI, 4.0 * PI], rho, 0.9, 1.1, [1.0, 0.2], [0.3, -0.4], [0.5, 0.1], 0.7)
                .unwrap();
        let (b, _) =
            dispersion_rate([-2.0 * PI, -4.0 * PI], rho, 0.9, 1.1, [1.0, 0.2], [0.3, -0.4], [0.5, 0.1], 0.7)
                .unwrap();
        let (c, _) = dispersion_rate(
            [2.0 * PI, 4.0 * PI],
            rho,
            0.9,
            1.1,
            [-1.0, -0.2],
            [-0.3, 0.4],
            [-0.5, -0.1],
            0.7,
        )
        .unwrap();
        assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);

        // capillary cutoff: finite unstable band for alpha = 1
        let rho = Densities { rho_plus: 1.0, rho_minus: 1.0 };
        let edge = unstable_band_edge(rho, 1.0, 1.0, [0.0, 0.0], [0.0, 0.0], [2.0, 0.0], 1.0, [1.0, 0.0], 400.0)
            .expect("KH band edge must exist");
        // above the edge: stable; below: unstable
        let (above, _) =
            dispersion_rate([edge * 1.05, 0.0], rho, 1.0, 1.0, [0.0, 0.0], [0.0, 0.0], [2.0, 0.0], 1.0).unwrap();
        let (below, _) =
            dispersion_rate([edge * 0.95, 0.0], rho, 1.0, 1.0, [0.0, 0.0], [0.0, 0.0], [2.0, 0.0], 1.0).unwrap();
        assert!(above > 0.0 && below < 0.0, "band edge {edge}: above {above}, below {below}");

        assert!(matches!(
            dispersion_rate([0.0, 0.0], rho, 1.0, 1.0, [0.0; 2], [0.0; 2], [0.0; 2], 1.0),
            Err(Error::ZeroWavevector)
        ));
    }

    #[test]
    fn omega_fit_recovers_oscillation_and_growth() {
        let dt = 1e-2;
        // oscillation omega^2 = +9
        let series: Vec<Complex64> =
            (0..40).map(|n| Complex64::new((3.0 * dt * n as f64).cos(), (3.0 * dt * n as f64).sin() * 0.2)).collect();
        let (o2, res) = fit_omega_squared(&series, dt).unwrap();
        assert!((o2 - 9.0).abs() < 0.01, "fit omega^2 {o2}");
        assert!(res < 1e-3);

        // growth omega^2 = -4
        let series: Vec<Complex64> =
            (0..40).map(|n| Complex64::new((2.0 * dt * n as f64).cosh(), 0.0)).collect();
        let (o2, _) = fit_omega_squared(&series, dt).unwrap();
        assert!((o2 + 4.0).abs() < 0.01, "fit omega^2 {o2}");

        // contaminated series is rejected
        let series: Vec<Complex64> = (0..40)
            .map(|n| {
                let t = dt * n as f64;
                Complex64::new((3.0 * t).cos() + 0.5 * (17.0 * t).sin(), 0.0)
            })
            .collect();
        assert!(matches!(
            fit_omega_squared(&series, dt),
            Err(Error::NonlinearContamination(_))
        ));
    }
}
