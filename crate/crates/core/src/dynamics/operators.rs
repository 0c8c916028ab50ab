//! Interface operators of the curvature evolution: the surface-tension
//! operator, the magnetic/Kelvin-Helmholtz second-order operators, the
//! lower-order remainder, the curvature acceleration, and the consistency
//! residual of the momentum balance on the interface.

use super::{chart_transport_field, weighted_velocity, PlasmaParams, Recovered};
use crate::chart::{dot3, ReferenceChart, VecField2};
use crate::elliptic::DnPair;
use crate::error::Result;
use crate::geometry::SurfaceGeometry;
use ndarray::Array2;

/// `A f = -Lap_Gamma (Ntilde f)` (third-order, positive on mean-free data).
pub fn operator_a_apply(sg: &SurfaceGeometry, pair: &DnPair, f: &Array2<f64>) -> Result<Array2<f64>> {
    let nt = pair.ntilde(f)?;
    Ok(sg.laplace_beltrami(&nt).mapv(|v| -v))
}

/// `R(J) f = D_J D_J f` for a tangent field `J` (ambient components).
pub fn operator_r_apply(sg: &SurfaceGeometry, j: &VecField2, f: &Array2<f64>) -> Array2<f64> {
    let d1 = sg.directional_derivative(j, f);
    sg.directional_derivative(j, &d1)
}

/// Which arrangement of the lower-order remainder to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemainderVariant {
    /// Direct arrangement with the full pressure gradient.
    R0,
    /// The regrouped arrangement whose first term carries the
    /// momentum-defect vector field; on solenoidal data the two agree.
    R1,
}

/// The weighted material acceleration of the interface velocity, assembled
/// from the recovered pressures and field traces:
/// `Dt u = -(grad p+ + grad p-)/(rho+ + rho-) + c+ D_{h+}h+ + c- D_{h-}h-
///         - c_w D_w w` (all traces on the interface).
pub fn weighted_acceleration(
    rec: &Recovered,
    params: &PlasmaParams,
    pair: &DnPair,
) -> Result<VecField2> {
    let (n1, n2) = rec.sg.grid.shape();
    let gp = rec.pressure.grad_pressure(pair, crate::bulk::Side::Plus);
    let gm = rec.pressure.grad_pressure(pair, crate::bulk::Side::Minus);
    let lp = rec.bg_plus.face_level(crate::bulk::Face::Gamma);
    let lm = rec.bg_minus.face_level(crate::bulk::Face::Gamma);

    let hp = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Plus);
    let hm = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Minus);
    let (_, w) = weighted_velocity(rec, params)?;

    let adv = |j: &VecField2| -> VecField2 {
        VecField2 {
            x: rec.sg.directional_derivative(j, &j.x),
            y: rec.sg.directional_derivative(j, &j.y),
            z: rec.sg.directional_derivative(j, &j.z),
        }
    };
    let dhh_p = adv(&hp);
    let dhh_m = adv(&hm);
    let dww = adv(&w);

    let rs = params.rho_sum();
    let mut out = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            for c in 0..3 {
                let grad_sum = gp[c][[i, j, lp]] + gm[c][[i, j, lm]];
                let val = -grad_sum / rs + params.c_plus() * dhh_p.component(c)[[i, j]]
                    + params.c_minus() * dhh_m.component(c)[[i, j]]
                    - params.c_w() * dww.component(c)[[i, j]];
                match c {
                    0 => out.x[[i, j]] = val,
                    1 => out.y[[i, j]] = val,
                    _ => out.z[[i, j]] = val,
                }
            }
        }
    }
    Ok(out)
}

/// Lower-order interface function `r0` of the remainder:
/// `(N+ - N-) Nbar^{-1}(g+ - g-) / (rho+ rho-)
///  - d/dn+ [c+ (p_vv+ - p_hh+) + c- (p_vv- - p_hh-)]`.
fn frak_r0(rec: &Recovered, params: &PlasmaParams, pair: &DnPair) -> Result<Array2<f64>> {
    // Nbar^{-1}(g+ - g-) = -frak_p by construction
    let mid = rec.pressure.frak_p.mapv(|v| -v);
    let np = pair.plus.dn(&mid)?;
    let nm = pair.minus.dn(&mid)?;
    let first = (&np - &nm).mapv(|v| v / (params.rho_plus * params.rho_minus));

    let dp = &rec.pressure.p_vv.0 - &rec.pressure.p_hh.0;
    let dm = &rec.pressure.p_vv.1 - &rec.pressure.p_hh.1;
    let ndp = pair.plus.normal_derivative(&dp);
    let ndm = pair.minus.normal_derivative(&dm).mapv(|v| -v);
    Ok(&first - &(&(ndp * params.c_plus()) + &(ndm * params.c_minus())))
}

/// Assemble the lower-order right-hand side of the second-order curvature
/// equation. Both variants contain the kinematic terms, the commutator
/// blocks between `Lap[II(J,J)]` and `R(J) kappa`, and `-Lap r0`; they differ
/// in how the acceleration vector contracted with `Lap n` is produced.
pub fn assemble_remainder(
    rec: &Recovered,
    params: &PlasmaParams,
    variant: RemainderVariant,
) -> Result<Array2<f64>> {
    let pair = rec.pair(params);
    let sg = &rec.sg;
    let (u, w) = weighted_velocity(rec, params)?;
    let hp = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Plus);
    let hm = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Minus);

    // acceleration vector dotted with Lap n
    let accel = match variant {
        RemainderVariant::R0 => weighted_acceleration(rec, params, &pair)?,
        RemainderVariant::R1 => frak_b(rec, params, &pair)?.scale(-1.0),
    };
    let lap_n = sg.laplace_beltrami_vec(&sg.normal);
    let (n1, n2) = sg.grid.shape();
    let mut first = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            first[[i, j]] = dot3(accel.at(i, j), lap_n.at(i, j));
        }
    }

    let kin = sg.kinematic_kappa_terms(&u);

    let commutator = |jf: &VecField2| -> Array2<f64> {
        let ii_jj = sg.ii_bilinear(jf, jf);
        let lap_ii = sg.laplace_beltrami(&ii_jj);
        let r_k = operator_r_apply(sg, jf, &sg.kappa);
        &lap_ii - &r_k
    };
    let cw = commutator(&w).mapv(|v| -v * params.c_w());
    let cp = commutator(&hp).mapv(|v| v * params.c_plus());
    let cm = commutator(&hm).mapv(|v| v * params.c_minus());

    let r0 = frak_r0(rec, params, &pair)?;
    let lap_r0 = sg.laplace_beltrami(&r0);

    Ok(&(&(&(&first + &kin) + &cw) + &cp) + &(&cm - &lap_r0))
}

/// The regrouped acceleration assembly `frak b` built from its own pressure
/// combination `q` (equal to the full pressure on solenoidal data).
fn frak_b(rec: &Recovered, params: &PlasmaParams, pair: &DnPair) -> Result<VecField2> {
    let sg = &rec.sg;
    let (n1, n2) = sg.grid.shape();
    // q_pm = rho_pm (p_vv - p_hh) +- alpha^2 H_pm Nbar^{-1} N_mp kappa / rho_mp
    //        + H_pm Nbar^{-1} q-source; gradients of the extension parts are
    //        tangential derivative of the trace plus DN normal part.
    let a2 = rec.pressure.alpha * rec.pressure.alpha;

    let grad_iface = |trace: &Array2<f64>, nrm_deriv: &Array2<f64>, sgn: f64| -> VecField2 {
        // full gradient on the interface: tangential part + normal part
        let tang = sg.tangential_gradient(trace);
        let mut out = VecField2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let t = tang.at(i, j);
                let n = sg.normal.at(i, j);
                let nd = sgn * nrm_deriv[[i, j]];
                out.set(i, j, [t[0] + nd * n[0], t[1] + nd * n[1], t[2] + nd * n[2]]);
            }
        }
        out
    };

    // quadratic parts: traces vanish; the gradient is purely normal
    let dq_p = &rec.pressure.p_vv.0 - &rec.pressure.p_hh.0;
    let dq_m = &rec.pressure.p_vv.1 - &rec.pressure.p_hh.1;
    let zero = Array2::zeros((n1, n2));
    let gq_p = grad_iface(&zero, &pair.plus.normal_derivative(&dq_p), 1.0)
        .scale(params.rho_plus);
    let gq_m = grad_iface(&zero, &pair.minus.normal_derivative(&dq_m).mapv(|v| -v), 1.0)
        .scale(params.rho_minus);

    // kappa parts: traces +-(1/rho_mp) Nbar^{-1} N_mp kappa; normal
    // derivatives are the DN images of the same scalars. The plus mid-field
    // is cached in the pressure parts; its complement gives the minus one.
    let mid_p = rec.pressure.kappa_mid_plus.clone();
    let mid_m = &sg.project_mean_free(&sg.kappa) - &mid_p;
    let gk_p = grad_iface(&mid_p, &pair.plus.dn(&mid_p)?, 1.0);
    let gk_m = grad_iface(&mid_m.mapv(|v| -v), &pair.minus.dn(&mid_m)?.mapv(|v| -v), -1.0);

    // base part: trace frak_p on both sides
    let fp = &rec.pressure.frak_p;
    let gb_p = grad_iface(fp, &pair.plus.dn(fp)?, 1.0);
    let gb_m = grad_iface(fp, &pair.minus.dn(fp)?, -1.0);

    // field advection blocks
    let hp = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Plus);
    let hm = rec.face(super::FieldKind::Magnetic, crate::bulk::Side::Minus);
    let (_, w) = weighted_velocity(rec, params)?;
    let adv = |jf: &VecField2| -> VecField2 {
        VecField2 {
            x: sg.directional_derivative(jf, &jf.x),
            y: sg.directional_derivative(jf, &jf.y),
            z: sg.directional_derivative(jf, &jf.z),
        }
    };
    let dhh_p = adv(&hp);
    let dhh_m = adv(&hm);
    let dww = adv(&w);

    let rs = params.rho_sum();
    let mut out = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            for c in 0..3 {
                let grad_q_sum = gq_p.component(c)[[i, j]]
                    + gq_m.component(c)[[i, j]]
                    + a2 * (gk_p.component(c)[[i, j]] + gk_m.component(c)[[i, j]])
                    + gb_p.component(c)[[i, j]]
                    + gb_m.component(c)[[i, j]];
                let val = grad_q_sum / rs + params.c_w() * dww.component(c)[[i, j]]
                    - params.c_plus() * dhh_p.component(c)[[i, j]]
                    - params.c_minus() * dhh_m.component(c)[[i, j]];
                match c {
                    0 => out.x[[i, j]] = val,
                    1 => out.y[[i, j]] = val,
                    _ => out.z[[i, j]] = val,
                }
            }
        }
    }
    Ok(out)
}

/// The curvature acceleration used by the integrator, together with the
/// height acceleration that produced it.
///
/// Closing the momentum balance on the interface (zero defect field) gives
/// the height acceleration; the curvature acceleration then follows from the
/// second-order kinematic identity for a surface moving along the chart
/// transversal, plus the `a^2 gamma` channel.
pub fn kappa_accel(
    chart: &ReferenceChart,
    rec: &Recovered,
    params: &PlasmaParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let pair = rec.pair(params);
    let sg = &rec.sg;
    let (n1, n2) = sg.grid.shape();

    let (u, _) = weighted_velocity(rec, params)?;
    let u_star = chart_transport_field(chart, rec, &u);
    let b = frak_b(rec, params, &pair)?;

    // d^2 gamma / dt^2 = [n/(nu.n)] . (-b - D_{u*}(u + dgamma nu))
    let mut carried = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let uu = u.at(i, j);
            let nu = chart.nu.at(i, j);
            let gd = rec.gamma_dot[[i, j]];
            carried.set(i, j, [uu[0] + gd * nu[0], uu[1] + gd * nu[1], uu[2] + gd * nu[2]]);
        }
    }
    let d_carried = VecField2 {
        x: sg.directional_derivative(&u_star, &carried.x),
        y: sg.directional_derivative(&u_star, &carried.y),
        z: sg.directional_derivative(&u_star, &carried.z),
    };
    let mut gamma_ddot = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            let n = sg.normal.at(i, j);
            let nu = chart.nu.at(i, j);
            let denom = dot3(nu, n);
            let rhs = [
                -b.x[[i, j]] - d_carried.x[[i, j]],
                -b.y[[i, j]] - d_carried.y[[i, j]],
                -b.z[[i, j]] - d_carried.z[[i, j]],
            ];
            gamma_ddot[[i, j]] = dot3(n, rhs) / denom;
        }
    }

    // curvature acceleration from the kinematic identity along the chart
    // motion mu = (d gamma/dt) nu, whose own acceleration is gamma_ddot nu
    let mut mu = VecField2::zeros(n1, n2);
    let mut mu_dot = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let nu = chart.nu.at(i, j);
            let gd = rec.gamma_dot[[i, j]];
            let gdd = gamma_ddot[[i, j]];
            mu.set(i, j, [gd * nu[0], gd * nu[1], gd * nu[2]]);
            mu_dot.set(i, j, [gdd * nu[0], gdd * nu[1], gdd * nu[2]]);
        }
    }
    let mu_dot_n = sg.normal_part(&mu_dot);
    let lap_mu_dot_n = sg.laplace_beltrami(&mu_dot_n);
    let lap_n = sg.laplace_beltrami_vec(&sg.normal);
    let kin = sg.kinematic_kappa_terms(&mu);
    let mut kappa_ddot = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            kappa_ddot[[i, j]] = -lap_mu_dot_n[[i, j]]
                + dot3(mu_dot.at(i, j), lap_n.at(i, j))
                + kin[[i, j]];
        }
    }

    let a2 = params.a * params.a;
    let mut accel = &kappa_ddot + &gamma_ddot.mapv(|v| v * a2);
    if params.dealias {
        accel = sg.grid.spectral.dealias_23(&accel);
    }
    Ok((accel, gamma_ddot))
}

/// Normal component of the interface momentum-defect field, measured from a
/// short history of the pulled-back normal speed.
///
/// `W . n = Dt theta - D_{u_tan} theta + alpha^2 Ntilde kappa
///          + (N-/rho-) Nbar^{-1} g+ + (N+/rho+) Nbar^{-1} g-
///          + lambda <g+> + (1-lambda) <g->`,
/// with `Dt theta` evaluated by finite differences of the chart samples of
/// theta across the supplied history (oldest first, uniformly spaced, the
/// last entry belonging to `rec`).
pub fn w_residual_normal(
    chart: &ReferenceChart,
    rec: &Recovered,
    params: &PlasmaParams,
    theta_history: &[Array2<f64>],
    dt: f64,
) -> Result<Array2<f64>> {
    let _ = chart;
    if theta_history.len() < 3 {
        return Err(crate::error::Error::InsufficientSamples { need: 3, got: theta_history.len() });
    }
    let pair = rec.pair(params);
    let sg = &rec.sg;
    let n = theta_history.len();
    // one-sided backward differences at the newest sample
    let dtheta_dt = if n >= 5 {
        // 4th order: (25 f0 - 48 f1 + 36 f2 - 16 f3 + 3 f4) / (12 dt)
        let f0 = &theta_history[n - 1];
        let f1 = &theta_history[n - 2];
        let f2 = &theta_history[n - 3];
        let f3 = &theta_history[n - 4];
        let f4 = &theta_history[n - 5];
        (&(&(f0 * 25.0) - &(f1 * 48.0)) + &(&(f2 * 36.0) - &(f3 * 16.0)) + &(f4 * 3.0)) / (12.0 * dt)
    } else {
        // 2nd order: (3 f0 - 4 f1 + f2) / (2 dt)
        let f0 = &theta_history[n - 1];
        let f1 = &theta_history[n - 2];
        let f2 = &theta_history[n - 3];
        (&(f0 * 3.0) - &(f1 * 4.0) + f2) / (2.0 * dt)
    };

    let (u, _) = weighted_velocity(rec, params)?;
    let u_star = chart_transport_field(chart, rec, &u);
    let theta_now = &theta_history[n - 1];
    let advect = sg.directional_derivative(&u_star, theta_now);
    let u_tan = sg.tangential_part(&u);
    let advect_tan = sg.directional_derivative(&u_tan, theta_now);

    let a2 = params.alpha * params.alpha;
    let nt_kappa = pair.ntilde(&sg.kappa)?;

    let gp = &rec.pressure.g_plus;
    let gm = &rec.pressure.g_minus;
    let inv_gp = pair.nbar_inverse(gp)?;
    let inv_gm = pair.nbar_inverse(gm)?;
    let term_p = pair.minus.dn(&inv_gp)?.mapv(|v| v / params.rho_minus);
    let term_m = pair.plus.dn(&inv_gm)?.mapv(|v| v / params.rho_plus);
    let mean_g = params.lambda() * sg.mean_ds(gp) + (1.0 - params.lambda()) * sg.mean_ds(gm);

    let mut out = Array2::zeros(sg.grid.shape());
    let (n1, n2) = sg.grid.shape();
    for i in 0..n1 {
        for j in 0..n2 {
            out[[i, j]] = dtheta_dt[[i, j]] + advect[[i, j]] - advect_tan[[i, j]]
                + a2 * nt_kappa[[i, j]]
                + term_p[[i, j]]
                + term_m[[i, j]]
                + mean_g;
        }
    }
    Ok(out)
}
