//! Characteristic transport of current and vorticity.
//!
//! The combinations `xi = omega - j` and `eta = omega + j` ride along the
//! flows of `v + h` and `v - h` respectively, with the stretching term and
//! the `-+ 2 tr(grad v x grad h)` source integrated along the traced
//! characteristic. Tracing happens in parameter-box coordinates with the
//! pulled-back velocity, so the feet stay on a fixed grid; values are
//! fetched with cubic interpolation (periodic horizontally, local
//! barycentric vertically).

use super::{PlasmaParams, Recovered};
use crate::bulk::{BulkField, BulkGrid, Side};
use crate::chart::VecField2;
use crate::error::{Error, Result};
use ndarray::Array3;

/// Cubic periodic Lagrange interpolation coefficients for fractional index t
/// relative to node 0 of the stencil {-1, 0, 1, 2}.
#[inline]
fn cubic_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -t3 / 6.0 + t2 / 2.0 - t / 3.0,
        t3 / 2.0 - t2 - t / 2.0 + 1.0,
        -t3 / 2.0 + t2 / 2.0 + t,
        t3 / 6.0 - t / 6.0,
    ]
}

/// Interpolate a bulk scalar at fractional chart coordinates (x, y in [0,1))
/// and vertical parameter s (clamped to [0,1]).
fn interp3(bg: &BulkGrid, f: &Array3<f64>, x: f64, y: f64, s: f64) -> f64 {
    let (n1, n2, _) = bg.shape();
    let fx = x.rem_euclid(1.0) * n1 as f64;
    let fy = y.rem_euclid(1.0) * n2 as f64;
    let i0 = fx.floor() as isize;
    let j0 = fy.floor() as isize;
    let tx = fx - i0 as f64;
    let ty = fy - j0 as f64;
    let wx = cubic_weights(tx);
    let wy = cubic_weights(ty);

    // vertical stencil of 4 nodes around s
    let (lo, hi) = bg.cheb.stencil(s.clamp(0.0, 1.0), 4);
    let mut column = [0.0f64; 4];
    let mut vert_vals = [0.0f64; 4];
    for (c, l) in (lo..hi).enumerate() {
        let mut acc = 0.0;
        for (a, wxa) in wx.iter().enumerate() {
            let ii = (i0 + a as isize - 1).rem_euclid(n1 as isize) as usize;
            for (b, wyb) in wy.iter().enumerate() {
                let jj = (j0 + b as isize - 1).rem_euclid(n2 as isize) as usize;
                acc += wxa * wyb * f[[ii, jj, l]];
            }
        }
        vert_vals[c] = acc;
        column[c] = bg.cheb.s[l];
    }
    // local barycentric interpolation over the 4 vertical nodes
    let sc = s.clamp(0.0, 1.0);
    let mut num = 0.0;
    let mut den = 0.0;
    for jn in 0..4 {
        let diff = sc - column[jn];
        if diff.abs() < 1e-14 {
            return vert_vals[jn];
        }
        let mut w = 1.0;
        for kn in 0..4 {
            if kn != jn {
                w /= column[jn] - column[kn];
            }
        }
        num += w / diff * vert_vals[jn];
        den += w / diff;
    }
    num / den
}

/// Pull a physical velocity field back to parameter-box components:
/// `V_* = J^{-1}(V - dX/dt)`.
fn pullback_velocity(bg: &BulkGrid, v: &BulkField, xdot: &[Array3<f64>; 3]) -> [Array3<f64>; 3] {
    let (n1, n2, nz) = bg.shape();
    let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                let rel = [
                    v.comps[0][[i, j, l]] - xdot[0][[i, j, l]],
                    v.comps[1][[i, j, l]] - xdot[1][[i, j, l]],
                    v.comps[2][[i, j, l]] - xdot[2][[i, j, l]],
                ];
                for c in 0..3 {
                    let mut acc = 0.0;
                    for r in 0..3 {
                        acc += bg.jac_inv[c][r][[i, j, l]] * rel[r];
                    }
                    out[c][[i, j, l]] = acc;
                }
            }
        }
    }
    out
}

/// `tr(grad v x grad h) = sum_l grad v_l x grad h_l` (physical components).
fn curl_source(bg: &BulkGrid, v: &BulkField, h: &BulkField) -> [Array3<f64>; 3] {
    let gv = bg.phys_grad_field(v);
    let gh = bg.phys_grad_field(h);
    let (n1, n2, nz) = bg.shape();
    let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                let mut acc = [0.0f64; 3];
                for comp in 0..3 {
                    let a = [gv[comp][0][[i, j, l]], gv[comp][1][[i, j, l]], gv[comp][2][[i, j, l]]];
                    let b = [gh[comp][0][[i, j, l]], gh[comp][1][[i, j, l]], gh[comp][2][[i, j, l]]];
                    acc[0] += a[1] * b[2] - a[2] * b[1];
                    acc[1] += a[2] * b[0] - a[0] * b[2];
                    acc[2] += a[0] * b[1] - a[1] * b[0];
                }
                for c in 0..3 {
                    out[c][[i, j, l]] = acc[c];
                }
            }
        }
    }
    out
}

struct CharacteristicData<'a> {
    bg: &'a BulkGrid,
    /// pulled-back characteristic velocity (parameter components)
    v_star: [Array3<f64>; 3],
    /// physical gradient of the characteristic velocity (stretching matrix)
    grad_v: [[Array3<f64>; 3]; 3],
    /// source field (physical), sign included
    source: [Array3<f64>; 3],
}

/// One semi-Lagrangian field update over dt. `field` holds physical
/// components at parameter nodes at the old time; the result lives on the
/// new-time nodes of the same box (the map motion is inside `v_star`).
fn advect(data: &CharacteristicData, field: &BulkField, dt: f64) -> Result<BulkField> {
    let bg = data.bg;
    let (n1, n2, nz) = bg.shape();
    let mut out = BulkField::zeros(field.side, n1, n2, nz);

    // precompute (grad V) F + S at the old time for the predictor leg
    let mut rate_old = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                for r in 0..3 {
                    let mut acc = data.source[r][[i, j, l]];
                    for c in 0..3 {
                        acc += data.grad_v[r][c][[i, j, l]] * field.comps[c][[i, j, l]];
                    }
                    rate_old[r][[i, j, l]] = acc;
                }
            }
        }
    }

    let max_cell_s = {
        let mut m: f64 = 0.0;
        for w in bg.cheb.s.windows(2) {
            m = m.max(w[1] - w[0]);
        }
        m
    };

    for i in 0..n1 {
        for j in 0..n2 {
            let (x0, y0) = bg.grid.coords(i, j);
            for l in 0..nz {
                let s0 = bg.cheb.s[l];
                // two-stage backward trace
                let v1 = [
                    data.v_star[0][[i, j, l]],
                    data.v_star[1][[i, j, l]],
                    data.v_star[2][[i, j, l]],
                ];
                let xh = x0 - 0.5 * dt * v1[0];
                let yh = y0 - 0.5 * dt * v1[1];
                let sh = s0 - 0.5 * dt * v1[2];
                let vh = [
                    interp3(bg, &data.v_star[0], xh, yh, sh),
                    interp3(bg, &data.v_star[1], xh, yh, sh),
                    interp3(bg, &data.v_star[2], xh, yh, sh),
                ];
                let xf = x0 - dt * vh[0];
                let yf = y0 - dt * vh[1];
                let sf = s0 - dt * vh[2];
                if sf < -max_cell_s || sf > 1.0 + max_cell_s {
                    return Err(Error::CflViolation(format!(
                        "characteristic foot s = {sf:.4} left the slab at node ({i},{j},{l})"
                    )));
                }

                let foot_f = [
                    interp3(bg, &field.comps[0], xf, yf, sf),
                    interp3(bg, &field.comps[1], xf, yf, sf),
                    interp3(bg, &field.comps[2], xf, yf, sf),
                ];
                let k1 = [
                    interp3(bg, &rate_old[0], xf, yf, sf),
                    interp3(bg, &rate_old[1], xf, yf, sf),
                    interp3(bg, &rate_old[2], xf, yf, sf),
                ];
                // predictor at the arrival node, then trapezoid
                let pred = [
                    foot_f[0] + dt * k1[0],
                    foot_f[1] + dt * k1[1],
                    foot_f[2] + dt * k1[2],
                ];
                let mut k2 = [0.0f64; 3];
                for r in 0..3 {
                    let mut acc = data.source[r][[i, j, l]];
                    for c in 0..3 {
                        acc += data.grad_v[r][c][[i, j, l]] * pred[c];
                    }
                    k2[r] = acc;
                }
                for r in 0..3 {
                    out.comps[r][[i, j, l]] = foot_f[r] + 0.5 * dt * (k1[r] + k2[r]);
                }
            }
        }
    }
    Ok(out)
}

/// Advance the stored vorticity and current of both sides by one step along
/// the characteristics of `v -+ h` (fields frozen at the step start). The
/// result is not yet Leray-projected; the caller projects on the new
/// geometry.
pub fn transport_step(
    chart: &crate::chart::ReferenceChart,
    rec: &Recovered,
    state_omega: (&BulkField, &BulkField),
    state_j: (&BulkField, &BulkField),
    params: &PlasmaParams,
    dt: f64,
) -> Result<((BulkField, BulkField), (BulkField, BulkField))> {
    let _ = (chart, params);
    let mut out_omega = Vec::with_capacity(2);
    let mut out_j = Vec::with_capacity(2);
    for side in [Side::Plus, Side::Minus] {
        let bg = rec.bg(side);
        let (v, h, omega, j) = match side {
            Side::Plus => (&rec.v.0, &rec.h.0, state_omega.0, state_j.0),
            Side::Minus => (&rec.v.1, &rec.h.1, state_omega.1, state_j.1),
        };
        // interface-face velocity of the map: (d gamma/dt) nu
        let gamma_rate = {
            let (n1, n2) = bg.grid.shape();
            let mut r = VecField2::zeros(n1, n2);
            for i in 0..n1 {
                for jn in 0..n2 {
                    let nu = chart.nu.at(i, jn);
                    let gd = rec.gamma_dot[[i, jn]];
                    r.set(i, jn, [gd * nu[0], gd * nu[1], gd * nu[2]]);
                }
            }
            r
        };
        let xdot = crate::bulk::map_time_derivative(bg, &gamma_rate);

        let xi_old = omega.sub(j);
        let eta_old = omega.add(j);
        let src = curl_source(bg, v, h);

        // xi along v + h with source +2 tr(...), eta along v - h with -2 tr(...)
        let mut results = Vec::with_capacity(2);
        for (fld, vel_sign, src_sign) in [(&xi_old, 1.0, 2.0), (&eta_old, -1.0, -2.0)] {
            let vel = v.add(&h.scale(vel_sign));
            let v_star = pullback_velocity(bg, &vel, &xdot);
            let grad_v = bg.phys_grad_field(&vel);
            let source = [
                src[0].mapv(|x| src_sign * x),
                src[1].mapv(|x| src_sign * x),
                src[2].mapv(|x| src_sign * x),
            ];
            let data = CharacteristicData { bg, v_star, grad_v, source };
            results.push(advect(&data, fld, dt)?);
        }
        let eta_new = results.pop().unwrap();
        let xi_new = results.pop().unwrap();
        let omega_new = xi_new.add(&eta_new).scale(0.5);
        let j_new = eta_new.sub(&xi_new).scale(0.5);
        out_omega.push(omega_new);
        out_j.push(j_new);
    }
    let om = (out_omega.remove(0), out_omega.remove(0));
    let jj = (out_j.remove(0), out_j.remove(0));
    Ok((om, jj))
}

/// Eulerian reference integrator for the same transport equations (RK4 on
/// the fixed parameter grid), used as a cross-check of the semi-Lagrangian
/// path on one step.
pub fn transport_step_eulerian(
    chart: &crate::chart::ReferenceChart,
    rec: &Recovered,
    state_omega: (&BulkField, &BulkField),
    state_j: (&BulkField, &BulkField),
    dt: f64,
) -> Result<((BulkField, BulkField), (BulkField, BulkField))> {
    let mut out_omega = Vec::with_capacity(2);
    let mut out_j = Vec::with_capacity(2);
    for side in [Side::Plus, Side::Minus] {
        let bg = rec.bg(side);
        let (v, h, omega, j) = match side {
            Side::Plus => (&rec.v.0, &rec.h.0, state_omega.0, state_j.0),
            Side::Minus => (&rec.v.1, &rec.h.1, state_omega.1, state_j.1),
        };
        let gamma_rate = {
            let (n1, n2) = bg.grid.shape();
            let mut r = VecField2::zeros(n1, n2);
            for i in 0..n1 {
                for jn in 0..n2 {
                    let nu = chart.nu.at(i, jn);
                    let gd = rec.gamma_dot[[i, jn]];
                    r.set(i, jn, [gd * nu[0], gd * nu[1], gd * nu[2]]);
                }
            }
            r
        };
        let xdot = crate::bulk::map_time_derivative(bg, &gamma_rate);
        let src = curl_source(bg, v, h);

        let rate = |fld: &BulkField, vel_sign: f64, src_sign: f64| -> BulkField {
            let vel = v.add(&h.scale(vel_sign));
            let v_star = pullback_velocity(bg, &vel, &xdot);
            let grad_v = bg.phys_grad_field(&vel);
            let (n1, n2, nz) = bg.shape();
            let mut out = BulkField::zeros(fld.side, n1, n2, nz);
            // -(V_* . grad_ref) F + (grad V) F + S
            let gref = [
                bg.ref_grad(&fld.comps[0]),
                bg.ref_grad(&fld.comps[1]),
                bg.ref_grad(&fld.comps[2]),
            ];
            for i in 0..n1 {
                for jn in 0..n2 {
                    for l in 0..nz {
                        for r in 0..3 {
                            let mut adv = 0.0;
                            for c in 0..3 {
                                adv += v_star[c][[i, jn, l]] * gref[r][c][[i, jn, l]];
                            }
                            let mut stretch = src_sign * src[r][[i, jn, l]];
                            for c in 0..3 {
                                stretch += grad_v[r][c][[i, jn, l]] * fld.comps[c][[i, jn, l]];
                            }
                            out.comps[r][[i, jn, l]] = -adv + stretch;
                        }
                    }
                }
            }
            out
        };

        let rk4 = |fld: &BulkField, vel_sign: f64, src_sign: f64| -> BulkField {
            let k1 = rate(fld, vel_sign, src_sign);
            let k2 = rate(&fld.add(&k1.scale(0.5 * dt)), vel_sign, src_sign);
            let k3 = rate(&fld.add(&k2.scale(0.5 * dt)), vel_sign, src_sign);
            let k4 = rate(&fld.add(&k3.scale(dt)), vel_sign, src_sign);
            fld.add(
                &k1.add(&k2.scale(2.0))
                    .add(&k3.scale(2.0))
                    .add(&k4)
                    .scale(dt / 6.0),
            )
        };

        let xi_new = rk4(&omega.sub(j), 1.0, 2.0);
        let eta_new = rk4(&omega.add(j), -1.0, -2.0);
        out_omega.push(xi_new.add(&eta_new).scale(0.5));
        out_j.push(eta_new.sub(&xi_new).scale(0.5));
    }
    let om = (out_omega.remove(0), out_omega.remove(0));
    let jj = (out_j.remove(0), out_j.remove(0));
    Ok((om, jj))
}
