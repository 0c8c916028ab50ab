//! Time stepping: explicit RK4 on the curvature subsystem with per-step
//! characteristic transport, wall-flux evolution, and the per-step Picard
//! refinement of the semi-implicit update.

use super::operators::kappa_accel;
use super::transport::transport_step;
use super::{heights_from_state, recover, PlasmaParams, Recovered, SimState, WallFluxes};
use crate::bulk::{Face, Side};
use crate::chart::ReferenceChart;
use crate::curvature::KappaAField;
use crate::error::{Error, Result};
use crate::fields::leray_project;
use ndarray::Array2;

/// Rates of change of the four wall fluxes.
#[derive(Clone, Copy, Debug, Default)]
pub struct WallFluxRates {
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
    pub h_plus: [f64; 2],
    pub h_minus: [f64; 2],
}

/// Wall-flux rates from the tangential momentum and induction balances
/// integrated over the walls:
/// `d/dt v-flux = int -D_v v - grad p / rho + D_h h`,
/// `d/dt h-flux = int D_h v - D_v h`.
pub fn update_wall_fluxes(rec: &Recovered, params: &PlasmaParams) -> WallFluxRates {
    let pair = rec.pair(params);
    let mut rates = WallFluxRates::default();
    for side in [Side::Plus, Side::Minus] {
        let bg = rec.bg(side);
        let (v, h) = match side {
            Side::Plus => (&rec.v.0, &rec.h.0),
            Side::Minus => (&rec.v.1, &rec.h.1),
        };
        let rho = match side {
            Side::Plus => params.rho_plus,
            Side::Minus => params.rho_minus,
        };
        let gv = bg.phys_grad_field(v);
        let gh = bg.phys_grad_field(h);
        let gp = rec.pressure.grad_pressure(&pair, side);
        let l = bg.face_level(Face::Wall);
        let (n1, n2) = bg.grid.shape();
        let cell = 1.0 / (n1 * n2) as f64;
        let mut v_rate = [0.0f64; 2];
        let mut h_rate = [0.0f64; 2];
        for i in 0..n1 {
            for j in 0..n2 {
                let vv = [v.comps[0][[i, j, l]], v.comps[1][[i, j, l]], v.comps[2][[i, j, l]]];
                let hh = [h.comps[0][[i, j, l]], h.comps[1][[i, j, l]], h.comps[2][[i, j, l]]];
                for r in 0..2 {
                    let mut dvv = 0.0;
                    let mut dhh = 0.0;
                    let mut dhv = 0.0;
                    let mut dvh = 0.0;
                    for c in 0..3 {
                        dvv += vv[c] * gv[r][c][[i, j, l]];
                        dhh += hh[c] * gh[r][c][[i, j, l]];
                        dhv += hh[c] * gv[r][c][[i, j, l]];
                        dvh += vv[c] * gh[r][c][[i, j, l]];
                    }
                    v_rate[r] += (-dvv - gp[r][[i, j, l]] / rho + dhh) * cell;
                    h_rate[r] += (dhv - dvh) * cell;
                }
            }
        }
        match side {
            Side::Plus => {
                rates.v_plus = v_rate;
                rates.h_plus = h_rate;
            }
            Side::Minus => {
                rates.v_minus = v_rate;
                rates.h_minus = h_rate;
            }
        }
    }
    rates
}

/// Stability limit: dispersive limit from the flat-state symbols at the
/// largest resolved (dealiased) wavenumber, advective limit from the fastest
/// characteristic speed against the smallest cell.
pub fn cfl_dt(chart: &ReferenceChart, params: &PlasmaParams, state: &SimState, rec: &Recovered) -> f64 {
    let n = chart.grid.n1 as f64;
    let kmax = 2.0 * std::f64::consts::PI * (n / 3.0).floor();
    let depth_p = rec.bg_plus.thickness;
    let depth_m = rec.bg_minus.thickness;
    let sig = |k: f64, d: f64| k * (k * d).tanh();
    let sp = sig(kmax, depth_p) / params.rho_plus;
    let sm = sig(kmax, depth_m) / params.rho_minus;
    let sig_nt = if sp + sm > 0.0 { sp * sm / (sp + sm) } else { 0.0 };
    let sig_a = kmax * kmax * sig_nt;

    // largest quadratic symbol from the tangential fields
    let vmax = rec.v.0.max_norm().max(rec.v.1.max_norm());
    let hmax = rec.h.0.max_norm().max(rec.h.1.max_norm());
    let jmax = (2.0 * vmax).max(hmax);
    let sig_r = jmax * jmax * kmax * kmax;
    let omega_max = (params.alpha * params.alpha * sig_a + sig_r).sqrt().max(1e-10);

    let dx = 1.0 / n;
    let char_speed = (vmax + hmax).max(1e-10);
    let _ = state;
    params.cfl * (1.0 / omega_max).min(dx / char_speed)
}

/// One explicit RK4 step of the curvature subsystem with frozen-coefficient
/// characteristic transport of the vorticity and current over the same
/// interval.
pub fn time_step(chart: &ReferenceChart, params: &PlasmaParams, state: &SimState, dt: f64) -> Result<SimState> {
    // RK4 stages on (kappa_a, kappa_a_dot, wall fluxes)
    struct StageRate {
        kdot: Array2<f64>,
        accel: Array2<f64>,
        fluxes: WallFluxRates,
    }

    let mut rec0: Option<Recovered> = None;
    let mut eval = |ka: &KappaAField, kdot: &Array2<f64>, fluxes: &WallFluxes, keep: bool| -> Result<StageRate> {
        let stage_state = SimState {
            kappa_a: ka.clone(),
            kappa_a_dot: kdot.clone(),
            omega_star: state.omega_star.clone(),
            j_star: state.j_star.clone(),
            wall_flux: *fluxes,
            t: state.t,
            gamma_guess: state.gamma_guess.clone(),
        };
        let rec = recover(chart, params, &stage_state)?;
        let (accel, _) = kappa_accel(chart, &rec, params)?;
        let fr = update_wall_fluxes(&rec, params);
        let out = StageRate { kdot: kdot.clone(), accel, fluxes: fr };
        if keep {
            rec0 = Some(rec);
        }
        Ok(out)
    };

    let ka0 = &state.kappa_a;
    let kd0 = &state.kappa_a_dot;
    let wf0 = &state.wall_flux;

    let k1 = eval(ka0, kd0, wf0, true)?;
    let half = |base: &Array2<f64>, rate: &Array2<f64>, s: f64| base + &(rate * (dt * s));
    let adv_flux = |base: &WallFluxes, r: &WallFluxRates, s: f64| WallFluxes {
        v_plus: [base.v_plus[0] + dt * s * r.v_plus[0], base.v_plus[1] + dt * s * r.v_plus[1]],
        v_minus: [base.v_minus[0] + dt * s * r.v_minus[0], base.v_minus[1] + dt * s * r.v_minus[1]],
        h_plus: [base.h_plus[0] + dt * s * r.h_plus[0], base.h_plus[1] + dt * s * r.h_plus[1]],
        h_minus: [base.h_minus[0] + dt * s * r.h_minus[0], base.h_minus[1] + dt * s * r.h_minus[1]],
    };

    let ka = |f: Array2<f64>| KappaAField { kappa_a: f, a: params.a };

    let k2 = eval(
        &ka(half(&ka0.kappa_a, &k1.kdot, 0.5)),
        &half(kd0, &k1.accel, 0.5),
        &adv_flux(wf0, &k1.fluxes, 0.5),
        false,
    )?;
    let k3 = eval(
        &ka(half(&ka0.kappa_a, &k2.kdot, 0.5)),
        &half(kd0, &k2.accel, 0.5),
        &adv_flux(wf0, &k2.fluxes, 0.5),
        false,
    )?;
    let k4 = eval(
        &ka(half(&ka0.kappa_a, &k3.kdot, 1.0)),
        &half(kd0, &k3.accel, 1.0),
        &adv_flux(wf0, &k3.fluxes, 1.0),
        false,
    )?;

    let sum4 = |a: &Array2<f64>, b: &Array2<f64>, c: &Array2<f64>, d: &Array2<f64>| {
        ((a + &(b * 2.0)) + &(c * 2.0) + d) * (dt / 6.0)
    };
    let mut kappa_a_new = &ka0.kappa_a + &sum4(&k1.kdot, &k2.kdot, &k3.kdot, &k4.kdot);
    let mut kappa_dot_new = kd0 + &sum4(&k1.accel, &k2.accel, &k3.accel, &k4.accel);
    if params.dealias {
        kappa_a_new = chart.grid.spectral.dealias_23(&kappa_a_new);
        kappa_dot_new = chart.grid.spectral.dealias_23(&kappa_dot_new);
    }
    let flux_sum = |sel: fn(&WallFluxRates) -> [f64; 2], base: [f64; 2]| {
        let (a, b, c, d) = (sel(&k1.fluxes), sel(&k2.fluxes), sel(&k3.fluxes), sel(&k4.fluxes));
        [
            base[0] + dt / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]),
            base[1] + dt / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]),
        ]
    };
    let wall_flux = WallFluxes {
        v_plus: flux_sum(|r| r.v_plus, wf0.v_plus),
        v_minus: flux_sum(|r| r.v_minus, wf0.v_minus),
        h_plus: flux_sum(|r| r.h_plus, wf0.h_plus),
        h_minus: flux_sum(|r| r.h_minus, wf0.h_minus),
    };

    // transport of vorticity and current with step-start fields
    let rec0 = rec0.expect("first stage recovery retained");
    let (omega_adv, j_adv) = transport_step(
        chart,
        &rec0,
        (&state.omega_star.0, &state.omega_star.1),
        (&state.j_star.0, &state.j_star.1),
        params,
        dt,
    )?;

    // project on the new geometry
    let mut new_state = SimState {
        kappa_a: KappaAField { kappa_a: kappa_a_new, a: params.a },
        kappa_a_dot: kappa_dot_new,
        omega_star: omega_adv,
        j_star: j_adv,
        wall_flux,
        t: state.t + dt,
        gamma_guess: rec0.gamma.clone(),
    };
    let (gamma_new, _) = heights_from_state(chart, params, &new_state)?;
    let sg_new = crate::geometry::immerse(chart, &gamma_new)?;
    let (bgp, bgm) = crate::bulk::harmonic_coordinates(&sg_new, params.nz)?;
    new_state.omega_star.0 = leray_project(&bgp, &new_state.omega_star.0, true, &params.solve_opts)?;
    new_state.omega_star.1 = leray_project(&bgm, &new_state.omega_star.1, true, &params.solve_opts)?;
    new_state.j_star.0 = leray_project(&bgp, &new_state.j_star.0, true, &params.solve_opts)?;
    new_state.j_star.1 = leray_project(&bgm, &new_state.j_star.1, true, &params.solve_opts)?;
    new_state.gamma_guess = gamma_new;
    Ok(new_state)
}

/// Result of a Picard-refined step.
pub struct PicardReport {
    pub state: SimState,
    pub iterations: usize,
    /// Last observed ratio of successive iterate distances.
    pub contraction_factor: f64,
    pub converged: bool,
}

/// Semi-implicit midpoint step solved by fixed-point refinement: iterate the
/// linear update with coefficients frozen from the previous iterate until
/// successive iterates agree. One iteration reproduces the plain
/// semi-implicit step (coefficients from the step start).
pub fn picard_refine(
    chart: &ReferenceChart,
    params: &PlasmaParams,
    state: &SimState,
    dt: f64,
    n_iters: usize,
) -> Result<PicardReport> {
    let mut prev_delta = f64::INFINITY;
    let mut grew = 0usize;
    let mut current: Option<SimState> = None;
    let mut factor = f64::NAN;
    let scale = chart.grid.max_abs(&state.kappa_a.kappa_a).max(1.0);

    for it in 0..n_iters.max(1) {
        // midpoint coefficients from the previous iterate (step start on the
        // first sweep)
        let mid_state = match &current {
            None => state.clone(),
            Some(next) => SimState {
                kappa_a: KappaAField {
                    kappa_a: (&state.kappa_a.kappa_a + &next.kappa_a.kappa_a) * 0.5,
                    a: params.a,
                },
                kappa_a_dot: (&state.kappa_a_dot + &next.kappa_a_dot) * 0.5,
                omega_star: (
                    state.omega_star.0.add(&next.omega_star.0).scale(0.5),
                    state.omega_star.1.add(&next.omega_star.1).scale(0.5),
                ),
                j_star: (
                    state.j_star.0.add(&next.j_star.0).scale(0.5),
                    state.j_star.1.add(&next.j_star.1).scale(0.5),
                ),
                wall_flux: WallFluxes {
                    v_plus: mid2(state.wall_flux.v_plus, next.wall_flux.v_plus),
                    v_minus: mid2(state.wall_flux.v_minus, next.wall_flux.v_minus),
                    h_plus: mid2(state.wall_flux.h_plus, next.wall_flux.h_plus),
                    h_minus: mid2(state.wall_flux.h_minus, next.wall_flux.h_minus),
                },
                t: state.t + 0.5 * dt,
                gamma_guess: next.gamma_guess.clone(),
            },
        };
        let rec_mid = recover(chart, params, &mid_state)?;
        let (accel_mid, _) = kappa_accel(chart, &rec_mid, params)?;
        let flux_mid = update_wall_fluxes(&rec_mid, params);

        let kdot_new = &state.kappa_a_dot + &(&accel_mid * dt);
        let mut kappa_new = &state.kappa_a.kappa_a + &(&(&state.kappa_a_dot + &kdot_new) * (0.5 * dt));
        let mut kdot_final = kdot_new;
        if params.dealias {
            kappa_new = chart.grid.spectral.dealias_23(&kappa_new);
            kdot_final = chart.grid.spectral.dealias_23(&kdot_final);
        }
        let (omega_adv, j_adv) = transport_step(
            chart,
            &rec_mid,
            (&state.omega_star.0, &state.omega_star.1),
            (&state.j_star.0, &state.j_star.1),
            params,
            dt,
        )?;
        let next = SimState {
            kappa_a: KappaAField { kappa_a: kappa_new, a: params.a },
            kappa_a_dot: kdot_final,
            omega_star: omega_adv,
            j_star: j_adv,
            wall_flux: WallFluxes {
                v_plus: adv2(state.wall_flux.v_plus, flux_mid.v_plus, dt),
                v_minus: adv2(state.wall_flux.v_minus, flux_mid.v_minus, dt),
                h_plus: adv2(state.wall_flux.h_plus, flux_mid.h_plus, dt),
                h_minus: adv2(state.wall_flux.h_minus, flux_mid.h_minus, dt),
            },
            t: state.t + dt,
            gamma_guess: rec_mid.gamma.clone(),
        };

        if let Some(prev) = &current {
            let delta = chart.grid.max_abs(&(&next.kappa_a.kappa_a - &prev.kappa_a.kappa_a));
            factor = delta / prev_delta;
            if delta > prev_delta {
                grew += 1;
                if grew >= 3 {
                    return Err(Error::NoContraction(format!(
                        "Picard iterates diverging after {it} sweeps (delta {delta:.3e})"
                    )));
                }
            } else {
                grew = 0;
            }
            if delta <= params.tol_picard * scale {
                return Ok(PicardReport {
                    state: next,
                    iterations: it + 1,
                    contraction_factor: factor,
                    converged: true,
                });
            }
            prev_delta = delta;
        }
        current = Some(next);
    }
    Ok(PicardReport {
        state: current.expect("at least one Picard sweep"),
        iterations: n_iters.max(1),
        contraction_factor: factor,
        converged: false,
    })
}

fn mid2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

fn adv2(base: [f64; 2], rate: [f64; 2], dt: f64) -> [f64; 2] {
    [base[0] + dt * rate[0], base[1] + dt * rate[1]]
}
