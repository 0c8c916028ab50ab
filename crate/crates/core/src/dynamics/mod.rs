//! Time evolution of the interface state.
//!
//! The dynamical unknowns are the modified curvature and its rate together
//! with the pulled-back vorticity and current and the wall fluxes. Each
//! evaluation of the right-hand side reconstructs the geometry from the
//! curvature (through the inverse curvature map), recovers the bulk fields
//! by div-curl solves, decomposes the pressure, and closes the second-order
//! curvature equation; vorticity and current ride along characteristics.

mod energy;
mod operators;
mod step;
mod transport;

pub use energy::{energy_functionals, Energies};
pub use operators::{
    assemble_remainder, kappa_accel, operator_a_apply, operator_r_apply, w_residual_normal,
    RemainderVariant,
};
pub use step::{cfl_dt, picard_refine, time_step, update_wall_fluxes, PicardReport, WallFluxRates};
pub use transport::{transport_step, transport_step_eulerian};

use crate::bulk::{harmonic_coordinates, BulkField, BulkGrid, Face, Side};
use crate::chart::{HeightField, ReferenceChart, VecField2};
use crate::curvature::{dk_solve, forward_k_with, invert_k, InvertOptions, KappaAField};
use crate::elliptic::{DnPair, GeometryMode, SolveOpts};
use crate::error::{Error, Result};
use crate::fields::{
    leray_project, recover_magnetic, recover_velocity, wall_normal_flux, FluxBasis, PressureParts,
};
use crate::geometry::{immerse, SurfaceGeometry};
use ndarray::Array2;

/// Physical and numerical parameters of a simulation.
#[derive(Clone, Debug)]
pub struct PlasmaParams {
    pub rho_plus: f64,
    pub rho_minus: f64,
    /// Surface tension coefficient in [0, 1].
    pub alpha: f64,
    /// Curvature map constant.
    pub a: f64,
    /// Vertical collocation nodes per side.
    pub nz: usize,
    pub mode: GeometryMode,
    pub solve_opts: SolveOpts,
    pub invert_opts: InvertOptions,
    /// CFL constant for the dispersive and advective limits.
    pub cfl: f64,
    /// 2/3-rule truncation of the curvature acceleration.
    pub dealias: bool,
    /// Picard refinement tolerance (max-norm on kappa_a).
    pub tol_picard: f64,
}

impl Default for PlasmaParams {
    fn default() -> Self {
        PlasmaParams {
            rho_plus: 1.0,
            rho_minus: 1.0,
            alpha: 0.0,
            a: 10.0,
            nz: 13,
            mode: GeometryMode::TorusSlab,
            solve_opts: SolveOpts::default(),
            invert_opts: InvertOptions::default(),
            cfl: 0.5,
            dealias: true,
            tol_picard: 1e-9,
        }
    }
}

impl PlasmaParams {
    pub fn validate(&self) -> Result<()> {
        if self.rho_plus <= 0.0 || self.rho_minus <= 0.0 {
            return Err(Error::InvalidInput("densities must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidInput(format!("alpha = {} outside [0,1]", self.alpha)));
        }
        if self.a < crate::curvature::A_MIN {
            return Err(Error::InvalidInput(format!("curvature constant a = {} too small", self.a)));
        }
        Ok(())
    }

    /// Weighted-velocity parameter `lambda = rho+ / (rho+ + rho-)`.
    pub fn lambda(&self) -> f64 {
        self.rho_plus / (self.rho_plus + self.rho_minus)
    }

    pub fn rho_sum(&self) -> f64 {
        self.rho_plus + self.rho_minus
    }

    /// Kelvin-Helmholtz weight `rho+ rho- / (rho+ + rho-)^2`.
    pub fn c_w(&self) -> f64 {
        self.rho_plus * self.rho_minus / (self.rho_sum() * self.rho_sum())
    }

    pub fn c_plus(&self) -> f64 {
        self.rho_plus / self.rho_sum()
    }

    pub fn c_minus(&self) -> f64 {
        self.rho_minus / self.rho_sum()
    }
}

/// Wall fluxes of both fields on both walls.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WallFluxes {
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
    pub h_plus: [f64; 2],
    pub h_minus: [f64; 2],
}

/// The complete dynamical state.
#[derive(Clone)]
pub struct SimState {
    pub kappa_a: KappaAField,
    pub kappa_a_dot: Array2<f64>,
    pub omega_star: (BulkField, BulkField),
    pub j_star: (BulkField, BulkField),
    pub wall_flux: WallFluxes,
    pub t: f64,
    /// Height field of the last successful inversion (warm start).
    pub gamma_guess: HeightField,
}

/// Everything recovered from a state at one time: geometry, maps, fields,
/// pressure.
pub struct Recovered {
    pub gamma: HeightField,
    pub gamma_dot: Array2<f64>,
    pub sg: SurfaceGeometry,
    pub bg_plus: BulkGrid,
    pub bg_minus: BulkGrid,
    pub basis_plus: FluxBasis,
    pub basis_minus: FluxBasis,
    /// Common normal trace on the chart grid.
    pub theta: Array2<f64>,
    pub v: (BulkField, BulkField),
    pub h: (BulkField, BulkField),
    pub pressure: PressureParts,
}

impl Recovered {
    pub fn pair<'a>(&'a self, params: &PlasmaParams) -> DnPair<'a> {
        DnPair::new(
            &self.sg,
            &self.bg_plus,
            &self.bg_minus,
            params.mode,
            params.rho_plus,
            params.rho_minus,
            params.solve_opts,
        )
    }

    pub fn bg(&self, side: Side) -> &BulkGrid {
        match side {
            Side::Plus => &self.bg_plus,
            Side::Minus => &self.bg_minus,
        }
    }

    /// Interface trace of a recovered field.
    pub fn face(&self, which: FieldKind, side: Side) -> VecField2 {
        let (bg, f) = match (which, side) {
            (FieldKind::Velocity, Side::Plus) => (&self.bg_plus, &self.v.0),
            (FieldKind::Velocity, Side::Minus) => (&self.bg_minus, &self.v.1),
            (FieldKind::Magnetic, Side::Plus) => (&self.bg_plus, &self.h.0),
            (FieldKind::Magnetic, Side::Minus) => (&self.bg_minus, &self.h.1),
        };
        bg.face_field(f, Face::Gamma)
    }
}

#[derive(Clone, Copy, Debug)]
pub enum FieldKind {
    Velocity,
    Magnetic,
}

/// Reconstruct height field and rate from the curvature state.
pub fn heights_from_state(
    chart: &ReferenceChart,
    params: &PlasmaParams,
    state: &SimState,
) -> Result<(HeightField, Array2<f64>)> {
    let gamma = invert_k(chart, &state.kappa_a, &state.gamma_guess, &params.invert_opts)?;
    let gamma_dot = dk_solve(
        chart,
        &gamma,
        &state.kappa_a_dot,
        params.a,
        params.invert_opts.tol_over_a2,
        params.invert_opts.max_iter,
    )?;
    Ok((gamma, gamma_dot))
}

/// Full recovery pipeline for a state.
pub fn recover(chart: &ReferenceChart, params: &PlasmaParams, state: &SimState) -> Result<Recovered> {
    let (gamma, gamma_dot) = heights_from_state(chart, params, state)?;
    let sg = immerse(chart, &gamma)?;
    let (bg_plus, bg_minus) = harmonic_coordinates(&sg, params.nz)?;
    let basis_plus = FluxBasis::new(&bg_plus, &params.solve_opts)?;
    let basis_minus = FluxBasis::new(&bg_minus, &params.solve_opts)?;

    // theta = (d gamma/dt) (nu . n) on the chart
    let (n1, n2) = sg.grid.shape();
    let mut theta = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            let nu = chart.nu.at(i, j);
            let n = sg.normal.at(i, j);
            theta[[i, j]] = gamma_dot[[i, j]] * crate::chart::dot3(nu, n);
        }
    }

    let v = recover_velocity(
        &sg,
        (&bg_plus, &bg_minus),
        (&basis_plus, &basis_minus),
        &theta,
        (&state.omega_star.0, &state.omega_star.1),
        (state.wall_flux.v_plus, state.wall_flux.v_minus),
        &params.solve_opts,
    )?;
    let h = recover_magnetic(
        &sg,
        (&bg_plus, &bg_minus),
        (&basis_plus, &basis_minus),
        (&state.j_star.0, &state.j_star.1),
        (state.wall_flux.h_plus, state.wall_flux.h_minus),
        &params.solve_opts,
    )?;

    let pair = DnPair::new(
        &sg,
        &bg_plus,
        &bg_minus,
        params.mode,
        params.rho_plus,
        params.rho_minus,
        params.solve_opts,
    );
    let pressure =
        crate::fields::pressure_decomposition(&sg, &pair, (&v.0, &v.1), (&h.0, &h.1), params.alpha, &params.solve_opts)?;

    Ok(Recovered {
        gamma,
        gamma_dot,
        sg,
        bg_plus,
        bg_minus,
        basis_plus,
        basis_minus,
        theta,
        v,
        h,
        pressure,
    })
}

/// The density-weighted interface velocity `u = lambda v+ + (1-lambda) v-`
/// and the tangential jump `w = v+ - v-`; errors if the normal traces differ.
pub fn weighted_velocity(
    rec: &Recovered,
    params: &PlasmaParams,
) -> Result<(VecField2, VecField2)> {
    let vp = rec.face(FieldKind::Velocity, Side::Plus);
    let vm = rec.face(FieldKind::Velocity, Side::Minus);
    let np = rec.sg.normal_part(&vp);
    let nm = rec.sg.normal_part(&vm);
    let mismatch = rec.sg.grid.max_abs(&(&np - &nm));
    let scale = vp.max_norm().max(vm.max_norm()).max(1e-12);
    if mismatch > 1e-6 * scale {
        return Err(Error::TraceMismatch(mismatch));
    }
    let lam = params.lambda();
    let u = vp.scale(lam).add(&vm.scale(1.0 - lam));
    let w = vp.add(&vm.scale(-1.0));
    Ok((u, w))
}

/// Pull an interface velocity back to the tangential chart transport field
/// `u_* = u o Phi - (d gamma/dt) nu` (tangent to the moving surface).
pub fn chart_transport_field(
    chart: &ReferenceChart,
    rec: &Recovered,
    u_face: &VecField2,
) -> VecField2 {
    let (n1, n2) = rec.sg.grid.shape();
    let mut out = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let u = u_face.at(i, j);
            let nu = chart.nu.at(i, j);
            let gd = rec.gamma_dot[[i, j]];
            out.set(i, j, [u[0] - gd * nu[0], u[1] - gd * nu[1], u[2] - gd * nu[2]]);
        }
    }
    out
}

/// Verify the state invariants: realizable curvature, solenoidal stored
/// vorticity/current, and vanishing wall compatibility integrals.
pub fn check_invariants(
    chart: &ReferenceChart,
    params: &PlasmaParams,
    state: &SimState,
    rec: &Recovered,
) -> Result<()> {
    let _ = chart;
    for (bg, f, name) in [
        (&rec.bg_plus, &state.omega_star.0, "omega+"),
        (&rec.bg_minus, &state.omega_star.1, "omega-"),
        (&rec.bg_plus, &state.j_star.0, "j+"),
        (&rec.bg_minus, &state.j_star.1, "j-"),
    ] {
        let scale = f.max_norm();
        if scale == 0.0 {
            continue;
        }
        let max_div = bg.max_interior_div(f);
        if max_div > 1e-6 * scale * bg.grid.n1 as f64 {
            return Err(Error::InvalidInput(format!(
                "{name} stored non-solenoidal: max |div| = {max_div:.3e} vs scale {scale:.3e}"
            )));
        }
        let wall = wall_normal_flux(bg, f);
        if wall.abs() > 1e-8 * scale.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "{name} wall compatibility integral {wall:.3e} nonzero"
            )));
        }
    }
    let _ = params;
    Ok(())
}

/// Build a state from explicit initial data, projecting the vorticity and
/// current onto the solenoidal subspace of the initial geometry.
#[allow(clippy::too_many_arguments)]
pub fn make_state(
    chart: &ReferenceChart,
    params: &PlasmaParams,
    gamma: &HeightField,
    gamma_dot: &Array2<f64>,
    omega_star: (BulkField, BulkField),
    j_star: (BulkField, BulkField),
    wall_flux: WallFluxes,
) -> Result<SimState> {
    params.validate()?;
    let sg = immerse(chart, gamma)?;
    let kappa_a = forward_k_with(&sg, gamma, params.a);
    let kdot = {
        let delta = crate::curvature::dk_apply(chart, gamma, gamma_dot, params.a)?;
        delta
    };
    let (bgp, bgm) = harmonic_coordinates(&sg, params.nz)?;
    let o_p = leray_project(&bgp, &omega_star.0, true, &params.solve_opts)?;
    let o_m = leray_project(&bgm, &omega_star.1, true, &params.solve_opts)?;
    let j_p = leray_project(&bgp, &j_star.0, true, &params.solve_opts)?;
    let j_m = leray_project(&bgm, &j_star.1, true, &params.solve_opts)?;
    Ok(SimState {
        kappa_a,
        kappa_a_dot: kdot,
        omega_star: (o_p, o_m),
        j_star: (j_p, j_m),
        wall_flux,
        t: 0.0,
        gamma_guess: gamma.clone(),
    })
}
