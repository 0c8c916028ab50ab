//! Field recovery: div-curl solves, Leray projection, pressure decomposition.
//!
//! A velocity or magnetic field is reconstructed from its curl, divergence,
//! interface normal trace, wall tangency, and wall flux. The solve splits
//! into a vector-potential part carrying the curl (a constant-coefficient
//! solve on the parameter box thanks to the 1-form pullback), a mapped
//! scalar-potential part enforcing divergence and normal traces, and the
//! two-dimensional space of harmonic flux fields that carries the wall flux
//! in the torus-slab topology.

use crate::bulk::{BcKind, BoxSolver, BulkField, BulkGrid, BulkScalar, Face, Side};
use crate::elliptic::{solve_mapped, DnPair, FaceBc, SolveOpts};
use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use ndarray::{Array2, Array3};

/// Relative tolerance for data compatibility integral checks.
pub const COMPAT_TOL: f64 = 1e-8;

/// The two harmonic flux-basis fields of one side (divergence-free,
/// curl-free, tangent to both boundaries, unit horizontal wall fluxes).
pub struct FluxBasis {
    pub fields: [BulkField; 2],
    /// `wall_matrix[r][i]` = r-component of the wall flux of basis field i.
    pub wall_matrix: [[f64; 2]; 2],
}

/// Horizontal wall flux (x and y components) of a field.
pub fn wall_flux(bg: &BulkGrid, u: &BulkField) -> [f64; 2] {
    let l = bg.face_level(Face::Wall);
    let (n1, n2) = (bg.grid.n1, bg.grid.n2);
    let cell = 1.0 / (n1 * n2) as f64;
    let mut fx = 0.0;
    let mut fy = 0.0;
    for i in 0..n1 {
        for j in 0..n2 {
            fx += u.comps[0][[i, j, l]];
            fy += u.comps[1][[i, j, l]];
        }
    }
    [fx * cell, fy * cell]
}

/// Net wall-normal flux of a field (outward through the wall face).
pub fn wall_normal_flux(bg: &BulkGrid, u: &BulkField) -> f64 {
    let dens = bg.face_flux_density(u, Face::Wall);
    let sign = bg.outward_sign(Face::Wall);
    sign * dens.sum() / (bg.grid.n1 * bg.grid.n2) as f64
}

impl FluxBasis {
    /// Build the flux basis for one side (geometry-only; reusable across all
    /// recoveries on the same grid).
    pub fn new(bg: &BulkGrid, opts: &SolveOpts) -> Result<Self> {
        let mut fields = Vec::with_capacity(2);
        for dir in 0..2 {
            // 1-form of the constant field e_dir is J^T e_dir, i.e. the
            // dir-th Jacobian row, which is a discrete gradient plus a
            // constant and therefore reference-curl-free.
            let e_form = [bg.jac[dir][0].clone(), bg.jac[dir][1].clone(), bg.jac[dir][2].clone()];
            // conormal of M * e_form at the faces
            let con = m_dot_es(bg, &e_form);
            let data_g = face_of(bg, &con, Face::Gamma).mapv(|v| -v) * bg.outward_sign(Face::Gamma);
            let data_w = face_of(bg, &con, Face::Wall).mapv(|v| -v) * bg.outward_sign(Face::Wall);
            let rhs = {
                let flux = m_times(bg, &e_form);
                bg.ref_div(&flux).mapv(|v| -v)
            };
            let chi = solve_mapped(
                bg,
                &rhs,
                FaceBc { kind: BcKind::Neumann, data: &data_g },
                FaceBc { kind: BcKind::Neumann, data: &data_w },
                opts,
            )?;
            let gchi = bg.ref_grad(&chi);
            let one_form = [&e_form[0] + &gchi[0], &e_form[1] + &gchi[1], &e_form[2] + &gchi[2]];
            fields.push(oneform_to_field(bg, &one_form));
        }
        let f0 = wall_flux(bg, &fields[0]);
        let f1 = wall_flux(bg, &fields[1]);
        let wall_matrix = [[f0[0], f1[0]], [f0[1], f1[1]]];
        let det = wall_matrix[0][0] * wall_matrix[1][1] - wall_matrix[0][1] * wall_matrix[1][0];
        if det.abs() < 1e-8 {
            return Err(Error::SolverDivergence("flux basis degenerate".into()));
        }
        let mut it = fields.into_iter();
        Ok(FluxBasis { fields: [it.next().unwrap(), it.next().unwrap()], wall_matrix })
    }

    fn coefficients(&self, target: [f64; 2]) -> [f64; 2] {
        let m = &self.wall_matrix;
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (target[0] * m[1][1] - target[1] * m[0][1]) / det,
            (target[1] * m[0][0] - target[0] * m[1][0]) / det,
        ]
    }
}

fn face_of(bg: &BulkGrid, v: &[Array3<f64>; 3], face: Face) -> Array2<f64> {
    let l = bg.face_level(face);
    Array2::from_shape_fn((bg.grid.n1, bg.grid.n2), |(i, j)| v[2][[i, j, l]])
}

/// `M v` for reference-component (1-form) arrays.
fn m_times(bg: &BulkGrid, v: &[Array3<f64>; 3]) -> [Array3<f64>; 3] {
    let (n1, n2, nz) = bg.shape();
    let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                for r in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        acc += bg.m_at(i, j, l, r, c) * v[c][[i, j, l]];
                    }
                    out[r][[i, j, l]] = acc;
                }
            }
        }
    }
    out
}

fn m_dot_es(bg: &BulkGrid, v: &[Array3<f64>; 3]) -> [Array3<f64>; 3] {
    m_times(bg, v)
}

fn oneform_to_field(bg: &BulkGrid, one: &[Array3<f64>; 3]) -> BulkField {
    let (n1, n2, nz) = bg.shape();
    let mut out = bg.zero_field();
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                for r in 0..3 {
                    let mut acc = 0.0;
                    for c in 0..3 {
                        acc += bg.jac_inv[c][r][[i, j, l]] * one[c][[i, j, l]];
                    }
                    out.comps[r][[i, j, l]] = acc;
                }
            }
        }
    }
    out
}

/// Data of one div-curl solve.
pub struct DivCurlData<'a> {
    pub curl_rhs: &'a BulkField,
    pub div_rhs: &'a BulkScalar,
    /// `u . n_plus` on the interface (chart samples).
    pub normal_bc: &'a Array2<f64>,
    pub wall_flux: [f64; 2],
}

/// Solve curl u = f, div u = g, u.n = data on the interface, tangency and
/// prescribed horizontal flux at the wall.
pub fn solve_div_curl(
    sg: &SurfaceGeometry,
    bg: &BulkGrid,
    basis: &FluxBasis,
    data: &DivCurlData,
    opts: &SolveOpts,
) -> Result<BulkField> {
    let (n1, n2, _) = bg.shape();

    // -- compatibility gates ------------------------------------------------
    let f_scale = data.curl_rhs.max_norm().max(1e-300);
    let max_div_f = bg.max_interior_div(data.curl_rhs);
    // spectral discretization: the curl data must be solenoidal well beyond
    // truncation noise
    if max_div_f > 1e-5 * f_scale * (n1 as f64) {
        return Err(Error::CompatibilityViolation(format!(
            "curl data is not solenoidal: max |div f| = {max_div_f:.3e} vs scale {f_scale:.3e}"
        )));
    }
    let wall_f = wall_normal_flux(bg, data.curl_rhs);
    if wall_f.abs() > COMPAT_TOL * f_scale.max(1.0) {
        return Err(Error::CompatibilityViolation(format!(
            "curl data wall flux {wall_f:.3e} nonzero"
        )));
    }
    // global divergence balance: int div = (outward) interface flux
    let div_total = bg.volume_integral(data.div_rhs);
    let gamma_sign = if bg.side == Side::Plus { 1.0 } else { -1.0 };
    let bc_total = gamma_sign * sg.integral(data.normal_bc);
    let scale = bg
        .volume_integral(&data.div_rhs.mapv(f64::abs))
        .abs()
        .max(sg.integral(&data.normal_bc.mapv(f64::abs)).abs())
        .max(1e-14);
    if (div_total - bc_total).abs() > COMPAT_TOL * scale.max(1.0) {
        return Err(Error::CompatibilityViolation(format!(
            "divergence/normal-trace imbalance: int div = {div_total:.6e}, boundary flux = {bc_total:.6e}"
        )));
    }

    // -- vector potential for the curl part ---------------------------------
    // curl_ref A with -Lap_ref A = f_2form, components decoupled on the box
    let f2 = bg.pullback_twoform(data.curl_rhs);
    let zero_face = Array2::zeros((n1, n2));
    let mut a_comps: Vec<Array3<f64>> = Vec::with_capacity(3);
    for c in 0..3 {
        let (bc, solver) = if c < 2 {
            (
                BcKind::Dirichlet,
                BoxSolver::new(
                    bg.cheb.clone(),
                    bg.grid.spectral.clone(),
                    1.0,
                    1.0,
                    1.0,
                    (BcKind::Dirichlet, -1.0),
                    (BcKind::Dirichlet, 1.0),
                ),
            )
        } else {
            (
                BcKind::Neumann,
                BoxSolver::new(
                    bg.cheb.clone(),
                    bg.grid.spectral.clone(),
                    1.0,
                    1.0,
                    1.0,
                    (BcKind::Neumann, -1.0),
                    (BcKind::Neumann, 1.0),
                ),
            )
        };
        let _ = bc;
        let rhs = f2[c].mapv(|v| -v);
        a_comps.push(solver.solve(&rhs, &zero_face, &zero_face));
    }
    let a = [a_comps.remove(0), a_comps.remove(0), a_comps.remove(0)];
    let g0 = bg.ref_grad(&a[0]);
    let g1 = bg.ref_grad(&a[1]);
    let g2 = bg.ref_grad(&a[2]);
    let u1_form = [&g2[1] - &g1[2], &g0[2] - &g2[0], &g1[0] - &g0[1]];

    // -- scalar potential for divergence and normal traces ------------------
    let mu1 = m_times(bg, &u1_form);
    let rhs_phi = {
        let gt = &bg.det * data.div_rhs;
        &gt - &bg.ref_div(&mu1)
    };
    // outward conormal targets: interface (u.n+) sqrt(g) with side sign; wall zero
    let mut target_g = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            target_g[[i, j]] = gamma_sign * data.normal_bc[[i, j]] * sg.sqrt_g[[i, j]];
        }
    }
    let con1 = face_of(bg, &mu1, Face::Gamma);
    let data_g = &target_g - &(con1.mapv(|v| v * bg.outward_sign(Face::Gamma)));
    let con1w = face_of(bg, &mu1, Face::Wall);
    let data_w = con1w.mapv(|v| -v * bg.outward_sign(Face::Wall));
    let phi = solve_mapped(
        bg,
        &rhs_phi,
        FaceBc { kind: BcKind::Neumann, data: &data_g },
        FaceBc { kind: BcKind::Neumann, data: &data_w },
        opts,
    )?;
    let gphi = bg.ref_grad(&phi);
    let pre_form = [&u1_form[0] + &gphi[0], &u1_form[1] + &gphi[1], &u1_form[2] + &gphi[2]];
    let u_pre = oneform_to_field(bg, &pre_form);

    // -- wall flux correction with the harmonic basis ------------------------
    let pre_flux = wall_flux(bg, &u_pre);
    let c = basis.coefficients([data.wall_flux[0] - pre_flux[0], data.wall_flux[1] - pre_flux[1]]);
    let u = u_pre
        .add(&basis.fields[0].scale(c[0]))
        .add(&basis.fields[1].scale(c[1]));
    Ok(u)
}

/// Leray projection: remove the gradient part under interface-Dirichlet and
/// wall-Neumann conditions. With `restore_wall_flux` the projection also
/// restores a zero net wall-normal flux (the conserved compatibility
/// integral) instead of merely preserving the incoming one.
pub fn leray_project(
    bg: &BulkGrid,
    y: &BulkField,
    restore_wall_flux: bool,
    opts: &SolveOpts,
) -> Result<BulkField> {
    let (n1, n2, _) = bg.shape();
    let y_form = bg.pullback_twoform(y);
    let rhs = bg.ref_div(&y_form);
    let zero = Array2::zeros((n1, n2));
    let wall_data = if restore_wall_flux {
        let excess = wall_normal_flux(bg, y);
        // constant conormal flux density absorbing the excess
        Array2::from_elem((n1, n2), excess)
    } else {
        zero.clone()
    };
    let phi = solve_mapped(
        bg,
        &rhs,
        FaceBc { kind: BcKind::Dirichlet, data: &zero },
        FaceBc { kind: BcKind::Neumann, data: &wall_data },
        opts,
    )?;
    let g = bg.phys_grad(&phi);
    Ok(BulkField {
        side: y.side,
        comps: [
            &y.comps[0] - &g[0],
            &y.comps[1] - &g[1],
            &y.comps[2] - &g[2],
        ],
    })
}

/// Recover both velocity fields from the interface rate, vorticities, and
/// wall fluxes. `theta_chart` is the common normal trace `u . n_plus` on the
/// chart grid.
pub fn recover_velocity(
    sg: &SurfaceGeometry,
    bgs: (&BulkGrid, &BulkGrid),
    bases: (&FluxBasis, &FluxBasis),
    theta_chart: &Array2<f64>,
    omega_star: (&BulkField, &BulkField),
    v_flux: ([f64; 2], [f64; 2]),
    opts: &SolveOpts,
) -> Result<(BulkField, BulkField)> {
    let recover = |bg: &BulkGrid, basis: &FluxBasis, omega: &BulkField, flux: [f64; 2]| {
        let omega_bar = leray_project(bg, omega, true, opts)?;
        let zero_div = bg.zeros();
        solve_div_curl(
            sg,
            bg,
            basis,
            &DivCurlData { curl_rhs: &omega_bar, div_rhs: &zero_div, normal_bc: theta_chart, wall_flux: flux },
            opts,
        )
    };
    Ok((
        recover(bgs.0, bases.0, omega_star.0, v_flux.0)?,
        recover(bgs.1, bases.1, omega_star.1, v_flux.1)?,
    ))
}

/// Recover both magnetic fields (zero normal trace on the interface and the
/// walls, prescribed wall fluxes).
pub fn recover_magnetic(
    sg: &SurfaceGeometry,
    bgs: (&BulkGrid, &BulkGrid),
    bases: (&FluxBasis, &FluxBasis),
    j_star: (&BulkField, &BulkField),
    h_flux: ([f64; 2], [f64; 2]),
    opts: &SolveOpts,
) -> Result<(BulkField, BulkField)> {
    let zero_bc = Array2::zeros((sg.grid.n1, sg.grid.n2));
    let recover = |bg: &BulkGrid, basis: &FluxBasis, j: &BulkField, flux: [f64; 2]| {
        let j_bar = leray_project(bg, j, true, opts)?;
        let zero_div = bg.zeros();
        solve_div_curl(
            sg,
            bg,
            basis,
            &DivCurlData { curl_rhs: &j_bar, div_rhs: &zero_div, normal_bc: &zero_bc, wall_flux: flux },
            opts,
        )
    };
    Ok((
        recover(bgs.0, bases.0, j_star.0, h_flux.0)?,
        recover(bgs.1, bases.1, j_star.1, h_flux.1)?,
    ))
}

/// All parts of the pressure decomposition
/// `p/rho = p_vv - p_hh + alpha^2 p_kappa + p_b`.
pub struct PressureParts {
    pub p_vv: (BulkScalar, BulkScalar),
    pub p_hh: (BulkScalar, BulkScalar),
    pub p_kappa: (BulkScalar, BulkScalar),
    pub p_b: (BulkScalar, BulkScalar),
    pub frak_p: Array2<f64>,
    pub g_plus: Array2<f64>,
    pub g_minus: Array2<f64>,
    /// `Nbar^{-1}(N- kappa / rho-)`; its complement against the mean-free
    /// curvature gives the minus-side trace, so one inverse serves both.
    pub kappa_mid_plus: Array2<f64>,
    pub alpha: f64,
}

impl PressureParts {
    /// Trace of the full pressure `p_side` on the interface.
    pub fn trace(&self, pair: &DnPair, side: Side) -> Array2<f64> {
        let rho = pair.rho(side);
        let bg = pair.side(side).bg;
        let (pk, pb) = match side {
            Side::Plus => (&self.p_kappa.0, &self.p_b.0),
            Side::Minus => (&self.p_kappa.1, &self.p_b.1),
        };
        let tk = bg.face_scalar(pk, Face::Gamma);
        let tb = bg.face_scalar(pb, Face::Gamma);
        (tk * (self.alpha * self.alpha) + tb) * rho
    }

    /// Physical pressure gradient of one side (bulk).
    pub fn grad_pressure(&self, pair: &DnPair, side: Side) -> [Array3<f64>; 3] {
        let rho = pair.rho(side);
        let bg = pair.side(side).bg;
        let (pvv, phh, pk, pb) = match side {
            Side::Plus => (&self.p_vv.0, &self.p_hh.0, &self.p_kappa.0, &self.p_b.0),
            Side::Minus => (&self.p_vv.1, &self.p_hh.1, &self.p_kappa.1, &self.p_b.1),
        };
        let a2 = self.alpha * self.alpha;
        let total = pvv - phh + &pk.mapv(|v| v * a2) + pb;
        let g = bg.phys_grad(&total);
        [
            g[0].mapv(|v| v * rho),
            g[1].mapv(|v| v * rho),
            g[2].mapv(|v| v * rho),
        ]
    }
}

/// `tr(grad a . grad b)` for two physical fields (for the quadratic pressure
/// sources).
fn tr_grad_grad(bg: &BulkGrid, a: &BulkField, b: &BulkField) -> BulkScalar {
    let ga = bg.phys_grad_field(a);
    let gb = bg.phys_grad_field(b);
    let (n1, n2, nz) = bg.shape();
    let mut out = Array3::zeros((n1, n2, nz));
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                let mut acc = 0.0;
                for r in 0..3 {
                    for c in 0..3 {
                        acc += ga[r][c][[i, j, l]] * gb[c][r][[i, j, l]];
                    }
                }
                out[[i, j, l]] = acc;
            }
        }
    }
    out
}

/// Quadratic pressure solve: Lap p = -tr(grad a . grad a), p = 0 on the
/// interface, homogeneous Neumann at the (flat) wall.
fn quadratic_pressure(bg: &BulkGrid, a: &BulkField, opts: &SolveOpts) -> Result<BulkScalar> {
    let (n1, n2, _) = bg.shape();
    let src = tr_grad_grad(bg, a, a);
    let rhs = -(&bg.det * &src);
    let zero = Array2::zeros((n1, n2));
    solve_mapped(
        bg,
        &rhs,
        FaceBc { kind: BcKind::Dirichlet, data: &zero },
        FaceBc { kind: BcKind::Neumann, data: &zero },
        opts,
    )
}

/// Assemble the full pressure decomposition for recovered fields.
pub fn pressure_decomposition(
    sg: &SurfaceGeometry,
    pair: &DnPair,
    v: (&BulkField, &BulkField),
    h: (&BulkField, &BulkField),
    alpha: f64,
    opts: &SolveOpts,
) -> Result<PressureParts> {
    let (bgp, bgm) = (pair.plus.bg, pair.minus.bg);

    let p_vv = (quadratic_pressure(bgp, v.0, opts)?, quadratic_pressure(bgm, v.1, opts)?);
    let p_hh = (quadratic_pressure(bgp, h.0, opts)?, quadratic_pressure(bgm, h.1, opts)?);

    // interface assembly of g_pm
    let theta = sg.normal_part(&bgp.face_field(v.0, Face::Gamma));
    let g_of = |bg: &BulkGrid,
                side: Side,
                vf: &BulkField,
                hf: &BulkField,
                pvv: &BulkScalar,
                phh: &BulkScalar|
     -> Array2<f64> {
        let v_face = bg.face_field(vf, Face::Gamma);
        let v_tan = sg.tangential_part(&v_face);
        let h_face = bg.face_field(hf, Face::Gamma);
        let h_tan = sg.tangential_part(&h_face);
        let adv = sg.directional_derivative(&v_tan, &theta);
        let ii_vv = sg.ii_bilinear(&v_tan, &v_tan);
        let ii_hh = sg.ii_bilinear(&h_tan, &h_tan);
        // d/dn+ of (p_vv - p_hh): outward derivative flips sign on the minus side
        let diff = pvv - phh;
        let nd = pair.side(side).normal_derivative(&diff);
        let nd_plus = if side == Side::Plus { nd } else { nd.mapv(|v| -v) };
        &(&adv * 2.0) - &ii_vv + &ii_hh + &nd_plus
    };
    let g_plus = g_of(bgp, Side::Plus, v.0, h.0, &p_vv.0, &p_hh.0);
    let g_minus = g_of(bgm, Side::Minus, v.1, h.1, &p_vv.1, &p_hh.1);

    // frak p = Nbar^{-1}(-g+ + g-)
    let q = &g_minus - &g_plus;
    let frak_p = pair.nbar_inverse(&q)?;

    // p_b = H(frak p) / rho
    let ext_p = pair.plus.extension(&frak_p)?;
    let ext_m = pair.minus.extension(&frak_p)?;
    let p_b = (ext_p.mapv(|v| v / pair.rho_plus), ext_m.mapv(|v| v / pair.rho_minus));

    // p_kappa+/- = +/- H_pm Nbar^{-1}(N_mp kappa / rho_mp) / rho_pm; the
    // surface mean of kappa (lost to the mean-free inverse) is restored on
    // the plus side so the trace jump is exactly kappa. The two mid-fields
    // are complementary: their sum is the mean-free curvature, so a single
    // inverse provides both.
    let kappa_mean = sg.mean_ds(&sg.kappa);
    let n_minus_k = pair.minus.dn(&sg.kappa)?;
    let mid_p = pair.nbar_inverse(&n_minus_k.mapv(|v| v / pair.rho_minus))?;
    let mid_m = &sg.project_mean_free(&sg.kappa) - &mid_p;
    let pk_plus = {
        let shifted = mid_p.mapv(|v| v / pair.rho_plus) + kappa_mean / pair.rho_plus;
        pair.plus.extension(&shifted)?
    };
    let pk_minus = {
        let shifted = mid_m.mapv(|v| -v / pair.rho_minus);
        pair.minus.extension(&shifted)?
    };

    Ok(PressureParts {
        p_vv,
        p_hh,
        p_kappa: (pk_plus, pk_minus),
        p_b,
        frak_p,
        g_plus,
        g_minus,
        kappa_mid_plus: mid_p,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulk::harmonic_coordinates;
    use crate::chart::{HeightField, ReferenceChart};
    use crate::elliptic::GeometryMode;
    use crate::geometry::immerse;
    use crate::grid::DerivScheme;
    use std::f64::consts::PI;

    struct World {
        sg: SurfaceGeometry,
        plus: BulkGrid,
        minus: BulkGrid,
        basis_p: FluxBasis,
        basis_m: FluxBasis,
        opts: SolveOpts,
    }

    fn world(n: usize, nz: usize, h: impl Fn(f64, f64) -> f64) -> World {
        let chart = ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap().with_closeness(0.6);
        let sg = immerse(&chart, &HeightField::from_fn(&chart, h)).unwrap();
        let (plus, minus) = harmonic_coordinates(&sg, nz).unwrap();
        let opts = SolveOpts::default();
        let basis_p = FluxBasis::new(&plus, &opts).unwrap();
        let basis_m = FluxBasis::new(&minus, &opts).unwrap();
        World { sg, plus, minus, basis_p, basis_m, opts }
    }

    impl World {
        fn pair(&self) -> DnPair<'_> {
            DnPair::new(
                &self.sg,
                &self.plus,
                &self.minus,
                GeometryMode::TorusSlab,
                1.0,
                1.0,
                self.opts,
            )
        }
    }

    #[test]
    fn zero_data_gives_zero_field() {
        let w = world(16, 9, |_, _| 0.0);
        let zero_f = w.plus.zero_field();
        let zero_div = w.plus.zeros();
        let zero_bc = Array2::zeros((16, 16));
        let u = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData { curl_rhs: &zero_f, div_rhs: &zero_div, normal_bc: &zero_bc, wall_flux: [0.0, 0.0] },
            &w.opts,
        )
        .unwrap();
        assert!(u.max_norm() < 1e-11, "nonzero field from zero data: {}", u.max_norm());
    }

    #[test]
    fn constant_field_from_flux_constraint() {
        let w = world(16, 9, |_, _| 0.0);
        let zero_f = w.plus.zero_field();
        let zero_div = w.plus.zeros();
        let zero_bc = Array2::zeros((16, 16));
        let u = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData { curl_rhs: &zero_f, div_rhs: &zero_div, normal_bc: &zero_bc, wall_flux: [1.0, 0.0] },
            &w.opts,
        )
        .unwrap();
        let mut max_err = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                for l in 0..9 {
                    max_err = max_err.max((u.comps[0][[i, j, l]] - 1.0).abs());
                    max_err = max_err.max(u.comps[1][[i, j, l]].abs());
                    max_err = max_err.max(u.comps[2][[i, j, l]].abs());
                }
            }
        }
        assert!(max_err < 1e-10, "flat constant-flux field error {max_err:.3e}");
    }

    #[test]
    fn harmonic_gradient_manufactured_solution() {
        // u = grad(H f) for f = sin(2 pi x): curl-free, div-free, known normal trace
        let w = world(64, 21, |_, _| 0.0);
        let pair = w.pair();
        let f = w.sg.grid.field_from_fn(|x, _| (2.0 * PI * x).sin());
        let ext = pair.plus.extension(&f).unwrap();
        let g = w.plus.phys_grad(&ext);
        let exact = BulkField { side: Side::Plus, comps: [g[0].clone(), g[1].clone(), g[2].clone()] };

        let normal_bc = pair.plus.normal_derivative(&ext);
        let zero_f = w.plus.zero_field();
        let zero_div = w.plus.zeros();
        let u = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData {
                curl_rhs: &zero_f,
                div_rhs: &zero_div,
                normal_bc: &normal_bc,
                wall_flux: wall_flux(&w.plus, &exact),
            },
            &w.opts,
        )
        .unwrap();
        let err = u.sub(&exact).max_norm() / exact.max_norm();
        assert!(err < 1e-6, "manufactured harmonic-gradient error {err:.3e}");
    }

    #[test]
    fn recovered_field_has_prescribed_invariants() {
        // curved interface, manufactured vorticity via curl of a smooth field
        let w = world(24, 17, |x, y| 0.02 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        // a divergence-free curl source: curl of a smooth vector potential
        let mut seed = w.plus.zero_field();
        for i in 0..24 {
            for j in 0..24 {
                for l in 0..17 {
                    let (x, y) = w.plus.grid.coords(i, j);
                    let s = w.plus.cheb.s[l];
                    seed.comps[0][[i, j, l]] = 0.3 * (2.0 * PI * y).sin() * s * (1.0 - s);
                    seed.comps[1][[i, j, l]] = 0.2 * (2.0 * PI * x).cos() * s * (1.0 - s);
                    seed.comps[2][[i, j, l]] = 0.0;
                }
            }
        }
        let omega = w.plus.phys_curl(&seed);
        let theta = w.sg.grid.field_from_fn(|x, y| 1e-3 * ((2.0 * PI * x).cos() + (2.0 * PI * y).sin()));
        // make the normal trace compatible: mean-free against the surface measure
        let theta = w.sg.project_mean_free(&theta);
        let zero_div = w.plus.zeros();
        let ob = leray_project(&w.plus, &omega, true, &w.opts).unwrap();
        let u = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData { curl_rhs: &ob, div_rhs: &zero_div, normal_bc: &theta, wall_flux: [0.1, -0.2] },
            &w.opts,
        )
        .unwrap();

        // curl matches
        let cu = w.plus.phys_curl(&u);
        let curl_err = cu.sub(&ob).max_norm() / ob.max_norm().max(1e-300);
        assert!(curl_err < 1e-6, "curl mismatch {curl_err:.3e}");
        // divergence small on the PDE-enforced levels
        let max_div = w.plus.max_interior_div(&u);
        assert!(max_div < 1e-7 * u.max_norm(), "residual divergence {max_div:.3e}");
        // normal trace at the interface
        let trace = w.sg.normal_part(&w.plus.face_field(&u, Face::Gamma));
        let trace_err = w.sg.grid.max_abs(&(&trace - &theta));
        assert!(trace_err < 1e-7 * u.max_norm().max(1.0), "normal trace error {trace_err:.3e}");
        // wall flux and tangency
        let wf = wall_flux(&w.plus, &u);
        assert!((wf[0] - 0.1).abs() < 1e-10 && (wf[1] + 0.2).abs() < 1e-10);
        let wall_face = w.plus.face_field(&u, Face::Wall);
        assert!(w.plus.grid.max_abs(&wall_face.z) < 1e-8 * u.max_norm());

        // uniqueness: a second solve from a different iterate path agrees
        let mut opts2 = w.opts;
        opts2.tol = 1e-13;
        let u2 = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData { curl_rhs: &ob, div_rhs: &zero_div, normal_bc: &theta, wall_flux: [0.1, -0.2] },
            &opts2,
        )
        .unwrap();
        let agree = u.sub(&u2).max_norm() / u.max_norm();
        assert!(agree < 1e-9, "two solves disagree by {agree:.3e}");
    }

    #[test]
    fn compatibility_violation_is_refused() {
        let w = world(16, 9, |_, _| 0.0);
        let zero_f = w.plus.zero_field();
        let zero_div = w.plus.zeros();
        // incompatible: nonzero net normal trace with zero divergence
        let bc = Array2::from_elem((16, 16), 0.5);
        let res = solve_div_curl(
            &w.sg,
            &w.plus,
            &w.basis_p,
            &DivCurlData { curl_rhs: &zero_f, div_rhs: &zero_div, normal_bc: &bc, wall_flux: [0.0, 0.0] },
            &w.opts,
        );
        assert!(matches!(res, Err(Error::CompatibilityViolation(_))));
    }

    #[test]
    fn leray_projection_properties() {
        let w = world(24, 13, |x, _| 0.05 * (2.0 * PI * x).sin());
        // a divergence-free field stays fixed (idempotence on solenoidal input)
        let mut seed = w.minus.zero_field();
        for i in 0..24 {
            for j in 0..24 {
                for l in 0..13 {
                    let (x, y) = w.minus.grid.coords(i, j);
                    let s = w.minus.cheb.s[l];
                    seed.comps[0][[i, j, l]] = (2.0 * PI * y).sin() * (0.5 + s);
                    seed.comps[1][[i, j, l]] = (2.0 * PI * x).sin();
                    seed.comps[2][[i, j, l]] = 0.1 * s * (1.0 - s);
                }
            }
        }
        let sol = w.minus.phys_curl(&seed);
        let p1 = leray_project(&w.minus, &sol, false, &w.opts).unwrap();
        let fixed = p1.sub(&sol).max_norm() / sol.max_norm();
        assert!(fixed < 1e-9, "projection moved a solenoidal field by {fixed:.3e}");

        // random-ish field: projected divergence vanishes
        let mut y = sol.clone();
        for i in 0..24 {
            for j in 0..24 {
                for l in 0..13 {
                    let (xx, yy) = w.minus.grid.coords(i, j);
                    let s = w.minus.cheb.s[l];
                    y.comps[0][[i, j, l]] += 0.3 * (2.0 * PI * xx).cos() * s;
                    y.comps[2][[i, j, l]] += 0.2 * (2.0 * PI * yy).sin() * (1.0 - s) * s;
                }
            }
        }
        let py = leray_project(&w.minus, &y, true, &w.opts).unwrap();
        let max_div = w.minus.max_interior_div(&py);
        assert!(max_div < 1e-8 * y.max_norm(), "projected divergence {max_div:.3e}");

        // pure gradient with zero interface trace projects to (near) zero
        let chi = {
            let zero = Array2::zeros((24, 24));
            let mut rhs = w.minus.zeros();
            for i in 0..24 {
                for j in 0..24 {
                    for l in 0..13 {
                        let (x, _) = w.minus.grid.coords(i, j);
                        rhs[[i, j, l]] = (2.0 * PI * x).sin() * w.minus.det[[i, j, l]];
                    }
                }
            }
            solve_mapped(
                &w.minus,
                &rhs,
                FaceBc { kind: BcKind::Dirichlet, data: &zero },
                FaceBc { kind: BcKind::Neumann, data: &zero },
                &w.opts,
            )
            .unwrap()
        };
        let g = w.minus.phys_grad(&chi);
        let grad_field = BulkField { side: Side::Minus, comps: [g[0].clone(), g[1].clone(), g[2].clone()] };
        let pg = leray_project(&w.minus, &grad_field, false, &w.opts).unwrap();
        assert!(
            pg.max_norm() < 1e-8 * grad_field.max_norm().max(1.0),
            "gradient survived projection: {}",
            pg.max_norm()
        );
    }

    #[test]
    fn magnetic_recovery_tangency() {
        let w = world(24, 13, |x, y| 0.03 * (2.0 * PI * (x + y)).sin());
        let pair = w.pair();
        let zero_j_p = w.plus.zero_field();
        let zero_j_m = w.minus.zero_field();
        let (hp, hm) = recover_magnetic(
            &w.sg,
            (&w.plus, &w.minus),
            (&w.basis_p, &w.basis_m),
            (&zero_j_p, &zero_j_m),
            ([1.0, 0.0], [0.7, 0.3]),
            &w.opts,
        )
        .unwrap();
        let _ = &pair;
        for (bg, h) in [(&w.plus, &hp), (&w.minus, &hm)] {
            let trace = w.sg.normal_part(&bg.face_field(h, Face::Gamma));
            assert!(
                w.sg.grid.max_abs(&trace) <= 1e-8 * h.max_norm(),
                "magnetic field not tangent: {:.3e}",
                w.sg.grid.max_abs(&trace)
            );
        }
        // flat-chart oracle: with zero current and flux (1,0), the plus field
        // is close to the constant e1 (exactly for a flat interface)
        let w2 = world(16, 9, |_, _| 0.0);
        let zero_j = w2.plus.zero_field();
        let (hp2, _) = recover_magnetic(
            &w2.sg,
            (&w2.plus, &w2.minus),
            (&w2.basis_p, &w2.basis_m),
            (&zero_j, &w2.minus.zero_field()),
            ([1.0, 0.0], [0.0, 0.0]),
            &w2.opts,
        )
        .unwrap();
        let mut max_err = 0.0f64;
        for i in 0..16 {
            for j in 0..16 {
                for l in 0..9 {
                    max_err = max_err.max((hp2.comps[0][[i, j, l]] - 1.0).abs());
                    max_err = max_err.max(hp2.comps[1][[i, j, l]].abs());
                    max_err = max_err.max(hp2.comps[2][[i, j, l]].abs());
                }
            }
        }
        assert!(max_err < 1e-9, "constant magnetic recovery error {max_err:.3e}");
    }

    #[test]
    fn pressure_identities() {
        // curved interface with nonzero recovered fields
        let w = world(24, 17, |x, y| {
            0.02 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.01 * (2.0 * PI * y).sin()
        });
        let pair = w.pair();

        let theta = w.sg.project_mean_free(
            &w.sg.grid.field_from_fn(|x, y| 0.02 * ((2.0 * PI * x).cos() - (2.0 * PI * y).sin())),
        );
        let zero_o_p = w.plus.zero_field();
        let zero_o_m = w.minus.zero_field();
        let (vp, vm) = recover_velocity(
            &w.sg,
            (&w.plus, &w.minus),
            (&w.basis_p, &w.basis_m),
            &theta,
            (&zero_o_p, &zero_o_m),
            ([0.3, 0.0], [-0.2, 0.1]),
            &w.opts,
        )
        .unwrap();
        let (hp, hm) = recover_magnetic(
            &w.sg,
            (&w.plus, &w.minus),
            (&w.basis_p, &w.basis_m),
            (&zero_o_p, &zero_o_m),
            ([1.0, 0.2], [0.4, -0.8]),
            &w.opts,
        )
        .unwrap();

        let alpha = 1.0;
        let parts =
            pressure_decomposition(&w.sg, &pair, (&vp, &vm), (&hp, &hm), alpha, &w.opts).unwrap();

        // interface values of the quadratic parts vanish (Dirichlet rows)
        for (bg, p) in [(&w.plus, &parts.p_vv.0), (&w.minus, &parts.p_vv.1)] {
            let t = bg.face_scalar(p, Face::Gamma);
            assert!(bg.grid.max_abs(&t) < 1e-11);
        }

        // rho+ p_b+ = rho- p_b- on the interface
        let tb_p = w.plus.face_scalar(&parts.p_b.0, Face::Gamma) * pair.rho_plus;
        let tb_m = w.minus.face_scalar(&parts.p_b.1, Face::Gamma) * pair.rho_minus;
        assert!(w.sg.grid.max_abs(&(&tb_p - &tb_m)) < 1e-9 * w.sg.grid.max_abs(&tb_p).max(1.0));

        // pressure jump equals alpha^2 kappa pointwise
        let jump = &parts.trace(&pair, Side::Plus) - &parts.trace(&pair, Side::Minus);
        let target = w.sg.kappa.mapv(|k| alpha * alpha * k);
        let jump_err = w.sg.grid.max_abs(&(&jump - &target));
        let kappa_scale = w.sg.grid.max_abs(&w.sg.kappa).max(1.0);
        assert!(jump_err <= 1e-7 * kappa_scale, "pressure jump error {jump_err:.3e}");

        // integral identity: int (g+ - g-) dS = 0 for solenoidal fields
        let imbalance = w.sg.integral(&(&parts.g_plus - &parts.g_minus));
        let scale = vp.max_norm().powi(2)
            + vm.max_norm().powi(2)
            + hp.max_norm().powi(2)
            + hm.max_norm().powi(2);
        assert!(
            imbalance.abs() <= 1e-7 * scale.max(1e-12),
            "g+/g- imbalance {imbalance:.3e} vs scale {scale:.3e}"
        );
    }
}
