//! Energy diagnostics.
//!
//! The conserved energy is the total kinetic plus magnetic energy weighted
//! by the densities plus the capillary area term. The higher diagnostics
//! track the curvature evolution (interface Sobolev norms), the bulk
//! vorticity and current, and the wall fluxes; the linear-theory energy of
//! the curvature equation is evaluated at its base level through computable
//! quadratic forms of the composite operator.

use super::operators::operator_r_apply;
use super::{chart_transport_field, weighted_velocity, PlasmaParams, Recovered, SimState};
use crate::bulk::{BulkField, BulkGrid, Side};
use crate::chart::ReferenceChart;
use crate::error::Result;
use ndarray::{Array2, Array3};

#[derive(Clone, Copy, Debug, Default)]
pub struct Energies {
    /// Conserved: kinetic + magnetic + alpha^2 |Gamma|.
    pub e0: f64,
    /// Curvature-evolution diagnostic (Sobolev norms at base regularity).
    pub e1: f64,
    /// Bulk vorticity/current diagnostic.
    pub e2: f64,
    /// Wall-flux diagnostic.
    pub e3: f64,
    /// Base-level linear-theory energy of the curvature equation.
    pub el_diag: f64,
}

fn field_energy(bg: &BulkGrid, f: &BulkField) -> f64 {
    let (n1, n2, nz) = bg.shape();
    let mut sq = Array3::zeros((n1, n2, nz));
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                let mut acc = 0.0;
                for c in 0..3 {
                    let v = f.comps[c][[i, j, l]];
                    acc += v * v;
                }
                sq[[i, j, l]] = acc;
            }
        }
    }
    bg.volume_integral(&sq)
}

/// Volume H^2-type norm squared: L2 of the field and of its first and
/// second physical derivatives.
fn h2_norm_sq(bg: &BulkGrid, f: &BulkField) -> f64 {
    let mut total = field_energy(bg, f);
    for c in 0..3 {
        let g = bg.phys_grad(&f.comps[c]);
        for gc in g.iter() {
            let sq = gc.mapv(|v| v * v);
            total += bg.volume_integral(&sq);
            // second derivatives
        }
        for gc in g.iter() {
            let gg = bg.phys_grad(gc);
            for ggc in gg.iter() {
                let sq = ggc.mapv(|v| v * v);
                total += bg.volume_integral(&sq);
            }
        }
    }
    total
}

/// Compute all energy diagnostics for a recovered state.
pub fn energy_functionals(
    chart: &ReferenceChart,
    rec: &Recovered,
    state: &SimState,
    params: &PlasmaParams,
) -> Result<Energies> {
    let sg = &rec.sg;
    let a2 = params.alpha * params.alpha;

    // E0
    let e0 = 0.5 * params.rho_plus * (field_energy(&rec.bg_plus, &rec.v.0) + field_energy(&rec.bg_plus, &rec.h.0))
        + 0.5
            * params.rho_minus
            * (field_energy(&rec.bg_minus, &rec.v.1) + field_energy(&rec.bg_minus, &rec.h.1))
        + a2 * sg.area();

    // E1: |Dt kappa|_{H^{1/2}}^2 + alpha^2 |kappa|_{H^2}^2 + |kappa|_{H^{3/2}}^2
    let (u, w) = weighted_velocity(rec, params)?;
    let u_star = chart_transport_field(chart, rec, &u);
    let kappa = &sg.kappa;
    let kappa_t = {
        // d/dt (kappa o Phi) = d/dt kappa_a - a^2 d gamma/dt
        let a_sq = params.a * params.a;
        &state.kappa_a_dot - &rec.gamma_dot.mapv(|v| v * a_sq)
    };
    let dt_kappa = &kappa_t + &sg.directional_derivative(&u_star, kappa);
    let sp = &sg.grid.spectral;
    let e1 = sp.hs_norm_sq(&dt_kappa, 0.5) + a2 * sp.hs_norm_sq(kappa, 2.0) + sp.hs_norm_sq(kappa, 1.5);

    // E2
    let e2 = h2_norm_sq(&rec.bg_plus, &state.omega_star.0)
        + h2_norm_sq(&rec.bg_minus, &state.omega_star.1)
        + h2_norm_sq(&rec.bg_plus, &state.j_star.0)
        + h2_norm_sq(&rec.bg_minus, &state.j_star.1);

    // E3
    let sq2 = |v: [f64; 2]| v[0] * v[0] + v[1] * v[1];
    let e3 = sq2(state.wall_flux.v_plus)
        + sq2(state.wall_flux.v_minus)
        + sq2(state.wall_flux.h_plus)
        + sq2(state.wall_flux.h_minus);

    // base-level linear energy:
    // <Ntilde Dt f, Dt f> + <-Lap(Ntilde f), Ntilde f>
    //   - c_w <Ntilde D_w f, D_w f> + c+ <Ntilde D_h+ f, D_h+ f>
    //   + c- <Ntilde D_h- f, D_h- f>, f = kappa o Phi
    let pair = rec.pair(params);
    let quad = |g: &Array2<f64>| -> Result<f64> {
        let ng = pair.ntilde(g)?;
        Ok(sg.inner(&ng, g))
    };
    let hp = rec.face(super::FieldKind::Magnetic, Side::Plus);
    let hm = rec.face(super::FieldKind::Magnetic, Side::Minus);
    let hp_star = sg.tangential_part(&hp);
    let hm_star = sg.tangential_part(&hm);
    let dw = sg.directional_derivative(&w, kappa);
    let dhp = sg.directional_derivative(&hp_star, kappa);
    let dhm = sg.directional_derivative(&hm_star, kappa);
    let nt_k = pair.ntilde(kappa)?;
    let grad_term = {
        let lap = sg.laplace_beltrami(&nt_k);
        -sg.inner(&lap, &nt_k)
    };
    let el_diag = quad(&dt_kappa)? + grad_term - params.c_w() * quad(&dw)?
        + params.c_plus() * quad(&dhp)?
        + params.c_minus() * quad(&dhm)?;
    let _ = operator_r_apply; // R is exercised through the quadratic forms above

    Ok(Energies { e0, e1, e2, e3, el_diag })
}
