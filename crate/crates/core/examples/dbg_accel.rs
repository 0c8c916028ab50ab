use cvsheet_core::bulk::*;
use cvsheet_core::chart::*;
use cvsheet_core::dynamics::{self, *};
use cvsheet_core::grid::*;
use ndarray::Array2;
use std::f64::consts::PI;

fn mx(a: &Array2<f64>) -> f64 { a.iter().fold(0.0f64, |m, &x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) }) }

fn main() {
    let n = 32;
    let ch = ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap().with_closeness(0.6);
    let params = PlasmaParams { alpha: 0.0, nz: 17, ..Default::default() };
    let eps = 1e-6;
    let gamma = HeightField::from_fn(&ch, |x, _| eps * (2.0 * PI * x).sin());
    let zero = BulkField::zeros(Side::Plus, n, n, params.nz);
    let zero_m = BulkField::zeros(Side::Minus, n, n, params.nz);
    let flux = WallFluxes { v_plus: [0.5, 0.0], v_minus: [-0.5, 0.0], h_plus: [0.0; 2], h_minus: [0.0; 2] };
    let state = dynamics::make_state(&ch, &params, &gamma, &Array2::zeros((n, n)), (zero.clone(), zero_m.clone()), (zero, zero_m), flux).unwrap();
    let rec = dynamics::recover(&ch, &params, &state).unwrap();
    println!("theta max {:.3e}", mx(&rec.theta));
    println!("v+ max {:.3e}  v- max {:.3e}", rec.v.0.max_norm(), rec.v.1.max_norm());
    println!("g+ max {:.3e}  g- max {:.3e}", mx(&rec.pressure.g_plus), mx(&rec.pressure.g_minus));
    println!("frak_p max {:.3e}", mx(&rec.pressure.frak_p));
    println!("kappa_mid max {:.3e}", mx(&rec.pressure.kappa_mid_plus));
    println!("p_vv+ trace-interior {:.3e}", rec.pressure.p_vv.0.iter().fold(0.0f64, |m, &x| m.max(x.abs())));
    let (accel, gdd) = kappa_accel(&ch, &rec, &params).unwrap();
    println!("accel max {:.3e}  gdd max {:.3e}", mx(&accel), mx(&gdd));
}
