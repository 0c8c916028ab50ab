use cvsheet_core::bulk::*;
use cvsheet_core::chart::*;
use cvsheet_core::elliptic::*;
use cvsheet_core::fields::*;
use cvsheet_core::geometry::*;
use cvsheet_core::grid::*;
use ndarray::Array2;
use std::f64::consts::PI;
use std::time::Instant;

fn main() {
    let n = 24; let nz = 13;
    let chart = ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap().with_closeness(0.6);
    let sg = immerse(&chart, &HeightField::from_fn(&chart, |x, y| {
        0.04 * (2.0*PI*x).sin() * (2.0*PI*y).cos() + 0.02 * (2.0*PI*y).sin()
    })).unwrap();
    let t0 = Instant::now();
    let (plus, minus) = harmonic_coordinates(&sg, nz).unwrap();
    println!("maps: {:?}", t0.elapsed());
    let opts = SolveOpts::default();

    let t0 = Instant::now();
    let pair = DnPair::new(&sg, &plus, &minus, GeometryMode::TorusSlab, 1.0, 1.0, opts);
    let f = sg.grid.field_from_fn(|x, _| (2.0*PI*x).sin());
    let e = pair.plus.extension(&f).unwrap();
    println!("one dirichlet extension: {:?} (|e| {:.3})", t0.elapsed(), e[[0,0,0]]);

    let t0 = Instant::now();
    let basis = FluxBasis::new(&plus, &opts).unwrap();
    println!("flux basis (2 neumann solves): {:?}", t0.elapsed());
    let _ = basis;

    let t0 = Instant::now();
    let inv = pair.nbar_inverse(&f).unwrap();
    println!("nbar_inverse: {:?} (val {:.3e})", t0.elapsed(), inv[[1,1]]);

    let t0 = Instant::now();
    let nt = pair.ntilde(&f).unwrap();
    println!("ntilde: {:?} ({:.3e})", t0.elapsed(), nt[[1,1]]);

    // a full quadratic pressure solve
    let mut v = plus.zero_field();
    for i in 0..n { for j in 0..n { for l in 0..nz {
        let (x, y) = plus.grid.coords(i, j);
        let s = plus.cheb.s[l];
        v.comps[0][[i,j,l]] = (2.0*PI*y).sin()*(0.5+s);
        v.comps[1][[i,j,l]] = (2.0*PI*x).sin();
        v.comps[2][[i,j,l]] = 0.1*s*(1.0-s);
    }}}
    let t0 = Instant::now();
    let zero = Array2::zeros((n, n));
    let src = plus.phys_div(&v);
    let rhs = &plus.det * &src;
    let p = solve_mapped(&plus, &rhs,
        FaceBc { kind: BcKind::Dirichlet, data: &zero },
        FaceBc { kind: BcKind::Neumann, data: &zero }, &opts).unwrap();
    println!("one mixed curved solve: {:?} ({:.3e})", t0.elapsed(), p[[1,1,1]]);
}
