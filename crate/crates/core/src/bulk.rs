//! Mapped slab grids for the two fluid domains.
//!
//! Each side of the interface is gridded over a parameter box
//! `T^2 x [0,1]` (Fourier x Chebyshev); the harmonic coordinate map sends
//! the box onto the moving fluid domain, equal to the interface on one face
//! and the identity on the wall. All bulk calculus is pulled back through
//! the map: physical gradients use the inverse Jacobian, divergence and curl
//! use the Piola transforms, so discrete `curl grad = 0` and `div curl = 0`
//! hold exactly as matrix identities.
//!
//! Orientation: the plus side is the lower domain (wall `z = -1`), the minus
//! side the upper one (wall `z = +1`). The parameter coordinate `s` always
//! increases with physical `z`, so the interface face is `s = 1` on the plus
//! side and `s = 0` on the minus side, and the map determinant stays positive.

use crate::chart::VecField2;
use crate::cheb::Cheb;
use crate::error::{Error, Result};
use crate::fft::Spectral2;
use crate::geometry::SurfaceGeometry;
use crate::grid::ChartGrid;
use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, Array3};
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn wall_z(self) -> f64 {
        match self {
            Side::Plus => -1.0,
            Side::Minus => 1.0,
        }
    }

    pub fn other(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// Which face of the parameter box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Face {
    Gamma,
    Wall,
}

/// Boundary condition kind for vertical mode solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    Dirichlet,
    /// Conormal (outward) derivative row.
    Neumann,
}

/// A scalar sampled on the parameter box of one side.
pub type BulkScalar = Array3<f64>;

/// A vector field in physical Cartesian components on the parameter box.
#[derive(Clone, Debug)]
pub struct BulkField {
    pub side: Side,
    pub comps: [Array3<f64>; 3],
}

impl BulkField {
    pub fn zeros(side: Side, n1: usize, n2: usize, nz: usize) -> Self {
        BulkField {
            side,
            comps: [
                Array3::zeros((n1, n2, nz)),
                Array3::zeros((n1, n2, nz)),
                Array3::zeros((n1, n2, nz)),
            ],
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        BulkField { side: self.side, comps: [&self.comps[0] * c, &self.comps[1] * c, &self.comps[2] * c] }
    }

    pub fn add(&self, o: &Self) -> Self {
        BulkField {
            side: self.side,
            comps: [
                &self.comps[0] + &o.comps[0],
                &self.comps[1] + &o.comps[1],
                &self.comps[2] + &o.comps[2],
            ],
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn max_norm(&self) -> f64 {
        let mut m = 0.0f64;
        for ((a, b), c) in self.comps[0].iter().zip(self.comps[1].iter()).zip(self.comps[2].iter()) {
            m = m.max((a * a + b * b + c * c).sqrt());
        }
        m
    }
}

/// Cached per-mode vertical solver for `cs * D^2 - cb * |k|^2` with two
/// boundary rows. The `k = 0` Neumann-Neumann system pins the profile mean.
pub struct BoxSolver {
    cheb: Arc<Cheb>,
    spectral: Arc<Spectral2>,
    pub cs: f64,
    pub cb: f64,
    /// (bc at s=0 face, conormal sign there), (bc at s=1, sign)
    bc0: (BcKind, f64),
    bc1: (BcKind, f64),
    lus: Vec<nalgebra::linalg::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    slot: Array2<usize>,
    singular_mode: Option<(usize, usize)>,
}

impl BoxSolver {
    pub fn new(
        cheb: Arc<Cheb>,
        spectral: Arc<Spectral2>,
        cs: f64,
        cb: f64,
        cn: f64,
        bc0: (BcKind, f64),
        bc1: (BcKind, f64),
    ) -> Self {
        let nz = cheb.n;
        let (n1, n2) = (spectral.n1, spectral.n2);
        let mut key_to_slot: HashMap<u64, usize> = HashMap::new();
        let mut slot = Array2::zeros((n1, n2));
        let mut k2s: Vec<f64> = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                let k2 = spectral.k1[i] * spectral.k1[i] + spectral.k2[j] * spectral.k2[j];
                let key = k2.to_bits();
                let s = *key_to_slot.entry(key).or_insert_with(|| {
                    k2s.push(k2);
                    k2s.len() - 1
                });
                slot[[i, j]] = s;
            }
        }
        let both_neumann = bc0.0 == BcKind::Neumann && bc1.0 == BcKind::Neumann;
        let singular_mode = if both_neumann { Some((0, 0)) } else { None };

        let lus = k2s
            .iter()
            .map(|&k2| {
                let mut a = DMatrix::zeros(nz, nz);
                for r in 1..nz - 1 {
                    for c in 0..nz {
                        let mut v = 0.0;
                        for m in 0..nz {
                            v += cheb.d[(r, m)] * cheb.d[(m, c)];
                        }
                        a[(r, c)] = cs * v;
                    }
                    a[(r, r)] -= cb * k2;
                }
                // face rows
                for (row, (kind, sign)) in [(0usize, bc0), (nz - 1, bc1)] {
                    match kind {
                        BcKind::Dirichlet => {
                            for c in 0..nz {
                                a[(row, c)] = 0.0;
                            }
                            a[(row, row)] = 1.0;
                        }
                        BcKind::Neumann => {
                            if both_neumann && k2 == 0.0 && row == nz - 1 {
                                // pin the mean instead of the redundant flux row
                                for c in 0..nz {
                                    a[(row, c)] = cheb.w[c];
                                }
                            } else {
                                for c in 0..nz {
                                    a[(row, c)] = sign * cn * cheb.d[(row, c)];
                                }
                            }
                        }
                    }
                }
                a.lu()
            })
            .collect();

        BoxSolver { cheb, spectral, cs, cb, bc0, bc1, lus, slot, singular_mode }
    }

    /// Solve with interior right-hand side `rhs` and boundary data per face
    /// (`data0` at s=0, `data1` at s=1), all in grid space.
    pub fn solve(&self, rhs: &Array3<f64>, data0: &Array2<f64>, data1: &Array2<f64>) -> Array3<f64> {
        let (n1, n2) = (self.spectral.n1, self.spectral.n2);
        let nz = self.cheb.n;
        let rhs_m = to_modes_levels(&self.spectral, rhs);
        let d0 = self.spectral.to_modes(data0);
        let d1 = self.spectral.to_modes(data1);
        let mut out_m = Array3::<Complex64>::zeros((n1, n2, nz));
        let mut b_re = DVector::zeros(nz);
        let mut b_im = DVector::zeros(nz);
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 1..nz - 1 {
                    let v = rhs_m[[i, j, l]];
                    b_re[l] = v.re;
                    b_im[l] = v.im;
                }
                b_re[0] = d0[[i, j]].re;
                b_im[0] = d0[[i, j]].im;
                if self.singular_mode == Some((i, j)) {
                    // mean pin carries zero data
                    b_re[nz - 1] = 0.0;
                    b_im[nz - 1] = 0.0;
                } else {
                    b_re[nz - 1] = d1[[i, j]].re;
                    b_im[nz - 1] = d1[[i, j]].im;
                }
                let lu = &self.lus[self.slot[[i, j]]];
                let xr = lu.solve(&b_re).expect("vertical mode solve failed");
                let xi = lu.solve(&b_im).expect("vertical mode solve failed");
                for l in 0..nz {
                    out_m[[i, j, l]] = Complex64::new(xr[l], xi[l]);
                }
            }
        }
        from_modes_levels(&self.spectral, &out_m)
    }

    pub fn bc_kinds(&self) -> (BcKind, BcKind) {
        (self.bc0.0, self.bc1.0)
    }
}

pub(crate) fn to_modes_levels(sp: &Spectral2, f: &Array3<f64>) -> Array3<Complex64> {
    let (n1, n2, nz) = f.dim();
    let mut out = Array3::zeros((n1, n2, nz));
    let mut level = Array2::zeros((n1, n2));
    for l in 0..nz {
        for i in 0..n1 {
            for j in 0..n2 {
                level[[i, j]] = f[[i, j, l]];
            }
        }
        let m = sp.to_modes(&level);
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j, l]] = m[[i, j]];
            }
        }
    }
    out
}

pub(crate) fn from_modes_levels(sp: &Spectral2, m: &Array3<Complex64>) -> Array3<f64> {
    let (n1, n2, nz) = m.dim();
    let mut out = Array3::zeros((n1, n2, nz));
    let mut level = Array2::zeros((n1, n2));
    for l in 0..nz {
        for i in 0..n1 {
            for j in 0..n2 {
                level[[i, j]] = m[[i, j, l]];
            }
        }
        let g = sp.to_grid(&level);
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j, l]] = g[[i, j]];
            }
        }
    }
    out
}

/// The mapped slab grid of one side: harmonic coordinates, Jacobians, and
/// the pulled-back metric weights.
pub struct BulkGrid {
    pub side: Side,
    pub grid: ChartGrid,
    pub cheb: Arc<Cheb>,
    pub nz: usize,
    /// Mean slab thickness of the affine base map.
    pub thickness: f64,
    /// Physical node positions.
    pub x: [Array3<f64>; 3],
    /// Jacobian `J[r][c] = d X_r / d xi_c` and its pointwise inverse.
    pub jac: [[Array3<f64>; 3]; 3],
    pub jac_inv: [[Array3<f64>; 3]; 3],
    pub det: Array3<f64>,
    /// Mapped stiffness `M = det * J^{-1} J^{-T}` (symmetric; 6 components).
    pub m: [Array3<f64>; 6],
    /// Interface area element and unit normal copied from the surface.
    pub sqrtg_gamma: Array2<f64>,
    pub normal_gamma: VecField2,
}

pub(crate) const M_IDX: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

impl BulkGrid {
    /// Level index of a face.
    pub fn face_level(&self, face: Face) -> usize {
        match (self.side, face) {
            (Side::Plus, Face::Gamma) | (Side::Minus, Face::Wall) => self.nz - 1,
            (Side::Plus, Face::Wall) | (Side::Minus, Face::Gamma) => 0,
        }
    }

    /// Outward direction (sign of +e_s) at a face.
    pub fn outward_sign(&self, face: Face) -> f64 {
        if self.face_level(face) == self.nz - 1 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.grid.n1, self.grid.n2, self.nz)
    }

    pub fn zeros(&self) -> BulkScalar {
        Array3::zeros(self.shape())
    }

    pub fn zero_field(&self) -> BulkField {
        BulkField::zeros(self.side, self.grid.n1, self.grid.n2, self.nz)
    }

    /// Reference-coordinate gradient (spectral in x,y; collocation in s).
    pub fn ref_grad(&self, f: &BulkScalar) -> [Array3<f64>; 3] {
        let (n1, n2, nz) = self.shape();
        let sp = &self.grid.spectral;
        let mut gx = Array3::zeros((n1, n2, nz));
        let mut gy = Array3::zeros((n1, n2, nz));
        let mut gs = Array3::zeros((n1, n2, nz));
        let mut level = Array2::zeros((n1, n2));
        for l in 0..nz {
            for i in 0..n1 {
                for j in 0..n2 {
                    level[[i, j]] = f[[i, j, l]];
                }
            }
            let dx = sp.deriv(&level, 0);
            let dy = sp.deriv(&level, 1);
            for i in 0..n1 {
                for j in 0..n2 {
                    gx[[i, j, l]] = dx[[i, j]];
                    gy[[i, j, l]] = dy[[i, j]];
                }
            }
        }
        let d = &self.cheb.d;
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    let mut acc = 0.0;
                    for m in 0..nz {
                        acc += d[(l, m)] * f[[i, j, m]];
                    }
                    gs[[i, j, l]] = acc;
                }
            }
        }
        [gx, gy, gs]
    }

    /// Reference-coordinate divergence of reference-component arrays.
    pub fn ref_div(&self, v: &[Array3<f64>; 3]) -> Array3<f64> {
        let gx = self.ref_grad(&v[0]);
        let gy = self.ref_grad(&v[1]);
        let gz = self.ref_grad(&v[2]);
        &gx[0] + &gy[1] + &gz[2]
    }

    /// Reference-coordinate curl of reference-component arrays.
    pub fn ref_curl(&self, v: &[Array3<f64>; 3]) -> [Array3<f64>; 3] {
        let g0 = self.ref_grad(&v[0]);
        let g1 = self.ref_grad(&v[1]);
        let g2 = self.ref_grad(&v[2]);
        [&g2[1] - &g1[2], &g0[2] - &g2[0], &g1[0] - &g0[1]]
    }

    /// Physical gradient of a bulk scalar: `J^{-T} grad_ref`.
    pub fn phys_grad(&self, f: &BulkScalar) -> [Array3<f64>; 3] {
        let g = self.ref_grad(f);
        let (n1, n2, nz) = self.shape();
        let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    for r in 0..3 {
                        let mut acc = 0.0;
                        for c in 0..3 {
                            // (J^{-T})_{rc} = (J^{-1})_{cr}
                            acc += self.jac_inv[c][r][[i, j, l]] * g[c][[i, j, l]];
                        }
                        out[r][[i, j, l]] = acc;
                    }
                }
            }
        }
        out
    }

    /// 1-form pullback `J^T u` of a physical-components field.
    pub fn pullback_oneform(&self, u: &BulkField) -> [Array3<f64>; 3] {
        let (n1, n2, nz) = self.shape();
        let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for r in 0..3 {
                            acc += self.jac[r][c][[i, j, l]] * u.comps[r][[i, j, l]];
                        }
                        out[c][[i, j, l]] = acc;
                    }
                }
            }
        }
        out
    }

    /// 2-form pullback `adj(J) u = det * J^{-1} u` of a physical field.
    pub fn pullback_twoform(&self, u: &BulkField) -> [Array3<f64>; 3] {
        let (n1, n2, nz) = self.shape();
        let mut out = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    let dv = self.det[[i, j, l]];
                    for c in 0..3 {
                        let mut acc = 0.0;
                        for r in 0..3 {
                            acc += self.jac_inv[c][r][[i, j, l]] * u.comps[r][[i, j, l]];
                        }
                        out[c][[i, j, l]] = dv * acc;
                    }
                }
            }
        }
        out
    }

    /// Physical divergence via the Piola identity.
    pub fn phys_div(&self, u: &BulkField) -> BulkScalar {
        let two = self.pullback_twoform(u);
        let mut d = self.ref_div(&two);
        for (v, dv) in d.iter_mut().zip(self.det.iter()) {
            *v /= dv;
        }
        d
    }

    /// Max |div u| over the PDE-collocation (interior) levels. The two face
    /// levels carry boundary-condition rows in every solve, so the operator
    /// residual is only enforced strictly in the interior.
    pub fn max_interior_div(&self, u: &BulkField) -> f64 {
        let d = self.phys_div(u);
        let (n1, n2, nz) = self.shape();
        let mut m = 0.0f64;
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 1..nz - 1 {
                    m = m.max(d[[i, j, l]].abs());
                }
            }
        }
        m
    }

    /// Physical curl via the 1-form pullback identity.
    pub fn phys_curl(&self, u: &BulkField) -> BulkField {
        let one = self.pullback_oneform(u);
        let rc = self.ref_curl(&one);
        let (n1, n2, nz) = self.shape();
        let mut out = self.zero_field();
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    let dv = self.det[[i, j, l]];
                    for r in 0..3 {
                        let mut acc = 0.0;
                        for c in 0..3 {
                            acc += self.jac[r][c][[i, j, l]] * rc[c][[i, j, l]];
                        }
                        out.comps[r][[i, j, l]] = acc / dv;
                    }
                }
            }
        }
        out
    }

    /// Gradient (physical) of each component of a field: `out[r][c] = d u_r / d x_c`.
    pub fn phys_grad_field(&self, u: &BulkField) -> [[Array3<f64>; 3]; 3] {
        let g0 = self.phys_grad(&u.comps[0]);
        let g1 = self.phys_grad(&u.comps[1]);
        let g2 = self.phys_grad(&u.comps[2]);
        [g0, g1, g2]
    }

    /// Volume integral of a bulk scalar over the physical domain.
    pub fn volume_integral(&self, f: &BulkScalar) -> f64 {
        let (n1, n2, nz) = self.shape();
        let cell = 1.0 / (n1 * n2) as f64;
        let mut acc = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    acc += f[[i, j, l]] * self.det[[i, j, l]] * self.cheb.w[l];
                }
            }
        }
        acc * cell
    }

    /// Extract a face level of a scalar.
    pub fn face_scalar(&self, f: &BulkScalar, face: Face) -> Array2<f64> {
        let l = self.face_level(face);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        Array2::from_shape_fn((n1, n2), |(i, j)| f[[i, j, l]])
    }

    /// Extract a face level of a field as three chart arrays.
    pub fn face_field(&self, u: &BulkField, face: Face) -> VecField2 {
        let l = self.face_level(face);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let mut out = VecField2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                out.set(i, j, [u.comps[0][[i, j, l]], u.comps[1][[i, j, l]], u.comps[2][[i, j, l]]]);
            }
        }
        out
    }

    /// Normal flux density through a face: `(adj(J) u) . e_s` there. At the
    /// interface this equals `(u . n_plus) sqrt(g)`; at the wall it is the
    /// physical `u . e3` times the horizontal area element (identity map).
    pub fn face_flux_density(&self, u: &BulkField, face: Face) -> Array2<f64> {
        let two = self.pullback_twoform(u);
        let l = self.face_level(face);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        Array2::from_shape_fn((n1, n2), |(i, j)| two[2][[i, j, l]])
    }

    /// Conormal flux density of a scalar through a face: `(M grad f) . e_s`.
    pub fn face_conormal(&self, f: &BulkScalar, face: Face) -> Array2<f64> {
        let g = self.ref_grad(f);
        let l = self.face_level(face);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        Array2::from_shape_fn((n1, n2), |(i, j)| {
            self.m_at(i, j, l, 2, 0) * g[0][[i, j, l]]
                + self.m_at(i, j, l, 2, 1) * g[1][[i, j, l]]
                + self.m_at(i, j, l, 2, 2) * g[2][[i, j, l]]
        })
    }

    #[inline]
    pub(crate) fn m_at(&self, i: usize, j: usize, l: usize, r: usize, c: usize) -> f64 {
        let (r, c) = if r <= c { (r, c) } else { (c, r) };
        let idx = M_IDX.iter().position(|&p| p == (r, c)).unwrap();
        self.m[idx][[i, j, l]]
    }

    /// Mapped-Laplacian apply at interior nodes: `div_ref(M grad_ref f)`.
    pub fn mapped_laplacian(&self, f: &BulkScalar) -> BulkScalar {
        let g = self.ref_grad(f);
        let (n1, n2, nz) = self.shape();
        let mut flux = [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))];
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    for r in 0..3 {
                        let mut acc = 0.0;
                        for c in 0..3 {
                            acc += self.m_at(i, j, l, r, c) * g[c][[i, j, l]];
                        }
                        flux[r][[i, j, l]] = acc;
                    }
                }
            }
        }
        self.ref_div(&flux)
    }

    /// Interpolate physical `z` of nodes (for wall-distance diagnostics).
    pub fn min_gamma_wall_distance(&self) -> f64 {
        let l = self.face_level(Face::Gamma);
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let mut dist = f64::INFINITY;
        for i in 0..n1 {
            for j in 0..n2 {
                dist = dist.min((self.x[2][[i, j, l]] - self.side.wall_z()).abs());
            }
        }
        dist
    }
}

/// Solve the harmonic coordinate maps of both sides for the given surface.
pub fn harmonic_coordinates(sg: &SurfaceGeometry, nz: usize) -> Result<(BulkGrid, BulkGrid)> {
    let plus = harmonic_side(sg, Side::Plus, nz)?;
    let minus = harmonic_side(sg, Side::Minus, nz)?;
    Ok((plus, minus))
}

fn harmonic_side(sg: &SurfaceGeometry, side: Side, nz: usize) -> Result<BulkGrid> {
    let grid = sg.grid.clone();
    let (n1, n2) = grid.shape();
    let cheb = Arc::new(Cheb::new(nz));
    let z_wall = side.wall_z();
    let z_mean = sg.phi.z.sum() / (n1 * n2) as f64;
    // s increases with physical z on both sides
    let (z_lo, z_hi) = if side == Side::Plus { (z_wall, z_mean) } else { (z_mean, z_wall) };
    let thickness = z_hi - z_lo;
    if thickness <= 0.05 {
        return Err(Error::FoldedMap { side, min_det: thickness });
    }

    // Dirichlet data for the periodic correction: interface face carries
    // Phi - base, wall face zero.
    let gamma_level_hi = side == Side::Plus; // interface at s=1?
    let base_at = |i: usize, j: usize, s: f64| -> [f64; 3] {
        let (x, y) = grid.coords(i, j);
        [x, y, z_lo + s * thickness]
    };
    let mut data_gamma = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let p = sg.phi.at(i, j);
            let s_gamma = if gamma_level_hi { 1.0 } else { 0.0 };
            let b = base_at(i, j, s_gamma);
            data_gamma.set(i, j, [p[0] - b[0], p[1] - b[1], p[2] - b[2]]);
        }
    }

    // componentwise Laplace solve on the box: (1/L^2) D^2 - |k|^2
    let solver = BoxSolver::new(
        cheb.clone(),
        grid.spectral.clone(),
        1.0 / (thickness * thickness),
        1.0,
        1.0,
        (BcKind::Dirichlet, -1.0),
        (BcKind::Dirichlet, 1.0),
    );
    let zero_rhs = Array3::zeros((n1, n2, nz));
    let zero_face = Array2::zeros((n1, n2));
    let mut x_arrays: Vec<Array3<f64>> = Vec::with_capacity(3);
    for c in 0..3 {
        let data = data_gamma.component(c);
        let corr = if gamma_level_hi {
            solver.solve(&zero_rhs, &zero_face, data)
        } else {
            solver.solve(&zero_rhs, data, &zero_face)
        };
        let mut xc = Array3::zeros((n1, n2, nz));
        for i in 0..n1 {
            for j in 0..n2 {
                for l in 0..nz {
                    let b = base_at(i, j, cheb.s[l]);
                    xc[[i, j, l]] = b[c] + corr[[i, j, l]];
                }
            }
        }
        x_arrays.push(xc);
    }
    let x: [Array3<f64>; 3] = [x_arrays.remove(0), x_arrays.remove(0), x_arrays.remove(0)];

    finish_grid(side, grid, cheb, nz, thickness, z_lo, x, sg)
}

/// Assemble Jacobian data for a given coordinate map.
#[allow(clippy::too_many_arguments)]
fn finish_grid(
    side: Side,
    grid: ChartGrid,
    cheb: Arc<Cheb>,
    nz: usize,
    thickness: f64,
    z_lo: f64,
    x: [Array3<f64>; 3],
    sg: &SurfaceGeometry,
) -> Result<BulkGrid> {
    let (n1, n2) = grid.shape();
    let tmp = BulkGrid {
        side,
        grid: grid.clone(),
        cheb: cheb.clone(),
        nz,
        thickness,
        x: [x[0].clone(), x[1].clone(), x[2].clone()],
        jac: empty9(n1, n2, nz),
        jac_inv: empty9(n1, n2, nz),
        det: Array3::zeros((n1, n2, nz)),
        m: [
            Array3::zeros((n1, n2, nz)),
            Array3::zeros((n1, n2, nz)),
            Array3::zeros((n1, n2, nz)),
            Array3::zeros((n1, n2, nz)),
            Array3::zeros((n1, n2, nz)),
            Array3::zeros((n1, n2, nz)),
        ],
        sqrtg_gamma: sg.sqrt_g.clone(),
        normal_gamma: sg.normal.clone(),
    };
    // Jacobian rows are reference gradients of the coordinate components.
    // Only the periodic correction to the affine base may be differentiated
    // spectrally; the base contributes constant entries. Computing the rows
    // with the same derivative operators keeps curl(J^T e_i) exactly zero
    // discretely.
    let mut jac = empty9(n1, n2, nz);
    for (r, xc) in x.iter().enumerate() {
        let mut periodic = xc.clone();
        for i in 0..n1 {
            for j in 0..n2 {
                let (cx, cy) = grid.coords(i, j);
                for l in 0..nz {
                    let base = match r {
                        0 => cx,
                        1 => cy,
                        _ => z_lo + cheb.s[l] * thickness,
                    };
                    periodic[[i, j, l]] -= base;
                }
            }
        }
        let g = tmp.ref_grad(&periodic);
        for c in 0..3 {
            jac[r][c] = g[c].clone();
        }
        match r {
            0 => jac[0][0].mapv_inplace(|v| v + 1.0),
            1 => jac[1][1].mapv_inplace(|v| v + 1.0),
            _ => jac[2][2].mapv_inplace(|v| v + thickness),
        }
    }
    let mut jac_inv = empty9(n1, n2, nz);
    let mut det = Array3::zeros((n1, n2, nz));
    let mut m = [
        Array3::zeros((n1, n2, nz)),
        Array3::zeros((n1, n2, nz)),
        Array3::zeros((n1, n2, nz)),
        Array3::zeros((n1, n2, nz)),
        Array3::zeros((n1, n2, nz)),
        Array3::zeros((n1, n2, nz)),
    ];
    let mut min_det = f64::INFINITY;
    for i in 0..n1 {
        for j in 0..n2 {
            for l in 0..nz {
                let a = [
                    [jac[0][0][[i, j, l]], jac[0][1][[i, j, l]], jac[0][2][[i, j, l]]],
                    [jac[1][0][[i, j, l]], jac[1][1][[i, j, l]], jac[1][2][[i, j, l]]],
                    [jac[2][0][[i, j, l]], jac[2][1][[i, j, l]], jac[2][2][[i, j, l]]],
                ];
                let d = det3(&a);
                min_det = min_det.min(d);
                if d <= 0.0 {
                    return Err(Error::FoldedMap { side, min_det: d });
                }
                let inv = inv3(&a, d);
                det[[i, j, l]] = d;
                for r in 0..3 {
                    for c in 0..3 {
                        jac_inv[r][c][[i, j, l]] = inv[r][c];
                    }
                }
                // M = det * J^{-1} J^{-T}
                for (idx, (r, c)) in M_IDX.iter().enumerate() {
                    let mut acc = 0.0;
                    for t in 0..3 {
                        acc += inv[*r][t] * inv[*c][t];
                    }
                    m[idx][[i, j, l]] = d * acc;
                }
            }
        }
    }
    Ok(BulkGrid {
        side,
        grid,
        cheb,
        nz,
        thickness,
        x,
        jac,
        jac_inv,
        det,
        m,
        sqrtg_gamma: sg.sqrt_g.clone(),
        normal_gamma: sg.normal.clone(),
    })
}

/// Solve the harmonic rate of the coordinate map for a given interface-face
/// velocity (wall face held fixed); used to pull transport back to the box.
pub fn map_time_derivative(bg: &BulkGrid, gamma_rate: &VecField2) -> [Array3<f64>; 3] {
    let (n1, n2) = bg.grid.shape();
    let solver = BoxSolver::new(
        bg.cheb.clone(),
        bg.grid.spectral.clone(),
        1.0 / (bg.thickness * bg.thickness),
        1.0,
        1.0,
        (BcKind::Dirichlet, -1.0),
        (BcKind::Dirichlet, 1.0),
    );
    let zero_rhs = Array3::zeros((n1, n2, bg.nz));
    let zero_face = Array2::zeros((n1, n2));
    let gamma_hi = bg.face_level(Face::Gamma) == bg.nz - 1;
    let mut out: Vec<Array3<f64>> = Vec::with_capacity(3);
    for c in 0..3 {
        let data = gamma_rate.component(c);
        let sol = if gamma_hi {
            solver.solve(&zero_rhs, &zero_face, data)
        } else {
            solver.solve(&zero_rhs, data, &zero_face)
        };
        out.push(sol);
    }
    [out.remove(0), out.remove(0), out.remove(0)]
}

fn empty9(n1: usize, n2: usize, nz: usize) -> [[Array3<f64>; 3]; 3] {
    [
        [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))],
        [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))],
        [Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz)), Array3::zeros((n1, n2, nz))],
    ]
}

fn det3(a: &[[f64; 3]; 3]) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

fn inv3(a: &[[f64; 3]; 3], det: f64) -> [[f64; 3]; 3] {
    let mut inv = [[0.0f64; 3]; 3];
    inv[0][0] = (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det;
    inv[1][0] = (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det;
    inv[2][0] = (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det;
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{HeightField, ReferenceChart};
    use crate::geometry::immerse;
    use crate::grid::DerivScheme;
    use std::f64::consts::PI;

    fn setup(n: usize, nz: usize, h: impl Fn(f64, f64) -> f64) -> (ReferenceChart, BulkGrid, BulkGrid) {
        let chart = ReferenceChart::flat(n, 0.0, DerivScheme::Spectral).unwrap().with_closeness(0.6);
        let sg = immerse(&chart, &HeightField::from_fn(&chart, h)).unwrap();
        let (p, m) = harmonic_coordinates(&sg, nz).unwrap();
        (chart, p, m)
    }

    #[test]
    fn identity_map_for_flat_interface() {
        let (_, plus, minus) = setup(16, 9, |_, _| 0.0);
        for bg in [&plus, &minus] {
            for i in 0..16 {
                for j in 0..16 {
                    for l in 0..9 {
                        let (x, y) = bg.grid.coords(i, j);
                        assert!((bg.x[0][[i, j, l]] - x).abs() < 1e-12);
                        assert!((bg.x[1][[i, j, l]] - y).abs() < 1e-12);
                        assert!((bg.det[[i, j, l]] - 1.0).abs() < 1e-10);
                    }
                }
            }
        }
        assert_eq!(plus.face_level(Face::Gamma), 8);
        assert_eq!(minus.face_level(Face::Gamma), 0);
    }

    #[test]
    fn constant_shift_gives_linear_shear() {
        let c = 0.05;
        let (_, plus, _) = setup(16, 9, move |_, _| c);
        // z-coordinate is affine in s with interface at z = c, and the
        // discrete Laplacian of the map vanishes
        for i in 0..16 {
            for j in 0..16 {
                let top = plus.x[2][[i, j, 8]];
                assert!((top - c).abs() < 1e-12);
            }
        }
        let lap = {
            let g = plus.ref_grad(&plus.x[2]);
            let gg = plus.ref_grad(&g[2]);
            // for the box operator (1/L^2) d_ss + horizontal: horizontal parts are zero here
            gg[2].clone()
        };
        for i in 0..16 {
            for j in 0..16 {
                for l in 1..8 {
                    assert!(lap[[i, j, l]].abs() < 1e-10, "interior Laplacian {}", lap[[i, j, l]]);
                }
            }
        }
    }

    #[test]
    fn sinusoid_correction_decays_from_interface() {
        let eps = 0.02;
        let (_, plus, _) = setup(32, 17, move |x, _| eps * (2.0 * PI * x).sin());
        // |X - base| bounded by the boundary amplitude and decaying toward the wall
        let mut max_dev_interface = 0.0f64;
        let mut max_dev_wall_adjacent = 0.0f64;
        for i in 0..32 {
            for j in 0..32 {
                let dev_top = (plus.x[2][[i, j, 16]] - plus.cheb.s[16] * plus.thickness + 1.0
                    - plus.side.wall_z()
                    - plus.cheb.s[16] * 0.0)
                    .abs();
                let _ = dev_top;
                max_dev_interface = max_dev_interface
                    .max((plus.x[2][[i, j, 16]] - (plus.side.wall_z() + plus.thickness)).abs());
                max_dev_wall_adjacent =
                    max_dev_wall_adjacent.max((plus.x[2][[i, j, 2]] - (plus.side.wall_z() + plus.cheb.s[2] * plus.thickness)).abs());
            }
        }
        assert!(max_dev_interface <= eps * 1.0001, "interface deviation {max_dev_interface}");
        // the k=1 harmonic mode decays like sinh(2 pi s L)/sinh(2 pi L); two
        // nodes from the wall it must be well below the surface amplitude
        assert!(
            max_dev_wall_adjacent < 0.35 * eps,
            "near-wall deviation {max_dev_wall_adjacent} vs eps {eps}"
        );
        assert!(plus.min_gamma_wall_distance() > 0.9);
    }

    #[test]
    fn piola_identities_are_exact() {
        // curl(grad) and div(curl) vanish discretely on a curved map
        let (_, plus, _) = setup(16, 9, |x, y| 0.04 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let f = {
            let mut f = plus.zeros();
            for i in 0..16 {
                for j in 0..16 {
                    for l in 0..9 {
                        let (x, y) = plus.grid.coords(i, j);
                        let s = plus.cheb.s[l];
                        f[[i, j, l]] = (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + s * s;
                    }
                }
            }
            f
        };
        // physical gradient as field, then physical curl of it
        let g = plus.phys_grad(&f);
        let gf = BulkField { side: Side::Plus, comps: [g[0].clone(), g[1].clone(), g[2].clone()] };
        let c = plus.phys_curl(&gf);
        assert!(c.max_norm() < 1e-9, "curl grad = {}", c.max_norm());

        // div of a curl
        let a = BulkField {
            side: Side::Plus,
            comps: [f.clone(), plus.zeros(), {
                let mut z = plus.zeros();
                for v in z.iter_mut() {
                    *v = 0.3;
                }
                z
            }],
        };
        let ca = plus.phys_curl(&a);
        let dca = plus.phys_div(&ca);
        let mut max_d = 0.0f64;
        for v in dca.iter() {
            max_d = max_d.max(v.abs());
        }
        assert!(max_d < 1e-9, "div curl = {max_d}");
    }

    #[test]
    fn volume_and_flux_bookkeeping() {
        let (_, plus, minus) = setup(16, 9, |_, _| 0.0);
        let one = {
            let mut f = plus.zeros();
            f.fill(1.0);
            f
        };
        // slab volumes with flat interface at z0 = 0
        assert!((plus.volume_integral(&one) - 1.0).abs() < 1e-12);
        let one_m = {
            let mut f = minus.zeros();
            f.fill(1.0);
            f
        };
        assert!((minus.volume_integral(&one_m) - 1.0).abs() < 1e-12);

        // face flux density of a vertical unit field equals sqrt(g) * (u.n)
        let mut u = plus.zero_field();
        u.comps[2].fill(1.0);
        let flux = plus.face_flux_density(&u, Face::Gamma);
        for v in flux.iter() {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }
}
