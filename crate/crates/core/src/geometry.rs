//! Discrete differential geometry of the immersed interface.
//!
//! Everything is computed on the reference chart grid from the immersion
//! `Phi(p) = F_*(p) + gamma(p) nu(p)`: metric, Christoffel symbols, unit
//! normal, second fundamental form, mean curvature, and the surface
//! differential operators built from them.
//!
//! Sign conventions, fixed once for the whole crate:
//! - `n` is the unit normal with `nu . n > 0` (positive z on near-flat
//!   charts); it is the outward normal of the lower fluid domain.
//! - `II_ij = n_{,i} . Phi_{,j} = -n . Phi_{,ij}` and `kappa = tr_g II`,
//!   so `kappa = Div_Gamma n` and a graph bulging upward has positive
//!   curvature regions where it curves away from the lower domain.

use crate::chart::{cross3, dot3, norm3, HeightField, ReferenceChart, VecField2};
use crate::error::{Error, Result};
use crate::grid::ChartGrid;
use ndarray::Array2;

/// Symmetric 2x2 tensor field on the chart (components 11, 12, 22).
#[derive(Clone, Debug)]
pub struct SymTensor2 {
    pub a11: Array2<f64>,
    pub a12: Array2<f64>,
    pub a22: Array2<f64>,
}

impl SymTensor2 {
    pub fn zeros(n1: usize, n2: usize) -> Self {
        SymTensor2 {
            a11: Array2::zeros((n1, n2)),
            a12: Array2::zeros((n1, n2)),
            a22: Array2::zeros((n1, n2)),
        }
    }

    pub fn at(&self, i: usize, j: usize) -> [[f64; 2]; 2] {
        let (a, b, c) = (self.a11[[i, j]], self.a12[[i, j]], self.a22[[i, j]]);
        [[a, b], [b, c]]
    }
}

/// All per-node geometric data of an immersed interface.
pub struct SurfaceGeometry {
    pub grid: ChartGrid,
    /// Immersion `Phi = F_* + gamma nu`.
    pub phi: VecField2,
    /// Coordinate tangents `Phi_{,1}`, `Phi_{,2}`.
    pub t1: VecField2,
    pub t2: VecField2,
    /// Metric, inverse metric, area element.
    pub g: SymTensor2,
    pub g_inv: SymTensor2,
    pub sqrt_g: Array2<f64>,
    /// Christoffel symbols; `christoffel[k]` holds `Gamma^k_{ij}`.
    pub christoffel: [SymTensor2; 2],
    /// Oriented unit normal.
    pub normal: VecField2,
    /// Second fundamental form and mean curvature.
    pub ii: SymTensor2,
    pub kappa: Array2<f64>,
}

/// Immersion of a height field over the chart into full surface data.
pub fn immerse(chart: &ReferenceChart, h: &HeightField) -> Result<SurfaceGeometry> {
    h.validate(chart)?;
    let grid = chart.grid.clone();
    let (n1, n2) = grid.shape();

    let mut phi = VecField2::zeros(n1, n2);
    for i in 0..n1 {
        for j in 0..n2 {
            let f = chart.immersion.at(i, j);
            let nu = chart.nu.at(i, j);
            let gm = h.gamma[[i, j]];
            phi.set(i, j, [f[0] + gm * nu[0], f[1] + gm * nu[1], f[2] + gm * nu[2]]);
        }
    }
    immerse_map(&grid, &phi, &chart.nu)
}

/// Geometry of an arbitrary immersion (used internally and by tests that
/// construct surfaces directly).
///
/// The immersion of a torus chart is `(x, y, 0)` plus a periodic map; only
/// the periodic part may be differentiated spectrally, the linear part
/// contributes the constant identity columns.
pub fn immerse_map(grid: &ChartGrid, phi: &VecField2, orient: &VecField2) -> Result<SurfaceGeometry> {
    let (n1, n2) = grid.shape();
    let d = |f: &Array2<f64>, ax: usize| grid.deriv(f, ax);

    let lin_x = grid.field_from_fn(|x, _| x);
    let lin_y = grid.field_from_fn(|_, y| y);
    let phi_p = VecField2 { x: &phi.x - &lin_x, y: &phi.y - &lin_y, z: phi.z.clone() };

    let mut t1 = VecField2 { x: d(&phi_p.x, 0), y: d(&phi_p.y, 0), z: d(&phi_p.z, 0) };
    let mut t2 = VecField2 { x: d(&phi_p.x, 1), y: d(&phi_p.y, 1), z: d(&phi_p.z, 1) };
    t1.x.mapv_inplace(|v| v + 1.0);
    t2.y.mapv_inplace(|v| v + 1.0);

    let mut g = SymTensor2::zeros(n1, n2);
    let mut g_inv = SymTensor2::zeros(n1, n2);
    let mut sqrt_g = Array2::zeros((n1, n2));
    let mut normal = VecField2::zeros(n1, n2);

    for i in 0..n1 {
        for j in 0..n2 {
            let a = t1.at(i, j);
            let b = t2.at(i, j);
            let g11 = dot3(a, a);
            let g12 = dot3(a, b);
            let g22 = dot3(b, b);
            let det = g11 * g22 - g12 * g12;
            // eigenvalues of a symmetric 2x2: positive definiteness check
            let tr = g11 + g22;
            let disc = ((g11 - g22) * (g11 - g22) + 4.0 * g12 * g12).sqrt();
            let min_eig = 0.5 * (tr - disc);
            if min_eig <= 0.0 {
                return Err(Error::DegenerateMetric { min_eig, i, j });
            }
            g.a11[[i, j]] = g11;
            g.a12[[i, j]] = g12;
            g.a22[[i, j]] = g22;
            g_inv.a11[[i, j]] = g22 / det;
            g_inv.a12[[i, j]] = -g12 / det;
            g_inv.a22[[i, j]] = g11 / det;
            sqrt_g[[i, j]] = det.sqrt();

            let mut n = cross3(a, b);
            let len = norm3(n);
            for c in &mut n {
                *c /= len;
            }
            if dot3(n, orient.at(i, j)) < 0.0 {
                n = [-n[0], -n[1], -n[2]];
            }
            normal.set(i, j, n);
        }
    }

    // second derivatives of the immersion (linear part drops out)
    let mut phi_dd = [[VecField2::zeros(0, 0), VecField2::zeros(0, 0)], [
        VecField2::zeros(0, 0),
        VecField2::zeros(0, 0),
    ]];
    for a in 0..2 {
        for b in 0..2 {
            phi_dd[a][b] = VecField2 {
                x: d(&d(&phi_p.x, a), b),
                y: d(&d(&phi_p.y, a), b),
                z: d(&d(&phi_p.z, a), b),
            };
        }
    }

    let mut ii = SymTensor2::zeros(n1, n2);
    let mut kappa = Array2::zeros((n1, n2));
    for i in 0..n1 {
        for j in 0..n2 {
            let n = normal.at(i, j);
            // II_ij = -n . Phi_{,ij}
            let i11 = -dot3(n, phi_dd[0][0].at(i, j));
            let i12 = -0.5 * (dot3(n, phi_dd[0][1].at(i, j)) + dot3(n, phi_dd[1][0].at(i, j)));
            let i22 = -dot3(n, phi_dd[1][1].at(i, j));
            ii.a11[[i, j]] = i11;
            ii.a12[[i, j]] = i12;
            ii.a22[[i, j]] = i22;
            let gi = g_inv.at(i, j);
            kappa[[i, j]] = gi[0][0] * i11 + 2.0 * gi[0][1] * i12 + gi[1][1] * i22;
        }
    }

    // Christoffels from metric derivatives
    let dg = |t: &Array2<f64>, ax: usize| grid.deriv(t, ax);
    let g11_d = [dg(&g.a11, 0), dg(&g.a11, 1)];
    let g12_d = [dg(&g.a12, 0), dg(&g.a12, 1)];
    let g22_d = [dg(&g.a22, 0), dg(&g.a22, 1)];
    let dgf = |l: usize, m: usize, ax: usize, i: usize, j: usize| -> f64 {
        match (l, m) {
            (0, 0) => g11_d[ax][[i, j]],
            (1, 1) => g22_d[ax][[i, j]],
            _ => g12_d[ax][[i, j]],
        }
    };
    let mut christoffel = [SymTensor2::zeros(n1, n2), SymTensor2::zeros(n1, n2)];
    for i in 0..n1 {
        for j in 0..n2 {
            let gi = g_inv.at(i, j);
            for k in 0..2 {
                let mut c = [[0.0f64; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut sum = 0.0;
                        for l in 0..2 {
                            sum += gi[k][l] * (dgf(b, l, a, i, j) + dgf(a, l, b, i, j) - dgf(a, b, l, i, j));
                        }
                        c[a][b] = 0.5 * sum;
                    }
                }
                christoffel[k].a11[[i, j]] = c[0][0];
                christoffel[k].a12[[i, j]] = 0.5 * (c[0][1] + c[1][0]);
                christoffel[k].a22[[i, j]] = c[1][1];
            }
        }
    }

    Ok(SurfaceGeometry {
        grid: grid.clone(),
        phi: phi.clone(),
        t1,
        t2,
        g,
        g_inv,
        sqrt_g,
        christoffel,
        normal,
        ii,
        kappa,
    })
}

impl SurfaceGeometry {
    /// Divergence-form Laplace-Beltrami of a chart scalar.
    pub fn laplace_beltrami(&self, f: &Array2<f64>) -> Array2<f64> {
        let g = &self.grid;
        let fx = g.deriv(f, 0);
        let fy = g.deriv(f, 1);
        let (n1, n2) = g.shape();
        let mut flux1 = Array2::zeros((n1, n2));
        let mut flux2 = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let gi = self.g_inv.at(i, j);
                let sg = self.sqrt_g[[i, j]];
                flux1[[i, j]] = sg * (gi[0][0] * fx[[i, j]] + gi[0][1] * fy[[i, j]]);
                flux2[[i, j]] = sg * (gi[1][0] * fx[[i, j]] + gi[1][1] * fy[[i, j]]);
            }
        }
        let div = g.deriv(&flux1, 0) + g.deriv(&flux2, 1);
        let mut out = div;
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j]] /= self.sqrt_g[[i, j]];
            }
        }
        out
    }

    /// Tangential gradient of a chart scalar as an ambient vector field.
    pub fn tangential_gradient(&self, f: &Array2<f64>) -> VecField2 {
        let g = &self.grid;
        let fx = g.deriv(f, 0);
        let fy = g.deriv(f, 1);
        let (n1, n2) = g.shape();
        let mut out = VecField2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let gi = self.g_inv.at(i, j);
                let c1 = gi[0][0] * fx[[i, j]] + gi[0][1] * fy[[i, j]];
                let c2 = gi[1][0] * fx[[i, j]] + gi[1][1] * fy[[i, j]];
                let a = self.t1.at(i, j);
                let b = self.t2.at(i, j);
                out.set(i, j, [c1 * a[0] + c2 * b[0], c1 * a[1] + c2 * b[1], c1 * a[2] + c2 * b[2]]);
            }
        }
        out
    }

    /// Surface divergence of an ambient vector field sampled on the chart:
    /// `Div_Gamma X = g^{ij} X_{,i} . Phi_{,j}` (valid for non-tangential X).
    pub fn surface_divergence(&self, xf: &VecField2) -> Array2<f64> {
        let g = &self.grid;
        let dx = [
            VecField2 { x: g.deriv(&xf.x, 0), y: g.deriv(&xf.y, 0), z: g.deriv(&xf.z, 0) },
            VecField2 { x: g.deriv(&xf.x, 1), y: g.deriv(&xf.y, 1), z: g.deriv(&xf.z, 1) },
        ];
        let (n1, n2) = g.shape();
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let gi = self.g_inv.at(i, j);
                let t = [self.t1.at(i, j), self.t2.at(i, j)];
                let mut acc = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        acc += gi[a][b] * dot3(dx[a].at(i, j), t[b]);
                    }
                }
                out[[i, j]] = acc;
            }
        }
        out
    }

    /// Componentwise Laplace-Beltrami of an ambient vector field.
    pub fn laplace_beltrami_vec(&self, xf: &VecField2) -> VecField2 {
        VecField2 {
            x: self.laplace_beltrami(&xf.x),
            y: self.laplace_beltrami(&xf.y),
            z: self.laplace_beltrami(&xf.z),
        }
    }

    /// Covariant Hessian of a chart scalar: `f_{;ij} = f_{,ij} - Gamma^k_{ij} f_{,k}`.
    pub fn hessian(&self, f: &Array2<f64>) -> SymTensor2 {
        let g = &self.grid;
        let fx = g.deriv(f, 0);
        let fy = g.deriv(f, 1);
        let fxx = g.deriv(&fx, 0);
        let fxy = 0.5 * (&g.deriv(&fx, 1) + &g.deriv(&fy, 0));
        let fyy = g.deriv(&fy, 1);
        let (n1, n2) = g.shape();
        let mut h = SymTensor2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let c0 = self.christoffel[0].at(i, j);
                let c1 = self.christoffel[1].at(i, j);
                let (dfx, dfy) = (fx[[i, j]], fy[[i, j]]);
                h.a11[[i, j]] = fxx[[i, j]] - c0[0][0] * dfx - c1[0][0] * dfy;
                h.a12[[i, j]] = fxy[[i, j]] - c0[0][1] * dfx - c1[0][1] * dfy;
                h.a22[[i, j]] = fyy[[i, j]] - c0[1][1] * dfx - c1[1][1] * dfy;
            }
        }
        h
    }

    /// Squared tensor norm `|II|^2 = II_ij II_kl g^{ik} g^{jl}`.
    pub fn ii_norm_sq(&self) -> Array2<f64> {
        let (n1, n2) = self.grid.shape();
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j]] = tensor_ip(self.ii.at(i, j), self.ii.at(i, j), self.g_inv.at(i, j));
            }
        }
        out
    }

    /// Integral of a chart scalar over the surface (dS = sqrt(g) dp).
    pub fn integral(&self, f: &Array2<f64>) -> f64 {
        self.grid.integral_weighted(f, &self.sqrt_g)
    }

    /// Surface area.
    pub fn area(&self) -> f64 {
        self.sqrt_g.sum() / (self.grid.n1 * self.grid.n2) as f64
    }

    /// sqrt(g)-weighted inner product of chart scalars.
    pub fn inner(&self, f: &Array2<f64>, h: &Array2<f64>) -> f64 {
        let prod = f * h;
        self.integral(&prod)
    }

    /// Mean value with respect to the surface measure.
    pub fn mean_ds(&self, f: &Array2<f64>) -> f64 {
        self.integral(f) / self.area()
    }

    /// Projection onto mean-free functions (surface measure).
    pub fn project_mean_free(&self, f: &Array2<f64>) -> Array2<f64> {
        let m = self.mean_ds(f);
        f.mapv(|x| x - m)
    }

    /// Chart components `X^i = g^{ij} (X . Phi_{,j})` of an ambient vector.
    pub fn chart_components(&self, xf: &VecField2) -> (Array2<f64>, Array2<f64>) {
        let (n1, n2) = self.grid.shape();
        let mut c1 = Array2::zeros((n1, n2));
        let mut c2 = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let gi = self.g_inv.at(i, j);
                let x = xf.at(i, j);
                let p1 = dot3(x, self.t1.at(i, j));
                let p2 = dot3(x, self.t2.at(i, j));
                c1[[i, j]] = gi[0][0] * p1 + gi[0][1] * p2;
                c2[[i, j]] = gi[1][0] * p1 + gi[1][1] * p2;
            }
        }
        (c1, c2)
    }

    /// Tangential projection of an ambient vector field.
    pub fn tangential_part(&self, xf: &VecField2) -> VecField2 {
        let (n1, n2) = self.grid.shape();
        let mut out = VecField2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let x = xf.at(i, j);
                let n = self.normal.at(i, j);
                let xn = dot3(x, n);
                out.set(i, j, [x[0] - xn * n[0], x[1] - xn * n[1], x[2] - xn * n[2]]);
            }
        }
        out
    }

    /// Normal component of an ambient vector field.
    pub fn normal_part(&self, xf: &VecField2) -> Array2<f64> {
        let (n1, n2) = self.grid.shape();
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j]] = dot3(xf.at(i, j), self.normal.at(i, j));
            }
        }
        out
    }

    /// `II(X, Y)` for ambient (tangential) vectors given on the chart.
    pub fn ii_bilinear(&self, xf: &VecField2, yf: &VecField2) -> Array2<f64> {
        let (x1, x2) = self.chart_components(xf);
        let (y1, y2) = self.chart_components(yf);
        let (n1, n2) = self.grid.shape();
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let ii = self.ii.at(i, j);
                out[[i, j]] = ii[0][0] * x1[[i, j]] * y1[[i, j]]
                    + ii[0][1] * (x1[[i, j]] * y2[[i, j]] + x2[[i, j]] * y1[[i, j]])
                    + ii[1][1] * x2[[i, j]] * y2[[i, j]];
            }
        }
        out
    }

    /// Directional derivative of a chart scalar along an ambient tangent field.
    pub fn directional_derivative(&self, xf: &VecField2, f: &Array2<f64>) -> Array2<f64> {
        let (x1, x2) = self.chart_components(xf);
        let fx = self.grid.deriv(f, 0);
        let fy = self.grid.deriv(f, 1);
        let (n1, n2) = self.grid.shape();
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                out[[i, j]] = x1[[i, j]] * fx[[i, j]] + x2[[i, j]] * fy[[i, j]];
            }
        }
        out
    }

    /// Max-norm residual of Simons' identity
    /// `Lap_Gamma II = Hess kappa + (kappa II - |II|^2 I) . II`.
    pub fn simons_residual(&self) -> f64 {
        let lap_ii = self.tensor_laplacian_ii();
        let hess_k = self.hessian(&self.kappa);
        let ii2 = self.ii_norm_sq();
        let (n1, n2) = self.grid.shape();
        let mut max_res = 0.0f64;
        for i in 0..n1 {
            for j in 0..n2 {
                let ii = self.ii.at(i, j);
                let gi = self.g_inv.at(i, j);
                let k = self.kappa[[i, j]];
                // (kappa II - |II|^2 I) . II, with (A.B)_ij = A_i^l B_lj
                let mut low = [[0.0f64; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut s = -ii2[[i, j]] * ii[a][b];
                        for l in 0..2 {
                            for m in 0..2 {
                                s += k * ii[a][l] * gi[l][m] * ii[m][b];
                            }
                        }
                        low[a][b] = s;
                    }
                }
                let h = hess_k.at(i, j);
                let lp = lap_ii.at(i, j);
                for (a, b) in [(0, 0), (0, 1), (1, 1)] {
                    let r = lp[a][b] - h[a][b] - low[a][b];
                    max_res = max_res.max(r.abs());
                }
            }
        }
        max_res
    }

    /// Max-norm residual of the Codazzi consequence
    /// `Lap_Gamma n = -|II|^2 n + grad_Gamma kappa`.
    pub fn codazzi_residual(&self) -> f64 {
        let lap_n = self.laplace_beltrami_vec(&self.normal);
        let grad_k = self.tangential_gradient(&self.kappa);
        let ii2 = self.ii_norm_sq();
        let (n1, n2) = self.grid.shape();
        let mut max_res = 0.0f64;
        for i in 0..n1 {
            for j in 0..n2 {
                let n = self.normal.at(i, j);
                let l = lap_n.at(i, j);
                let gk = grad_k.at(i, j);
                for c in 0..3 {
                    let r = l[c] + ii2[[i, j]] * n[c] - gk[c];
                    max_res = max_res.max(r.abs());
                }
            }
        }
        max_res
    }

    /// Rough (tensor) Laplacian of the second fundamental form.
    fn tensor_laplacian_ii(&self) -> SymTensor2 {
        let g = &self.grid;
        let (n1, n2) = g.shape();
        // first covariant derivative T_kij = II_ij;k
        let dii: Vec<[Array2<f64>; 3]> = (0..2)
            .map(|ax| [g.deriv(&self.ii.a11, ax), g.deriv(&self.ii.a12, ax), g.deriv(&self.ii.a22, ax)])
            .collect();
        let idx = |a: usize, b: usize| -> usize {
            match (a, b) {
                (0, 0) => 0,
                (1, 1) => 2,
                _ => 1,
            }
        };
        // T[k][a][b]
        let mut t = vec![Array2::<f64>::zeros((n1, n2)); 8];
        let t_at = |k: usize, a: usize, b: usize| -> usize { 4 * k + 2 * a + b };
        for i in 0..n1 {
            for j in 0..n2 {
                let ii = self.ii.at(i, j);
                let gam = [self.christoffel[0].at(i, j), self.christoffel[1].at(i, j)];
                for k in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            let mut val = dii[k][idx(a, b)][[i, j]];
                            for l in 0..2 {
                                val -= gam[l][k][a] * ii[l][b] + gam[l][k][b] * ii[a][l];
                            }
                            t[t_at(k, a, b)][[i, j]] = val;
                        }
                    }
                }
            }
        }
        // second covariant derivative contracted with g^{mk}
        let mut dt = Vec::with_capacity(16);
        for m in 0..2 {
            for kab in 0..8 {
                dt.push(g.deriv(&t[kab], m));
            }
        }
        let mut out = SymTensor2::zeros(n1, n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let gi = self.g_inv.at(i, j);
                let gam = [self.christoffel[0].at(i, j), self.christoffel[1].at(i, j)];
                let tv = |k: usize, a: usize, b: usize| t[t_at(k, a, b)][[i, j]];
                for (a, b) in [(0, 0), (0, 1), (1, 1)] {
                    let mut acc = 0.0;
                    for m in 0..2 {
                        for k in 0..2 {
                            // (nabla_m T)_kab
                            let mut v = dt[8 * m + t_at(k, a, b)][[i, j]];
                            for l in 0..2 {
                                v -= gam[l][m][k] * tv(l, a, b)
                                    + gam[l][m][a] * tv(k, l, b)
                                    + gam[l][m][b] * tv(k, a, l);
                            }
                            acc += gi[m][k] * v;
                        }
                    }
                    match (a, b) {
                        (0, 0) => out.a11[[i, j]] = acc,
                        (1, 1) => out.a22[[i, j]] = acc,
                        _ => out.a12[[i, j]] = acc,
                    }
                }
            }
        }
        out
    }

    /// The lower-order kinematic terms of the second-order curvature
    /// evolution identity for a surface moving with ambient velocity `v`
    /// (sampled per chart node):
    /// `2 n.(grad v).(Lap v)^T + 4 <A, n.Hess v> - kappa |[(grad v)* n]^T|^2
    ///  - 2 <II, grad_G v . grad_G v> + 4 <II.A + A.II, A>`.
    pub fn kinematic_kappa_terms(&self, v: &VecField2) -> Array2<f64> {
        let g = &self.grid;
        let (n1, n2) = g.shape();
        let lap_v = self.laplace_beltrami_vec(v);
        let grads = [
            self.tangential_gradient(&v.x),
            self.tangential_gradient(&v.y),
            self.tangential_gradient(&v.z),
        ];
        let hess = [self.hessian(&v.x), self.hessian(&v.y), self.hessian(&v.z)];
        // (Dv)^T_ij = v_{,i} . Phi_{,j}
        let dv = [
            VecField2 { x: g.deriv(&v.x, 0), y: g.deriv(&v.y, 0), z: g.deriv(&v.z, 0) },
            VecField2 { x: g.deriv(&v.x, 1), y: g.deriv(&v.y, 1), z: g.deriv(&v.z, 1) },
        ];
        let mut out = Array2::zeros((n1, n2));
        for i in 0..n1 {
            for j in 0..n2 {
                let n = self.normal.at(i, j);
                let gi = self.g_inv.at(i, j);
                let ii = self.ii.at(i, j);
                let t = [self.t1.at(i, j), self.t2.at(i, j)];

                let mut dvt = [[0.0f64; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        dvt[a][b] = dot3(dv[a].at(i, j), t[b]);
                    }
                }
                let aa = [
                    [dvt[0][0], 0.5 * (dvt[0][1] + dvt[1][0])],
                    [0.5 * (dvt[0][1] + dvt[1][0]), dvt[1][1]],
                ];

                // 2 n.(grad v).(Lap v)^T = 2 sum_alpha n^alpha grad_G v^alpha . (Lap v)^T
                let lv = lap_v.at(i, j);
                let lvn = dot3(lv, n);
                let lv_tang = [lv[0] - lvn * n[0], lv[1] - lvn * n[1], lv[2] - lvn * n[2]];
                let mut term2 = 0.0;
                for (c, gr) in grads.iter().enumerate() {
                    term2 += 2.0 * n[c] * dot3(gr.at(i, j), lv_tang);
                }

                // 4 <A, n.Hess v>
                let mut nh = [[0.0f64; 2]; 2];
                for c in 0..3 {
                    let h = hess[c].at(i, j);
                    for a in 0..2 {
                        for b in 0..2 {
                            nh[a][b] += n[c] * h[a][b];
                        }
                    }
                }
                let term3 = 4.0 * tensor_ip(aa, nh, gi);

                // -kappa |[(grad v)* n]^T|^2 with covariant components
                // m_b = n . v_{,b}
                let m_cov = [dot3(dv[0].at(i, j), n), dot3(dv[1].at(i, j), n)];
                let mut m_sq = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        m_sq += gi[a][b] * m_cov[a] * m_cov[b];
                    }
                }
                let term4 = -self.kappa[[i, j]] * m_sq;

                // -2 <II, sum_alpha grad_G v^alpha (x) grad_G v^alpha>; the
                // covariant components of grad_G v^c are plain partials v^c_{,a}
                let mut gg = [[0.0f64; 2]; 2];
                for c in 0..3 {
                    let da = [dv[0].component(c)[[i, j]], dv[1].component(c)[[i, j]]];
                    for a in 0..2 {
                        for b in 0..2 {
                            gg[a][b] += da[a] * da[b];
                        }
                    }
                }
                let term5 = -2.0 * tensor_ip(self.ii.at(i, j), gg, gi);

                // 4 <II.A + A.II, A>
                let mut iiaa = [[0.0f64; 2]; 2];
                for a in 0..2 {
                    for b in 0..2 {
                        let mut s = 0.0;
                        for l in 0..2 {
                            for m in 0..2 {
                                s += (ii[a][l] * gi[l][m] * aa[m][b]) + (aa[a][l] * gi[l][m] * ii[m][b]);
                            }
                        }
                        iiaa[a][b] = s;
                    }
                }
                let term6 = 4.0 * tensor_ip(iiaa, aa, gi);

                out[[i, j]] = term2 + term3 + term4 + term5 + term6;
            }
        }
        out
    }
}

/// Inner product of (0,2) tensors with the inverse metric: `A_ij B_kl g^{ik} g^{jl}`.
pub fn tensor_ip(a: [[f64; 2]; 2], b: [[f64; 2]; 2], gi: [[f64; 2]; 2]) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    acc += a[i][j] * b[k][l] * gi[i][k] * gi[j][l];
                }
            }
        }
    }
    acc
}

/// Residual report of the first-order geometric evolution identities for a
/// time series of height fields moved by the supplied node velocities.
#[derive(Debug, Clone)]
pub struct EvolutionResiduals {
    pub normal: f64,
    pub metric: f64,
    pub second_form: f64,
    pub curvature: f64,
    pub area: f64,
}

impl EvolutionResiduals {
    pub fn max(&self) -> f64 {
        self.normal.max(self.metric).max(self.second_form).max(self.curvature).max(self.area)
    }
}

/// Checks the evolution identities for `n`, `g`, `II`, `kappa`, and the area
/// element against centered time differences of a height-field series. The
/// velocity sample `v[t]` must be the ambient node velocity that produced the
/// series (for height motion this is `(d gamma/dt) nu`).
pub fn geometry_evolution_residual(
    chart: &ReferenceChart,
    heights: &[HeightField],
    velocities: &[VecField2],
    dt: f64,
) -> Result<EvolutionResiduals> {
    if heights.len() < 3 {
        return Err(Error::InsufficientSamples { need: 3, got: heights.len() });
    }
    if velocities.len() != heights.len() {
        return Err(Error::InvalidInput("one velocity sample per height field required".into()));
    }
    let geos: Vec<SurfaceGeometry> =
        heights.iter().map(|h| immerse(chart, h)).collect::<Result<_>>()?;
    let g = &chart.grid;
    let (n1, n2) = g.shape();

    let mut res = EvolutionResiduals { normal: 0.0, metric: 0.0, second_form: 0.0, curvature: 0.0, area: 0.0 };

    for t in 1..heights.len() - 1 {
        let (prev, cur, next) = (&geos[t - 1], &geos[t], &geos[t + 1]);
        let v = &velocities[t];

        // predicted rates from the identities
        let dv = [
            VecField2 { x: g.deriv(&v.x, 0), y: g.deriv(&v.y, 0), z: g.deriv(&v.z, 0) },
            VecField2 { x: g.deriv(&v.x, 1), y: g.deriv(&v.y, 1), z: g.deriv(&v.z, 1) },
        ];
        let lap_v = cur.laplace_beltrami_vec(v);
        let vdd = {
            let mut a = Vec::with_capacity(4);
            for ax1 in 0..2 {
                for ax2 in 0..2 {
                    a.push(VecField2 {
                        x: g.deriv(&dv[ax1].x, ax2),
                        y: g.deriv(&dv[ax1].y, ax2),
                        z: g.deriv(&dv[ax1].z, ax2),
                    });
                }
            }
            a
        };

        for i in 0..n1 {
            for j in 0..n2 {
                let n = cur.normal.at(i, j);
                let gi = cur.g_inv.at(i, j);
                let t1 = cur.t1.at(i, j);
                let t2 = cur.t2.at(i, j);
                let tt = [t1, t2];

                // d n / dt = -g^{ij} (n . v_{,j}) Phi_{,i}
                let mut pred_n = [0.0f64; 3];
                for a in 0..2 {
                    for b in 0..2 {
                        let coef = -gi[a][b] * dot3(n, dv[b].at(i, j));
                        for c in 0..3 {
                            pred_n[c] += coef * tt[a][c];
                        }
                    }
                }
                let fd_n = [
                    (next.normal.x[[i, j]] - prev.normal.x[[i, j]]) / (2.0 * dt),
                    (next.normal.y[[i, j]] - prev.normal.y[[i, j]]) / (2.0 * dt),
                    (next.normal.z[[i, j]] - prev.normal.z[[i, j]]) / (2.0 * dt),
                ];
                for c in 0..3 {
                    res.normal = res.normal.max((fd_n[c] - pred_n[c]).abs());
                }

                // d g_ij / dt = v_{,i} . Phi_{,j} + v_{,j} . Phi_{,i}
                let a_t = |a: usize, b: usize| dot3(dv[a].at(i, j), tt[b]);
                let pred_g = [
                    2.0 * a_t(0, 0),
                    a_t(0, 1) + a_t(1, 0),
                    2.0 * a_t(1, 1),
                ];
                let fd_g = [
                    (next.g.a11[[i, j]] - prev.g.a11[[i, j]]) / (2.0 * dt),
                    (next.g.a12[[i, j]] - prev.g.a12[[i, j]]) / (2.0 * dt),
                    (next.g.a22[[i, j]] - prev.g.a22[[i, j]]) / (2.0 * dt),
                ];
                for c in 0..3 {
                    res.metric = res.metric.max((fd_g[c] - pred_g[c]).abs());
                }

                // d II_ij / dt = -n . (v_{,ij} - Gamma^k_{ij} v_{,k})
                let gam = [cur.christoffel[0].at(i, j), cur.christoffel[1].at(i, j)];
                let pred_ii = {
                    let mut p = [0.0f64; 3];
                    for (idx, (a, b)) in [(0usize, 0usize), (0, 1), (1, 1)].iter().enumerate() {
                        let vab = vdd[2 * a + b].at(i, j);
                        let mut corr = [vab[0], vab[1], vab[2]];
                        for k in 0..2 {
                            let gk = gam[k][*a][*b];
                            let vk = dv[k].at(i, j);
                            for c in 0..3 {
                                corr[c] -= gk * vk[c];
                            }
                        }
                        p[idx] = -dot3(n, corr);
                    }
                    p
                };
                let fd_ii = [
                    (next.ii.a11[[i, j]] - prev.ii.a11[[i, j]]) / (2.0 * dt),
                    (next.ii.a12[[i, j]] - prev.ii.a12[[i, j]]) / (2.0 * dt),
                    (next.ii.a22[[i, j]] - prev.ii.a22[[i, j]]) / (2.0 * dt),
                ];
                for c in 0..3 {
                    res.second_form = res.second_form.max((fd_ii[c] - pred_ii[c]).abs());
                }

                // d kappa / dt = -n . Lap v - 2 <II, A>
                let aa = [
                    [a_t(0, 0), 0.5 * (a_t(0, 1) + a_t(1, 0))],
                    [0.5 * (a_t(0, 1) + a_t(1, 0)), a_t(1, 1)],
                ];
                let pred_k = -dot3(n, lap_v.at(i, j)) - 2.0 * tensor_ip(cur.ii.at(i, j), aa, gi);
                let fd_k = (next.kappa[[i, j]] - prev.kappa[[i, j]]) / (2.0 * dt);
                res.curvature = res.curvature.max((fd_k - pred_k).abs());
            }
        }

        // total area: d/dt int dS = int Div_Gamma v dS
        let pred_area = cur.integral(&cur.surface_divergence(v));
        let fd_area = (next.area() - prev.area()) / (2.0 * dt);
        res.area = res.area.max((fd_area - pred_area).abs());
    }
    Ok(res)
}
