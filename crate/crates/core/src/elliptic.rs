//! Mapped elliptic solves, harmonic extensions, and Dirichlet-Neumann operators.
//!
//! All solves happen on the parameter box in the divergence form
//! `div_ref(M grad_ref u) = rhs` with `M = det(J) J^{-1} J^{-T}`. The flat-slab
//! operator diagonalizes per Fourier mode and serves as the preconditioner; a
//! defect-correction loop (with a BiCGstab fallback for strongly curved
//! interfaces) removes the variable-coefficient part.

use crate::bulk::{BcKind, BoxSolver, BulkGrid, BulkScalar, Face, Side};
use crate::error::{Error, Result};
use crate::geometry::SurfaceGeometry;
use ndarray::Array2;
use num_complex::Complex64;

/// Domain topology mode. The torus slab has Neumann walls on both sides; the
/// closed-interior geometry treats the plus side as a pure Dirichlet problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeometryMode {
    TorusSlab,
    ClosedInterior,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOpts {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOpts {
    fn default() -> Self {
        SolveOpts { tol: 1e-11, max_iter: 300 }
    }
}

/// Boundary condition of one face: kind plus data. Dirichlet data is the
/// trace; Neumann data is the outward conormal flux density `(M grad u).e_s`
/// times the outward sign (at the interface this equals the physical normal
/// derivative times `sqrt(g)`).
pub struct FaceBc<'a> {
    pub kind: BcKind,
    pub data: &'a Array2<f64>,
}

struct CompositeOp<'a> {
    bg: &'a BulkGrid,
    gamma: BcKind,
    wall: BcKind,
}

impl<'a> CompositeOp<'a> {
    fn pure_neumann(&self) -> bool {
        self.gamma == BcKind::Neumann && self.wall == BcKind::Neumann
    }

    /// Apply the composite operator: interior mapped Laplacian rows, boundary
    /// rows at the two faces (Dirichlet trace or outward conormal). For the
    /// pure-Neumann problem the horizontal mean of the `s = 1` flux row is
    /// redundant (discrete Gauss) and is replaced by the profile-mean pin,
    /// matching the flat preconditioner.
    fn apply(&self, u: &BulkScalar) -> BulkScalar {
        let mut out = self.bg.mapped_laplacian(u);
        let (n1, n2, nz) = self.bg.shape();
        for (face, kind) in [(Face::Gamma, self.gamma), (Face::Wall, self.wall)] {
            let l = self.bg.face_level(face);
            match kind {
                BcKind::Dirichlet => {
                    for i in 0..n1 {
                        for j in 0..n2 {
                            out[[i, j, l]] = u[[i, j, l]];
                        }
                    }
                }
                BcKind::Neumann => {
                    let sign = self.bg.outward_sign(face);
                    let con = self.bg.face_conormal(u, face);
                    for i in 0..n1 {
                        for j in 0..n2 {
                            out[[i, j, l]] = sign * con[[i, j]];
                        }
                    }
                }
            }
        }
        if self.pure_neumann() {
            let l = nz - 1;
            let cells = (n1 * n2) as f64;
            let mut mean_flux = 0.0;
            for i in 0..n1 {
                for j in 0..n2 {
                    mean_flux += out[[i, j, l]];
                }
            }
            mean_flux /= cells;
            // plain box mean of u (matches the preconditioner's pin row)
            let mut mean_u = 0.0;
            for i in 0..n1 {
                for j in 0..n2 {
                    for m in 0..nz {
                        mean_u += u[[i, j, m]] * self.bg.cheb.w[m];
                    }
                }
            }
            mean_u /= cells;
            for i in 0..n1 {
                for j in 0..n2 {
                    out[[i, j, l]] += mean_u - mean_flux;
                }
            }
        }
        out
    }
}

fn composite_rhs(bg: &BulkGrid, rhs: &BulkScalar, gamma: &FaceBc, wall: &FaceBc, pure_neumann: bool) -> BulkScalar {
    let mut b = rhs.clone();
    let (n1, n2, nz) = bg.shape();
    for (face, bc) in [(Face::Gamma, gamma), (Face::Wall, wall)] {
        let l = bg.face_level(face);
        for i in 0..n1 {
            for j in 0..n2 {
                b[[i, j, l]] = bc.data[[i, j]];
            }
        }
    }
    if pure_neumann {
        // drop the redundant mean of the pinned flux row; the pin targets zero
        let l = nz - 1;
        let cells = (n1 * n2) as f64;
        let mut mean = 0.0;
        for i in 0..n1 {
            for j in 0..n2 {
                mean += b[[i, j, l]];
            }
        }
        mean /= cells;
        for i in 0..n1 {
            for j in 0..n2 {
                b[[i, j, l]] -= mean;
            }
        }
    }
    b
}

fn flat_preconditioner(bg: &BulkGrid, gamma: BcKind, wall: BcKind) -> BoxSolver {
    let lt = bg.thickness;
    let (bc0, bc1) = {
        let gamma_hi = bg.face_level(Face::Gamma) == bg.nz - 1;
        let g = (gamma, if gamma_hi { 1.0 } else { -1.0 });
        let w = (wall, if gamma_hi { -1.0 } else { 1.0 });
        if gamma_hi {
            ((w.0, -1.0), (g.0, 1.0))
        } else {
            ((g.0, -1.0), (w.0, 1.0))
        }
    };
    BoxSolver::new(bg.cheb.clone(), bg.grid.spectral.clone(), 1.0 / lt, lt, 1.0 / lt, bc0, bc1)
}

fn precond_apply(bg: &BulkGrid, pre: &BoxSolver, r: &BulkScalar) -> BulkScalar {
    // residual is already in composite layout: faces carry boundary defects
    let gamma_face = bg.face_scalar(r, Face::Gamma);
    let wall_face = bg.face_scalar(r, Face::Wall);
    let (d0, d1) = if bg.face_level(Face::Gamma) == bg.nz - 1 {
        (wall_face, gamma_face)
    } else {
        (gamma_face, wall_face)
    };
    pre.solve(r, &d0, &d1)
}

fn norm_inf(f: &BulkScalar) -> f64 {
    f.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn dot(a: &BulkScalar, b: &BulkScalar) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Solve `div_ref(M grad_ref u) = rhs` with the given face conditions.
pub fn solve_mapped(
    bg: &BulkGrid,
    rhs: &BulkScalar,
    gamma: FaceBc,
    wall: FaceBc,
    opts: &SolveOpts,
) -> Result<BulkScalar> {
    let op = CompositeOp { bg, gamma: gamma.kind, wall: wall.kind };
    let pure_neumann = op.pure_neumann();
    let pre = flat_preconditioner(bg, gamma.kind, wall.kind);
    let b = composite_rhs(bg, rhs, &gamma, &wall, pure_neumann);
    let scale = norm_inf(&b).max(1e-300);

    // defect correction preconditioned by the flat solve
    let mut u = precond_apply(bg, &pre, &b);
    let mut last = f64::INFINITY;
    for it in 0..opts.max_iter {
        let r = &b - &op.apply(&u);
        let res = norm_inf(&r);
        if res <= opts.tol * scale {
            return Ok(u);
        }
        if it >= 6 && res > 0.7 * last {
            // slow contraction: hand off to Krylov
            return bicgstab(&op, &pre, bg, &b, u, opts);
        }
        last = res;
        let du = precond_apply(bg, &pre, &r);
        u = &u + &du;
    }
    Err(Error::SolverDivergence(format!(
        "mapped Poisson defect iteration exhausted {} iterations",
        opts.max_iter
    )))
}

fn bicgstab(
    op: &CompositeOp,
    pre: &BoxSolver,
    bg: &BulkGrid,
    b: &BulkScalar,
    x0: BulkScalar,
    opts: &SolveOpts,
) -> Result<BulkScalar> {
    let scale = norm_inf(b).max(1e-300);
    let mut x = x0;
    let mut r = b - &op.apply(&x);
    let r0 = r.clone();
    let mut rho = 1.0f64;
    let mut alpha = 1.0f64;
    let mut omega = 1.0f64;
    let mut v = bg.zeros();
    let mut p = bg.zeros();
    for _ in 0..opts.max_iter {
        let rho1 = dot(&r0, &r);
        if rho1.abs() < 1e-290 {
            break;
        }
        let beta = (rho1 / rho) * (alpha / omega);
        rho = rho1;
        p = &r + &((&p - &(&v * omega)) * beta);
        let ph = precond_apply(bg, pre, &p);
        v = op.apply(&ph);
        alpha = rho / dot(&r0, &v);
        let s = &r - &(&v * alpha);
        if norm_inf(&s) <= opts.tol * scale {
            return Ok(&x + &(&ph * alpha));
        }
        let sh = precond_apply(bg, pre, &s);
        let t = op.apply(&sh);
        omega = dot(&t, &s) / dot(&t, &t).max(1e-300);
        x = &x + &(&ph * alpha) + &(&sh * omega);
        r = &s - &(&t * omega);
        if norm_inf(&r) <= opts.tol * scale {
            return Ok(x);
        }
    }
    let res = norm_inf(&(b - &op.apply(&x)));
    if res <= 100.0 * opts.tol * scale {
        return Ok(x);
    }
    Err(Error::SolverDivergence(format!(
        "BiCGstab stalled at relative residual {:.3e}",
        res / scale
    )))
}

/// One-sided Dirichlet-Neumann context.
pub struct DnSide<'a> {
    pub bg: &'a BulkGrid,
    pub mode: GeometryMode,
    pub opts: SolveOpts,
}

impl<'a> DnSide<'a> {
    pub fn new(bg: &'a BulkGrid, mode: GeometryMode, opts: SolveOpts) -> Self {
        DnSide { bg, mode, opts }
    }

    fn wall_kind(&self) -> BcKind {
        match (self.mode, self.bg.side) {
            (GeometryMode::ClosedInterior, Side::Plus) => BcKind::Dirichlet,
            _ => BcKind::Neumann,
        }
    }

    /// Harmonic extension of interface data into the bulk.
    pub fn extension(&self, f: &Array2<f64>) -> Result<BulkScalar> {
        let zero_rhs = self.bg.zeros();
        let zero_face = Array2::zeros((self.bg.grid.n1, self.bg.grid.n2));
        solve_mapped(
            self.bg,
            &zero_rhs,
            FaceBc { kind: BcKind::Dirichlet, data: f },
            FaceBc { kind: self.wall_kind(), data: &zero_face },
            &self.opts,
        )
    }

    /// Outward normal derivative of a bulk scalar at the interface
    /// (`n_side . grad u`), where `n_side` is this side's outward normal.
    pub fn normal_derivative(&self, u: &BulkScalar) -> Array2<f64> {
        let g = self.bg.phys_grad(u);
        let l = self.bg.face_level(Face::Gamma);
        let (n1, n2) = (self.bg.grid.n1, self.bg.grid.n2);
        let sign = if self.bg.side == Side::Plus { 1.0 } else { -1.0 };
        Array2::from_shape_fn((n1, n2), |(i, j)| {
            let n = self.bg.normal_gamma.at(i, j);
            sign * (n[0] * g[0][[i, j, l]] + n[1] * g[1][[i, j, l]] + n[2] * g[2][[i, j, l]])
        })
    }

    /// The Dirichlet-Neumann operator of this side.
    pub fn dn(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.normal_derivative(&self.extension(f)?))
    }

    /// Flat-interface symbol |k| tanh(|k| L) of this side's DN operator.
    pub fn flat_symbol(&self, kmag: f64) -> f64 {
        if kmag == 0.0 {
            return 0.0;
        }
        match self.wall_kind() {
            BcKind::Neumann => kmag * (kmag * self.bg.thickness).tanh(),
            // Dirichlet far face: coth profile instead of tanh
            BcKind::Dirichlet => kmag / (kmag * self.bg.thickness).tanh(),
        }
    }
}

/// Two-sided operator calculus: `Nbar = N+/rho+ + N-/rho-` and the harmonic
/// mean composite `Ntilde`, with mean-free inverses.
pub struct DnPair<'a> {
    pub plus: DnSide<'a>,
    pub minus: DnSide<'a>,
    pub sg: &'a SurfaceGeometry,
    pub rho_plus: f64,
    pub rho_minus: f64,
}

impl<'a> DnPair<'a> {
    pub fn new(
        sg: &'a SurfaceGeometry,
        bg_plus: &'a BulkGrid,
        bg_minus: &'a BulkGrid,
        mode: GeometryMode,
        rho_plus: f64,
        rho_minus: f64,
        opts: SolveOpts,
    ) -> Self {
        DnPair {
            plus: DnSide::new(bg_plus, mode, opts),
            minus: DnSide::new(bg_minus, mode, opts),
            sg,
            rho_plus,
            rho_minus,
        }
    }

    pub fn side(&self, side: Side) -> &DnSide<'a> {
        match side {
            Side::Plus => &self.plus,
            Side::Minus => &self.minus,
        }
    }

    pub fn rho(&self, side: Side) -> f64 {
        match side {
            Side::Plus => self.rho_plus,
            Side::Minus => self.rho_minus,
        }
    }

    /// `Nbar f = N+ f / rho+ + N- f / rho-`.
    pub fn nbar(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        let a = self.plus.dn(f)?;
        let b = self.minus.dn(f)?;
        Ok(&a / self.rho_plus + &b / self.rho_minus)
    }

    fn nbar_symbol(&self, kmag: f64) -> f64 {
        self.plus.flat_symbol(kmag) / self.rho_plus + self.minus.flat_symbol(kmag) / self.rho_minus
    }

    fn symbol_precondition(&self, r: &Array2<f64>, symbol: &dyn Fn(f64) -> f64) -> Array2<f64> {
        let sp = &self.sg.grid.spectral;
        let mut m = sp.to_modes(r);
        for i in 0..sp.n1 {
            for j in 0..sp.n2 {
                let kmag = (sp.k1[i] * sp.k1[i] + sp.k2[j] * sp.k2[j]).sqrt();
                let s = symbol(kmag);
                m[[i, j]] *= Complex64::new(if s > 0.0 { 1.0 / s } else { 0.0 }, 0.0);
            }
        }
        sp.to_grid(&m)
    }

    /// Generic preconditioned CG on the mean-free subspace for a self-adjoint
    /// positive interface operator (sqrt(g)-weighted inner product).
    fn cg_inverse(
        &self,
        rhs: &Array2<f64>,
        apply: &dyn Fn(&Array2<f64>) -> Result<Array2<f64>>,
        symbol: &dyn Fn(f64) -> f64,
        label: &str,
    ) -> Result<Array2<f64>> {
        let sgm = self.sg;
        let b = sgm.project_mean_free(rhs);
        let scale = sgm.grid.max_abs(&b);
        if scale <= 1e-280 {
            return Ok(sgm.grid.zeros());
        }
        let tol = self.plus.opts.tol.max(1e-12) * scale;
        let mut x = sgm.project_mean_free(&self.symbol_precondition(&b, symbol));
        let mut r = &b - &sgm.project_mean_free(&apply(&x)?);
        let mut z = sgm.project_mean_free(&self.symbol_precondition(&r, symbol));
        let mut p = z.clone();
        let mut rz = sgm.inner(&r, &z);
        let mut best = f64::INFINITY;
        let mut stalled = 0usize;
        for _ in 0..self.plus.opts.max_iter {
            let res = sgm.grid.max_abs(&r);
            if res <= tol {
                return Ok(x);
            }
            // stagnation at the data's roundoff floor
            if res >= 0.98 * best {
                stalled += 1;
                if stalled >= 8 {
                    return Ok(x);
                }
            } else {
                stalled = 0;
                best = res;
            }
            let ap = sgm.project_mean_free(&apply(&p)?);
            let pap = sgm.inner(&p, &ap);
            // breakdown at roundoff level: the iterate is as good as the data
            if !(pap > 0.0) || !rz.is_finite() {
                return Ok(x);
            }
            let alpha = rz / pap;
            if !alpha.is_finite() {
                return Ok(x);
            }
            x = &x + &(&p * alpha);
            r = &r - &(&ap * alpha);
            z = sgm.project_mean_free(&self.symbol_precondition(&r, symbol));
            let rz_new = sgm.inner(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            p = &z + &(&p * beta);
        }
        if sgm.grid.max_abs(&r) <= 1e3 * tol {
            return Ok(x);
        }
        Err(Error::SolverDivergence(format!(
            "{label} inverse stalled at residual {:.3e}",
            sgm.grid.max_abs(&r) / scale
        )))
    }

    /// Mean-free inverse of `Nbar` (the inverse composes with the mean-free
    /// projection by convention).
    pub fn nbar_inverse(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        self.cg_inverse(rhs, &|f| self.nbar(f), &|k| self.nbar_symbol(k), "Nbar")
    }

    /// Mean-free inverse of a one-sided DN operator.
    pub fn dn_inverse(&self, side: Side, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let ds = self.side(side);
        self.cg_inverse(rhs, &|f| ds.dn(f), &|k| ds.flat_symbol(k), "DN")
    }

    /// `Ntilde f = (N+/rho+) Nbar^{-1} (N-/rho-) f`.
    pub fn ntilde(&self, f: &Array2<f64>) -> Result<Array2<f64>> {
        let nm = self.minus.dn(f)? / self.rho_minus;
        let mid = self.nbar_inverse(&nm)?;
        Ok(self.plus.dn(&mid)? / self.rho_plus)
    }

    /// Flat-interface symbol of `Ntilde`.
    pub fn ntilde_symbol(&self, kmag: f64) -> f64 {
        let sp = self.plus.flat_symbol(kmag) / self.rho_plus;
        let sm = self.minus.flat_symbol(kmag) / self.rho_minus;
        if sp + sm == 0.0 {
            0.0
        } else {
            sp * sm / (sp + sm)
        }
    }
}

/// Interface scalars: helpers around chart arrays measured with dS.
pub struct InterfaceScalar;

impl InterfaceScalar {
    pub fn mean(sg: &SurfaceGeometry, f: &Array2<f64>) -> f64 {
        sg.mean_ds(f)
    }

    pub fn project(sg: &SurfaceGeometry, f: &Array2<f64>) -> Array2<f64> {
        sg.project_mean_free(f)
    }
}
