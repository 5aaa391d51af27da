//! Direct solution of the saddle-point system, prolongation to refined
//! meshes and the discrete inf–sup constant.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};

use crate::assembly::{assemble, bulk_operator, coupling_blocks, spmv_add, surface_operator, ProblemData, SaddleSystem, SparseMat};
use crate::error::{Error, Result};
use crate::mesh::TriangleLocator;
use crate::quadrature::GAUSS_5;
use crate::spaces::{
    eval_lambda_local, eval_p_local, eval_u_local, line_basis, Coefficient, Discretization, MultiplierKind,
    TriGeom,
};

/// Normwise backward error accepted from the direct solver.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Coefficients of `(u_h, p_h, λ_h)` together with the discretization they
/// belong to.
#[derive(Debug, Clone)]
pub struct SolutionTriple {
    pub disc: Arc<Discretization>,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub lambda: Vec<f64>,
}

impl SolutionTriple {
    pub fn zero(disc: Arc<Discretization>) -> Self {
        let d = &disc.dofs;
        let (u, p, lambda) = (vec![0.0; d.n_u], vec![0.0; d.n_p], vec![0.0; d.n_lambda]);
        Self { disc, u, p, lambda }
    }

    pub fn from_stacked(disc: Arc<Discretization>, x: &[f64]) -> Result<Self> {
        let d = &disc.dofs;
        if x.len() != d.total() {
            return Err(Error::DimensionMismatch { expected: d.total(), got: x.len() });
        }
        let u = x[..d.n_u].to_vec();
        let p = x[d.n_u..d.n_u + d.n_p].to_vec();
        let lambda = x[d.n_u + d.n_p..].to_vec();
        Ok(Self { disc, u, p, lambda })
    }

    pub fn stacked(&self) -> Vec<f64> {
        [self.u.as_slice(), &self.p, &self.lambda].concat()
    }

    /// `C_u u - C_p p` for the solution's own coupling blocks.
    pub fn constraint_residual(&self) -> Vec<f64> {
        let (cu, cp) = coupling_blocks(&self.disc);
        let mut r = vec![0.0; self.disc.dofs.n_lambda];
        spmv_add(&cu, &self.u, &mut r, 1.0, false);
        spmv_add(&cp, &self.p, &mut r, -1.0, false);
        r
    }
}

fn residual(a: &SparseMat, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    spmv_add(a, x, &mut r, -1.0, false);
    r
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Largest absolute row sum.
pub fn matrix_inf_norm(a: &SparseMat) -> f64 {
    let mut rows = vec![0.0; a.nrows()];
    let cp = a.symbolic().col_ptr();
    let ri = a.symbolic().row_idx();
    for j in 0..a.ncols() {
        for k in cp[j]..cp[j + 1] {
            rows[ri[k]] += a.val()[k].abs();
        }
    }
    inf_norm(&rows)
}

/// Normwise backward error `‖b − A x‖∞ / (‖A‖∞ ‖x‖∞ + ‖b‖∞)`.
pub fn backward_error(a: &SparseMat, x: &[f64], b: &[f64]) -> f64 {
    let denom = matrix_inf_norm(a) * inf_norm(x) + inf_norm(b);
    if denom == 0.0 {
        return 0.0;
    }
    inf_norm(&residual(a, x, b)) / denom
}

/// Sparse LU factors of a matrix, reusable for several right-hand sides.
pub struct Factorization {
    matrix: SparseMat,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    norm: f64,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization").field("dim", &self.matrix.nrows()).finish_non_exhaustive()
    }
}

impl Factorization {
    pub fn new(a: SparseMat) -> Result<Self> {
        let lu = a.sp_lu().map_err(|e| Error::Solver(format!("factorization failed: {e:?}")))?;
        let norm = matrix_inf_norm(&a);
        Ok(Self { matrix: a, lu, norm })
    }

    pub fn matrix(&self) -> &SparseMat {
        &self.matrix
    }

    /// Solves `A x = b` with a few steps of iterative refinement, failing
    /// unless the backward error is at most [`RESIDUAL_TOL`].
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = b.len();
        if n != self.matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: self.matrix.nrows(), got: n });
        }
        if b.iter().all(|&v| v == 0.0) {
            return Ok(vec![0.0; n]);
        }
        let a = &self.matrix;
        let rhs = Mat::<f64>::from_fn(n, 1, |i, _| b[i]);
        let sol = self.lu.solve(&rhs);
        let mut x: Vec<f64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let bnorm = inf_norm(b);
        let mut r = residual(a, &x, b);
        let mut err = inf_norm(&r) / (self.norm * inf_norm(&x) + bnorm);
        for _ in 0..3 {
            if err <= 1e-2 * RESIDUAL_TOL {
                break;
            }
            let rm = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            let dx = self.lu.solve(&rm);
            let trial: Vec<f64> = x.iter().enumerate().map(|(i, xi)| xi + dx[(i, 0)]).collect();
            let rt = residual(a, &trial, b);
            let et = inf_norm(&rt) / (self.norm * inf_norm(&trial) + bnorm);
            if !(et < err) {
                break;
            }
            (x, r, err) = (trial, rt, et);
        }
        if !(err <= RESIDUAL_TOL) {
            return Err(Error::Solver(format!("backward error {err:.3e} exceeds {RESIDUAL_TOL:.0e}")));
        }
        Ok(x)
    }
}

/// Solves `A x = b` by sparse LU; see [`Factorization::solve`].
pub fn solve_sparse(a: &SparseMat, b: &[f64]) -> Result<Vec<f64>> {
    if b.iter().all(|&v| v == 0.0) {
        return Ok(vec![0.0; b.len()]);
    }
    Factorization::new(a.clone())?.solve(b)
}

/// Solves an assembled saddle-point system.
pub fn solve(disc: Arc<Discretization>, system: &SaddleSystem) -> Result<SolutionTriple> {
    if system.dim() != disc.dofs.total() {
        return Err(Error::DimensionMismatch { expected: disc.dofs.total(), got: system.dim() });
    }
    let x = solve_sparse(&system.global_matrix(), &system.rhs())?;
    SolutionTriple::from_stacked(disc, &x)
}

/// Global saddle-point matrix of `disc`, independent of the data.
pub fn system_matrix(disc: &Discretization) -> Result<SparseMat> {
    let s = &disc.scheme;
    let (c_u, c_p) = coupling_blocks(disc);
    let system = SaddleSystem {
        a_u: bulk_operator(disc, s.sigma, &s.alpha)?,
        a_p: surface_operator(disc, s.sigma, &s.kappa)?,
        c_u,
        c_p,
        f: vec![0.0; disc.dofs.n_u],
        g: vec![0.0; disc.dofs.n_p],
    };
    Ok(system.global_matrix())
}

/// Assembles and solves the stationary problem on `disc`.
pub fn solve_problem(disc: Arc<Discretization>, data: &ProblemData) -> Result<SolutionTriple> {
    let system = assemble(&disc, data)?;
    solve(disc, &system)
}

const NEST_TOL: f64 = 1e-10;

fn not_nested(what: &str) -> Error {
    Error::NotNested(format!("{what} of the fine mesh is not contained in a coarse element"))
}

/// Bulk coefficients on `fine` of the coarse V_h function `u`.
pub fn prolong_u(coarse: &Discretization, u: &[f64], fine: &Discretization) -> Result<Vec<f64>> {
    let (cb, fb) = (coarse.bulk(), fine.bulk());
    let locator = TriangleLocator::new(cb);
    let mut out = vec![f64::NAN; fine.dofs.n_u];
    let local_nodes: &[[f64; 3]] = &[
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ];
    for t in 0..fb.num_triangles() {
        let fgeom = TriGeom::of(fb, t);
        let centroid = fgeom.point([1.0 / 3.0; 3]);
        let (ct, _) = locator.locate(cb, centroid).ok_or_else(|| not_nested("triangle"))?;
        let cgeom = TriGeom::of(cb, ct);
        let ids = fine.dofs.u_dofs(t);
        for (k, &d) in ids.iter().enumerate() {
            if !out[d].is_nan() {
                continue;
            }
            let x = fgeom.point(local_nodes[k]);
            let bary = crate::mesh::barycentric(cgeom.pts, x);
            if bary.iter().any(|&l| l < -NEST_TOL) {
                return Err(not_nested("triangle"));
            }
            out[d] = eval_u_local(&coarse.dofs, &cgeom, u, ct, bary).0;
        }
    }
    Ok(out)
}

/// Surface coefficients on `fine` of the coarse Q_h function `p`.
pub fn prolong_p(coarse: &Discretization, p: &[f64], fine: &Discretization) -> Result<Vec<f64>> {
    let (cg, fg) = (coarse.gamma(), fine.gamma());
    let mut out = vec![0.0; fine.dofs.n_p];
    let tol = NEST_TOL * cg.perimeter();
    for i in 0..fg.len() {
        let seg = fg.segment(i);
        let (c, _) = cg.locate(seg.midpoint());
        let cs = cg.segment(c);
        if seg.start < cs.start - tol || seg.end > cs.end + tol {
            return Err(not_nested("segment"));
        }
        let xi = |s: f64| (s - cs.start) / cs.len();
        let ids = fine.dofs.p_dofs(i);
        let nodes = [seg.start, seg.end, seg.midpoint()];
        for (k, &d) in ids.iter().enumerate() {
            out[d] = eval_p_local(&coarse.dofs, cg, p, c, xi(nodes[k])).0;
        }
    }
    Ok(out)
}

/// Multiplier coefficients on `fine` of the coarse M_h function `lambda`.
pub fn prolong_lambda(coarse: &Discretization, lambda: &[f64], fine: &Discretization) -> Result<Vec<f64>> {
    let (cb, fb) = (coarse.bulk(), fine.bulk());
    let tol = NEST_TOL * cb.perimeter();
    let mut out = vec![0.0; fine.dofs.n_lambda];
    for b in 0..fb.num_boundary_edges() {
        let (s0, s1) = fb.boundary_arc(b);
        let c = cb.boundary_edge_at(0.5 * (s0 + s1));
        let (c0, c1) = cb.boundary_arc(c);
        if s0 < c0 - tol || s1 > c1 + tol {
            return Err(not_nested("boundary edge"));
        }
        let tau = |s: f64| (s - c0) / (c1 - c0);
        let ids = fine.dofs.lambda_dofs(b);
        match fine.dofs.multiplier {
            MultiplierKind::P1Trace => {
                out[ids[0]] = eval_lambda_local(&coarse.dofs, lambda, c, tau(s0));
                out[ids[1]] = eval_lambda_local(&coarse.dofs, lambda, c, tau(s1));
            }
            MultiplierKind::P0Trace => out[ids[0]] = eval_lambda_local(&coarse.dofs, lambda, c, 0.5),
        }
    }
    Ok(out)
}

/// Exact embedding of `sol` into the spaces of `fine`, whose meshes must be
/// refinements of the solution's meshes.
pub fn prolong(sol: &SolutionTriple, fine: Arc<Discretization>) -> Result<SolutionTriple> {
    let coarse = &sol.disc;
    let (a, b) = (&coarse.dofs, &fine.dofs);
    if (a.bulk_degree, a.surface_degree, a.multiplier) != (b.bulk_degree, b.surface_degree, b.multiplier) {
        return Err(Error::InvalidParameter("prolongation between different schemes".into()));
    }
    if (coarse.gamma().perimeter() - fine.gamma().perimeter()).abs() > 1e-12 * coarse.gamma().perimeter() {
        return Err(Error::NotNested("domains differ".into()));
    }
    let u = prolong_u(coarse, &sol.u, &fine)?;
    let p = prolong_p(coarse, &sol.p, &fine)?;
    let lambda = prolong_lambda(coarse, &sol.lambda, &fine)?;
    Ok(SolutionTriple { disc: fine, u, p, lambda })
}

/// Matrix of the mesh-weighted norm `Σ_E h_E ‖μ‖²_{L²(E)}` on M_h.
pub fn lambda_norm_matrix(disc: &Discretization) -> Mat<f64> {
    let bulk = disc.bulk();
    let dofs = &disc.dofs;
    let m = dofs.n_lambda;
    let kl = dofs.lambda_local();
    let mut n = Mat::<f64>::zeros(m, m);
    for b in 0..bulk.num_boundary_edges() {
        let h = bulk.boundary_edge_size(b);
        let ids = dofs.lambda_dofs(b);
        for q in GAUSS_5 {
            let mu = line_basis(kl - 1, q.xi);
            for a in 0..kl {
                for c in 0..kl {
                    n[(ids[a], ids[c])] += h * h * q.weight * mu[a] * mu[c];
                }
            }
        }
    }
    n
}

fn sparse_to_dense_transpose(c: &SparseMat) -> Mat<f64> {
    let mut d = Mat::<f64>::zeros(c.ncols(), c.nrows());
    let cp = c.symbolic().col_ptr();
    let ri = c.symbolic().row_idx();
    for j in 0..c.ncols() {
        for k in cp[j]..cp[j + 1] {
            d[(j, ri[k])] += c.val()[k];
        }
    }
    d
}

/// `C N^{-1} Cᵀ` for a sparse SPD `N` and sparse `C`.
fn schur(n: &SparseMat, c: &SparseMat) -> Result<Mat<f64>> {
    let llt = n.sp_cholesky(Side::Lower).map_err(|e| Error::Eigen(format!("norm matrix not SPD: {e:?}")))?;
    let ct = sparse_to_dense_transpose(c);
    let y = llt.solve(&ct);
    Ok(ct.transpose() * &y)
}

/// Discrete inf–sup constant of the coupling `(v, q; μ) ↦ ⟨tr v − q, μ⟩_Γ`
/// with full H¹ norms on V_h × Q_h and the mesh-weighted norm on M_h.
pub fn infsup_constant(disc: &Discretization) -> Result<f64> {
    let m = disc.dofs.n_lambda;
    if m == 0 {
        return Err(Error::EmptyMultiplier);
    }
    let one = Coefficient::Constant(1.0);
    let nu = bulk_operator(disc, 1.0, &one)?;
    let np = surface_operator(disc, 1.0, &one)?;
    let (cu, cp) = coupling_blocks(disc);
    let s = schur(&nu, &cu)? + schur(&np, &cp)?;
    let nm = lambda_norm_matrix(disc);
    let l = nm.llt(Side::Lower).map_err(|e| Error::Eigen(format!("multiplier norm not SPD: {e:?}")))?;
    let lower = l.L().to_owned();
    // W = L⁻¹ S L⁻ᵀ
    let mut w = s;
    lower.solve_lower_triangular_in_place(w.as_mut());
    let mut wt = w.transpose().to_owned();
    lower.solve_lower_triangular_in_place(wt.as_mut());
    let sym = Mat::<f64>::from_fn(m, m, |i, j| 0.5 * (wt[(i, j)] + wt[(j, i)]));
    let ev = sym.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let min = ev.first().copied().ok_or(Error::EmptyMultiplier)?;
    if !(min > 0.0) {
        return Err(Error::Eigen(format!("coupling is singular (smallest eigenvalue {min:.3e})")));
    }
    Ok(min.sqrt())
}
