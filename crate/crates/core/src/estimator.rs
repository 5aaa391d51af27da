//! Residual error estimators, their attribution to triangles and segments,
//! and error norms against reference or exact solutions.

use std::io::Write;
use std::sync::Arc;

use crate::assembly::{bulk_operator, spmv, surface_operator, ProblemData, ScalarFn};
use crate::error::{Error, Result};
use crate::mesh::{Mesh2D, Point, NONE};
use crate::quadrature::{GAUSS_5, TRIANGLE_7};
use crate::solver::{prolong, SolutionTriple};
use crate::spaces::{
    boundary_bary, eval_lambda_local, eval_p_local, eval_u_local, line_basis_deriv, line_basis_second,
    tri_basis_laplacian, Coefficient, Discretization, TriGeom,
};

/// Squared local estimator contributions.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorReport {
    /// Per triangle.
    pub eta_t2: Vec<f64>,
    /// Per global edge; zero on boundary edges.
    pub eta_ein2: Vec<f64>,
    /// Per bulk boundary edge (boundary index).
    pub eta_ebd2: Vec<f64>,
    /// Per segment of T_Γ.
    pub eta_i2: Vec<f64>,
    /// Per triangle, after attribution of edge contributions.
    pub eta_tilde_t2: Vec<f64>,
    /// Per segment, after attribution of edge contributions.
    pub eta_tilde_i2: Vec<f64>,
    pub total: f64,
}

impl EstimatorReport {
    pub fn total_squared(&self) -> f64 {
        self.eta_t2.iter().chain(&self.eta_ein2).chain(&self.eta_ebd2).chain(&self.eta_i2).sum()
    }

    /// Writes `kind index value` lines (kinds `T`, `Ein`, `Ebd`, `I`).
    pub fn write<W: Write>(&self, bulk: &Mesh2D, mut w: W) -> Result<()> {
        for (t, v) in self.eta_t2.iter().enumerate() {
            writeln!(w, "T {t} {v:.16e}")?;
        }
        for (e, v) in self.eta_ein2.iter().enumerate() {
            if !bulk.is_boundary_edge(e) {
                writeln!(w, "Ein {e} {v:.16e}")?;
            }
        }
        for (b, v) in self.eta_ebd2.iter().enumerate() {
            writeln!(w, "Ebd {b} {v:.16e}")?;
        }
        for (i, v) in self.eta_i2.iter().enumerate() {
            writeln!(w, "I {i} {v:.16e}")?;
        }
        Ok(())
    }
}

/// Position of vertex `v` in triangle `t`.
fn local_vertex(bulk: &Mesh2D, t: usize, v: usize) -> usize {
    bulk.triangle(t).iter().position(|&x| x == v).expect("vertex belongs to triangle")
}

fn alpha_at(a: [f64; 3], bary: [f64; 3]) -> f64 {
    a[0] * bary[0] + a[1] * bary[1] + a[2] * bary[2]
}

/// `h_T² ‖f̃ − σu + ∇α·∇u + αΔu‖²_{L²(T)}` for every triangle.
fn element_terms(sol: &SolutionTriple, data: &ProblemData, with_laplacian: bool) -> Vec<f64> {
    let disc = &sol.disc;
    let bulk = disc.bulk();
    let dofs = &disc.dofs;
    let sigma = disc.scheme.sigma;
    (0..bulk.num_triangles())
        .map(|t| {
            let geom = TriGeom::of(bulk, t);
            let a = disc.scheme.alpha.nodal(geom.pts);
            let grad_a = geom.linear_gradient(a);
            let lap: f64 = if with_laplacian {
                let l = tri_basis_laplacian(dofs.bulk_degree, &geom);
                dofs.u_dofs(t).iter().enumerate().map(|(k, &d)| sol.u[d] * l[k]).sum()
            } else {
                0.0
            };
            let mut int = 0.0;
            for q in TRIANGLE_7 {
                let (u, gu) = eval_u_local(dofs, &geom, &sol.u, t, q.bary);
                let mut r = data.bulk_source(disc, &geom, t, q.bary) - sigma * u;
                if with_laplacian {
                    r += grad_a[0] * gu[0] + grad_a[1] * gu[1] + alpha_at(a, q.bary) * lap;
                }
                int += q.weight * geom.area * r * r;
            }
            let h = bulk.element_size(t);
            h * h * int
        })
        .collect()
}

/// Flux `α ∇u · n` of the restriction to triangle `t` at a point of edge
/// `[va, vb]` with parameter `s` (0 at `va`).
fn flux(disc: &Discretization, u: &[f64], t: usize, va: usize, vb: usize, s: f64, n: Point) -> f64 {
    let bulk = disc.bulk();
    let geom = TriGeom::of(bulk, t);
    let mut bary = [0.0; 3];
    bary[local_vertex(bulk, t, va)] = 1.0 - s;
    bary[local_vertex(bulk, t, vb)] = s;
    let a = alpha_at(disc.scheme.alpha.nodal(geom.pts), bary);
    let (_, g) = eval_u_local(&disc.dofs, &geom, u, t, bary);
    a * (g[0] * n[0] + g[1] * n[1])
}

fn interior_edge_terms(sol: &SolutionTriple) -> Vec<f64> {
    let disc = &sol.disc;
    let bulk = disc.bulk();
    (0..bulk.num_edges())
        .map(|e| {
            let [t0, t1] = bulk.edge_triangles(e);
            if t1 == NONE {
                return 0.0;
            }
            let [va, vb] = bulk.edge(e);
            let n = bulk.edge_normal(e);
            let h = bulk.edge_size(e);
            let int: f64 = GAUSS_5
                .iter()
                .map(|q| {
                    let jump = flux(disc, &sol.u, t0, va, vb, q.xi, n) - flux(disc, &sol.u, t1, va, vb, q.xi, n);
                    q.weight * h * jump * jump
                })
                .sum();
            h * int
        })
        .collect()
}

/// Boundary edge terms: flux mismatch on the multiplier mesh plus the
/// constraint mismatch on the segments inside the edge.
fn boundary_edge_terms(sol: &SolutionTriple) -> Vec<f64> {
    let disc = &sol.disc;
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let mut out: Vec<f64> = (0..bulk.num_boundary_edges())
        .map(|b| {
            let (t, _) = bulk.boundary_owner(b);
            let [va, vb] = bulk.boundary_edge(b);
            let n = bulk.outward_normal(b);
            let h = bulk.boundary_edge_size(b);
            let int: f64 = GAUSS_5
                .iter()
                .map(|q| {
                    let r = eval_lambda_local(dofs, &sol.lambda, b, q.xi) - flux(disc, &sol.u, t, va, vb, q.xi, n);
                    q.weight * h * r * r
                })
                .sum();
            h * int
        })
        .collect();
    for i in 0..gamma.len() {
        let b = gamma.segment(i).parent_edge;
        let (t0, t1) = gamma.local_range(bulk, i);
        let hi = gamma.segment_size(i);
        let (t, _) = boundary_bary(bulk, b, 0.0);
        let geom = TriGeom::of(bulk, t);
        let int: f64 = GAUSS_5
            .iter()
            .map(|q| {
                let (_, bary) = boundary_bary(bulk, b, t0 + q.xi * (t1 - t0));
                let u = eval_u_local(dofs, &geom, &sol.u, t, bary).0;
                let p = eval_p_local(dofs, gamma, &sol.p, i, q.xi).0;
                q.weight * hi * (u - p) * (u - p)
            })
            .sum();
        out[b] += int / hi;
    }
    out
}

/// `h_I² ‖g̃ − σp + (κp')' − λ‖²_{L²(I)}` for every segment.
fn segment_terms(sol: &SolutionTriple, data: &ProblemData) -> Vec<f64> {
    let disc = &sol.disc;
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let sigma = disc.scheme.sigma;
    let deg = dofs.surface_degree;
    (0..gamma.len())
        .map(|i| {
            let h = gamma.segment_size(i);
            let b = gamma.segment(i).parent_edge;
            let (t0, t1) = gamma.local_range(bulk, i);
            let k0 = disc.scheme.kappa.at(gamma.point(bulk, i, 0.0));
            let k1 = disc.scheme.kappa.at(gamma.point(bulk, i, 1.0));
            let ids = dofs.p_dofs(i);
            let second = line_basis_second(deg);
            let p2: f64 = ids.iter().enumerate().map(|(k, &d)| sol.p[d] * second[k]).sum::<f64>() / (h * h);
            let int: f64 = GAUSS_5
                .iter()
                .map(|q| {
                    let d1 = line_basis_deriv(deg, q.xi);
                    let p1: f64 = ids.iter().enumerate().map(|(k, &d)| sol.p[d] * d1[k]).sum::<f64>() / h;
                    let p = eval_p_local(dofs, gamma, &sol.p, i, q.xi).0;
                    let kappa = k0 + (k1 - k0) * q.xi;
                    let div = (k1 - k0) / h * p1 + kappa * p2;
                    let lambda = eval_lambda_local(dofs, &sol.lambda, b, t0 + q.xi * (t1 - t0));
                    let r = data.surface_source(disc, i, q.xi) - sigma * p + div - lambda;
                    q.weight * h * r * r
                })
                .sum();
            h * h * int
        })
        .collect()
}

/// Computes all local estimators and their attribution.
pub fn estimate(sol: &SolutionTriple, data: &ProblemData) -> EstimatorReport {
    let mut report = EstimatorReport {
        eta_t2: element_terms(sol, data, true),
        eta_ein2: interior_edge_terms(sol),
        eta_ebd2: boundary_edge_terms(sol),
        eta_i2: segment_terms(sol, data),
        eta_tilde_t2: Vec::new(),
        eta_tilde_i2: Vec::new(),
        total: 0.0,
    };
    attribute(&mut report, sol.disc.bulk(), sol.disc.gamma());
    report.total = report.total_squared().sqrt();
    report
}

/// Element residual without the diffusion term, for comparison in tests.
#[doc(hidden)]
pub fn element_terms_without_laplacian(sol: &SolutionTriple, data: &ProblemData) -> Vec<f64> {
    element_terms(sol, data, false)
}

/// Splits each interior edge term equally between its two triangles and
/// each boundary edge term equally among its triangle and the segments it
/// contains.
pub fn attribute(report: &mut EstimatorReport, bulk: &Mesh2D, gamma: &crate::mesh::GammaMesh) {
    let mut tt = report.eta_t2.clone();
    let mut ti = report.eta_i2.clone();
    for (e, &v) in report.eta_ein2.iter().enumerate() {
        let [t0, t1] = bulk.edge_triangles(e);
        if t1 != NONE {
            tt[t0] += 0.5 * v;
            tt[t1] += 0.5 * v;
        }
    }
    let mut count = vec![1usize; bulk.num_boundary_edges()];
    for s in gamma.segments() {
        count[s.parent_edge] += 1;
    }
    for (b, &v) in report.eta_ebd2.iter().enumerate() {
        tt[bulk.boundary_owner(b).0] += v / count[b] as f64;
    }
    for (i, s) in gamma.segments().iter().enumerate() {
        ti[i] += report.eta_ebd2[s.parent_edge] / count[s.parent_edge] as f64;
    }
    report.eta_tilde_t2 = tt;
    report.eta_tilde_i2 = ti;
}

/// Error in the norms of the three fields and the combined norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorNorms {
    pub u: f64,
    pub p: f64,
    pub lambda: f64,
    pub total: f64,
}

impl ErrorNorms {
    fn new(u2: f64, p2: f64, l2: f64) -> Self {
        let (u2, p2, l2) = (u2.max(0.0), p2.max(0.0), l2.max(0.0));
        Self { u: u2.sqrt(), p: p2.sqrt(), lambda: l2.sqrt(), total: (u2 + p2 + l2).sqrt() }
    }
}

/// `Σ_E h_E ‖μ‖²_{L²(E)}` over the bulk boundary edges.
pub fn lambda_weighted_norm2(disc: &Discretization, lambda: &[f64]) -> f64 {
    let bulk = disc.bulk();
    (0..bulk.num_boundary_edges())
        .map(|b| {
            let h = bulk.boundary_edge_size(b);
            let int: f64 = GAUSS_5
                .iter()
                .map(|q| {
                    let v = eval_lambda_local(&disc.dofs, lambda, b, q.xi);
                    q.weight * h * v * v
                })
                .sum();
            h * int
        })
        .sum()
}

/// Errors of `coarse` measured against a solution on refined meshes.
pub fn error_norms(coarse: &SolutionTriple, reference: &SolutionTriple) -> Result<ErrorNorms> {
    let fine = reference.disc.clone();
    let pro = prolong(coarse, fine.clone())?;
    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<f64>>();
    let (eu, ep, el) = (diff(&reference.u, &pro.u), diff(&reference.p, &pro.p), diff(&reference.lambda, &pro.lambda));
    let one = Coefficient::Constant(1.0);
    let quad = |m: &crate::assembly::SparseMat, e: &[f64]| -> f64 { spmv(m, e).iter().zip(e).map(|(a, b)| a * b).sum() };
    let u2 = quad(&bulk_operator(&fine, 1.0, &one)?, &eu);
    let p2 = quad(&surface_operator(&fine, 1.0, &one)?, &ep);
    let l2 = lambda_weighted_norm2(&fine, &el);
    Ok(ErrorNorms::new(u2, p2, l2))
}

/// A smooth exact solution: `u`, its gradient, and the multiplier as a
/// function of a boundary point and the outward normal there. The surface
/// field is the trace of `u`.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad_u: Arc<dyn Fn(Point) -> Point + Send + Sync>,
    pub lambda: Arc<dyn Fn(Point, Point) -> f64 + Send + Sync>,
}

/// Errors of `sol` against an exact solution, by quadrature.
pub fn exact_error_norms(sol: &SolutionTriple, exact: &ExactSolution) -> Result<ErrorNorms> {
    let disc = &sol.disc;
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let mut u2 = 0.0;
    for t in 0..bulk.num_triangles() {
        let geom = TriGeom::of(bulk, t);
        for q in TRIANGLE_7 {
            let x = geom.point(q.bary);
            let (v, g) = eval_u_local(dofs, &geom, &sol.u, t, q.bary);
            let (ve, ge) = ((exact.u)(x), (exact.grad_u)(x));
            let e2 = (v - ve).powi(2) + (g[0] - ge[0]).powi(2) + (g[1] - ge[1]).powi(2);
            u2 += q.weight * geom.area * e2;
        }
    }
    let mut p2 = 0.0;
    for i in 0..gamma.len() {
        let h = gamma.segment_size(i);
        let b = gamma.segment(i).parent_edge;
        let [va, vb] = bulk.boundary_edge(b);
        let (pa, pb) = (bulk.vertex(va), bulk.vertex(vb));
        let len = bulk.boundary_edge_size(b);
        let tangent = [(pb[0] - pa[0]) / len, (pb[1] - pa[1]) / len];
        for q in GAUSS_5 {
            let x = gamma.point(bulk, i, q.xi);
            let (v, d) = eval_p_local(dofs, gamma, &sol.p, i, q.xi);
            let ge = (exact.grad_u)(x);
            let de = ge[0] * tangent[0] + ge[1] * tangent[1];
            p2 += q.weight * h * ((v - (exact.u)(x)).powi(2) + (d - de).powi(2));
        }
    }
    let mut l2 = 0.0;
    for b in 0..bulk.num_boundary_edges() {
        let h = bulk.boundary_edge_size(b);
        let n = bulk.outward_normal(b);
        let (s0, s1) = bulk.boundary_arc(b);
        for q in GAUSS_5 {
            let x = crate::mesh::arc_point(bulk, b, s0 + q.xi * (s1 - s0));
            let e = eval_lambda_local(dofs, &sol.lambda, b, q.xi) - (exact.lambda)(x, n);
            l2 += h * q.weight * h * e * e;
        }
    }
    if !(u2.is_finite() && p2.is_finite() && l2.is_finite()) {
        return Err(Error::Solver("non-finite error norm".into()));
    }
    Ok(ErrorNorms::new(u2, p2, l2))
}
