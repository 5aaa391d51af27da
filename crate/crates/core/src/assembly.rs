//! Assembly of the block saddle-point system and of the norm matrices.

use std::io::Write;
use std::sync::Arc;

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::mesh::Point;
use crate::quadrature::{GAUSS_5, TRIANGLE_7};
use crate::spaces::{
    boundary_bary, eval_p_local, eval_u_local, line_basis, line_basis_deriv, tri_basis, tri_basis_grad, Coefficient,
    Discretization, TriGeom,
};

pub type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;
pub type SparseMat = SparseColMat<usize, f64>;

/// Finite element functions from the previous time level, added to the
/// sources as `weight * u` and `weight * p`. Coefficients live on the
/// discretization being assembled.
#[derive(Debug, Clone)]
pub struct History {
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub weight: f64,
}

/// Bulk source `f` and surface source `g` (evaluated at points of Γ).
#[derive(Clone)]
pub struct ProblemData {
    pub f: ScalarFn,
    pub g: ScalarFn,
    pub history: Option<History>,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData").field("history", &self.history).finish_non_exhaustive()
    }
}

impl ProblemData {
    pub fn new(f: impl Fn(Point) -> f64 + Send + Sync + 'static, g: impl Fn(Point) -> f64 + Send + Sync + 'static) -> Self {
        Self { f: Arc::new(f), g: Arc::new(g), history: None }
    }

    pub fn constant(f: f64, g: f64) -> Self {
        Self::new(move |_| f, move |_| g)
    }

    pub fn with_history(mut self, history: History) -> Self {
        self.history = Some(history);
        self
    }

    /// Effective bulk source at barycentric point `bary` of triangle `t`.
    pub fn bulk_source(&self, disc: &Discretization, geom: &TriGeom, t: usize, bary: [f64; 3]) -> f64 {
        let x = geom.point(bary);
        let mut v = (self.f)(x);
        if let Some(h) = &self.history {
            v += h.weight * eval_u_local(&disc.dofs, geom, &h.u, t, bary).0;
        }
        v
    }

    /// Effective surface source at local coordinate `xi` of segment `i`.
    pub fn surface_source(&self, disc: &Discretization, i: usize, xi: f64) -> f64 {
        let x = disc.gamma().point(disc.bulk(), i, xi);
        let mut v = (self.g)(x);
        if let Some(h) = &self.history {
            v += h.weight * eval_p_local(&disc.dofs, disc.gamma(), &h.p, i, xi).0;
        }
        v
    }

    fn check_history(&self, disc: &Discretization) -> Result<()> {
        if let Some(h) = &self.history {
            if h.u.len() != disc.dofs.n_u {
                return Err(Error::DimensionMismatch { expected: disc.dofs.n_u, got: h.u.len() });
            }
            if h.p.len() != disc.dofs.n_p {
                return Err(Error::DimensionMismatch { expected: disc.dofs.n_p, got: h.p.len() });
            }
        }
        Ok(())
    }
}

/// Blocks and loads of the discrete saddle-point problem.
///
/// The global matrix is stored in the symmetric arrangement
/// `[[A_u, 0, -C_uᵀ], [0, A_p, C_pᵀ], [-C_u, C_p, 0]]` with right-hand side
/// `[F, G, 0]`.
#[derive(Debug, Clone)]
pub struct SaddleSystem {
    pub a_u: SparseMat,
    pub a_p: SparseMat,
    pub c_u: SparseMat,
    pub c_p: SparseMat,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

fn sparse(rows: usize, cols: usize, trips: &[Triplet<usize, usize, f64>]) -> SparseMat {
    SparseColMat::try_new_from_triplets(rows, cols, trips).expect("indices within bounds")
}

/// `y += alpha * M x` (or `alpha * Mᵀ x` when `transpose`).
pub fn spmv_add(m: &SparseMat, x: &[f64], y: &mut [f64], alpha: f64, transpose: bool) {
    let cp = m.symbolic().col_ptr();
    let ri = m.symbolic().row_idx();
    let v = m.val();
    for j in 0..m.ncols() {
        for k in cp[j]..cp[j + 1] {
            if transpose {
                y[j] += alpha * v[k] * x[ri[k]];
            } else {
                y[ri[k]] += alpha * v[k] * x[j];
            }
        }
    }
}

pub fn spmv(m: &SparseMat, x: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; m.nrows()];
    spmv_add(m, x, &mut y, 1.0, false);
    y
}

fn check_positive(name: &str, vals: &[f64]) -> Result<()> {
    if let Some(v) = vals.iter().find(|&&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter(format!("{name} must be uniformly positive, found {v}")));
    }
    Ok(())
}

/// `sigma * M_u + K_u` with diffusion `alpha` on V_h.
pub fn bulk_operator(disc: &Discretization, sigma: f64, alpha: &Coefficient) -> Result<SparseMat> {
    let bulk = disc.bulk();
    let dofs = &disc.dofs;
    let deg = dofs.bulk_degree;
    let nl = dofs.u_local();
    let mut trips = Vec::with_capacity(bulk.num_triangles() * nl * nl);
    for t in 0..bulk.num_triangles() {
        let geom = TriGeom::of(bulk, t);
        let a = alpha.nodal(geom.pts);
        check_positive("alpha", &a)?;
        let mut local = [[0.0; 6]; 6];
        for q in TRIANGLE_7 {
            let w = q.weight * geom.area;
            let phi = tri_basis(deg, q.bary);
            let dphi = tri_basis_grad(deg, &geom, q.bary);
            let aq = a[0] * q.bary[0] + a[1] * q.bary[1] + a[2] * q.bary[2];
            for i in 0..nl {
                for j in 0..nl {
                    local[i][j] += w
                        * (sigma * phi[i] * phi[j] + aq * (dphi[i][0] * dphi[j][0] + dphi[i][1] * dphi[j][1]));
                }
            }
        }
        let ids = dofs.u_dofs(t);
        for i in 0..nl {
            for j in 0..nl {
                trips.push(Triplet::new(ids[i], ids[j], local[i][j]));
            }
        }
    }
    Ok(sparse(dofs.n_u, dofs.n_u, &trips))
}

/// `sigma * M_p + K_p` with surface diffusion `kappa` on Q_h.
pub fn surface_operator(disc: &Discretization, sigma: f64, kappa: &Coefficient) -> Result<SparseMat> {
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let deg = dofs.surface_degree;
    let nl = dofs.p_local();
    let mut trips = Vec::with_capacity(gamma.len() * nl * nl);
    for i in 0..gamma.len() {
        let h = gamma.segment_size(i);
        let k = [kappa.at(gamma.point(disc.bulk(), i, 0.0)), kappa.at(gamma.point(disc.bulk(), i, 1.0))];
        check_positive("kappa", &k)?;
        let mut local = [[0.0; 3]; 3];
        for q in GAUSS_5 {
            let phi = line_basis(deg, q.xi);
            let dphi = line_basis_deriv(deg, q.xi);
            let kq = k[0] * (1.0 - q.xi) + k[1] * q.xi;
            for a in 0..nl {
                for b in 0..nl {
                    local[a][b] += q.weight * (sigma * h * phi[a] * phi[b] + kq * dphi[a] * dphi[b] / h);
                }
            }
        }
        let ids = dofs.p_dofs(i);
        for a in 0..nl {
            for b in 0..nl {
                trips.push(Triplet::new(ids[a], ids[b], local[a][b]));
            }
        }
    }
    Ok(sparse(dofs.n_p, dofs.n_p, &trips))
}

/// Couplings `C_u[μ, v] = ⟨tr v, μ⟩_Γ` and `C_p[μ, q] = ⟨q, μ⟩_Γ`,
/// integrated segment by segment on T_Γ.
pub fn coupling_blocks(disc: &Discretization) -> (SparseMat, SparseMat) {
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let (ku, kp, kl) = (dofs.u_local(), dofs.p_local(), dofs.lambda_local());
    let mut tu = Vec::with_capacity(gamma.len() * ku * kl);
    let mut tp = Vec::with_capacity(gamma.len() * kp * kl);
    for i in 0..gamma.len() {
        let seg = gamma.segment(i);
        let b = seg.parent_edge;
        let h = seg.len();
        let (t0, t1) = gamma.local_range(bulk, i);
        let (t, _) = boundary_bary(bulk, b, 0.0);
        let (udofs, pdofs, ldofs) = (dofs.u_dofs(t), dofs.p_dofs(i), dofs.lambda_dofs(b));
        let mut cu = [[0.0; 6]; 2];
        let mut cp = [[0.0; 3]; 2];
        for q in GAUSS_5 {
            let tau = t0 + q.xi * (t1 - t0);
            let (_, bary) = boundary_bary(bulk, b, tau);
            let phi = tri_basis(dofs.bulk_degree, bary);
            let psi = line_basis(dofs.surface_degree, q.xi);
            let mu = line_basis(kl - 1, tau);
            let w = q.weight * h;
            for l in 0..kl {
                for a in 0..ku {
                    cu[l][a] += w * mu[l] * phi[a];
                }
                for a in 0..kp {
                    cp[l][a] += w * mu[l] * psi[a];
                }
            }
        }
        for l in 0..kl {
            for a in 0..ku {
                tu.push(Triplet::new(ldofs[l], udofs[a], cu[l][a]));
            }
            for a in 0..kp {
                tp.push(Triplet::new(ldofs[l], pdofs[a], cp[l][a]));
            }
        }
    }
    (sparse(dofs.n_lambda, dofs.n_u, &tu), sparse(dofs.n_lambda, dofs.n_p, &tp))
}

/// Load vectors `F_i = ∫_Ω f̃ φ_i` and `G_i = ∫_Γ g̃ ψ_i`.
pub fn load_vectors(disc: &Discretization, data: &ProblemData) -> Result<(Vec<f64>, Vec<f64>)> {
    data.check_history(disc)?;
    let bulk = disc.bulk();
    let gamma = disc.gamma();
    let dofs = &disc.dofs;
    let mut f = vec![0.0; dofs.n_u];
    for t in 0..bulk.num_triangles() {
        let geom = TriGeom::of(bulk, t);
        let ids = dofs.u_dofs(t);
        for q in TRIANGLE_7 {
            let w = q.weight * geom.area * data.bulk_source(disc, &geom, t, q.bary);
            let phi = tri_basis(dofs.bulk_degree, q.bary);
            for (a, &d) in ids.iter().enumerate() {
                f[d] += w * phi[a];
            }
        }
    }
    let mut g = vec![0.0; dofs.n_p];
    for i in 0..gamma.len() {
        let h = gamma.segment_size(i);
        let ids = dofs.p_dofs(i);
        for q in GAUSS_5 {
            let w = q.weight * h * data.surface_source(disc, i, q.xi);
            let psi = line_basis(dofs.surface_degree, q.xi);
            for (a, &d) in ids.iter().enumerate() {
                g[d] += w * psi[a];
            }
        }
    }
    Ok((f, g))
}

pub fn assemble(disc: &Discretization, data: &ProblemData) -> Result<SaddleSystem> {
    let s = &disc.scheme;
    let a_u = bulk_operator(disc, s.sigma, &s.alpha)?;
    let a_p = surface_operator(disc, s.sigma, &s.kappa)?;
    let (c_u, c_p) = coupling_blocks(disc);
    let (f, g) = load_vectors(disc, data)?;
    Ok(SaddleSystem { a_u, a_p, c_u, c_p, f, g })
}

impl SaddleSystem {
    pub fn n_u(&self) -> usize {
        self.a_u.nrows()
    }

    pub fn n_p(&self) -> usize {
        self.a_p.nrows()
    }

    pub fn n_lambda(&self) -> usize {
        self.c_u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.n_u() + self.n_p() + self.n_lambda()
    }

    pub fn rhs(&self) -> Vec<f64> {
        let mut b = Vec::with_capacity(self.dim());
        b.extend_from_slice(&self.f);
        b.extend_from_slice(&self.g);
        b.resize(self.dim(), 0.0);
        b
    }

    /// The global symmetric matrix as a single sparse matrix.
    pub fn global_matrix(&self) -> SparseMat {
        let (nu, np) = (self.n_u(), self.n_p());
        let mut trips = Vec::new();
        let mut push = |m: &SparseMat, r0: usize, c0: usize, scale: f64, transpose: bool| {
            let cp = m.symbolic().col_ptr();
            let ri = m.symbolic().row_idx();
            let v = m.val();
            for j in 0..m.ncols() {
                for k in cp[j]..cp[j + 1] {
                    let (r, c) = if transpose { (j, ri[k]) } else { (ri[k], j) };
                    trips.push(Triplet::new(r0 + r, c0 + c, scale * v[k]));
                }
            }
        };
        push(&self.a_u, 0, 0, 1.0, false);
        push(&self.a_p, nu, nu, 1.0, false);
        push(&self.c_u, 0, nu + np, -1.0, true);
        push(&self.c_p, nu, nu + np, 1.0, true);
        push(&self.c_u, nu + np, 0, -1.0, false);
        push(&self.c_p, nu + np, nu, 1.0, false);
        sparse(self.dim(), self.dim(), &trips)
    }

    /// Product of the global matrix with the stacked vector `x = [u, p, λ]`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        let (nu, np) = (self.n_u(), self.n_p());
        let (u, rest) = x.split_at(nu);
        let (p, l) = rest.split_at(np);
        let mut y = vec![0.0; self.dim()];
        {
            let (yu, rest) = y.split_at_mut(nu);
            let (yp, yl) = rest.split_at_mut(np);
            spmv_add(&self.a_u, u, yu, 1.0, false);
            spmv_add(&self.c_u, l, yu, -1.0, true);
            spmv_add(&self.a_p, p, yp, 1.0, false);
            spmv_add(&self.c_p, l, yp, 1.0, true);
            spmv_add(&self.c_u, u, yl, -1.0, false);
            spmv_add(&self.c_p, p, yl, 1.0, false);
        }
        Ok(y)
    }

    /// Coordinate dump `row col value` of the global matrix.
    pub fn write_matrix<W: Write>(&self, mut w: W) -> Result<()> {
        let m = self.global_matrix();
        let cp = m.symbolic().col_ptr();
        let ri = m.symbolic().row_idx();
        let v = m.val();
        for j in 0..m.ncols() {
            for k in cp[j]..cp[j + 1] {
                writeln!(w, "{} {j} {:.16e}", ri[k], v[k])?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{GammaMesh, Mesh2D, MeshPair};
    use crate::spaces::SchemeConfig;

    fn dense(m: &SparseMat) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; m.ncols()]; m.nrows()];
        let cp = m.symbolic().col_ptr();
        for j in 0..m.ncols() {
            for k in cp[j]..cp[j + 1] {
                d[m.symbolic().row_idx()[k]][j] += m.val()[k];
            }
        }
        d
    }

    fn disc(scheme: SchemeConfig) -> Discretization {
        Discretization::new(MeshPair::unit_square(2).unwrap().refine(&[0, 9], &[1, 6]).unwrap().pair, scheme)
            .unwrap()
    }

    #[test]
    fn single_triangle_stiffness() {
        let bulk = Mesh2D::from_triangles(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap();
        let pair = MeshPair { gamma: GammaMesh::trace_of(&bulk), bulk };
        let d = Discretization::new(pair, SchemeConfig::p1()).unwrap();
        let k = dense(&bulk_operator(&d, 0.0, &Coefficient::Constant(1.0)).unwrap());
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn segment_mass() {
        let d = Discretization::new(MeshPair::unit_square(1).unwrap(), SchemeConfig::p1()).unwrap();
        let one = Coefficient::Constant(1.0);
        let with_mass = dense(&surface_operator(&d, 1.0, &one).unwrap());
        let without = dense(&surface_operator(&d, 0.0, &one).unwrap());
        // segments have length 1; dof 0 is shared by the first and last segment
        assert!((with_mass[0][1] - without[0][1] - 1.0 / 6.0).abs() < 1e-14);
        assert!((with_mass[0][0] - without[0][0] - 2.0 * 2.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn stiffness_rows_sum_to_zero() {
        for scheme in [SchemeConfig::p1(), SchemeConfig::p2p0()] {
            let d = disc(scheme);
            let alpha = Coefficient::Field(Arc::new(|x: Point| 1.0 + x[0] * x[1]));
            let k = bulk_operator(&d, 0.0, &alpha).unwrap();
            assert!(spmv(&k, &vec![1.0; d.dofs.n_u]).iter().all(|v| v.abs() < 1e-12));
            let kp = surface_operator(&d, 0.0, &Coefficient::Constant(2.0)).unwrap();
            assert!(spmv(&kp, &vec![1.0; d.dofs.n_p]).iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn constants_satisfy_constraint() {
        for scheme in [SchemeConfig::p1(), SchemeConfig::p2p0(), SchemeConfig::p2p1()] {
            let d = disc(scheme);
            let (cu, cp) = coupling_blocks(&d);
            let a = spmv(&cu, &vec![1.0; d.dofs.n_u]);
            let b = spmv(&cp, &vec![1.0; d.dofs.n_p]);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-14);
            }
            assert!((a.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_data_gives_zero_loads() {
        let d = disc(SchemeConfig::p2p0());
        let sys = assemble(&d, &ProblemData::constant(0.0, 0.0)).unwrap();
        assert!(sys.f.iter().chain(&sys.g).all(|&v| v == 0.0));
    }

    #[test]
    fn apply_matches_global_matrix_and_is_symmetric() {
        let d = disc(SchemeConfig::p2p0());
        let sys = assemble(&d, &ProblemData::constant(1.0, 1.0)).unwrap();
        let n = sys.dim();
        let x: Vec<f64> = (0..n).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 53 % 13) as f64 - 6.0) / 7.0).collect();
        let ax = sys.apply(&x).unwrap();
        let ay = sys.apply(&y).unwrap();
        let gx = spmv(&sys.global_matrix(), &x);
        for (a, b) in ax.iter().zip(&gx) {
            assert!((a - b).abs() < 1e-12);
        }
        let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
        assert!(sys.apply(&x[1..]).is_err());
    }

    #[test]
    fn matrix_dump_lines() {
        let d = Discretization::new(MeshPair::unit_square(1).unwrap(), SchemeConfig::p1()).unwrap();
        let sys = assemble(&d, &ProblemData::constant(0.0, 0.0)).unwrap();
        let mut buf = Vec::new();
        sys.write_matrix(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), sys.global_matrix().compute_nnz());
        assert!(text.lines().all(|l| l.split(' ').count() == 3));
    }
}
