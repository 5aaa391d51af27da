//! Brute-force reference implementations shared by the integration tests.
//! They use their own quadrature, basis functions and dense linear algebra
//! and only borrow mesh topology and dof numbering from the library.

#![allow(dead_code)]

use std::sync::Arc;

use dynbc_afem::assembly::{ProblemData, SaddleSystem};
use dynbc_afem::mesh::{Mesh2D, MeshPair, Point, NONE};
use dynbc_afem::spaces::{Coefficient, Discretization, MultiplierKind, SchemeConfig};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub const MAX_DENSE: usize = 500;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Gauss–Legendre nodes and weights on `[0, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((0.5 * (1.0 - x), 1.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

/// Collapsed tensor Gauss rule on the reference triangle: `(bary, weight)`
/// with weights summing to one.
pub fn collapsed_rule(n: usize) -> Vec<([f64; 3], f64)> {
    let g = gauss_legendre(n);
    let mut out = Vec::new();
    for &(a, wa) in &g {
        for &(b, wb) in &g {
            let x = a;
            let y = b * (1.0 - a);
            out.push(([1.0 - x - y, x, y], 2.0 * wa * wb * (1.0 - a)));
        }
    }
    out
}

/// Linear-algebra view of one triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub p: [Point; 3],
    pub area: f64,
    /// Gradients of the barycentric coordinates.
    pub dl: [Point; 3],
}

impl Element {
    pub fn new(p: [Point; 3]) -> Self {
        let j = [[p[1][0] - p[0][0], p[2][0] - p[0][0]], [p[1][1] - p[0][1], p[2][1] - p[0][1]]];
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        // rows of J^{-1} are the gradients of λ1 and λ2
        let g1 = [j[1][1] / det, -j[0][1] / det];
        let g2 = [-j[1][0] / det, j[0][0] / det];
        Self { p, area: 0.5 * det.abs(), dl: [[-g1[0] - g2[0], -g1[1] - g2[1]], g1, g2] }
    }

    pub fn of(mesh: &Mesh2D, t: usize) -> Self {
        let [a, b, c] = mesh.triangle(t);
        Self::new([mesh.vertex(a), mesh.vertex(b), mesh.vertex(c)])
    }

    pub fn point(&self, l: [f64; 3]) -> Point {
        [
            l[0] * self.p[0][0] + l[1] * self.p[1][0] + l[2] * self.p[2][0],
            l[0] * self.p[0][1] + l[1] * self.p[1][1] + l[2] * self.p[2][1],
        ]
    }

    pub fn bary(&self, x: Point) -> [f64; 3] {
        let l1 = self.dl[1][0] * (x[0] - self.p[0][0]) + self.dl[1][1] * (x[1] - self.p[0][1]);
        let l2 = self.dl[2][0] * (x[0] - self.p[0][0]) + self.dl[2][1] * (x[1] - self.p[0][1]);
        [1.0 - l1 - l2, l1, l2]
    }

    /// Values, gradients and Laplacians of the local basis (vertices first,
    /// then the midpoints of the edges `(k, k+1)`).
    pub fn basis(&self, deg: usize, l: [f64; 3]) -> Vec<(f64, Point, f64)> {
        let dot = |a: Point, b: Point| a[0] * b[0] + a[1] * b[1];
        let sc = |s: f64, a: Point| [s * a[0], s * a[1]];
        let add = |a: Point, b: Point| [a[0] + b[0], a[1] + b[1]];
        if deg == 1 {
            return (0..3).map(|k| (l[k], self.dl[k], 0.0)).collect();
        }
        let mut out = Vec::with_capacity(6);
        for k in 0..3 {
            out.push((l[k] * (2.0 * l[k] - 1.0), sc(4.0 * l[k] - 1.0, self.dl[k]), 4.0 * dot(self.dl[k], self.dl[k])));
        }
        for k in 0..3 {
            let m = (k + 1) % 3;
            out.push((
                4.0 * l[k] * l[m],
                add(sc(4.0 * l[m], self.dl[k]), sc(4.0 * l[k], self.dl[m])),
                8.0 * dot(self.dl[k], self.dl[m]),
            ));
        }
        out
    }
}

/// Basis on a segment with local coordinate `xi`: start, end, midpoint.
/// Returns values and derivatives with respect to `xi`.
pub fn line_basis(deg: usize, xi: f64) -> Vec<(f64, f64)> {
    match deg {
        0 => vec![(1.0, 0.0)],
        1 => vec![(1.0 - xi, -1.0), (xi, 1.0)],
        _ => vec![
            ((1.0 - xi) * (1.0 - 2.0 * xi), 4.0 * xi - 3.0),
            (xi * (2.0 * xi - 1.0), 4.0 * xi - 1.0),
            (4.0 * xi * (1.0 - xi), 4.0 - 8.0 * xi),
        ],
    }
}

/// Second `xi`-derivatives of [`line_basis`].
pub fn line_basis_second(deg: usize) -> Vec<f64> {
    match deg {
        2 => vec![4.0, 4.0, -8.0],
        1 => vec![0.0, 0.0],
        _ => vec![0.0],
    }
}

/// Geometry of segment `i`: end points, length, parent boundary edge and the
/// local coordinates of its end points within the parent edge.
pub struct SegGeom {
    pub a: Point,
    pub b: Point,
    pub h: f64,
    pub edge: usize,
    pub tau: (f64, f64),
}

pub fn seg_geom(pair: &MeshPair, i: usize) -> SegGeom {
    let bulk = &pair.bulk;
    let seg = pair.gamma.segment(i);
    let e = seg.parent_edge;
    let (s0, s1) = bulk.boundary_arc(e);
    let [va, vb] = bulk.boundary_edge(e);
    let (pa, pb) = (bulk.vertex(va), bulk.vertex(vb));
    let at = |s: f64| {
        let r = (s - s0) / (s1 - s0);
        [pa[0] + r * (pb[0] - pa[0]), pa[1] + r * (pb[1] - pa[1])]
    };
    let tau = ((seg.start - s0) / (s1 - s0), (seg.end - s0) / (s1 - s0));
    SegGeom { a: at(seg.start), b: at(seg.end), h: seg.end - seg.start, edge: e, tau }
}

fn lerp(a: Point, b: Point, s: f64) -> Point {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

fn coef(c: &Coefficient, x: Point) -> f64 {
    c.at(x)
}

/// Dense saddle system `[[A_u, 0, -C_uᵀ], [0, A_p, C_pᵀ], [-C_u, C_p, 0]]`.
#[derive(Debug, Clone)]
pub struct DenseSystem {
    pub n_u: usize,
    pub n_p: usize,
    pub n_lambda: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl DenseSystem {
    pub fn dim(&self) -> usize {
        self.n_u + self.n_p + self.n_lambda
    }
}

/// Assembles the saddle system with exact-for-polynomials quadrature of
/// higher order than the library. Coefficients are evaluated pointwise, so
/// they must be affine for agreement with the library.
pub fn oracle_assemble(disc: &Discretization, f: &dyn Fn(Point) -> f64, g: &dyn Fn(Point) -> f64) -> DenseSystem {
    let pair = &disc.pair;
    let bulk = &pair.bulk;
    let dofs = &disc.dofs;
    let s = &disc.scheme;
    let (nu, np, nl) = (dofs.n_u, dofs.n_p, dofs.n_lambda);
    let n = nu + np + nl;
    assert!(n <= MAX_DENSE, "dense oracle limited to {MAX_DENSE} unknowns, got {n}");
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    let rule = collapsed_rule(6);
    for t in 0..bulk.num_triangles() {
        let el = Element::of(bulk, t);
        let ids = dofs.u_dofs(t);
        for &(l, w) in &rule {
            let x = el.point(l);
            let w = w * el.area;
            let phi = el.basis(s.bulk_degree, l);
            let al = coef(&s.alpha, x);
            for (i, &di) in ids.iter().enumerate() {
                b[di] += w * f(x) * phi[i].0;
                for (j, &dj) in ids.iter().enumerate() {
                    let gg = phi[i].1[0] * phi[j].1[0] + phi[i].1[1] * phi[j].1[1];
                    a[di][dj] += w * (s.sigma * phi[i].0 * phi[j].0 + al * gg);
                }
            }
        }
    }
    let line = gauss_legendre(6);
    let ldeg = match s.multiplier {
        MultiplierKind::P0Trace => 0,
        MultiplierKind::P1Trace => 1,
    };
    for i in 0..pair.gamma.len() {
        let sg = seg_geom(pair, i);
        let (t, _) = bulk.boundary_owner(sg.edge);
        let el = Element::of(bulk, t);
        let pids = dofs.p_dofs(i);
        let lids = dofs.lambda_dofs(sg.edge);
        let uids = dofs.u_dofs(t);
        for &(xi, w) in &line {
            let x = lerp(sg.a, sg.b, xi);
            let w = w * sg.h;
            let psi = line_basis(s.surface_degree, xi);
            let kap = coef(&s.kappa, x);
            for (k, &dk) in pids.iter().enumerate() {
                b[nu + dk] += w * g(x) * psi[k].0;
                for (m, &dm) in pids.iter().enumerate() {
                    a[nu + dk][nu + dm] +=
                        w * (s.sigma * psi[k].0 * psi[m].0 + kap * psi[k].1 * psi[m].1 / (sg.h * sg.h));
                }
            }
            let tau = sg.tau.0 + xi * (sg.tau.1 - sg.tau.0);
            let mu = line_basis(ldeg, tau);
            let phi = el.basis(s.bulk_degree, el.bary(x));
            for (j, &dj) in lids.iter().enumerate() {
                let r = nu + np + dj;
                for (k, &dk) in uids.iter().enumerate() {
                    let v = w * mu[j].0 * phi[k].0;
                    a[r][dk] -= v;
                    a[dk][r] -= v;
                }
                for (k, &dk) in pids.iter().enumerate() {
                    let v = w * mu[j].0 * psi[k].0;
                    a[r][nu + dk] += v;
                    a[nu + dk][r] += v;
                }
            }
        }
    }
    DenseSystem { n_u: nu, n_p: np, n_lambda: nl, a, b }
}

/// Dense copy of the library's global matrix.
pub fn densify(system: &SaddleSystem) -> Vec<Vec<f64>> {
    let m = system.global_matrix();
    let n = system.dim();
    let mut out = vec![vec![0.0; n]; n];
    let cp = m.symbolic().col_ptr();
    let ri = m.symbolic().row_idx();
    let v = m.val();
    for j in 0..n {
        for k in cp[j]..cp[j + 1] {
            out[ri[k]][j] += v[k];
        }
    }
    out
}

/// Gaussian elimination with full pivoting.
pub fn dense_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    assert!(n <= MAX_DENSE);
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut r = b.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = m.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        if best <= 1e-14 * scale {
            return None;
        }
        m.swap(k, pi);
        r.swap(k, pi);
        for row in m.iter_mut() {
            row.swap(k, pj);
        }
        perm.swap(k, pj);
        for i in k + 1..n {
            let factor = m[i][k] / m[k][k];
            if factor != 0.0 {
                for j in k..n {
                    m[i][j] -= factor * m[k][j];
                }
                r[i] -= factor * r[k];
            }
        }
    }
    let mut y = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|j| m[k][j] * y[j]).sum();
        y[k] = (r[k] - s) / m[k][k];
    }
    let mut x = vec![0.0; n];
    for k in 0..n {
        x[perm[k]] = y[k];
    }
    Some(x)
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// Squared estimator terms recomputed from scratch.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub t: Vec<f64>,
    /// Interior edges only, indexed like the library's global edges.
    pub e_in: Vec<f64>,
    pub e_bd: Vec<f64>,
    pub i: Vec<f64>,
    pub tilde_t: Vec<f64>,
    pub tilde_i: Vec<f64>,
    pub total: f64,
}

fn eval_u(disc: &Discretization, u: &[f64], t: usize, x: Point) -> (f64, Point, f64) {
    let el = Element::of(&disc.pair.bulk, t);
    let phi = el.basis(disc.scheme.bulk_degree, el.bary(x));
    let mut out = (0.0, [0.0, 0.0], 0.0);
    for (k, &d) in disc.dofs.u_dofs(t).iter().enumerate() {
        out.0 += u[d] * phi[k].0;
        out.1[0] += u[d] * phi[k].1[0];
        out.1[1] += u[d] * phi[k].1[1];
        out.2 += u[d] * phi[k].2;
    }
    out
}

/// Gradient of an affine coefficient by central differences.
fn coef_grad(c: &Coefficient, x: Point) -> Point {
    let h = 1e-3;
    [
        (c.at([x[0] + h, x[1]]) - c.at([x[0] - h, x[1]])) / (2.0 * h),
        (c.at([x[0], x[1] + h]) - c.at([x[0], x[1] - h])) / (2.0 * h),
    ]
}

fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Estimator of a (not necessarily discrete-optimal) triple `(u, p, λ)` for
/// affine coefficients.
pub fn oracle_estimate(
    disc: &Discretization,
    u: &[f64],
    p: &[f64],
    lambda: &[f64],
    f: &dyn Fn(Point) -> f64,
    g: &dyn Fn(Point) -> f64,
) -> OracleReport {
    let pair = &disc.pair;
    let bulk = &pair.bulk;
    let s = &disc.scheme;
    let dofs = &disc.dofs;
    let rule = collapsed_rule(6);
    let line = gauss_legendre(6);
    let t_terms: Vec<f64> = (0..bulk.num_triangles())
        .map(|t| {
            let el = Element::of(bulk, t);
            let h = dist(el.p[0], el.p[1]).max(dist(el.p[1], el.p[2])).max(dist(el.p[2], el.p[0]));
            let int: f64 = rule
                .iter()
                .map(|&(l, w)| {
                    let x = el.point(l);
                    let (v, gu, lap) = eval_u(disc, u, t, x);
                    let ga = coef_grad(&s.alpha, x);
                    let r = f(x) - s.sigma * v + ga[0] * gu[0] + ga[1] * gu[1] + s.alpha.at(x) * lap;
                    w * el.area * r * r
                })
                .sum();
            h * h * int
        })
        .collect();
    let flux = |t: usize, x: Point, n: Point| {
        let (_, gu, _) = eval_u(disc, u, t, x);
        s.alpha.at(x) * (gu[0] * n[0] + gu[1] * n[1])
    };
    let e_in: Vec<f64> = (0..bulk.num_edges())
        .map(|e| {
            let [t0, t1] = bulk.edge_triangles(e);
            if t1 == NONE {
                return 0.0;
            }
            let [a, b] = bulk.edge(e);
            let (pa, pb) = (bulk.vertex(a), bulk.vertex(b));
            let h = dist(pa, pb);
            let n = [(pb[1] - pa[1]) / h, -(pb[0] - pa[0]) / h];
            let int: f64 = line
                .iter()
                .map(|&(xi, w)| {
                    let x = lerp(pa, pb, xi);
                    let j = flux(t0, x, n) - flux(t1, x, n);
                    w * h * j * j
                })
                .sum();
            h * int
        })
        .collect();
    let ldeg = if s.multiplier == MultiplierKind::P0Trace { 0 } else { 1 };
    let lam = |e: usize, tau: f64| -> f64 {
        line_basis(ldeg, tau).iter().zip(dofs.lambda_dofs(e)).map(|(m, &d)| m.0 * lambda[d]).sum()
    };
    let mut e_bd: Vec<f64> = (0..bulk.num_boundary_edges())
        .map(|e| {
            let [a, b] = bulk.boundary_edge(e);
            let (pa, pb) = (bulk.vertex(a), bulk.vertex(b));
            let h = dist(pa, pb);
            let n = [(pb[1] - pa[1]) / h, -(pb[0] - pa[0]) / h];
            let (t, _) = bulk.boundary_owner(e);
            let int: f64 = line
                .iter()
                .map(|&(xi, w)| {
                    let r = lam(e, xi) - flux(t, lerp(pa, pb, xi), n);
                    w * h * r * r
                })
                .sum();
            h * int
        })
        .collect();
    let pval = |i: usize, xi: f64| -> (f64, f64, f64) {
        let psi = line_basis(s.surface_degree, xi);
        let sec = line_basis_second(s.surface_degree);
        let mut o = (0.0, 0.0, 0.0);
        for (k, &d) in dofs.p_dofs(i).iter().enumerate() {
            o.0 += p[d] * psi[k].0;
            o.1 += p[d] * psi[k].1;
            o.2 += p[d] * sec[k];
        }
        o
    };
    let mut i_terms = Vec::with_capacity(pair.gamma.len());
    for i in 0..pair.gamma.len() {
        let sg = seg_geom(pair, i);
        let (t, _) = bulk.boundary_owner(sg.edge);
        let tangent = [(sg.b[0] - sg.a[0]) / sg.h, (sg.b[1] - sg.a[1]) / sg.h];
        let mut mismatch = 0.0;
        let mut res = 0.0;
        for &(xi, w) in &line {
            let x = lerp(sg.a, sg.b, xi);
            let (pv, d1, d2) = pval(i, xi);
            let uv = eval_u(disc, u, t, x).0;
            mismatch += w * sg.h * (uv - pv).powi(2);
            let gk = coef_grad(&s.kappa, x);
            let dk = gk[0] * tangent[0] + gk[1] * tangent[1];
            let div = dk * d1 / sg.h + s.kappa.at(x) * d2 / (sg.h * sg.h);
            let tau = sg.tau.0 + xi * (sg.tau.1 - sg.tau.0);
            let r = g(x) - s.sigma * pv + div - lam(sg.edge, tau);
            res += w * sg.h * r * r;
        }
        e_bd[sg.edge] += mismatch / sg.h;
        i_terms.push(sg.h * sg.h * res);
    }
    let mut tilde_t = t_terms.clone();
    for (e, &v) in e_in.iter().enumerate() {
        let [t0, t1] = bulk.edge_triangles(e);
        if t1 != NONE {
            tilde_t[t0] += v / 2.0;
            tilde_t[t1] += v / 2.0;
        }
    }
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); bulk.num_boundary_edges()];
    for i in 0..pair.gamma.len() {
        members[pair.gamma.segment(i).parent_edge].push(i);
    }
    let mut tilde_i = i_terms.clone();
    for (e, segs) in members.iter().enumerate() {
        let share = e_bd[e] / (segs.len() + 1) as f64;
        tilde_t[bulk.boundary_owner(e).0] += share;
        for &i in segs {
            tilde_i[i] += share;
        }
    }
    let total = (t_terms.iter().sum::<f64>() + e_in.iter().sum::<f64>() + e_bd.iter().sum::<f64>()
        + i_terms.iter().sum::<f64>())
    .sqrt();
    OracleReport { t: t_terms, e_in, e_bd, i: i_terms, tilde_t, tilde_i, total }
}

/// Smallest number of values whose sum reaches `(1 - theta)` of the total,
/// by enumerating all subsets.
pub fn oracle_doerfler(values: &[f64], theta: f64) -> usize {
    assert!(values.len() <= 15);
    let total: f64 = values.iter().sum();
    let goal = (1.0 - theta) * total;
    let mut best = values.len();
    for mask in 0u32..(1 << values.len()) {
        let k = mask.count_ones() as usize;
        if k >= best {
            continue;
        }
        let sum: f64 = (0..values.len()).filter(|i| mask & (1 << i) != 0).map(|i| values[i]).sum();
        if sum >= goal {
            best = k;
        }
    }
    best
}

/// Affine function `a + b x + c y` with random coefficients.
pub fn random_affine(r: &mut StdRng, lo: f64) -> (f64, f64, f64) {
    (r.random_range(lo..lo + 2.0), r.random_range(-0.5..0.5), r.random_range(-0.5..0.5))
}

/// Small random mesh pair with a random scheme and affine coefficients.
pub fn random_discretization(r: &mut StdRng) -> Discretization {
    let mut pair = if r.random_bool(0.5) { MeshPair::unit_square(1).unwrap() } else { MeshPair::lshape(1).unwrap() };
    let scheme = match r.random_range(0..3) {
        0 => SchemeConfig::p1(),
        1 => SchemeConfig::p2p0(),
        _ => SchemeConfig::p2p1(),
    };
    let cycles = r.random_range(0..4);
    for _ in 0..cycles {
        let tris: Vec<usize> = (0..pair.bulk.num_triangles()).filter(|_| r.random_bool(0.2)).collect();
        let segs: Vec<usize> = (0..pair.gamma.len()).filter(|_| r.random_bool(0.2)).collect();
        let next = pair.refine(&tris, &segs).unwrap().pair;
        let d = Discretization::new(next.clone(), scheme.clone()).unwrap();
        if d.dofs.total() > 300 {
            break;
        }
        pair = next;
    }
    let (a0, a1, a2) = random_affine(r, 1.1);
    let (k0, k1, k2) = random_affine(r, 1.1);
    let scheme = scheme
        .with_sigma(r.random_range(0.1..5.0))
        .with_alpha(Coefficient::Field(Arc::new(move |x| a0 + a1 * x[0] + a2 * x[1])))
        .with_kappa(Coefficient::Field(Arc::new(move |x| k0 + k1 * x[0] + k2 * x[1])));
    Discretization::new(pair, scheme).unwrap()
}

/// Random affine sources, both as closures and as library data.
pub fn random_data(r: &mut StdRng) -> (Arc<dyn Fn(Point) -> f64 + Send + Sync>, Arc<dyn Fn(Point) -> f64 + Send + Sync>) {
    let (f0, f1, f2) = random_affine(r, -1.0);
    let (g0, g1, g2) = random_affine(r, -1.0);
    (Arc::new(move |x| f0 + f1 * x[0] + f2 * x[1]), Arc::new(move |x| g0 + g1 * x[0] + g2 * x[1]))
}

pub fn problem(f: &Arc<dyn Fn(Point) -> f64 + Send + Sync>, g: &Arc<dyn Fn(Point) -> f64 + Send + Sync>) -> ProblemData {
    let (f, g) = (f.clone(), g.clone());
    ProblemData::new(move |x| f(x), move |x| g(x))
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs()));
    if den == 0.0 { num } else { num / den }
}
