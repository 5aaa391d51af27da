//! Discrete spaces V_h (bulk), Q_h (surface) and M_h (multiplier on the trace
//! mesh), with Lagrange bases, dof maps and evaluation.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{arc_point, barycentric, GammaMesh, Mesh2D, MeshPair, Point, TriangleLocator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    /// Continuous piecewise linears on T_Ω|_Γ.
    P1Trace,
    /// Piecewise constants on T_Ω|_Γ.
    P0Trace,
}

/// Spatially varying coefficient, interpolated elementwise by linears on
/// the mesh it is used on.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    Field(Arc<dyn Fn(Point) -> f64 + Send + Sync>),
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::Field(_) => f.write_str("Field(..)"),
        }
    }
}

impl Coefficient {
    pub fn at(&self, x: Point) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::Field(g) => g(x),
        }
    }

    /// Nodal values of the elementwise linear interpolant at `pts`.
    pub fn nodal<const N: usize>(&self, pts: [Point; N]) -> [f64; N] {
        pts.map(|p| self.at(p))
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

#[derive(Debug, Clone)]
pub struct SchemeConfig {
    pub bulk_degree: usize,
    pub surface_degree: usize,
    pub multiplier: MultiplierKind,
    pub alpha: Coefficient,
    pub kappa: Coefficient,
    pub sigma: f64,
}

impl SchemeConfig {
    /// Linear elements everywhere, linear multiplier on the trace mesh.
    pub fn p1() -> Self {
        Self::new(1, 1, MultiplierKind::P1Trace)
    }

    /// Quadratic bulk and surface elements, piecewise constant multiplier.
    pub fn p2p0() -> Self {
        Self::new(2, 2, MultiplierKind::P0Trace)
    }

    /// Quadratic bulk and surface elements, linear multiplier.
    pub fn p2p1() -> Self {
        Self::new(2, 2, MultiplierKind::P1Trace)
    }

    fn new(bulk_degree: usize, surface_degree: usize, multiplier: MultiplierKind) -> Self {
        Self {
            bulk_degree,
            surface_degree,
            multiplier,
            alpha: Coefficient::Constant(1.0),
            kappa: Coefficient::Constant(1.0),
            sigma: 1.0,
        }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn with_alpha(mut self, alpha: Coefficient) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_kappa(mut self, kappa: Coefficient) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let admitted = matches!(
            (self.bulk_degree, self.surface_degree, self.multiplier),
            (1, 1, MultiplierKind::P1Trace) | (2, 2, MultiplierKind::P0Trace) | (2, 2, MultiplierKind::P1Trace)
        );
        if !admitted {
            return Err(Error::UnsupportedScheme(format!(
                "bulk degree {}, surface degree {}, multiplier {:?}",
                self.bulk_degree, self.surface_degree, self.multiplier
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        for (name, c) in [("alpha", &self.alpha), ("kappa", &self.kappa)] {
            if let Coefficient::Constant(v) = c {
                if !(*v > 0.0) {
                    return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match (self.bulk_degree, self.multiplier) {
            (1, _) => "p1",
            (_, MultiplierKind::P0Trace) => "p2p0",
            _ => "p2p1",
        }
    }
}

/// Element-to-dof tables for the three fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub bulk_degree: usize,
    pub surface_degree: usize,
    pub multiplier: MultiplierKind,
    pub n_u: usize,
    pub n_p: usize,
    pub n_lambda: usize,
    u_cells: Vec<usize>,
    p_cells: Vec<usize>,
    lambda_cells: Vec<usize>,
}

impl DofMap {
    pub fn build(bulk: &Mesh2D, gamma: &GammaMesh, scheme: &SchemeConfig) -> Result<Self> {
        scheme.validate()?;
        let nv = bulk.num_vertices();
        let nt = bulk.num_triangles();
        let mut u_cells = Vec::with_capacity(nt * 6);
        for t in 0..nt {
            u_cells.extend(bulk.triangle(t));
            if scheme.bulk_degree == 2 {
                u_cells.extend(bulk.triangle_edges(t).map(|e| nv + e));
            }
        }
        let n_u = if scheme.bulk_degree == 2 { nv + bulk.num_edges() } else { nv };

        let ns = gamma.len();
        let mut p_cells = Vec::with_capacity(ns * 3);
        for i in 0..ns {
            p_cells.extend([i, (i + 1) % ns]);
            if scheme.surface_degree == 2 {
                p_cells.push(ns + i);
            }
        }
        let n_p = if scheme.surface_degree == 2 { 2 * ns } else { ns };

        let nb = bulk.num_boundary_edges();
        let (lambda_cells, n_lambda) = match scheme.multiplier {
            MultiplierKind::P1Trace => ((0..nb).flat_map(|b| [b, (b + 1) % nb]).collect(), nb),
            MultiplierKind::P0Trace => ((0..nb).collect(), nb),
        };
        if n_lambda == 0 {
            return Err(Error::EmptyMultiplier);
        }
        Ok(Self {
            bulk_degree: scheme.bulk_degree,
            surface_degree: scheme.surface_degree,
            multiplier: scheme.multiplier,
            n_u,
            n_p,
            n_lambda,
            u_cells,
            p_cells,
            lambda_cells,
        })
    }

    pub fn u_local(&self) -> usize {
        if self.bulk_degree == 2 { 6 } else { 3 }
    }

    pub fn p_local(&self) -> usize {
        self.surface_degree + 1
    }

    pub fn lambda_local(&self) -> usize {
        match self.multiplier {
            MultiplierKind::P1Trace => 2,
            MultiplierKind::P0Trace => 1,
        }
    }

    /// Global V_h dofs of triangle `t`: vertices, then midpoints of local
    /// edges 0, 1, 2 for quadratics.
    pub fn u_dofs(&self, t: usize) -> &[usize] {
        let n = self.u_local();
        &self.u_cells[t * n..(t + 1) * n]
    }

    /// Global Q_h dofs of segment `i`: start, end, then midpoint for quadratics.
    pub fn p_dofs(&self, i: usize) -> &[usize] {
        let n = self.p_local();
        &self.p_cells[i * n..(i + 1) * n]
    }

    /// Global M_h dofs of bulk boundary edge `b`.
    pub fn lambda_dofs(&self, b: usize) -> &[usize] {
        let n = self.lambda_local();
        &self.lambda_cells[b * n..(b + 1) * n]
    }

    pub fn total(&self) -> usize {
        self.n_u + self.n_p + self.n_lambda
    }
}

/// Meshes, scheme and dof map that a solution lives on.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub pair: MeshPair,
    pub scheme: SchemeConfig,
    pub dofs: DofMap,
}

impl Discretization {
    pub fn new(pair: MeshPair, scheme: SchemeConfig) -> Result<Self> {
        let dofs = DofMap::build(&pair.bulk, &pair.gamma, &scheme)?;
        Ok(Self { pair, scheme, dofs })
    }

    pub fn bulk(&self) -> &Mesh2D {
        &self.pair.bulk
    }

    pub fn gamma(&self) -> &GammaMesh {
        &self.pair.gamma
    }

    /// Same scheme on other meshes.
    pub fn on(&self, pair: MeshPair) -> Result<Self> {
        Self::new(pair, self.scheme.clone())
    }

    /// Physical location of every V_h dof.
    pub fn u_nodes(&self) -> Vec<Point> {
        let bulk = self.bulk();
        let mut nodes = bulk.vertices().to_vec();
        if self.dofs.bulk_degree == 2 {
            nodes.extend(bulk.edges().iter().map(|&[a, b]| {
                let (p, q) = (bulk.vertex(a), bulk.vertex(b));
                [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
            }));
        }
        nodes
    }

    /// Arc coordinate of every Q_h dof.
    pub fn p_nodes(&self) -> Vec<f64> {
        let g = self.gamma();
        let mut nodes: Vec<f64> = g.segments().iter().map(|s| s.start).collect();
        if self.dofs.surface_degree == 2 {
            nodes.extend(g.segments().iter().map(|s| s.midpoint()));
        }
        nodes
    }

    /// Arc coordinate of every M_h dof (edge midpoints for constants).
    pub fn lambda_nodes(&self) -> Vec<f64> {
        let bulk = self.bulk();
        (0..bulk.num_boundary_edges())
            .map(|b| {
                let (s0, s1) = bulk.boundary_arc(b);
                match self.dofs.multiplier {
                    MultiplierKind::P1Trace => s0,
                    MultiplierKind::P0Trace => 0.5 * (s0 + s1),
                }
            })
            .collect()
    }
}

/// Affine geometry of a triangle: vertices, area and barycentric gradients.
#[derive(Debug, Clone, Copy)]
pub struct TriGeom {
    pub pts: [Point; 3],
    pub area: f64,
    pub grad: [Point; 3],
}

impl TriGeom {
    pub fn new(pts: [Point; 3]) -> Self {
        let [a, b, c] = pts;
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let g1 = [(c[1] - a[1]) / det, -(c[0] - a[0]) / det];
        let g2 = [-(b[1] - a[1]) / det, (b[0] - a[0]) / det];
        let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
        Self { pts, area: 0.5 * det, grad: [g0, g1, g2] }
    }

    pub fn of(mesh: &Mesh2D, t: usize) -> Self {
        Self::new(mesh.triangle_points(t))
    }

    pub fn point(&self, bary: [f64; 3]) -> Point {
        let [a, b, c] = self.pts;
        [
            bary[0] * a[0] + bary[1] * b[0] + bary[2] * c[0],
            bary[0] * a[1] + bary[1] * b[1] + bary[2] * c[1],
        ]
    }

    /// Gradient of the linear function with nodal values `v`.
    pub fn linear_gradient(&self, v: [f64; 3]) -> Point {
        let g = &self.grad;
        [
            v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
            v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
        ]
    }
}

fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Values of the local Lagrange basis of degree `deg` at `bary`.
pub fn tri_basis(deg: usize, bary: [f64; 3]) -> [f64; 6] {
    let l = bary;
    match deg {
        1 => [l[0], l[1], l[2], 0.0, 0.0, 0.0],
        _ => [
            l[0] * (2.0 * l[0] - 1.0),
            l[1] * (2.0 * l[1] - 1.0),
            l[2] * (2.0 * l[2] - 1.0),
            4.0 * l[0] * l[1],
            4.0 * l[1] * l[2],
            4.0 * l[2] * l[0],
        ],
    }
}

/// Physical gradients of the local basis at `bary`.
pub fn tri_basis_grad(deg: usize, geom: &TriGeom, bary: [f64; 3]) -> [Point; 6] {
    let g = geom.grad;
    let l = bary;
    let lin = |a: f64, u: Point, b: f64, v: Point| [a * u[0] + b * v[0], a * u[1] + b * v[1]];
    match deg {
        1 => [g[0], g[1], g[2], [0.0; 2], [0.0; 2], [0.0; 2]],
        _ => [
            lin(4.0 * l[0] - 1.0, g[0], 0.0, g[0]),
            lin(4.0 * l[1] - 1.0, g[1], 0.0, g[1]),
            lin(4.0 * l[2] - 1.0, g[2], 0.0, g[2]),
            lin(4.0 * l[1], g[0], 4.0 * l[0], g[1]),
            lin(4.0 * l[2], g[1], 4.0 * l[1], g[2]),
            lin(4.0 * l[0], g[2], 4.0 * l[2], g[0]),
        ],
    }
}

/// Laplacians of the local basis (constant per element).
pub fn tri_basis_laplacian(deg: usize, geom: &TriGeom) -> [f64; 6] {
    let g = geom.grad;
    match deg {
        1 => [0.0; 6],
        _ => [
            4.0 * dot(g[0], g[0]),
            4.0 * dot(g[1], g[1]),
            4.0 * dot(g[2], g[2]),
            8.0 * dot(g[0], g[1]),
            8.0 * dot(g[1], g[2]),
            8.0 * dot(g[2], g[0]),
        ],
    }
}

/// Local 1D Lagrange basis on `[0, 1]` with nodes start, end (, midpoint).
pub fn line_basis(deg: usize, xi: f64) -> [f64; 3] {
    match deg {
        0 => [1.0, 0.0, 0.0],
        1 => [1.0 - xi, xi, 0.0],
        _ => [(1.0 - xi) * (1.0 - 2.0 * xi), xi * (2.0 * xi - 1.0), 4.0 * xi * (1.0 - xi)],
    }
}

/// Derivatives of [`line_basis`] with respect to `xi`.
pub fn line_basis_deriv(deg: usize, xi: f64) -> [f64; 3] {
    match deg {
        0 => [0.0; 3],
        1 => [-1.0, 1.0, 0.0],
        _ => [4.0 * xi - 3.0, 4.0 * xi - 1.0, 4.0 - 8.0 * xi],
    }
}

/// Second derivatives of [`line_basis`] with respect to `xi`.
pub fn line_basis_second(deg: usize) -> [f64; 3] {
    match deg {
        2 => [4.0, 4.0, -8.0],
        _ => [0.0; 3],
    }
}

/// Triangle owning boundary edge `b` and the barycentric coordinates of the
/// point at local coordinate `tau` along the edge (in boundary orientation).
pub fn boundary_bary(bulk: &Mesh2D, b: usize, tau: f64) -> (usize, [f64; 3]) {
    let (t, k) = bulk.boundary_owner(b);
    let tri = bulk.triangle(t);
    let [p, _] = bulk.boundary_edge(b);
    let (first, second) = (k, (k + 1) % 3);
    let mut bary = [0.0; 3];
    if tri[first] == p {
        bary[first] = 1.0 - tau;
        bary[second] = tau;
    } else {
        bary[first] = tau;
        bary[second] = 1.0 - tau;
    }
    (t, bary)
}

/// Value and gradient of a V_h function inside triangle `t`.
pub fn eval_u_local(dofs: &DofMap, geom: &TriGeom, coeffs: &[f64], t: usize, bary: [f64; 3]) -> (f64, Point) {
    let deg = dofs.bulk_degree;
    let phi = tri_basis(deg, bary);
    let dphi = tri_basis_grad(deg, geom, bary);
    let mut v = 0.0;
    let mut g = [0.0; 2];
    for (i, &d) in dofs.u_dofs(t).iter().enumerate() {
        v += coeffs[d] * phi[i];
        g[0] += coeffs[d] * dphi[i][0];
        g[1] += coeffs[d] * dphi[i][1];
    }
    (v, g)
}

/// Value and arc-length derivative of a Q_h function on segment `i`.
pub fn eval_p_local(dofs: &DofMap, gamma: &GammaMesh, coeffs: &[f64], i: usize, xi: f64) -> (f64, f64) {
    let deg = dofs.surface_degree;
    let phi = line_basis(deg, xi);
    let dphi = line_basis_deriv(deg, xi);
    let h = gamma.segment_size(i);
    let mut v = 0.0;
    let mut d = 0.0;
    for (k, &j) in dofs.p_dofs(i).iter().enumerate() {
        v += coeffs[j] * phi[k];
        d += coeffs[j] * dphi[k] / h;
    }
    (v, d)
}

/// Value of an M_h function at local coordinate `tau` of boundary edge `b`.
pub fn eval_lambda_local(dofs: &DofMap, coeffs: &[f64], b: usize, tau: f64) -> f64 {
    let deg = dofs.lambda_local() - 1;
    let phi = line_basis(deg, tau);
    dofs.lambda_dofs(b).iter().enumerate().map(|(k, &j)| coeffs[j] * phi[k]).sum()
}

impl Discretization {
    /// Value and gradient of a V_h function at a point of the domain.
    pub fn evaluate_u(&self, locator: &TriangleLocator, coeffs: &[f64], x: Point) -> Result<(f64, Point)> {
        self.check_len(coeffs.len(), self.dofs.n_u)?;
        let (t, bary) = locator.locate(self.bulk(), x).ok_or(Error::OutsideDomain(x[0], x[1]))?;
        Ok(eval_u_local(&self.dofs, &TriGeom::of(self.bulk(), t), coeffs, t, bary))
    }

    /// Value and arc-length derivative of a Q_h function at arc coordinate `s`.
    pub fn evaluate_p(&self, coeffs: &[f64], s: f64) -> Result<(f64, f64)> {
        self.check_len(coeffs.len(), self.dofs.n_p)?;
        self.check_arc(s)?;
        let (i, xi) = self.gamma().locate(s);
        Ok(eval_p_local(&self.dofs, self.gamma(), coeffs, i, xi))
    }

    /// Value of an M_h function at arc coordinate `s`.
    pub fn evaluate_lambda(&self, coeffs: &[f64], s: f64) -> Result<f64> {
        self.check_len(coeffs.len(), self.dofs.n_lambda)?;
        self.check_arc(s)?;
        let bulk = self.bulk();
        let b = self.edge_at(s);
        let (s0, s1) = bulk.boundary_arc(b);
        Ok(eval_lambda_local(&self.dofs, coeffs, b, ((s - s0) / (s1 - s0)).clamp(0.0, 1.0)))
    }

    /// Value of a V_h function at arc coordinate `s` of Γ.
    pub fn evaluate_trace(&self, coeffs: &[f64], s: f64) -> Result<f64> {
        self.check_len(coeffs.len(), self.dofs.n_u)?;
        self.check_arc(s)?;
        let bulk = self.bulk();
        let b = self.edge_at(s);
        let (s0, s1) = bulk.boundary_arc(b);
        let (t, bary) = boundary_bary(bulk, b, ((s - s0) / (s1 - s0)).clamp(0.0, 1.0));
        Ok(eval_u_local(&self.dofs, &TriGeom::of(bulk, t), coeffs, t, bary).0)
    }

    /// Restriction of a V_h function to every segment of T_Γ, given by its
    /// values at the segment's Lagrange nodes (start, end, midpoint) of the
    /// bulk degree.
    pub fn trace_values(&self, coeffs: &[f64]) -> Result<Vec<[f64; 3]>> {
        self.check_len(coeffs.len(), self.dofs.n_u)?;
        let bulk = self.bulk();
        let gamma = self.gamma();
        Ok((0..gamma.len())
            .map(|i| {
                let b = gamma.segment(i).parent_edge;
                let (t0, t1) = gamma.local_range(bulk, i);
                let geom = TriGeom::of(bulk, boundary_bary(bulk, b, 0.0).0);
                let at = |tau: f64| {
                    let (t, bary) = boundary_bary(bulk, b, tau);
                    eval_u_local(&self.dofs, &geom, coeffs, t, bary).0
                };
                let mid = if self.dofs.bulk_degree == 2 { at(0.5 * (t0 + t1)) } else { 0.0 };
                [at(t0), at(t1), mid]
            })
            .collect())
    }

    /// Physical point of Γ at arc coordinate `s`.
    pub fn gamma_point(&self, s: f64) -> Point {
        arc_point(self.bulk(), self.edge_at(s), s)
    }

    fn edge_at(&self, s: f64) -> usize {
        let bulk = self.bulk();
        if s >= bulk.perimeter() {
            bulk.num_boundary_edges() - 1
        } else {
            bulk.boundary_edge_at(s)
        }
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<()> {
        if got != expected {
            return Err(Error::DimensionMismatch { expected, got });
        }
        Ok(())
    }

    fn check_arc(&self, s: f64) -> Result<()> {
        if !(0.0..=self.gamma().perimeter()).contains(&s) {
            let p = self.gamma_point(s.clamp(0.0, self.gamma().perimeter()));
            return Err(Error::OutsideDomain(p[0], p[1]));
        }
        Ok(())
    }
}

/// Barycentric coordinates of `x` in triangle `t`.
pub fn bary_in(mesh: &Mesh2D, t: usize, x: Point) -> [f64; 3] {
    barycentric(mesh.triangle_points(t), x)
}
