use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Sentinel for a missing neighbour.
pub const NONE: usize = usize::MAX;

/// Conforming triangulation of a polygonal domain.
///
/// Local edge `k` of a triangle joins its vertices `k` and `k + 1 (mod 3)`.
/// Every triangle carries the local index of its refinement edge for newest
/// vertex bisection. Boundary edges are stored as a closed counterclockwise
/// chain, each annotated with the arc-length coordinate of its first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh2D {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    ref_edge: Vec<u8>,
    generation: Vec<u32>,
    boundary: Vec<[usize; 2]>,
    boundary_arc: Vec<f64>,
    perimeter: f64,

    edges: Vec<[usize; 2]>,
    tri_edges: Vec<[usize; 3]>,
    edge_tris: Vec<[usize; 2]>,
    edge_boundary: Vec<usize>,
    boundary_edge: Vec<usize>,
    boundary_owner: Vec<(usize, u8)>,
    vertex_tri_offsets: Vec<usize>,
    vertex_tris: Vec<usize>,
}

impl Mesh2D {
    /// Builds a mesh from raw triangles, initialising every refinement edge
    /// to the longest edge (ties go to the edge whose opposite vertex has the
    /// smallest index). The boundary chain starts at the lowest-leftmost
    /// boundary vertex.
    pub fn from_triangles(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let ref_edge = triangles
            .iter()
            .map(|t| longest_edge(&vertices, t))
            .collect::<Vec<_>>();
        let generation = vec![0; triangles.len()];
        Self::from_parts(vertices, triangles, ref_edge, generation, None)
    }

    /// Assembles a mesh and its topology. When `boundary` is `None` the
    /// boundary chain is recovered from the triangles.
    pub fn from_parts(
        vertices: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        ref_edge: Vec<u8>,
        generation: Vec<u32>,
        boundary: Option<(Vec<[usize; 2]>, Vec<f64>, f64)>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::MeshInvariant("mesh has no triangles".into()));
        }
        if ref_edge.len() != triangles.len() || generation.len() != triangles.len() {
            return Err(Error::MeshInvariant("per-triangle arrays differ in length".into()));
        }
        let nv = vertices.len();
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::MeshInvariant(format!("triangle {t} references a missing vertex")));
            }
            if signed_area(&vertices, tri) <= 0.0 {
                return Err(Error::MeshInvariant(format!("triangle {t} is not positively oriented")));
            }
            if ref_edge[t] > 2 {
                return Err(Error::MeshInvariant(format!("triangle {t} has refinement edge {}", ref_edge[t])));
            }
        }

        let mut edge_index: HashMap<[usize; 2], usize> = HashMap::with_capacity(triangles.len() * 2);
        let mut edges = Vec::new();
        let mut edge_tris: Vec<[usize; 2]> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut te = [0; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = [a.min(b), a.max(b)];
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push(key);
                    edge_tris.push([NONE, NONE]);
                    edges.len() - 1
                });
                let slot = &mut edge_tris[e];
                if slot[0] == NONE {
                    slot[0] = t;
                } else if slot[1] == NONE {
                    slot[1] = t;
                } else {
                    return Err(Error::MeshInvariant(format!("edge {a}-{b} shared by more than two triangles")));
                }
                te[k] = e;
            }
            tri_edges.push(te);
        }

        // oriented boundary edges as seen from their unique triangle
        let mut outgoing: HashMap<usize, (usize, usize)> = HashMap::new();
        for (e, et) in edge_tris.iter().enumerate() {
            if et[1] == NONE {
                let t = et[0];
                let k = tri_edges[t].iter().position(|&x| x == e).unwrap();
                let (a, b) = (triangles[t][k], triangles[t][(k + 1) % 3]);
                if outgoing.insert(a, (b, e)).is_some() {
                    return Err(Error::MeshInvariant(format!("boundary is not a simple polygon at vertex {a}")));
                }
            }
        }

        let (boundary, boundary_arc, perimeter) = match boundary {
            Some(b) => b,
            None => {
                let start = *outgoing
                    .keys()
                    .min_by(|&&p, &&q| {
                        let (vp, vq) = (vertices[p], vertices[q]);
                        (vp[1], vp[0]).partial_cmp(&(vq[1], vq[0])).unwrap()
                    })
                    .ok_or_else(|| Error::MeshInvariant("mesh has no boundary".into()))?;
                let mut chain = Vec::with_capacity(outgoing.len());
                let mut arcs = Vec::with_capacity(outgoing.len());
                let mut arc = 0.0;
                let mut v = start;
                loop {
                    let (w, _) = outgoing[&v];
                    chain.push([v, w]);
                    arcs.push(arc);
                    arc += dist(vertices[v], vertices[w]);
                    v = w;
                    if v == start || chain.len() > outgoing.len() {
                        break;
                    }
                }
                (chain, arcs, arc)
            }
        };
        if boundary.len() != outgoing.len() || boundary.len() != boundary_arc.len() {
            return Err(Error::MeshInvariant(format!(
                "boundary chain covers {} of {} boundary edges",
                boundary.len(),
                outgoing.len()
            )));
        }

        let mut edge_boundary = vec![NONE; edges.len()];
        let mut boundary_edge = Vec::with_capacity(boundary.len());
        let mut boundary_owner = Vec::with_capacity(boundary.len());
        for (b, &[a, w]) in boundary.iter().enumerate() {
            let next = boundary[(b + 1) % boundary.len()][0];
            if next != w {
                return Err(Error::MeshInvariant(format!("boundary chain broken after edge {b}")));
            }
            match outgoing.get(&a) {
                Some(&(w2, e)) if w2 == w => {
                    edge_boundary[e] = b;
                    boundary_edge.push(e);
                    let t = edge_tris[e][0];
                    let k = tri_edges[t].iter().position(|&x| x == e).unwrap();
                    boundary_owner.push((t, k as u8));
                }
                _ => {
                    return Err(Error::MeshInvariant(format!("boundary edge {a}-{w} is not on the mesh boundary")));
                }
            }
        }

        let mut counts = vec![0usize; nv + 1];
        for tri in &triangles {
            for &v in tri {
                counts[v + 1] += 1;
            }
        }
        for i in 0..nv {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut vertex_tris = vec![0; counts[nv]];
        for (t, tri) in triangles.iter().enumerate() {
            for &v in tri {
                vertex_tris[fill[v]] = t;
                fill[v] += 1;
            }
        }

        Ok(Self {
            vertices,
            triangles,
            ref_edge,
            generation,
            boundary,
            boundary_arc,
            perimeter,
            edges,
            tri_edges,
            edge_tris,
            edge_boundary,
            boundary_edge,
            boundary_owner,
            vertex_tri_offsets: counts,
            vertex_tris,
        })
    }

    /// Criss-cross triangulation of the unit square: `n × n` cells, each
    /// split into four triangles through its centre.
    pub fn create_unit_square(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("subdivision count must be at least 1".into()));
        }
        criss_cross(n, n, 1.0 / n as f64, |_, _| true)
    }

    /// Criss-cross triangulation of the L-shape `(0,1)² \ [1/2,1)×(0,1/2]`
    /// with cells of width `1/(2n)`; the reentrant corner sits at `(1/2, 1/2)`.
    pub fn create_lshape(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("subdivision count must be at least 1".into()));
        }
        criss_cross(2 * n, 2 * n, 1.0 / (2 * n) as f64, |i, j| !(i >= n && j < n))
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_boundary_edges(&self) -> usize {
        self.boundary.len()
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangle(&self, t: usize) -> [usize; 3] {
        self.triangles[t]
    }

    pub fn triangle_points(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Local index of the refinement edge of `t`.
    pub fn refinement_edge(&self, t: usize) -> usize {
        self.ref_edge[t] as usize
    }

    pub fn generation(&self, t: usize) -> u32 {
        self.generation[t]
    }

    /// Global edge index of local edge `k` of triangle `t`.
    pub fn triangle_edge(&self, t: usize, k: usize) -> usize {
        self.tri_edges[t][k]
    }

    pub fn triangle_edges(&self, t: usize) -> [usize; 3] {
        self.tri_edges[t]
    }

    pub fn edge(&self, e: usize) -> [usize; 2] {
        self.edges[e]
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    /// Triangles on either side of edge `e`; the second is [`NONE`] on the boundary.
    pub fn edge_triangles(&self, e: usize) -> [usize; 2] {
        self.edge_tris[e]
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_boundary[e] != NONE
    }

    /// Position of global edge `e` in the boundary chain, if it is a boundary edge.
    pub fn boundary_index(&self, e: usize) -> Option<usize> {
        let b = self.edge_boundary[e];
        (b != NONE).then_some(b)
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary
    }

    pub fn boundary_edge(&self, b: usize) -> [usize; 2] {
        self.boundary[b]
    }

    /// Global edge index of boundary edge `b`.
    pub fn boundary_global_edge(&self, b: usize) -> usize {
        self.boundary_edge[b]
    }

    /// Triangle containing boundary edge `b` and the local index of that edge.
    pub fn boundary_owner(&self, b: usize) -> (usize, usize) {
        let (t, k) = self.boundary_owner[b];
        (t, k as usize)
    }

    /// Arc-length interval `[start, end]` covered by boundary edge `b`.
    pub fn boundary_arc(&self, b: usize) -> (f64, f64) {
        let start = self.boundary_arc[b];
        let end = if b + 1 == self.boundary.len() { self.perimeter } else { self.boundary_arc[b + 1] };
        (start, end)
    }

    pub fn boundary_arcs(&self) -> &[f64] {
        &self.boundary_arc
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    /// Boundary edge containing arc coordinate `s` (half-open intervals, periodic).
    pub fn boundary_edge_at(&self, s: f64) -> usize {
        let s = s.rem_euclid(self.perimeter);
        match self.boundary_arc.partition_point(|&a| a <= s) {
            0 => 0,
            k => k - 1,
        }
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        signed_area(&self.vertices, &self.triangles[t])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Diameter of `t`.
    pub fn element_size(&self, t: usize) -> f64 {
        let p = self.triangle_points(t);
        dist(p[0], p[1]).max(dist(p[1], p[2])).max(dist(p[2], p[0]))
    }

    pub fn edge_size(&self, e: usize) -> f64 {
        let [a, b] = self.edges[e];
        dist(self.vertices[a], self.vertices[b])
    }

    pub fn boundary_edge_size(&self, b: usize) -> f64 {
        let [p, q] = self.boundary[b];
        dist(self.vertices[p], self.vertices[q])
    }

    /// Unit outward normal of boundary edge `b`.
    pub fn outward_normal(&self, b: usize) -> Point {
        let [p, q] = self.boundary[b];
        let (a, c) = (self.vertices[p], self.vertices[q]);
        let h = dist(a, c);
        [(c[1] - a[1]) / h, -(c[0] - a[0]) / h]
    }

    /// Unit normal of edge `e` pointing from its first triangle into the second
    /// (outward for boundary edges).
    pub fn edge_normal(&self, e: usize) -> Point {
        let t = self.edge_tris[e][0];
        let k = self.tri_edges[t].iter().position(|&x| x == e).unwrap();
        let tri = self.triangles[t];
        let (a, c) = (self.vertices[tri[k]], self.vertices[tri[(k + 1) % 3]]);
        let h = dist(a, c);
        [(c[1] - a[1]) / h, -(c[0] - a[0]) / h]
    }

    pub fn vertex_triangles(&self, v: usize) -> &[usize] {
        &self.vertex_tris[self.vertex_tri_offsets[v]..self.vertex_tri_offsets[v + 1]]
    }

    /// Triangles sharing at least one vertex with `t` (including `t`).
    pub fn element_patch(&self, t: usize) -> Vec<usize> {
        let mut patch: Vec<usize> = self.triangles[t]
            .iter()
            .flat_map(|&v| self.vertex_triangles(v).iter().copied())
            .collect();
        patch.sort_unstable();
        patch.dedup();
        patch
    }

    /// Triangles containing edge `e`.
    pub fn edge_patch(&self, e: usize) -> Vec<usize> {
        self.edge_tris[e].iter().copied().filter(|&t| t != NONE).collect()
    }

    /// Boundary edges whose closure meets the closure of boundary edge `b`.
    pub fn boundary_edge_patch(&self, b: usize) -> Vec<usize> {
        let n = self.boundary.len();
        let mut patch = vec![(b + n - 1) % n, b, (b + 1) % n];
        patch.sort_unstable();
        patch.dedup();
        patch
    }

    /// Boundary vertices at which the polygon changes direction.
    pub fn corner_arcs(&self) -> Vec<f64> {
        let n = self.boundary.len();
        (0..n)
            .filter(|&b| {
                let prev = self.boundary[(b + n - 1) % n];
                let cur = self.boundary[b];
                let (a, o, c) = (self.vertices[prev[0]], self.vertices[cur[0]], self.vertices[cur[1]]);
                let cross = (o[0] - a[0]) * (c[1] - o[1]) - (o[1] - a[1]) * (c[0] - o[0]);
                cross.abs() > 1e-12 * dist(a, o) * dist(o, c)
            })
            .map(|b| self.boundary_arc[b])
            .collect()
    }

    /// Smallest interior angle over all triangles, in radians.
    pub fn min_angle(&self) -> f64 {
        (0..self.num_triangles())
            .map(|t| {
                let p = self.triangle_points(t);
                (0..3)
                    .map(|k| {
                        let (o, a, b) = (p[k], p[(k + 1) % 3], p[(k + 2) % 3]);
                        let u = [a[0] - o[0], a[1] - o[1]];
                        let w = [b[0] - o[0], b[1] - o[1]];
                        let cos = (u[0] * w[0] + u[1] * w[1]) / (dist(o, a) * dist(o, b));
                        cos.clamp(-1.0, 1.0).acos()
                    })
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Checks conformity (no hanging nodes): orientation, a single closed
    /// boundary loop and the Euler characteristic of a simply connected domain.
    pub fn check_conformity(&self) -> Result<()> {
        for t in 0..self.num_triangles() {
            if self.signed_area(t) <= 0.0 {
                return Err(Error::MeshInvariant(format!("triangle {t} has non-positive area")));
            }
        }
        let interior = self.edge_tris.iter().filter(|e| e[1] != NONE).count();
        if interior + self.boundary.len() != self.edges.len() {
            return Err(Error::MeshInvariant("boundary chain does not cover all boundary edges".into()));
        }
        let euler = self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64;
        if euler != 1 {
            return Err(Error::MeshInvariant(format!("Euler characteristic {euler}, expected 1")));
        }
        let arc_total: f64 = (0..self.boundary.len()).map(|b| self.boundary_edge_size(b)).sum();
        if (arc_total - self.perimeter).abs() > 1e-12 * self.perimeter {
            return Err(Error::MeshInvariant("boundary length differs from perimeter".into()));
        }
        for b in 0..self.boundary.len() {
            let (s, e) = self.boundary_arc(b);
            if ((e - s) - self.boundary_edge_size(b)).abs() > 1e-12 * self.perimeter {
                return Err(Error::MeshInvariant(format!("arc coordinates of boundary edge {b} are inconsistent")));
            }
        }
        Ok(())
    }

    pub(crate) fn ref_edges_raw(&self) -> &[u8] {
        &self.ref_edge
    }

    pub(crate) fn generations_raw(&self) -> &[u32] {
        &self.generation
    }
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub(crate) fn signed_area(vertices: &[Point], tri: &[usize; 3]) -> f64 {
    let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn longest_edge(vertices: &[Point], tri: &[usize; 3]) -> u8 {
    let mut best = 0u8;
    let mut best_len = -1.0;
    let mut best_opp = usize::MAX;
    for k in 0..3 {
        let len = dist(vertices[tri[k]], vertices[tri[(k + 1) % 3]]);
        let opp = tri[(k + 2) % 3];
        let longer = len > best_len * (1.0 + 1e-12);
        let tie = (len - best_len).abs() <= 1e-12 * len && opp < best_opp;
        if longer || tie {
            best = k as u8;
            best_len = len;
            best_opp = opp;
        }
    }
    best
}

fn criss_cross(nx: usize, ny: usize, h: f64, keep: impl Fn(usize, usize) -> bool) -> Result<Mesh2D> {
    let grid = |i: usize, j: usize| j * (nx + 1) + i;
    let mut used = vec![false; (nx + 1) * (ny + 1)];
    let cells: Vec<(usize, usize)> =
        (0..ny).flat_map(|j| (0..nx).map(move |i| (i, j))).filter(|&(i, j)| keep(i, j)).collect();
    for &(i, j) in &cells {
        for (di, dj) in [(0, 0), (1, 0), (1, 1), (0, 1)] {
            used[grid(i + di, j + dj)] = true;
        }
    }
    let mut index = vec![NONE; used.len()];
    let mut vertices = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if used[grid(i, j)] {
                index[grid(i, j)] = vertices.len();
                vertices.push([i as f64 * h, j as f64 * h]);
            }
        }
    }
    let mut triangles = Vec::with_capacity(4 * cells.len());
    for &(i, j) in &cells {
        let c = vertices.len();
        vertices.push([(i as f64 + 0.5) * h, (j as f64 + 0.5) * h]);
        let p00 = index[grid(i, j)];
        let p10 = index[grid(i + 1, j)];
        let p11 = index[grid(i + 1, j + 1)];
        let p01 = index[grid(i, j + 1)];
        triangles.push([p00, p10, c]);
        triangles.push([p10, p11, c]);
        triangles.push([p11, p01, c]);
        triangles.push([p01, p00, c]);
    }
    Mesh2D::from_triangles(vertices, triangles)
}
