//! Newest vertex bisection with conformity closure.
//!
//! Refinement works on marked edges: a marked triangle marks its refinement
//! edge, and any triangle with a marked edge also marks its own refinement
//! edge until nothing changes. Each triangle is then split according to the
//! pattern of its marked edges (one, two or three bisections).

use super::bulk::{Mesh2D, Point, NONE};
use crate::error::{Error, Result};

/// A refined bulk mesh together with the index of the coarse triangle each
/// fine triangle came from.
#[derive(Debug, Clone)]
pub struct BulkRefinement {
    pub mesh: Mesh2D,
    pub parent: Vec<usize>,
}

impl Mesh2D {
    /// Bisects every marked triangle through its refinement edge, closing
    /// the refinement so that no hanging nodes remain.
    pub fn bisect(&self, marked: &[usize]) -> Result<Mesh2D> {
        Ok(self.refine(marked, &[])?.mesh)
    }

    /// Quadrisection of every triangle (all three edges bisected).
    pub fn uniform_refine(&self) -> Mesh2D {
        let all: Vec<usize> = (0..self.num_edges()).collect();
        self.refine(&[], &all).expect("uniform refinement of a valid mesh").mesh
    }

    /// Refines the mesh so that every marked triangle is bisected and every
    /// marked edge (global edge index) is split.
    pub fn refine(&self, marked_triangles: &[usize], marked_edges: &[usize]) -> Result<BulkRefinement> {
        let nt = self.num_triangles();
        let ne = self.num_edges();
        if let Some(&t) = marked_triangles.iter().find(|&&t| t >= nt) {
            return Err(Error::InvalidParameter(format!("marked triangle {t} out of range")));
        }
        if let Some(&e) = marked_edges.iter().find(|&&e| e >= ne) {
            return Err(Error::InvalidParameter(format!("marked edge {e} out of range")));
        }
        if marked_triangles.is_empty() && marked_edges.is_empty() {
            return Ok(BulkRefinement { mesh: self.clone(), parent: (0..nt).collect() });
        }

        let ref_global = |t: usize| self.triangle_edge(t, self.refinement_edge(t));
        let mut marked = vec![false; ne];
        let mut stack = Vec::new();
        let seeds = marked_triangles.iter().map(|&t| ref_global(t)).chain(marked_edges.iter().copied());
        for e in seeds {
            if !marked[e] {
                marked[e] = true;
                stack.push(e);
            }
        }
        while let Some(e) = stack.pop() {
            for t in self.edge_triangles(e) {
                if t == NONE {
                    continue;
                }
                let r = ref_global(t);
                if !marked[r] {
                    marked[r] = true;
                    stack.push(r);
                }
            }
        }

        let mut vertices: Vec<Point> = self.vertices().to_vec();
        let mut midpoint = vec![NONE; ne];
        for e in 0..ne {
            if marked[e] {
                let [a, b] = self.edge(e);
                let (p, q) = (self.vertex(a), self.vertex(b));
                midpoint[e] = vertices.len();
                vertices.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
            }
        }

        let mut triangles = Vec::with_capacity(nt * 2);
        let mut ref_edge = Vec::with_capacity(nt * 2);
        let mut generation = Vec::with_capacity(nt * 2);
        let mut parent = Vec::with_capacity(nt * 2);
        let raw_ref = self.ref_edges_raw();
        let raw_gen = self.generations_raw();
        for t in 0..nt {
            let r = raw_ref[t] as usize;
            let tri = self.triangle(t);
            let te = self.triangle_edges(t);
            let (a, b, c) = (tri[r], tri[(r + 1) % 3], tri[(r + 2) % 3]);
            let (e0, e1, e2) = (te[r], te[(r + 1) % 3], te[(r + 2) % 3]);
            let g = raw_gen[t];
            let mut push = |tri: [usize; 3], gen: u32| {
                triangles.push(tri);
                ref_edge.push(0u8);
                generation.push(gen);
                parent.push(t);
            };
            if !marked[e0] {
                debug_assert!(!marked[e1] && !marked[e2]);
                triangles.push(tri);
                ref_edge.push(raw_ref[t]);
                generation.push(g);
                parent.push(t);
                continue;
            }
            let m0 = midpoint[e0];
            // left child [c, a, m0], refinement edge c-a
            if marked[e2] {
                let m2 = midpoint[e2];
                push([m0, c, m2], g + 2);
                push([a, m0, m2], g + 2);
            } else {
                push([c, a, m0], g + 1);
            }
            // right child [b, c, m0], refinement edge b-c
            if marked[e1] {
                let m1 = midpoint[e1];
                push([m0, b, m1], g + 2);
                push([c, m0, m1], g + 2);
            } else {
                push([b, c, m0], g + 1);
            }
        }

        let nb = self.num_boundary_edges();
        let mut boundary = Vec::with_capacity(nb * 2);
        let mut arcs = Vec::with_capacity(nb * 2);
        for bi in 0..nb {
            let [p, q] = self.boundary_edge(bi);
            let (s0, s1) = self.boundary_arc(bi);
            let e = self.boundary_global_edge(bi);
            if marked[e] {
                let m = midpoint[e];
                boundary.push([p, m]);
                arcs.push(s0);
                boundary.push([m, q]);
                arcs.push(0.5 * (s0 + s1));
            } else {
                boundary.push([p, q]);
                arcs.push(s0);
            }
        }

        let mesh =
            Mesh2D::from_parts(vertices, triangles, ref_edge, generation, Some((boundary, arcs, self.perimeter())))?;
        Ok(BulkRefinement { mesh, parent })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangle_square() -> Mesh2D {
        // diagonal (0,0)-(1,1) is the longest edge of both triangles
        Mesh2D::from_triangles(
            vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn closure_bisects_neighbour_across_refinement_edge() {
        let m = two_triangle_square();
        let r = m.bisect(&[0]).unwrap();
        assert_eq!(r.num_triangles(), 4);
        r.check_conformity().unwrap();
    }

    #[test]
    fn empty_marking_is_identity() {
        let m = Mesh2D::create_unit_square(2).unwrap();
        let r = m.bisect(&[]).unwrap();
        assert_eq!(r.triangles(), m.triangles());
        assert_eq!(r.vertices(), m.vertices());
    }

    #[test]
    fn uniform_refinement_quadrisects() {
        let m = Mesh2D::create_unit_square(1).unwrap();
        let r = m.uniform_refine();
        assert_eq!(r.num_triangles(), 16);
        assert!((r.total_area() - 1.0).abs() < 1e-14);
        assert_eq!(&r.vertices()[..m.num_vertices()], m.vertices());
        assert!((0..r.num_triangles()).all(|t| r.generation(t) == 2));
        r.check_conformity().unwrap();
    }

    #[test]
    fn children_partition_parent() {
        let m = Mesh2D::create_lshape(1).unwrap();
        let r = m.refine(&[0, 5, 7], &[]).unwrap();
        let mut area = vec![0.0; m.num_triangles()];
        for (t, &p) in r.parent.iter().enumerate() {
            area[p] += r.mesh.signed_area(t);
        }
        for t in 0..m.num_triangles() {
            assert!((area[t] - m.signed_area(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_arcs_follow_bisection() {
        let m = Mesh2D::create_unit_square(1).unwrap();
        let r = m.uniform_refine();
        assert_eq!(r.num_boundary_edges(), 8);
        let arcs: Vec<f64> = r.boundary_arcs().to_vec();
        assert_eq!(arcs, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5]);
        assert_eq!(r.vertex(r.boundary_edge(1)[0]), [0.5, 0.0]);
    }

    #[test]
    fn out_of_range_marking_rejected() {
        let m = Mesh2D::create_unit_square(1).unwrap();
        assert!(m.bisect(&[4]).is_err());
    }
}
