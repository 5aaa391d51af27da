use super::bulk::{Mesh2D, Point};
use crate::error::{Error, Result};

/// Default bound on `h_E / h_I` for segments `I` inside a bulk boundary edge `E`.
pub const DEFAULT_RHO: f64 = 8.0;

/// Interval `[start, end]` of the arc-length parametrisation of Γ, contained
/// in bulk boundary edge `parent_edge`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub parent_edge: usize,
}

impl Segment {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.start + self.end)
    }
}

/// Boundary mesh T_Γ: a partition of the closed polygon Γ into segments, each
/// lying inside a single boundary edge of the bulk mesh.
///
/// All arc-length coordinates are dyadic fractions of the initial boundary
/// vertex positions, so midpoints and comparisons are exact in floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaMesh {
    segments: Vec<Segment>,
    perimeter: f64,
    rho: f64,
}

/// A refined boundary mesh with the coarse segment each fine segment lies in.
#[derive(Debug, Clone)]
pub struct GammaRefinement {
    pub gamma: GammaMesh,
    pub parent: Vec<usize>,
}

impl GammaMesh {
    /// The trace mesh T_Ω|_Γ of `bulk`.
    pub fn trace_of(bulk: &Mesh2D) -> Self {
        let segments = (0..bulk.num_boundary_edges())
            .map(|b| {
                let (start, end) = bulk.boundary_arc(b);
                Segment { start, end, parent_edge: b }
            })
            .collect();
        Self { segments, perimeter: bulk.perimeter(), rho: DEFAULT_RHO }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn from_segments(segments: Vec<Segment>, perimeter: f64, rho: f64) -> Self {
        Self { segments, perimeter, rho }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, i: usize) -> Segment {
        self.segments[i]
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.perimeter
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn segment_size(&self, i: usize) -> f64 {
        self.segments[i].len()
    }

    /// Segment containing arc coordinate `s` and the local coordinate in `[0, 1]`.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let s = if s >= self.perimeter { s.rem_euclid(self.perimeter) } else { s };
        let i = match self.segments.partition_point(|seg| seg.start <= s) {
            0 => 0,
            k => k - 1,
        };
        let seg = self.segments[i];
        (i, ((s - seg.start) / seg.len()).clamp(0.0, 1.0))
    }

    /// Physical point at local coordinate `xi` of segment `i`.
    pub fn point(&self, bulk: &Mesh2D, i: usize, xi: f64) -> Point {
        let seg = self.segments[i];
        arc_point(bulk, seg.parent_edge, seg.start + xi * seg.len())
    }

    /// Local coordinates of segment `i` inside its parent bulk boundary edge.
    pub fn local_range(&self, bulk: &Mesh2D, i: usize) -> (f64, f64) {
        let seg = self.segments[i];
        let (s0, s1) = bulk.boundary_arc(seg.parent_edge);
        ((seg.start - s0) / (s1 - s0), (seg.end - s0) / (s1 - s0))
    }

    /// Splits every marked segment at its midpoint.
    pub fn bisect(&self, marked: &[usize]) -> Result<GammaRefinement> {
        let mut flag = vec![false; self.len()];
        for &i in marked {
            *flag
                .get_mut(i)
                .ok_or_else(|| Error::InvalidParameter(format!("marked segment {i} out of range")))? = true;
        }
        let mut segments = Vec::with_capacity(self.len() + marked.len());
        let mut parent = Vec::with_capacity(self.len() + marked.len());
        for (i, seg) in self.segments.iter().enumerate() {
            if flag[i] {
                let mid = seg.midpoint();
                segments.push(Segment { start: seg.start, end: mid, parent_edge: seg.parent_edge });
                segments.push(Segment { start: mid, end: seg.end, parent_edge: seg.parent_edge });
                parent.extend([i, i]);
            } else {
                segments.push(*seg);
                parent.push(i);
            }
        }
        Ok(GammaRefinement { gamma: Self { segments, ..self.clone() }, parent })
    }

    pub fn uniform_bisect(&self) -> GammaRefinement {
        let all: Vec<usize> = (0..self.len()).collect();
        self.bisect(&all).expect("all indices valid")
    }

    /// Splits segments at the boundary vertices of a refined bulk mesh and
    /// re-links every segment to the bulk boundary edge containing it.
    pub fn sync_to_bulk(&self, bulk: &Mesh2D) -> Result<GammaRefinement> {
        let tol = 1e-12 * self.perimeter;
        if (bulk.perimeter() - self.perimeter).abs() > tol {
            return Err(Error::GammaSync(format!(
                "perimeter {} differs from bulk perimeter {}",
                self.perimeter,
                bulk.perimeter()
            )));
        }
        self.check_covering()?;
        let nb = bulk.num_boundary_edges();
        let mut segments = Vec::with_capacity(self.len().max(nb));
        let mut parent = Vec::with_capacity(self.len().max(nb));
        let mut k = 0;
        for (i, seg) in self.segments.iter().enumerate() {
            let mut a = seg.start;
            while k < nb && bulk.boundary_arc(k).1 <= a + tol {
                k += 1;
            }
            if k == nb {
                return Err(Error::GammaSync(format!("segment {i} starts beyond the bulk boundary")));
            }
            loop {
                let (e0, e1) = bulk.boundary_arc(k);
                if e0 > a + tol {
                    return Err(Error::GammaSync(format!("no bulk boundary edge contains arc {a}")));
                }
                if e1 < seg.end - tol {
                    segments.push(Segment { start: a, end: e1, parent_edge: k });
                    parent.push(i);
                    a = e1;
                    k += 1;
                    if k == nb {
                        return Err(Error::GammaSync(format!("segment {i} runs past the bulk boundary")));
                    }
                } else {
                    segments.push(Segment { start: a, end: seg.end, parent_edge: k });
                    parent.push(i);
                    break;
                }
            }
        }
        Ok(GammaRefinement { gamma: Self { segments, ..self.clone() }, parent })
    }

    /// Bulk boundary edges `E` for which some segment `I ⊆ E` has `h_E > ρ h_I`.
    pub fn ratio_violations(&self, bulk: &Mesh2D) -> Vec<usize> {
        let mut bad: Vec<usize> = self
            .segments
            .iter()
            .filter(|seg| bulk.boundary_edge_size(seg.parent_edge) > self.rho * seg.len() * (1.0 + 1e-12))
            .map(|seg| seg.parent_edge)
            .collect();
        bad.dedup();
        bad
    }

    fn check_covering(&self) -> Result<()> {
        let tol = 1e-12 * self.perimeter;
        let first = self.segments.first().ok_or_else(|| Error::GammaSync("empty boundary mesh".into()))?;
        if first.start.abs() > tol || (self.segments.last().unwrap().end - self.perimeter).abs() > tol {
            return Err(Error::GammaSync("segments do not span [0, perimeter]".into()));
        }
        for w in self.segments.windows(2) {
            if (w[0].end - w[1].start).abs() > tol || w[0].len() <= 0.0 {
                return Err(Error::GammaSync(format!("gap or overlap at arc {}", w[0].end)));
            }
        }
        Ok(())
    }

    /// Covering, refinement relation, corner and ratio invariants with
    /// respect to `bulk`.
    pub fn check_invariants(&self, bulk: &Mesh2D) -> Result<()> {
        self.check_covering().map_err(|e| Error::MeshInvariant(e.to_string()))?;
        let total: f64 = self.segments.iter().map(Segment::len).sum();
        if (total - self.perimeter).abs() > 1e-12 * self.perimeter {
            return Err(Error::MeshInvariant("segment lengths do not sum to the perimeter".into()));
        }
        let tol = 1e-12 * self.perimeter;
        let corners = bulk.corner_arcs();
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.parent_edge >= bulk.num_boundary_edges() {
                return Err(Error::MeshInvariant(format!("segment {i} has no parent edge")));
            }
            let (e0, e1) = bulk.boundary_arc(seg.parent_edge);
            if seg.start < e0 - tol || seg.end > e1 + tol {
                return Err(Error::MeshInvariant(format!("segment {i} leaves its parent edge")));
            }
            if corners.iter().any(|&c| c > seg.start + tol && c < seg.end - tol) {
                return Err(Error::MeshInvariant(format!("segment {i} contains a corner")));
            }
        }
        if let Some(&e) = self.ratio_violations(bulk).first() {
            return Err(Error::MeshInvariant(format!("ratio bound {} exceeded on boundary edge {e}", self.rho)));
        }
        Ok(())
    }
}

/// Point of Γ at arc coordinate `s`, which must lie in boundary edge `b`.
pub fn arc_point(bulk: &Mesh2D, b: usize, s: f64) -> Point {
    let [p, q] = bulk.boundary_edge(b);
    let (s0, s1) = bulk.boundary_arc(b);
    let t = (s - s0) / (s1 - s0);
    let (a, c) = (bulk.vertex(p), bulk.vertex(q));
    [a[0] + t * (c[0] - a[0]), a[1] + t * (c[1] - a[1])]
}
