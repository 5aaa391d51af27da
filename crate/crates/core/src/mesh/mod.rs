//! Bulk triangulation, boundary mesh and their coupled refinement.

mod bulk;
mod gamma;
pub mod io;
mod locate;
mod refine;

pub use bulk::{Mesh2D, Point, NONE};
pub use gamma::{arc_point, GammaMesh, GammaRefinement, Segment, DEFAULT_RHO};
pub use locate::{barycentric, TriangleLocator};
pub use refine::BulkRefinement;

use crate::error::{Error, Result};

/// The bulk mesh T_Ω together with the boundary mesh T_Γ refining its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshPair {
    pub bulk: Mesh2D,
    pub gamma: GammaMesh,
}

/// A refined pair with parent maps into the coarse bulk triangles and
/// boundary segments.
#[derive(Debug, Clone)]
pub struct PairRefinement {
    pub pair: MeshPair,
    pub bulk_parent: Vec<usize>,
    pub gamma_parent: Vec<usize>,
}

fn compose(outer: &[usize], inner: &[usize]) -> Vec<usize> {
    inner.iter().map(|&i| outer[i]).collect()
}

impl MeshPair {
    /// Pair whose boundary mesh is the trace of `bulk`.
    pub fn new(bulk: Mesh2D) -> Self {
        let gamma = GammaMesh::trace_of(&bulk);
        Self { bulk, gamma }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.gamma = self.gamma.with_rho(rho);
        self
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Mesh2D::create_unit_square(n).map(Self::new)
    }

    pub fn lshape(n: usize) -> Result<Self> {
        Mesh2D::create_lshape(n).map(Self::new)
    }

    /// Bisects the marked triangles (with closure) and the marked segments,
    /// then refines bulk boundary edges until `h_E <= rho * h_I` holds again.
    pub fn refine(&self, marked_triangles: &[usize], marked_segments: &[usize]) -> Result<PairRefinement> {
        let split = self.gamma.bisect(marked_segments)?;
        let mut gamma_parent = split.parent;
        let mut gamma = split.gamma;

        let step = self.bulk.refine(marked_triangles, &[])?;
        let mut bulk_parent = step.parent;
        let mut bulk = step.mesh;

        let mut rounds = 0;
        loop {
            let sync = gamma.sync_to_bulk(&bulk)?;
            gamma_parent = compose(&gamma_parent, &sync.parent);
            gamma = sync.gamma;
            let bad: Vec<usize> =
                gamma.ratio_violations(&bulk).into_iter().map(|b| bulk.boundary_global_edge(b)).collect();
            if bad.is_empty() {
                break;
            }
            rounds += 1;
            if rounds > 64 {
                return Err(Error::MeshInvariant("ratio enforcement did not terminate".into()));
            }
            let step = bulk.refine(&[], &bad)?;
            bulk_parent = compose(&bulk_parent, &step.parent);
            bulk = step.mesh;
        }
        Ok(PairRefinement { pair: MeshPair { bulk, gamma }, bulk_parent, gamma_parent })
    }

    /// Quadrisection of every triangle and bisection of every segment.
    pub fn uniform_refine(&self) -> PairRefinement {
        let bulk = self.bulk.refine(&[], &(0..self.bulk.num_edges()).collect::<Vec<_>>()).expect("valid mesh");
        let split = self.gamma.uniform_bisect();
        let sync = split.gamma.sync_to_bulk(&bulk.mesh).expect("uniform refinement keeps the relation");
        PairRefinement {
            pair: MeshPair { bulk: bulk.mesh, gamma: sync.gamma },
            bulk_parent: bulk.parent,
            gamma_parent: compose(&split.parent, &sync.parent),
        }
    }

    /// Bisects every boundary segment while keeping the bulk mesh.
    pub fn refine_gamma_uniform(&self) -> Result<PairRefinement> {
        let all: Vec<usize> = (0..self.gamma.len()).collect();
        self.refine(&[], &all)
    }

    /// Conformity, minimum angle (when `min_angle` is given), refinement
    /// relation, corner and ratio invariants.
    pub fn check_invariants(&self, min_angle: Option<f64>) -> Result<()> {
        self.bulk.check_conformity()?;
        if let Some(bound) = min_angle {
            let a = self.bulk.min_angle();
            if a < bound {
                return Err(Error::MeshInvariant(format!("minimum angle {a} below {bound}")));
            }
        }
        self.gamma.check_invariants(&self.bulk)
    }
}
