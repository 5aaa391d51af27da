use super::bulk::{Mesh2D, Point};

/// Bucket grid over the bounding box for point location in a triangulation.
#[derive(Debug, Clone)]
pub struct TriangleLocator {
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    start: Vec<usize>,
    items: Vec<usize>,
}

impl TriangleLocator {
    pub fn new(mesh: &Mesh2D) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in mesh.vertices() {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        let n = ((mesh.num_triangles() as f64).sqrt().ceil() as usize).max(1);
        let dims = [n, n];
        let cell = [((hi[0] - lo[0]) / n as f64).max(f64::MIN_POSITIVE), ((hi[1] - lo[1]) / n as f64).max(f64::MIN_POSITIVE)];
        let mut this = Self { origin: lo, cell, dims, start: vec![0; n * n + 1], items: Vec::new() };
        let ranges: Vec<_> = (0..mesh.num_triangles()).map(|t| this.bbox_cells(mesh.triangle_points(t))).collect();
        for r in &ranges {
            for j in r[1]..=r[3] {
                for i in r[0]..=r[2] {
                    this.start[j * n + i + 1] += 1;
                }
            }
        }
        for k in 0..n * n {
            this.start[k + 1] += this.start[k];
        }
        let mut fill = this.start.clone();
        this.items = vec![0; this.start[n * n]];
        for (t, r) in ranges.iter().enumerate() {
            for j in r[1]..=r[3] {
                for i in r[0]..=r[2] {
                    let k = j * n + i;
                    this.items[fill[k]] = t;
                    fill[k] += 1;
                }
            }
        }
        this
    }

    fn cell_of(&self, p: Point) -> [usize; 2] {
        let mut c = [0; 2];
        for d in 0..2 {
            let x = ((p[d] - self.origin[d]) / self.cell[d]).floor();
            c[d] = (x.max(0.0) as usize).min(self.dims[d] - 1);
        }
        c
    }

    fn bbox_cells(&self, pts: [Point; 3]) -> [usize; 4] {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in pts {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let eps = 1e-12 * (self.cell[0] + self.cell[1]);
        let a = self.cell_of([lo[0] - eps, lo[1] - eps]);
        let b = self.cell_of([hi[0] + eps, hi[1] + eps]);
        [a[0], a[1], b[0], b[1]]
    }

    /// Triangle containing `p` (the one with the largest minimal barycentric
    /// coordinate) and the barycentric coordinates of `p` in it.
    pub fn locate(&self, mesh: &Mesh2D, p: Point) -> Option<(usize, [f64; 3])> {
        let [i, j] = self.cell_of(p);
        let k = j * self.dims[0] + i;
        let mut best: Option<(usize, [f64; 3])> = None;
        let mut best_min = f64::NEG_INFINITY;
        for &t in &self.items[self.start[k]..self.start[k + 1]] {
            let b = barycentric(mesh.triangle_points(t), p);
            let m = b[0].min(b[1]).min(b[2]);
            if m > best_min {
                best_min = m;
                best = Some((t, b));
            }
        }
        best.filter(|_| best_min >= -1e-10)
    }
}

pub fn barycentric(pts: [Point; 3], p: Point) -> [f64; 3] {
    let [a, b, c] = pts;
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
