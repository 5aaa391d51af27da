//! Plain-text dumps of bulk and boundary meshes.

use std::io::{BufRead, Write};

use super::bulk::Mesh2D;
use super::gamma::{GammaMesh, Segment};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh2D, mut w: W) -> Result<()> {
    writeln!(w, "{} {} {}", mesh.num_vertices(), mesh.num_triangles(), mesh.num_boundary_edges())?;
    for v in mesh.vertices() {
        writeln!(w, "{:.16e} {:.16e}", v[0], v[1])?;
    }
    for t in 0..mesh.num_triangles() {
        let [a, b, c] = mesh.triangle(t);
        writeln!(w, "{a} {b} {c} {} {}", mesh.refinement_edge(t), mesh.generation(t))?;
    }
    for [a, b] in mesh.boundary_edges() {
        writeln!(w, "{a} {b}")?;
    }
    Ok(())
}

pub fn write_gamma<W: Write>(gamma: &GammaMesh, mut w: W) -> Result<()> {
    writeln!(w, "{}", gamma.len())?;
    for s in gamma.segments() {
        writeln!(w, "{:.16e} {:.16e} {}", s.start, s.end, s.parent_edge)?;
    }
    Ok(())
}

struct Tokens<R> {
    lines: std::io::Lines<R>,
}

impl<R: BufRead> Tokens<R> {
    fn line(&mut self) -> Result<Vec<String>> {
        let line = self.lines.next().ok_or_else(|| Error::Config("unexpected end of mesh file".into()))??;
        Ok(line.split_whitespace().map(str::to_owned).collect())
    }

    fn parsed<T: std::str::FromStr>(&mut self, n: usize) -> Result<Vec<T>> {
        let toks = self.line()?;
        if toks.len() != n {
            return Err(Error::Config(format!("expected {n} fields, found {}", toks.len())));
        }
        toks.iter().map(|s| s.parse().map_err(|_| Error::Config(format!("cannot parse '{s}'")))).collect()
    }
}

/// Reads a bulk mesh dump. The boundary arc coordinates are rebuilt from the
/// stored boundary edge order.
pub fn read_mesh<R: BufRead>(r: R) -> Result<Mesh2D> {
    let mut t = Tokens { lines: r.lines() };
    let head: Vec<usize> = t.parsed(3)?;
    let (nv, nt, nb) = (head[0], head[1], head[2]);
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let v: Vec<f64> = t.parsed(2)?;
        vertices.push([v[0], v[1]]);
    }
    let (mut tris, mut refs, mut gens) = (Vec::with_capacity(nt), Vec::with_capacity(nt), Vec::with_capacity(nt));
    for _ in 0..nt {
        let v: Vec<usize> = t.parsed(5)?;
        if v[3] > 2 {
            return Err(Error::Config(format!("refinement edge {} out of range", v[3])));
        }
        tris.push([v[0], v[1], v[2]]);
        refs.push(v[3] as u8);
        gens.push(v[4] as u32);
    }
    let mut boundary = Vec::with_capacity(nb);
    for _ in 0..nb {
        let v: Vec<usize> = t.parsed(2)?;
        boundary.push([v[0], v[1]]);
    }
    if let Some(&[a, b]) = boundary.iter().flatten().max().map(|&m| [m, nv]).as_ref() {
        if a >= b {
            return Err(Error::Config(format!("vertex index {a} out of range")));
        }
    }
    let mut arcs = Vec::with_capacity(nb);
    let mut s = 0.0;
    for &[a, b] in &boundary {
        arcs.push(s);
        let (p, q) = (vertices[a], vertices[b]);
        s += ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt();
    }
    Mesh2D::from_parts(vertices, tris, refs, gens, Some((boundary, arcs, s)))
}

pub fn read_gamma<R: BufRead>(r: R, perimeter: f64) -> Result<GammaMesh> {
    let mut t = Tokens { lines: r.lines() };
    let ns: Vec<usize> = t.parsed(1)?;
    let mut segments = Vec::with_capacity(ns[0]);
    for _ in 0..ns[0] {
        let v = t.line()?;
        if v.len() != 3 {
            return Err(Error::Config("expected 's0 s1 parentEdge'".into()));
        }
        let bad = |s: &str| Error::Config(format!("cannot parse '{s}'"));
        segments.push(Segment {
            start: v[0].parse().map_err(|_| bad(&v[0]))?,
            end: v[1].parse().map_err(|_| bad(&v[1]))?,
            parent_edge: v[2].parse().map_err(|_| bad(&v[2]))?,
        });
    }
    Ok(GammaMesh::from_segments(segments, perimeter, super::DEFAULT_RHO))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshPair;

    #[test]
    fn round_trip() {
        let pair = MeshPair::lshape(1).unwrap().refine(&[0, 3], &[2]).unwrap().pair;
        let mut buf = Vec::new();
        write_mesh(&pair.bulk, &mut buf).unwrap();
        let bulk = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(bulk, pair.bulk);
        let mut buf = Vec::new();
        write_gamma(&pair.gamma, &mut buf).unwrap();
        let gamma = read_gamma(buf.as_slice(), bulk.perimeter()).unwrap();
        assert_eq!(gamma, pair.gamma);
    }

    #[test]
    fn header_counts() {
        let m = Mesh2D::create_unit_square(1).unwrap();
        let mut buf = Vec::new();
        write_mesh(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("5 4 4"));
        assert_eq!(text.lines().count(), 1 + 5 + 4 + 4);
    }
}
