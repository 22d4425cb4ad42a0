//! Point location in a triangle mesh and P1 interpolation.

use super::mesh::{Point, TriMesh};
use crate::error::{LabError, Result};

/// Uniform bucket grid over the mesh bounding box.
#[derive(Debug, Clone)]
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    origin: Point,
    cell: f64,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in mesh.nodes() {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
        let side = (mesh.triangle_count() as f64).sqrt().ceil().max(1.0);
        let cell = span / side;
        let dims = (((hi[0] - lo[0]) / cell) as usize + 1, ((hi[1] - lo[1]) / cell) as usize + 1);
        let mut buckets = vec![Vec::new(); dims.0 * dims.1];
        for t in 0..mesh.triangle_count() {
            let c = mesh.corners(t);
            let bx = |d: usize, f: fn(f64, f64) -> f64| c.iter().map(|p| p[d]).fold(c[0][d], f);
            let (i0, i1) = (((bx(0, f64::min) - lo[0]) / cell) as usize, ((bx(0, f64::max) - lo[0]) / cell) as usize);
            let (j0, j1) = (((bx(1, f64::min) - lo[1]) / cell) as usize, ((bx(1, f64::max) - lo[1]) / cell) as usize);
            for j in j0..=j1.min(dims.1 - 1) {
                for i in i0..=i1.min(dims.0 - 1) {
                    buckets[j * dims.0 + i].push(t);
                }
            }
        }
        Self { mesh, origin: lo, cell, dims, buckets }
    }

    /// Triangle containing `p` with its barycentric coordinates. Points within
    /// `1e-9` relative of an edge count as inside.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let fi = (p[0] - self.origin[0]) / self.cell;
        let fj = (p[1] - self.origin[1]) / self.cell;
        if fi < -1e-9 || fj < -1e-9 {
            return None;
        }
        let (i, j) = ((fi.max(0.0) as usize).min(self.dims.0 - 1), (fj.max(0.0) as usize).min(self.dims.1 - 1));
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.buckets[j * self.dims.0 + i] {
            let b = barycentric(self.mesh.corners(t), p);
            let worst = b.iter().copied().fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|x| worst > x.2) {
                best = Some((t, b, worst));
            }
        }
        best.filter(|x| x.2 >= -1e-9).map(|(t, b, _)| (t, b))
    }

    /// Evaluates the P1 interpolant of nodal `values` at `p`.
    pub fn interpolate(&self, values: &[f64], p: Point) -> Result<f64> {
        let (t, b) = self
            .locate(p)
            .ok_or_else(|| LabError::Domain(format!("point ({}, {}) lies outside the mesh", p[0], p[1])))?;
        let tri = self.mesh.triangles()[t];
        Ok((0..3).map(|k| b[k] * values[tri[k]]).sum())
    }
}

pub fn barycentric(c: [Point; 3], p: Point) -> [f64; 3] {
    let det = (c[1][0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (c[1][1] - c[0][1]);
    let l1 = ((p[0] - c[0][0]) * (c[2][1] - c[0][1]) - (c[2][0] - c[0][0]) * (p[1] - c[0][1])) / det;
    let l2 = ((c[1][0] - c[0][0]) * (p[1] - c[0][1]) - (p[0] - c[0][0]) * (c[1][1] - c[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
