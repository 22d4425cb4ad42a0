//! Gluing a product collar onto the outer boundary.

use std::f64::consts::PI;

use super::mesh::{Point, TriMesh};
use super::metric::{MetricField, Sym2};
use crate::error::{check_dim, LabError, Result};

/// A mesh extended by a strip carrying the product metric `dt^2 + ds^2`.
#[derive(Debug, Clone)]
pub struct CylinderMesh {
    pub mesh: TriMesh,
    /// Triangles `0..base_triangles` are the original mesh.
    pub base_triangles: usize,
    /// Metric on the strip triangles, in order.
    pub strip_metric: Vec<Sym2>,
    pub length: f64,
    /// Length of the glued boundary loop in the base metric.
    pub loop_length: f64,
}

impl CylinderMesh {
    /// Concatenates a base field with the strip metric.
    pub fn extend_metric(&self, base: &MetricField) -> Result<MetricField> {
        check_dim(self.base_triangles, base.len())?;
        let mut v = base.values().to_vec();
        v.extend_from_slice(&self.strip_metric);
        MetricField::new(v)
    }
}

/// Appends `layers` rings outside loop 0. Ring `k` sits at product coordinate
/// `t = k * length / layers`, embedded radially at `x * exp(2 pi t / loop_length)`;
/// each strip triangle carries the pullback of the product metric through the
/// affine map from `(t, s)` coordinates, `s` being arclength in the base metric.
pub fn attach_cylinder(mesh: &TriMesh, metric: &MetricField, length: f64, layers: usize) -> Result<CylinderMesh> {
    check_dim(mesh.triangle_count(), metric.len())?;
    if length < 0.0 || !length.is_finite() {
        return Err(LabError::Geometry(format!("cylinder length must be nonnegative, got {length}")));
    }
    let base = mesh.loop_nodes(0)?.to_vec();
    let owners = mesh.loop_edge_triangles(0);
    let n = base.len();
    let pts: Vec<Point> = base.iter().map(|&v| mesh.nodes()[v]).collect();
    let mut s = vec![0.0; n + 1];
    for k in 0..n {
        let (p, q) = (pts[k], pts[(k + 1) % n]);
        let e = [q[0] - p[0], q[1] - p[1]];
        s[k + 1] = s[k] + metric.get(owners[k]).norm(e);
    }
    let loop_length = s[n];
    if length == 0.0 {
        return Ok(CylinderMesh {
            mesh: mesh.clone(),
            base_triangles: mesh.triangle_count(),
            strip_metric: Vec::new(),
            length,
            loop_length,
        });
    }
    if layers < 2 {
        return Err(LabError::Geometry("a cylinder needs at least two layers".into()));
    }
    for k in 0..n {
        let (p, q) = (pts[k], pts[(k + 1) % n]);
        if p[0] * q[1] - p[1] * q[0] <= 0.0 {
            return Err(LabError::Structure(
                "outer loop is not star-shaped about the origin; radial gluing would fold".into(),
            ));
        }
    }
    let mut nodes = mesh.nodes().to_vec();
    let mut triangles = mesh.triangles().to_vec();
    let mut regions = mesh.regions().to_vec();
    let mut rings = vec![base.clone()];
    for k in 1..=layers {
        let t = length * k as f64 / layers as f64;
        let factor = (2.0 * PI * t / loop_length).exp();
        let ids: Vec<usize> = pts
            .iter()
            .map(|p| {
                nodes.push([p[0] * factor, p[1] * factor]);
                nodes.len() - 1
            })
            .collect();
        rings.push(ids);
    }
    let t_of = |k: usize| length * k as f64 / layers as f64;
    let mut strip_metric = Vec::with_capacity(2 * n * layers);
    let base_triangles = triangles.len();
    for k in 1..=layers {
        let (inner, outer) = (&rings[k - 1], &rings[k]);
        for i in 0..n {
            let j = (i + 1) % n;
            let s_i = s[i];
            let s_j = s[i + 1];
            let quad = [
                ([outer[i], outer[j], inner[i]], [(t_of(k), s_i), (t_of(k), s_j), (t_of(k - 1), s_i)]),
                ([inner[i], outer[j], inner[j]], [(t_of(k - 1), s_i), (t_of(k), s_j), (t_of(k - 1), s_j)]),
            ];
            for (tri, ts) in quad {
                strip_metric.push(pullback(&nodes, tri, ts)?);
                triangles.push(tri);
                regions.push(super::mesh::Region::Exterior);
            }
        }
    }
    let glued = TriMesh::new(nodes, triangles, regions)?;
    Ok(CylinderMesh { mesh: glued, base_triangles, strip_metric, length, loop_length })
}

/// Metric `X^{-T} P^T P X^{-1}` pulling back the flat `(t, s)` metric through
/// the affine map sending parameter differences `P` to physical differences `X`.
fn pullback(nodes: &[Point], tri: [usize; 3], ts: [(f64, f64); 3]) -> Result<Sym2> {
    let [a, b, c] = tri.map(|v| nodes[v]);
    let x = [[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]];
    let p = [[ts[1].0 - ts[0].0, ts[2].0 - ts[0].0], [ts[1].1 - ts[0].1, ts[2].1 - ts[0].1]];
    let det = x[0][0] * x[1][1] - x[0][1] * x[1][0];
    if det.abs() < 1e-300 {
        return Err(LabError::Geometry("degenerate strip triangle".into()));
    }
    let xi = [[x[1][1] / det, -x[0][1] / det], [-x[1][0] / det, x[0][0] / det]];
    // m = P X^{-1}
    let m = [
        [p[0][0] * xi[0][0] + p[0][1] * xi[1][0], p[0][0] * xi[0][1] + p[0][1] * xi[1][1]],
        [p[1][0] * xi[0][0] + p[1][1] * xi[1][0], p[1][0] * xi[0][1] + p[1][1] * xi[1][1]],
    ];
    let g = Sym2::new(
        m[0][0] * m[0][0] + m[1][0] * m[1][0],
        m[0][0] * m[0][1] + m[1][0] * m[1][1],
        m[0][1] * m[0][1] + m[1][1] * m[1][1],
    );
    if !g.is_spd() {
        return Err(LabError::Geometry("strip pullback metric is not positive definite".into()));
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::build_disk;

    #[test]
    fn zero_length_is_identity() {
        let m = build_disk(1.0, 32).unwrap();
        let g = MetricField::euclidean(&m);
        let c = attach_cylinder(&m, &g, 0.0, 4).unwrap();
        assert_eq!(c.mesh.nodes(), m.nodes());
        assert_eq!(c.mesh.triangles(), m.triangles());
        assert!(c.strip_metric.is_empty());
    }

    #[test]
    fn node_count_and_loops() {
        let m = build_disk(1.0, 32).unwrap();
        let g = MetricField::euclidean(&m);
        let c = attach_cylinder(&m, &g, 0.5, 5).unwrap();
        assert_eq!(c.mesh.node_count(), m.node_count() + 5 * 32);
        assert_eq!(c.mesh.loop_count(), 1);
        assert_eq!(c.mesh.loops()[0].len(), 32);
        assert!(c.mesh.loops()[0].iter().all(|&v| v >= m.node_count()));
        let ext = c.extend_metric(&g).unwrap();
        assert_eq!(ext.len(), c.mesh.triangle_count());
    }

    #[test]
    fn strip_metric_measures_product_lengths() {
        let m = build_disk(1.0, 64).unwrap();
        let g = MetricField::euclidean(&m);
        let c = attach_cylinder(&m, &g, 1.0, 8).unwrap();
        // the glued outer loop has the same product length as the base loop
        let l = 0..c.mesh.loops()[0].len();
        let outer = &c.mesh.loops()[0];
        let owners = c.mesh.loop_edge_triangles(0);
        let total: f64 = l
            .map(|k| {
                let (p, q) = (c.mesh.nodes()[outer[k]], c.mesh.nodes()[outer[(k + 1) % outer.len()]]);
                c.strip_metric[owners[k] - c.base_triangles].norm([q[0] - p[0], q[1] - p[1]])
            })
            .sum();
        assert!((total - c.loop_length).abs() < 1e-9 * c.loop_length);
    }
}
