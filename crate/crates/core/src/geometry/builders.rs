//! Generators for the canonical geometries: disks with a collar and an
//! inclusion, annuli, and flat boundary patches.

use std::f64::consts::PI;

use super::mesh::{Point, Region, TriMesh};
use crate::error::{LabError, Result};

/// A ball marked as the inclusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inclusion {
    pub center: Point,
    pub radius: f64,
}

/// Configurable generator for ring-structured disk meshes.
///
/// Rings are circles of a linear pencil interpolating between the inclusion
/// (or the origin) and the outer circle, so every control circle is an exact
/// union of mesh edges.
#[derive(Debug, Clone)]
pub struct DiskBuilder {
    outer_radius: f64,
    resolution: usize,
    collar_radius: Option<f64>,
    inclusion: Option<Inclusion>,
    hole_radius: Option<f64>,
    grading: f64,
}

#[derive(Debug, Clone, Copy)]
struct Circle {
    center: Point,
    radius: f64,
}

#[derive(Debug, Clone)]
struct Ring {
    center: Point,
    radius: f64,
    count: usize,
}

impl DiskBuilder {
    /// Disk of the given radius with `resolution` nodes on the outer circle.
    pub fn new(outer_radius: f64, resolution: usize) -> Self {
        Self { outer_radius, resolution, collar_radius: None, inclusion: None, hole_radius: None, grading: 1.0 }
    }

    /// Marks a collar domain bounded by the pencil circle of this radius.
    pub fn collar(mut self, radius: f64) -> Self {
        self.collar_radius = Some(radius);
        self
    }

    pub fn inclusion(mut self, center: Point, radius: f64) -> Self {
        self.inclusion = Some(Inclusion { center, radius });
        self
    }

    /// Removes a concentric disk, producing an annulus.
    pub fn hole(mut self, radius: f64) -> Self {
        self.hole_radius = Some(radius);
        self
    }

    /// Ratio by which ring spacing grows from the outer boundary inward (1 = uniform).
    pub fn grading(mut self, ratio: f64) -> Self {
        self.grading = ratio;
        self
    }

    pub fn build(&self) -> Result<TriMesh> {
        let r_out = self.outer_radius;
        if !(r_out > 0.0) {
            return Err(LabError::Geometry(format!("outer radius must be positive, got {r_out}")));
        }
        if self.resolution < 16 {
            return Err(LabError::Geometry(format!("resolution must be at least 16, got {}", self.resolution)));
        }
        if !(self.grading >= 1.0) {
            return Err(LabError::Geometry("grading ratio must be at least 1".into()));
        }
        let h = 2.0 * PI * r_out / self.resolution as f64;
        let (inner_center, inner_radius) = match self.inclusion {
            Some(inc) => {
                let reach = (inc.center[0].powi(2) + inc.center[1].powi(2)).sqrt() + inc.radius;
                if !(inc.radius > 0.0) {
                    return Err(LabError::Geometry("inclusion radius must be positive".into()));
                }
                if reach > r_out - h {
                    return Err(LabError::Geometry(format!(
                        "inclusion ball reaches distance {reach:.4} from the center, not compactly inside the disk of radius {r_out} (margin one mesh width {h:.4})"
                    )));
                }
                if self.hole_radius.is_some() {
                    return Err(LabError::Geometry("an annulus cannot also carry an inclusion".into()));
                }
                (inc.center, inc.radius)
            }
            None => ([0.0, 0.0], 0.0),
        };
        let pencil = |radius: f64| -> Circle {
            let w = (radius - inner_radius) / (r_out - inner_radius);
            Circle { center: [inner_center[0] * (1.0 - w), inner_center[1] * (1.0 - w)], radius }
        };
        let collar = match (self.collar_radius, self.inclusion) {
            (Some(r), _) => Some(r),
            (None, Some(inc)) => Some(inc.radius + 0.5 * (r_out - inc.radius)),
            (None, None) => None,
        };
        // control circles from the outside in, with the tag of the band outside each
        let mut controls: Vec<(Circle, Region)> = vec![(pencil(r_out), Region::Exterior)];
        let mut inner_tag = Region::Exterior;
        if let Some(r1) = collar {
            if !(r1 > inner_radius + h && r1 < r_out - h) {
                return Err(LabError::Geometry(format!(
                    "collar radius {r1} must lie strictly between the inclusion and the outer circle"
                )));
            }
            if let Some(rh) = self.hole_radius {
                if r1 <= rh + h {
                    return Err(LabError::Geometry("collar circle must enclose the hole".into()));
                }
            }
            controls.push((pencil(r1), Region::Exterior));
            inner_tag = Region::Annulus;
        }
        if self.inclusion.is_some() {
            controls.push((pencil(inner_radius), Region::Annulus));
            inner_tag = Region::Inclusion;
        }
        let hole = match self.hole_radius {
            Some(rh) if rh > 0.0 && rh < r_out - h => {
                controls.push((Circle { center: [0.0, 0.0], radius: rh }, inner_tag));
                true
            }
            Some(rh) => return Err(LabError::Geometry(format!("hole radius {rh} out of range"))),
            None => {
                let last = controls.last().unwrap().0;
                controls.push((Circle { center: last.center, radius: 0.0 }, inner_tag));
                false
            }
        };

        let mut rings: Vec<(Ring, Region)> = Vec::new();
        let mut spacing = h;
        let count_for = |radius: f64, local: f64| -> usize { ((2.0 * PI * radius / local).round() as usize).max(6) };
        rings.push((Ring { center: controls[0].0.center, radius: r_out, count: self.resolution }, Region::Exterior));
        for pair in controls.windows(2) {
            let (a, b) = (pair[0].0, pair[1].0);
            let band_tag = pair[1].1;
            let gap = a.radius - b.radius;
            // geometric spacing that lands exactly on the next control circle
            let mut steps = Vec::new();
            let mut covered = 0.0;
            let mut s = spacing;
            while covered + 0.5 * s < gap {
                steps.push(s);
                covered += s;
                s *= self.grading;
            }
            if steps.is_empty() {
                steps.push(gap);
            }
            let scale = gap / steps.iter().sum::<f64>();
            let mut radius = a.radius;
            for (k, st) in steps.iter().enumerate() {
                radius -= st * scale;
                let last = k + 1 == steps.len();
                let w = if last { 1.0 } else { (a.radius - radius) / gap };
                let center = [a.center[0] + w * (b.center[0] - a.center[0]), a.center[1] + w * (b.center[1] - a.center[1])];
                let radius = if last { b.radius } else { radius };
                let count = if radius <= 1e-12 * r_out { 1 } else { count_for(radius, *st) };
                rings.push((Ring { center, radius, count }, band_tag));
            }
            spacing = steps.last().unwrap() * scale;
        }
        let mut nodes: Vec<Point> = Vec::new();
        let mut ring_nodes: Vec<Vec<usize>> = Vec::new();
        for (ring, _) in &rings {
            let mut ids = Vec::with_capacity(ring.count);
            if ring.count == 1 {
                ids.push(nodes.len());
                nodes.push(ring.center);
            } else {
                for j in 0..ring.count {
                    let th = 2.0 * PI * j as f64 / ring.count as f64;
                    ids.push(nodes.len());
                    nodes.push([ring.center[0] + ring.radius * th.cos(), ring.center[1] + ring.radius * th.sin()]);
                }
            }
            ring_nodes.push(ids);
        }
        let mut triangles = Vec::new();
        let mut regions = Vec::new();
        for k in 0..rings.len() - 1 {
            let tag = rings[k + 1].1;
            let before = triangles.len();
            stitch(&ring_nodes[k], &ring_nodes[k + 1], &mut triangles);
            regions.extend(std::iter::repeat_n(tag, triangles.len() - before));
        }
        let mesh = TriMesh::new(nodes, triangles, regions)?;
        let expected_loops = if hole { 2 } else { 1 };
        if mesh.loop_count() != expected_loops {
            return Err(LabError::Structure(format!("generated mesh has {} loops", mesh.loop_count())));
        }
        Ok(mesh)
    }
}

/// Triangulates the band between an outer ring and an inner ring (or center node),
/// walking both by angle.
fn stitch(outer: &[usize], inner: &[usize], triangles: &mut Vec<[usize; 3]>) {
    let (na, nb) = (outer.len(), inner.len());
    if nb == 1 {
        for i in 0..na {
            triangles.push([outer[i], outer[(i + 1) % na], inner[0]]);
        }
        return;
    }
    let (mut i, mut j) = (0usize, 0usize);
    while i < na || j < nb {
        let next_a = (i + 1) as f64 / na as f64;
        let next_b = (j + 1) as f64 / nb as f64;
        if j >= nb || (i < na && next_a <= next_b) {
            triangles.push([outer[i % na], outer[(i + 1) % na], inner[j % nb]]);
            i += 1;
        } else {
            triangles.push([outer[i % na], inner[(j + 1) % nb], inner[j % nb]]);
            j += 1;
        }
    }
}

/// Unit-style disk with an inclusion ball and the default collar halfway between
/// the inclusion and the outer circle.
pub fn build_disk_with_inclusion(
    outer_radius: f64,
    inclusion_center: Point,
    inclusion_radius: f64,
    resolution: usize,
) -> Result<TriMesh> {
    DiskBuilder::new(outer_radius, resolution).inclusion(inclusion_center, inclusion_radius).build()
}

/// Plain disk without collar or inclusion.
pub fn build_disk(outer_radius: f64, resolution: usize) -> Result<TriMesh> {
    DiskBuilder::new(outer_radius, resolution).build()
}

/// Concentric annulus with two boundary loops.
pub fn build_annulus(inner_radius: f64, outer_radius: f64, resolution: usize) -> Result<TriMesh> {
    DiskBuilder::new(outer_radius, resolution).hole(inner_radius).build()
}

/// Rectangle `[-half_width, half_width] x [-depth, 0]` whose top edge is a flat
/// boundary patch. Columns have spacing `spacing` for `|x| <= fine_half_width`
/// and grow geometrically outside; rows start at `spacing / 2` below the top edge
/// and grow geometrically with ratio `grading`. All triangles are tagged annulus.
pub fn build_flat_patch(half_width: f64, depth: f64, fine_half_width: f64, spacing: f64, grading: f64) -> Result<TriMesh> {
    if !(spacing > 0.0 && fine_half_width > 0.0 && half_width > fine_half_width && depth > spacing && grading >= 1.0) {
        return Err(LabError::Geometry("invalid flat patch parameters".into()));
    }
    let mut xs_pos = vec![0.0];
    let mut x = 0.0;
    while x + spacing <= fine_half_width + 1e-12 {
        x += spacing;
        xs_pos.push(x);
    }
    let mut s = spacing;
    while x < half_width {
        s *= grading.max(1.05);
        x = (x + s).min(half_width);
        if half_width - x < 0.5 * s {
            x = half_width;
        }
        xs_pos.push(x);
    }
    let mut xs: Vec<f64> = xs_pos.iter().rev().map(|v| -v).collect();
    xs.extend(xs_pos.iter().skip(1));
    let mut ys = vec![0.0];
    let mut y = 0.0;
    let mut s = 0.5 * spacing;
    while y > -depth {
        y = (y - s).max(-depth);
        if y + depth < 0.5 * s {
            y = -depth;
        }
        ys.push(y);
        s *= grading;
    }
    let (nx, ny) = (xs.len(), ys.len());
    let mut nodes = Vec::with_capacity(nx * ny);
    for &yv in &ys {
        for &xv in &xs {
            nodes.push([xv, yv]);
        }
    }
    let id = |i: usize, j: usize| j * nx + i;
    let mut triangles = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            // row j is above row j + 1
            let (a, b, c, d) = (id(i, j + 1), id(i + 1, j + 1), id(i + 1, j), id(i, j));
            if (i + j) % 2 == 0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let n = triangles.len();
    TriMesh::new(nodes, triangles, vec![Region::Annulus; n])
}

/// Flat patch bent onto an annular sector: `(x, y)` maps to polar angle `x / radius`
/// from the vertical and distance `radius + y` from the origin, so the top edge
/// becomes an arc of the circle of this radius through `(0, radius)`.
pub fn build_curved_patch(
    radius: f64,
    half_width: f64,
    depth: f64,
    fine_half_width: f64,
    spacing: f64,
    grading: f64,
) -> Result<TriMesh> {
    if !(depth < radius && half_width < PI * radius) {
        return Err(LabError::Geometry("curved patch must stay inside a sector of its circle".into()));
    }
    let flat = build_flat_patch(half_width, depth, fine_half_width, spacing, grading)?;
    let nodes = flat
        .nodes()
        .iter()
        .map(|&[x, y]| {
            let (r, a) = (radius + y, x / radius);
            [r * a.sin(), r * a.cos()]
        })
        .collect();
    TriMesh::new(nodes, flat.triangles().to_vec(), flat.regions().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn disk_topology() {
        for n in [16, 33, 64] {
            let m = build_disk(1.0, n).unwrap();
            assert_eq!(m.euler_characteristic(), 1);
            assert_eq!(m.loop_count(), 1);
            assert_eq!(m.loops()[0].len(), n);
        }
    }

    #[test]
    fn annulus_topology() {
        let m = build_annulus(0.5, 1.0, 48).unwrap();
        assert_eq!(m.loop_count(), 2);
        assert_eq!(m.euler_characteristic(), 0);
        assert_eq!(m.loops()[0].len(), 48);
        assert_eq!(m.loops()[1].len(), 24);
    }

    #[test]
    fn inclusion_regions_are_nested() {
        let m = build_disk_with_inclusion(1.0, [0.2, 0.1], 0.25, 48).unwrap();
        let tags: std::collections::BTreeSet<_> = m.regions().iter().copied().collect();
        assert_eq!(tags.len(), 3);
        let collar = m.interface_loop(Region::in_collar).unwrap();
        let inclusion = m.interface_loop(|r| r == Region::Inclusion).unwrap();
        assert!(collar.len() > inclusion.len());
    }

    #[test]
    fn touching_inclusion_is_rejected() {
        let err = build_disk_with_inclusion(1.0, [0.6, 0.0], 0.39, 64).unwrap_err();
        assert!(matches!(err, LabError::Geometry(_)), "{err}");
    }

    #[test]
    fn graded_disk_is_valid() {
        let m = DiskBuilder::new(1.0, 128).grading(1.15).build().unwrap();
        let u = build_disk(1.0, 128).unwrap();
        assert!(m.node_count() < u.node_count() / 2);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn flat_patch_has_flat_top() {
        let m = build_flat_patch(1.0, 1.0, 0.5, 0.05, 1.2).unwrap();
        assert_eq!(m.loop_count(), 1);
        let top: Vec<_> = m.loops()[0].iter().filter(|&&v| m.nodes()[v][1] == 0.0).collect();
        assert!(top.len() > 20);
        assert!((m.total_area() - 2.0).abs() < 1e-12);
    }
}
