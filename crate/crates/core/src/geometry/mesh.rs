//! Triangle meshes of surfaces with boundary.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// A directed edge `(from, to, triangle)`.
type EdgeUse = (usize, usize, usize);

pub type Point = [f64; 2];

/// Region tag of a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Region {
    /// Outside the collar domain.
    Exterior,
    /// Inside the collar domain but outside the inclusion.
    Annulus,
    /// The inclusion, where the perturbed metric lives.
    Inclusion,
}

impl Region {
    pub fn code(self) -> usize {
        match self {
            Region::Exterior => 0,
            Region::Annulus => 1,
            Region::Inclusion => 2,
        }
    }

    pub fn from_code(code: usize) -> Option<Self> {
        match code {
            0 => Some(Region::Exterior),
            1 => Some(Region::Annulus),
            2 => Some(Region::Inclusion),
            _ => None,
        }
    }

    /// Whether the triangle belongs to the collar domain (annulus or inclusion).
    pub fn in_collar(self) -> bool {
        self != Region::Exterior
    }
}

/// A consistently oriented triangle mesh with tagged regions and ordered boundary loops.
///
/// Loops are stored counterclockwise in the plane and start at their smallest node index.
#[derive(Debug, Clone)]
pub struct TriMesh {
    nodes: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    regions: Vec<Region>,
    loops: Vec<Vec<usize>>,
    /// Triangle owning the edge `loops[l][k] -> loops[l][k + 1]`.
    loop_edge_triangles: Vec<Vec<usize>>,
}

/// A mesh cut out of a parent along region tags.
#[derive(Debug, Clone)]
pub struct SubMesh {
    pub mesh: TriMesh,
    /// Parent index of every local node, increasing.
    pub parent_nodes: Vec<usize>,
    /// Parent index of every local triangle.
    pub parent_triangles: Vec<usize>,
}

impl SubMesh {
    /// Local index of each parent node, if present.
    pub fn local_of(&self, parent_node_count: usize) -> Vec<Option<usize>> {
        let mut local = vec![None; parent_node_count];
        for (i, &p) in self.parent_nodes.iter().enumerate() {
            local[p] = Some(i);
        }
        local
    }
}

pub(crate) fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn polygon_area(points: impl Iterator<Item = Point> + Clone) -> f64 {
    let pts: Vec<Point> = points.collect();
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (p, q) = (pts[i], pts[(i + 1) % n]);
            p[0] * q[1] - q[0] * p[1]
        })
        .sum::<f64>()
        * 0.5
}

struct Topology {
    /// Directed boundary edges `(a, b, triangle)` as they appear in their triangle.
    boundary: Vec<(usize, usize, usize)>,
}

impl TriMesh {
    /// Builds a mesh and derives its boundary loops, ordered by decreasing enclosed area.
    pub fn new(nodes: Vec<Point>, triangles: Vec<[usize; 3]>, regions: Vec<Region>) -> Result<Self> {
        let topo = validate(&nodes, &triangles, &regions)?;
        let mut next: HashMap<usize, (usize, usize)> = HashMap::new();
        for &(a, b, t) in &topo.boundary {
            next.insert(a, (b, t));
        }
        let mut visited: HashMap<usize, bool> = HashMap::new();
        let mut cycles = Vec::new();
        let mut starts: Vec<usize> = next.keys().copied().collect();
        starts.sort_unstable();
        for s in starts {
            if visited.contains_key(&s) {
                continue;
            }
            let mut cycle = Vec::new();
            let mut cur = s;
            loop {
                visited.insert(cur, true);
                cycle.push(cur);
                let (n, _) = next[&cur];
                if n == s {
                    break;
                }
                if visited.contains_key(&n) {
                    return Err(LabError::Structure(format!("boundary walk from node {s} does not close")));
                }
                cur = n;
            }
            cycles.push(cycle);
        }
        let mut mesh = Self { nodes, triangles, regions, loops: Vec::new(), loop_edge_triangles: Vec::new() };
        let mut loops: Vec<(f64, Vec<usize>)> = cycles
            .into_iter()
            .map(|c| {
                let c = mesh.normalize_loop(c);
                (polygon_area(c.iter().map(|&i| mesh.nodes[i])), c)
            })
            .collect();
        loops.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1[0].cmp(&b.1[0])));
        mesh.loops = loops.into_iter().map(|(_, c)| c).collect();
        mesh.loop_edge_triangles = mesh.owners(&topo.boundary);
        Ok(mesh)
    }

    /// Builds a mesh whose boundary edges carry explicit loop tags `0..L`.
    pub fn with_boundary(
        nodes: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        regions: Vec<Region>,
        edges: &[(usize, usize, usize)],
    ) -> Result<Self> {
        let topo = validate(&nodes, &triangles, &regions)?;
        let mut derived: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b, _) in &topo.boundary {
            derived.insert((a.min(b), a.max(b)), a);
        }
        let mut given: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for &(a, b, tag) in edges {
            if given.insert((a.min(b), a.max(b)), tag).is_some() {
                return Err(LabError::Structure(format!("boundary edge ({a}, {b}) listed twice")));
            }
        }
        if given.len() != derived.len() || given.keys().any(|k| !derived.contains_key(k)) {
            return Err(LabError::Structure(
                "listed boundary edges differ from the edges owned by exactly one triangle".into(),
            ));
        }
        let loop_count = given.values().copied().max().map_or(0, |m| m + 1);
        let mut per_loop: Vec<HashMap<usize, usize>> = vec![HashMap::new(); loop_count];
        for &(a, b, _) in &topo.boundary {
            let tag = given[&(a.min(b), a.max(b))];
            per_loop[tag].insert(a, b);
        }
        let mut loops = Vec::with_capacity(loop_count);
        for (tag, next) in per_loop.iter().enumerate() {
            let Some(&start) = next.keys().min() else {
                return Err(LabError::Structure(format!("loop tag {tag} has no edges")));
            };
            let mut cycle = vec![start];
            let mut cur = next[&start];
            while cur != start {
                if cycle.len() > next.len() {
                    return Err(LabError::Structure(format!("loop {tag} is not a single closed cycle")));
                }
                cycle.push(cur);
                cur = *next
                    .get(&cur)
                    .ok_or_else(|| LabError::Structure(format!("loop {tag} is not closed at node {cur}")))?;
            }
            if cycle.len() != next.len() {
                return Err(LabError::Structure(format!("loop {tag} splits into several cycles")));
            }
            loops.push(cycle);
        }
        let mut mesh = Self { nodes, triangles, regions, loops: Vec::new(), loop_edge_triangles: Vec::new() };
        mesh.loops = loops.into_iter().map(|c| mesh.normalize_loop(c)).collect();
        mesh.loop_edge_triangles = mesh.owners(&topo.boundary);
        Ok(mesh)
    }

    /// Counterclockwise orientation, starting at the smallest index.
    fn normalize_loop(&self, mut cycle: Vec<usize>) -> Vec<usize> {
        if polygon_area(cycle.iter().map(|&i| self.nodes[i])) < 0.0 {
            cycle.reverse();
        }
        let k = (0..cycle.len()).min_by_key(|&k| cycle[k]).unwrap_or(0);
        cycle.rotate_left(k);
        cycle
    }

    fn owners(&self, boundary: &[(usize, usize, usize)]) -> Vec<Vec<usize>> {
        let owner: HashMap<(usize, usize), usize> =
            boundary.iter().map(|&(a, b, t)| ((a.min(b), a.max(b)), t)).collect();
        self.loops
            .iter()
            .map(|l| {
                (0..l.len())
                    .map(|k| {
                        let (a, b) = (l[k], l[(k + 1) % l.len()]);
                        owner[&(a.min(b), a.max(b))]
                    })
                    .collect()
            })
            .collect()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn loops(&self) -> &[Vec<usize>] {
        &self.loops
    }

    pub fn loop_nodes(&self, l: usize) -> Result<&[usize]> {
        self.loops
            .get(l)
            .map(Vec::as_slice)
            .ok_or_else(|| LabError::Domain(format!("mesh has {} boundary loops, no loop {l}", self.loops.len())))
    }

    /// Triangle adjacent to each edge of loop `l`, aligned with the loop order.
    pub fn loop_edge_triangles(&self, l: usize) -> &[usize] {
        &self.loop_edge_triangles[l]
    }

    pub fn loop_points(&self, l: usize) -> Result<Vec<Point>> {
        Ok(self.loop_nodes(l)?.iter().map(|&i| self.nodes[i]).collect())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn loop_count(&self) -> usize {
        self.loops.len()
    }

    pub fn corners(&self, t: usize) -> [Point; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        signed_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangle_count()).map(|t| self.area(t)).sum()
    }

    /// Unique undirected edges as `(min, max)` pairs.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<(usize, usize)> = self
            .triangles
            .iter()
            .flat_map(|&[a, b, c]| [(a, b), (b, c), (c, a)])
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        e.sort_unstable();
        e.dedup();
        e
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.node_count() as i64 - self.edges().len() as i64 + self.triangle_count() as i64
    }

    pub fn max_edge_length(&self) -> f64 {
        self.edges()
            .into_iter()
            .map(|(a, b)| dist(self.nodes[a], self.nodes[b]))
            .fold(0.0, f64::max)
    }

    /// Flags nodes shared by an inclusion triangle and a non-inclusion triangle.
    pub fn inclusion_boundary_nodes(&self) -> Vec<bool> {
        let mut inside = vec![false; self.node_count()];
        let mut outside = vec![false; self.node_count()];
        for (tri, &r) in self.triangles.iter().zip(&self.regions) {
            for &v in tri {
                if r == Region::Inclusion {
                    inside[v] = true;
                } else {
                    outside[v] = true;
                }
            }
        }
        inside.iter().zip(&outside).map(|(&a, &b)| a && b).collect()
    }

    /// Extracts the triangles whose region satisfies `keep`.
    pub fn submesh(&self, keep: impl Fn(Region) -> bool) -> Result<SubMesh> {
        let parent_triangles: Vec<usize> = (0..self.triangle_count()).filter(|&t| keep(self.regions[t])).collect();
        if parent_triangles.is_empty() {
            return Err(LabError::Domain("no triangles carry the requested region tags".into()));
        }
        let mut used = vec![false; self.node_count()];
        for &t in &parent_triangles {
            for &v in &self.triangles[t] {
                used[v] = true;
            }
        }
        let parent_nodes: Vec<usize> = (0..self.node_count()).filter(|&v| used[v]).collect();
        let mut local = vec![usize::MAX; self.node_count()];
        for (i, &p) in parent_nodes.iter().enumerate() {
            local[p] = i;
        }
        let nodes = parent_nodes.iter().map(|&p| self.nodes[p]).collect();
        let triangles = parent_triangles.iter().map(|&t| self.triangles[t].map(|v| local[v])).collect();
        let regions = parent_triangles.iter().map(|&t| self.regions[t]).collect();
        let mesh = TriMesh::new(nodes, triangles, regions)?;
        Ok(SubMesh { mesh, parent_nodes, parent_triangles })
    }

    /// The boundary of the region selected by `keep` that lies in the interior of
    /// this mesh, as a counterclockwise loop of parent node indices.
    pub fn interface_loop(&self, keep: impl Fn(Region) -> bool) -> Result<Vec<usize>> {
        let sub = self.submesh(keep)?;
        let mut on_boundary = vec![false; self.node_count()];
        for l in &self.loops {
            for &v in l {
                on_boundary[v] = true;
            }
        }
        let candidates: Vec<Vec<usize>> = sub
            .mesh
            .loops()
            .iter()
            .map(|l| l.iter().map(|&v| sub.parent_nodes[v]).collect::<Vec<_>>())
            .filter(|l: &Vec<usize>| l.iter().all(|&v| !on_boundary[v]))
            .collect();
        match candidates.len() {
            1 => Ok(candidates.into_iter().next().unwrap()),
            n => Err(LabError::Domain(format!("expected one interior interface loop, found {n}"))),
        }
    }

    /// Uniform red refinement: every triangle is split into four through edge midpoints.
    pub fn refine(&self) -> Result<TriMesh> {
        let mut nodes = self.nodes.clone();
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Point>| -> usize {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]);
                nodes.len() - 1
            })
        };
        let mut triangles = Vec::with_capacity(4 * self.triangle_count());
        let mut regions = Vec::with_capacity(4 * self.triangle_count());
        for (&[a, b, c], &r) in self.triangles.iter().zip(&self.regions) {
            let ab = midpoint(a, b, &mut nodes);
            let bc = midpoint(b, c, &mut nodes);
            let ca = midpoint(c, a, &mut nodes);
            triangles.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
            regions.extend([r; 4]);
        }
        let mut edges = Vec::new();
        for (tag, l) in self.loops.iter().enumerate() {
            for k in 0..l.len() {
                let (a, b) = (l[k], l[(k + 1) % l.len()]);
                let m = midpoint(a, b, &mut nodes);
                edges.push((a, m, tag));
                edges.push((m, b, tag));
            }
        }
        TriMesh::with_boundary(nodes, triangles, regions, &edges)
    }

    /// Text serialisation in the `tmesh 1` format.
    pub fn to_text(&self) -> String {
        let nb: usize = self.loops.iter().map(Vec::len).sum();
        let mut s = format!("tmesh 1\n{} {} {}\n", self.node_count(), self.triangle_count(), nb);
        for p in &self.nodes {
            s.push_str(&format!("{:.17e} {:.17e}\n", p[0], p[1]));
        }
        for (t, r) in self.triangles.iter().zip(&self.regions) {
            s.push_str(&format!("{} {} {} {}\n", t[0], t[1], t[2], r.code()));
        }
        for (tag, l) in self.loops.iter().enumerate() {
            for k in 0..l.len() {
                s.push_str(&format!("{} {} {}\n", l[k], l[(k + 1) % l.len()], tag));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
                .ok_or_else(|| LabError::Parse { line: 0, message: format!("unexpected end of file, expected {what}") })
        };
        let (line, header) = next("header")?;
        if header != ["tmesh", "1"] {
            return Err(LabError::Parse { line, message: "expected header `tmesh 1`".into() });
        }
        let (line, counts) = next("counts")?;
        let counts: Vec<usize> = parse_all(&counts, line)?;
        if counts.len() != 3 {
            return Err(LabError::Parse { line, message: "expected `nv nt nb`".into() });
        }
        let (nv, nt, nb) = (counts[0], counts[1], counts[2]);
        let mut nodes = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (line, f) = next("node")?;
            let v: Vec<f64> = parse_all(&f, line)?;
            if v.len() != 2 {
                return Err(LabError::Parse { line, message: "expected `x y`".into() });
            }
            nodes.push([v[0], v[1]]);
        }
        let mut triangles = Vec::with_capacity(nt);
        let mut regions = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (line, f) = next("triangle")?;
            let v: Vec<usize> = parse_all(&f, line)?;
            if v.len() != 4 {
                return Err(LabError::Parse { line, message: "expected `i j k region`".into() });
            }
            let r = Region::from_code(v[3])
                .ok_or_else(|| LabError::Parse { line, message: format!("unknown region tag {}", v[3]) })?;
            triangles.push([v[0], v[1], v[2]]);
            regions.push(r);
        }
        let mut edges = Vec::with_capacity(nb);
        for _ in 0..nb {
            let (line, f) = next("boundary edge")?;
            let v: Vec<usize> = parse_all(&f, line)?;
            if v.len() != 3 {
                return Err(LabError::Parse { line, message: "expected `i j loop`".into() });
            }
            edges.push((v[0], v[1], v[2]));
        }
        if let Ok((line, _)) = next("end") {
            return Err(LabError::Parse { line, message: "trailing content after boundary edges".into() });
        }
        TriMesh::with_boundary(nodes, triangles, regions, &edges)
    }
}

fn parse_all<T: std::str::FromStr>(fields: &[&str], line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    fields
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| LabError::Parse { line, message: format!("`{s}`: {e}") }))
        .collect()
}

pub(crate) fn dist(a: Point, b: Point) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn validate(nodes: &[Point], triangles: &[[usize; 3]], regions: &[Region]) -> Result<Topology> {
    if triangles.is_empty() {
        return Err(LabError::Structure("mesh has no triangles".into()));
    }
    if regions.len() != triangles.len() {
        return Err(LabError::Dimension { expected: triangles.len(), got: regions.len() });
    }
    if let Some(i) = nodes.iter().position(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(LabError::Geometry(format!("node {i} has non-finite coordinates")));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in nodes {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let diam2 = (hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2);
    let mut used = vec![false; nodes.len()];
    let mut edges: HashMap<(usize, usize), Vec<EdgeUse>> = HashMap::new();
    for (t, &[a, b, c]) in triangles.iter().enumerate() {
        if a.max(b).max(c) >= nodes.len() {
            return Err(LabError::Structure(format!("triangle {t} references a missing node")));
        }
        if a == b || b == c || a == c {
            return Err(LabError::Structure(format!("triangle {t} repeats a vertex")));
        }
        let area = signed_area(nodes[a], nodes[b], nodes[c]);
        if !(area > 1e-14 * diam2) {
            return Err(LabError::Geometry(format!("triangle {t} is inverted or degenerate (signed area {area:e})")));
        }
        for (p, q) in [(a, b), (b, c), (c, a)] {
            edges.entry((p.min(q), p.max(q))).or_default().push((p, q, t));
            used[p] = true;
        }
    }
    if let Some(v) = used.iter().position(|u| !u) {
        return Err(LabError::Structure(format!("node {v} belongs to no triangle")));
    }
    let mut boundary = Vec::new();
    for (key, owners) in &edges {
        match owners.as_slice() {
            [one] => boundary.push(*one),
            [x, y] => {
                if x.0 == y.0 {
                    return Err(LabError::Structure(format!("edge {key:?} has inconsistent orientation")));
                }
            }
            _ => return Err(LabError::Structure(format!("edge {key:?} is shared by more than two triangles"))),
        }
    }
    boundary.sort_unstable();
    let mut out_deg: HashMap<usize, usize> = HashMap::new();
    for &(a, _, _) in &boundary {
        *out_deg.entry(a).or_default() += 1;
    }
    if let Some((&v, _)) = out_deg.iter().find(|(_, &d)| d != 1) {
        return Err(LabError::Structure(format!("boundary is pinched at node {v}")));
    }
    // connectivity through shared nodes
    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &[a, b, c] in triangles {
        for (p, q) in [(a, b), (b, c)] {
            let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
            parent[rp] = rq;
        }
    }
    let root = find(&mut parent, 0);
    if (0..nodes.len()).any(|v| find(&mut parent, v) != root) {
        return Err(LabError::Structure("mesh is not connected".into()));
    }
    Ok(Topology { boundary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriMesh {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        TriMesh::new(nodes, vec![[0, 1, 2], [0, 2, 3]], vec![Region::Exterior; 2]).unwrap()
    }

    #[test]
    fn square_has_one_ccw_loop() {
        let m = square();
        assert_eq!(m.loops(), &[vec![0, 1, 2, 3]]);
        assert_eq!(m.euler_characteristic(), 1);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn inverted_triangle_is_rejected() {
        let nodes = vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let err = TriMesh::new(nodes, vec![[0, 2, 1]], vec![Region::Exterior]).unwrap_err();
        assert!(matches!(err, LabError::Geometry(_)));
    }

    #[test]
    fn refinement_halves_edges_and_keeps_area() {
        let m = square();
        let r = m.refine().unwrap();
        assert_eq!(r.triangle_count(), 8);
        assert!((r.max_edge_length() - 0.5 * m.max_edge_length()).abs() < 1e-15);
        assert!((r.total_area() - 1.0).abs() < 1e-15);
        assert_eq!(r.loops()[0].len(), 8);
        assert_eq!(r.loops()[0][0], 0);
    }

    #[test]
    fn text_round_trip() {
        let m = square().refine().unwrap();
        let back = TriMesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.nodes(), m.nodes());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.loops(), m.loops());
    }

    #[test]
    fn malformed_text_reports_line() {
        let err = TriMesh::from_text("tmesh 1\n3 1 3\n0 0\n1 0\n0 x\n").unwrap_err();
        assert!(matches!(err, LabError::Parse { line: 5, .. }), "{err}");
        let missing = "tmesh 1\n3 1 2\n0 0\n1 0\n0 1\n0 1 2 0\n0 1 0\n1 2 0\n";
        assert!(matches!(TriMesh::from_text(missing).unwrap_err(), LabError::Structure(_)));
    }
}
