//! P1 stiffness assembly for the metric Laplacian, harmonic extension and
//! Dirichlet-to-Neumann operators as boundary Schur complements.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, LabError, Result};
use crate::geometry::mesh::signed_area;
use crate::geometry::{MetricField, Region, Sym2, TriMesh};
use crate::linalg::{local_index, par_map, CsrMatrix, EnvelopeCholesky};
use crate::sobolev::BoundaryCalculus;

/// Local stiffness `area * grad(phi_i)^T sqrt(det g) g^{-1} grad(phi_j)` of one triangle.
pub fn local_stiffness(corners: [[f64; 2]; 3], metric: Sym2) -> Result<[[f64; 3]; 3]> {
    let [a, b, c] = corners;
    let area = signed_area(a, b, c);
    let scale = (b[0] - a[0]).abs().max((c[0] - a[0]).abs()).max((b[1] - a[1]).abs()).max((c[1] - a[1]).abs());
    if !(area > 1e-14 * scale * scale) {
        return Err(LabError::Assembly(format!("degenerate triangle with area {area:e}")));
    }
    let p = [a, b, c];
    let grads: [[f64; 2]; 3] = std::array::from_fn(|i| {
        let (q, r) = (p[(i + 1) % 3], p[(i + 2) % 3]);
        [(q[1] - r[1]) / (2.0 * area), (r[0] - q[0]) / (2.0 * area)]
    });
    let cond = metric.conductivity();
    Ok(std::array::from_fn(|i| std::array::from_fn(|j| area * cond.inner(grads[i], grads[j]))))
}

/// Treatment of a boundary loop in a boundary value problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LoopCondition {
    /// Dirichlet data supplied by the caller.
    Data,
    /// Homogeneous Dirichlet condition.
    Zero,
    /// Natural (homogeneous Neumann) condition; the loop's nodes are unknowns.
    Free,
}

/// Boundary data for one loop.
#[derive(Debug, Clone, Copy)]
pub enum LoopData<'a> {
    Values(&'a [f64]),
    Zero,
    Free,
}

impl LoopData<'_> {
    fn condition(&self) -> LoopCondition {
        match self {
            LoopData::Values(_) => LoopCondition::Data,
            LoopData::Zero => LoopCondition::Zero,
            LoopData::Free => LoopCondition::Free,
        }
    }
}

#[derive(Debug)]
struct Reduction {
    unknowns: Vec<usize>,
    local: Vec<Option<usize>>,
    factor: EnvelopeCholesky,
}

/// Global stiffness matrix with cached factorisations of its reduced blocks.
#[derive(Debug)]
pub struct StiffnessSystem {
    mesh: TriMesh,
    metric: MetricField,
    matrix: CsrMatrix,
    on_loop: Vec<Option<usize>>,
    reductions: Mutex<HashMap<Vec<LoopCondition>, Arc<Reduction>>>,
}

impl StiffnessSystem {
    pub fn assemble(mesh: &TriMesh, metric: &MetricField) -> Result<Self> {
        check_dim(mesh.triangle_count(), metric.len())?;
        let mut trip = Vec::with_capacity(9 * mesh.triangle_count());
        for (t, tri) in mesh.triangles().iter().enumerate() {
            let k = local_stiffness(mesh.corners(t), metric.get(t))
                .map_err(|e| LabError::Assembly(format!("triangle {t}: {e}")))?;
            for i in 0..3 {
                for j in 0..3 {
                    trip.push((tri[i], tri[j], k[i][j]));
                }
            }
        }
        let matrix = CsrMatrix::from_triplets(mesh.node_count(), trip);
        let mut on_loop = vec![None; mesh.node_count()];
        for (l, nodes) in mesh.loops().iter().enumerate() {
            for &v in nodes {
                on_loop[v] = Some(l);
            }
        }
        Ok(Self { mesh: mesh.clone(), metric: metric.clone(), matrix, on_loop, reductions: Mutex::new(HashMap::new()) })
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn metric(&self) -> &MetricField {
        &self.metric
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn loop_count(&self) -> usize {
        self.mesh.loop_count()
    }

    fn reduction(&self, conditions: &[LoopCondition]) -> Result<Arc<Reduction>> {
        check_dim(self.loop_count(), conditions.len())?;
        if let Some(r) = self.reductions.lock().expect("cache lock").get(conditions) {
            return Ok(r.clone());
        }
        if !conditions.iter().any(|c| *c != LoopCondition::Free) {
            return Err(LabError::Solver("no Dirichlet loop: the reduced block is singular".into()));
        }
        let unknowns: Vec<usize> = (0..self.mesh.node_count())
            .filter(|&v| match self.on_loop[v] {
                None => true,
                Some(l) => conditions[l] == LoopCondition::Free,
            })
            .collect();
        let factor = EnvelopeCholesky::factor(&self.matrix, &unknowns)?;
        let local = local_index(self.mesh.node_count(), &unknowns);
        let r = Arc::new(Reduction { unknowns, local, factor });
        self.reductions.lock().expect("cache lock").insert(conditions.to_vec(), r.clone());
        Ok(r)
    }

    /// Solves the boundary value problem with the given per-loop data.
    pub fn harmonic_extension(&self, data: &[LoopData]) -> Result<HarmonicField> {
        check_dim(self.loop_count(), data.len())?;
        let conditions: Vec<LoopCondition> = data.iter().map(LoopData::condition).collect();
        let red = self.reduction(&conditions)?;
        let mut values = vec![0.0; self.mesh.node_count()];
        for (l, d) in data.iter().enumerate() {
            if let LoopData::Values(f) = d {
                let nodes = &self.mesh.loops()[l];
                check_dim(nodes.len(), f.len())?;
                for (&v, &x) in nodes.iter().zip(f.iter()) {
                    values[v] = x;
                }
            }
        }
        let mut rhs = vec![0.0; red.unknowns.len()];
        for (k, &v) in red.unknowns.iter().enumerate() {
            let (cols, vals) = self.matrix.row(v);
            rhs[k] = -cols
                .iter()
                .zip(vals)
                .filter(|(&j, _)| red.local[j].is_none())
                .map(|(&j, &a)| a * values[j])
                .sum::<f64>();
        }
        let x = red.factor.solve(&rhs);
        for (k, &v) in red.unknowns.iter().enumerate() {
            values[v] = x[k];
        }
        Ok(HarmonicField { values, conditions })
    }

    /// Extension of `f` from loop `l` with every other loop under `others`.
    pub fn extend_from_loop(&self, l: usize, f: &[f64], others: LoopCondition) -> Result<HarmonicField> {
        let data = self.loop_data(&[(l, f)], others)?;
        self.harmonic_extension(&data)
    }

    fn loop_data<'a>(&self, given: &[(usize, &'a [f64])], others: LoopCondition) -> Result<Vec<LoopData<'a>>> {
        let mut data = vec![
            match others {
                LoopCondition::Zero => LoopData::Zero,
                LoopCondition::Free => LoopData::Free,
                LoopCondition::Data => {
                    return Err(LabError::Domain("unspecified loops cannot carry data".into()));
                }
            };
            self.loop_count()
        ];
        for &(l, f) in given {
            if l >= self.loop_count() {
                return Err(LabError::Domain(format!("loop {l} is not a boundary loop of this mesh")));
            }
            data[l] = LoopData::Values(f);
        }
        Ok(data)
    }

    /// `K u` at every node.
    pub fn residual(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.mesh.node_count(), values.len())?;
        Ok(self.matrix.mul_vec(values))
    }

    /// Lumped boundary mass of loop `l`, from metric edge lengths.
    pub fn loop_mass(&self, l: usize) -> Result<Vec<f64>> {
        let nodes = self.mesh.loop_nodes(l)?;
        let owners = self.mesh.loop_edge_triangles(l);
        let n = nodes.len();
        let mut m = vec![0.0; n];
        for k in 0..n {
            let (p, q) = (self.mesh.nodes()[nodes[k]], self.mesh.nodes()[nodes[(k + 1) % n]]);
            let len = self.metric.get(owners[k]).norm([q[0] - p[0], q[1] - p[1]]);
            m[k] += 0.5 * len;
            m[(k + 1) % n] += 0.5 * len;
        }
        Ok(m)
    }

    /// Spectral calculus of loop `l`.
    pub fn loop_calculus(&self, l: usize) -> Result<BoundaryCalculus> {
        BoundaryCalculus::for_mesh_loop(&self.mesh, &self.metric, l)
    }

    /// Boundary covector `(K u)|_loop` of a field.
    pub fn conormal_covector(&self, field: &[f64], l: usize) -> Result<Vec<f64>> {
        let r = self.residual(field)?;
        Ok(self.mesh.loop_nodes(l)?.iter().map(|&v| r[v]).collect())
    }

    /// Outward conormal derivative of a field on loop `l`, as a function: `M^{-1} (K u)|_loop`.
    pub fn conormal_trace(&self, field: &[f64], l: usize) -> Result<Vec<f64>> {
        let c = self.conormal_covector(field, l)?;
        let m = self.loop_mass(l)?;
        Ok(c.iter().zip(&m).map(|(a, b)| a / b).collect())
    }

    /// Schur complement on the data loops `loops`, with every other loop under `others`.
    pub fn dn_map(&self, loops: &[usize], others: LoopCondition, kind: DnKind) -> Result<DnOperator> {
        if loops.is_empty() {
            return Err(LabError::Domain("DN map needs at least one data loop".into()));
        }
        let mut nodes = Vec::new();
        let mut mass = Vec::new();
        let mut conditions = vec![others; self.loop_count()];
        for &l in loops {
            nodes.extend_from_slice(self.mesh.loop_nodes(l)?);
            mass.extend(self.loop_mass(l)?);
            if conditions[l] == LoopCondition::Data {
                return Err(LabError::Domain(format!("loop {l} listed twice")));
            }
            conditions[l] = LoopCondition::Data;
        }
        if others == LoopCondition::Data {
            return Err(LabError::Domain("unspecified loops cannot carry data".into()));
        }
        let red = self.reduction(&conditions)?;
        let n = nodes.len();
        let cols: Vec<Vec<f64>> = par_map(&(0..n).collect::<Vec<_>>(), |&j| {
            let mut values = vec![0.0; self.mesh.node_count()];
            values[nodes[j]] = 1.0;
            let mut rhs = vec![0.0; red.unknowns.len()];
            for (k, &v) in red.unknowns.iter().enumerate() {
                rhs[k] = -self.matrix.get(v, nodes[j]);
            }
            let x = red.factor.solve(&rhs);
            for (k, &v) in red.unknowns.iter().enumerate() {
                values[v] = x[k];
            }
            let r = self.matrix.mul_vec(&values);
            nodes.iter().map(|&v| r[v]).collect()
        });
        let mut form = DMatrix::zeros(n, n);
        for (j, c) in cols.iter().enumerate() {
            for i in 0..n {
                form[(i, j)] = c[i];
            }
        }
        Ok(DnOperator { kind, loops: loops.to_vec(), nodes, form, mass: DVector::from_vec(mass) })
    }

    /// Full DN map on loop 0 (all other loops grounded).
    pub fn boundary_dn(&self) -> Result<DnOperator> {
        self.dn_map(&[0], LoopCondition::Zero, DnKind::Full)
    }
}

/// Nodal values of a solution together with the conditions it was solved under.
#[derive(Debug, Clone)]
pub struct HarmonicField {
    pub values: Vec<f64>,
    pub conditions: Vec<LoopCondition>,
}

impl HarmonicField {
    /// Largest residual on rows that were solved for, relative to `max |K| * max |u|`.
    pub fn interior_residual(&self, system: &StiffnessSystem) -> Result<f64> {
        let r = system.residual(&self.values)?;
        let mesh = system.mesh();
        let mut on_fixed = vec![false; mesh.node_count()];
        for (l, c) in self.conditions.iter().enumerate() {
            if *c != LoopCondition::Free {
                for &v in &mesh.loops()[l] {
                    on_fixed[v] = true;
                }
            }
        }
        let worst = r.iter().zip(&on_fixed).filter(|(_, &f)| !f).map(|(x, _)| x.abs()).fold(0.0, f64::max);
        let kmax = (0..mesh.node_count()).map(|i| system.matrix().get(i, i).abs()).fold(0.0, f64::max);
        let umax = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(worst / (kmax * umax).max(1e-300))
    }
}

/// Which boundary operator a [`DnOperator`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DnKind {
    /// The DN map of the whole manifold on its outer boundary.
    Full,
    /// DN map of the core subdomain on its boundary.
    Core,
    /// Shell DN map with data on the interface and the outer boundary grounded.
    ShellFromInterface,
    /// Shell DN map with data on the outer boundary and the interface grounded.
    ShellFromBoundary,
    /// Any other combination of loops and conditions.
    Mixed,
}

/// A dense boundary operator stored as its form `S` (a Schur complement)
/// together with the lumped mass `M`; as an operator on functions it is `M^{-1} S`.
#[derive(Debug, Clone)]
pub struct DnOperator {
    pub kind: DnKind,
    pub loops: Vec<usize>,
    /// Mesh nodes of the data loops, concatenated in loop order.
    pub nodes: Vec<usize>,
    pub form: DMatrix<f64>,
    pub mass: DVector<f64>,
}

impl DnOperator {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `M^{-1} S`.
    pub fn operator(&self) -> DMatrix<f64> {
        let mut a = self.form.clone();
        for i in 0..self.len() {
            a.row_mut(i).scale_mut(1.0 / self.mass[i]);
        }
        a
    }

    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.len(), f.len())?;
        let s = &self.form * DVector::from_column_slice(f);
        Ok(s.iter().zip(self.mass.iter()).map(|(a, m)| a / m).collect())
    }

    /// `u^T S v`.
    pub fn pairing(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        check_dim(self.len(), u.len())?;
        check_dim(self.len(), v.len())?;
        Ok((DVector::from_column_slice(u).transpose() * &self.form * DVector::from_column_slice(v))[(0, 0)])
    }

    /// `max |S - S^T| / max |S|`, the asymmetry in the mass inner product.
    pub fn mass_asymmetry(&self) -> f64 {
        (&self.form - self.form.transpose()).amax() / self.form.amax().max(1e-300)
    }

    /// Eigenvalues of `M^{-1} S`, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let s = self.mass.map(|m| 1.0 / m.sqrt());
        let mut a = self.form.clone();
        for i in 0..self.len() {
            for j in 0..self.len() {
                a[(i, j)] *= s[i] * s[j];
            }
        }
        crate::linalg::symmetrize(&mut a);
        let mut e: Vec<f64> = a.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Rayleigh quotient `<Lambda f, f> / <f, f>` in the mass inner product.
    pub fn rayleigh(&self, f: &[f64]) -> Result<f64> {
        let num = self.pairing(f, f)?;
        let den: f64 = f.iter().zip(self.mass.iter()).map(|(a, m)| a * a * m).sum();
        Ok(num / den)
    }

    /// Row-major text export of `M^{-1} S` with header `dn 1 n`.
    pub fn to_csv(&self) -> String {
        let a = self.operator();
        let mut s = format!("dn 1 {}\n", self.len());
        for i in 0..self.len() {
            let row: Vec<String> = (0..self.len()).map(|j| format!("{:.17e}", a[(i, j)])).collect();
            let _ = writeln!(s, "{}", row.join(","));
        }
        s
    }

    /// Parses the export of [`to_csv`](Self::to_csv) into a dense matrix.
    pub fn matrix_from_csv(text: &str) -> Result<DMatrix<f64>> {
        let mut lines = text.lines().enumerate();
        let n = match lines.next() {
            Some((_, h)) => {
                let parts: Vec<&str> = h.split_whitespace().collect();
                match parts.as_slice() {
                    ["dn", "1", n] => n.parse::<usize>().map_err(|e| LabError::Parse { line: 1, message: e.to_string() })?,
                    _ => return Err(LabError::Parse { line: 1, message: "expected header `dn 1 n`".into() }),
                }
            }
            None => return Err(LabError::Parse { line: 1, message: "empty DN file".into() }),
        };
        let mut m = DMatrix::zeros(n, n);
        let mut rows = 0;
        for (i, l) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            if rows == n {
                return Err(LabError::Parse { line: i + 1, message: "too many rows".into() });
            }
            let vals: Vec<f64> = l
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LabError::Parse { line: i + 1, message: e.to_string() })?;
            if vals.len() != n {
                return Err(LabError::Parse { line: i + 1, message: format!("expected {n} columns, got {}", vals.len()) });
            }
            for (j, v) in vals.into_iter().enumerate() {
                m[(rows, j)] = v;
            }
            rows += 1;
        }
        check_dim(n, rows)?;
        Ok(m)
    }
}

/// The manifold split along the interface into the shell (exterior-tagged
/// triangles) and the core (annulus and inclusion triangles), with one
/// stiffness system for each piece.
#[derive(Debug)]
pub struct ShellCoreSplit {
    pub full: StiffnessSystem,
    pub shell: StiffnessSystem,
    pub core: StiffnessSystem,
    /// Parent node of each shell node.
    pub shell_nodes: Vec<usize>,
    /// Parent node of each core node.
    pub core_nodes: Vec<usize>,
    /// Shell loop that is the outer boundary.
    pub shell_outer_loop: usize,
    /// Shell loop that is the interface.
    pub shell_interface_loop: usize,
}

impl ShellCoreSplit {
    pub fn new(mesh: &TriMesh, metric: &MetricField) -> Result<Self> {
        if mesh.loop_count() != 1 {
            return Err(LabError::Domain("shell/core split requires a mesh with a single outer loop".into()));
        }
        if !mesh.regions().contains(&Region::Exterior) || !mesh.regions().iter().any(|r| r.in_collar()) {
            return Err(LabError::Domain("mesh lacks a shell or a core region".into()));
        }
        let full = StiffnessSystem::assemble(mesh, metric)?;
        let shell = mesh.submesh(|r| r == Region::Exterior)?;
        let core = mesh.submesh(Region::in_collar)?;
        if shell.mesh.loop_count() != 2 || core.mesh.loop_count() != 1 {
            return Err(LabError::Domain("shell must be an annulus and the core a disk".into()));
        }
        let to_parent = |sub: &crate::geometry::SubMesh, l: usize| -> Vec<usize> {
            sub.mesh.loops()[l].iter().map(|&v| sub.parent_nodes[v]).collect()
        };
        let outer_parent = mesh.loops()[0].clone();
        let (shell_outer_loop, shell_interface_loop) =
            if to_parent(&shell, 0) == outer_parent { (0, 1) } else { (1, 0) };
        if to_parent(&shell, shell_outer_loop) != outer_parent {
            return Err(LabError::Structure("shell outer loop does not match the mesh boundary".into()));
        }
        if to_parent(&shell, shell_interface_loop) != to_parent(&core, 0) {
            return Err(LabError::Structure("interface loop ordering differs between shell and core".into()));
        }
        let shell_system = StiffnessSystem::assemble(&shell.mesh, &metric.restrict(&shell.parent_triangles))?;
        let core_system = StiffnessSystem::assemble(&core.mesh, &metric.restrict(&core.parent_triangles))?;
        Ok(Self {
            full,
            shell: shell_system,
            core: core_system,
            shell_nodes: shell.parent_nodes,
            core_nodes: core.parent_nodes,
            shell_outer_loop,
            shell_interface_loop,
        })
    }

    /// Parent nodes of the outer boundary.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.full.mesh().loops()[0]
    }

    /// Parent nodes of the interface, in loop order.
    pub fn interface_nodes(&self) -> Vec<usize> {
        self.core.mesh().loops()[0].iter().map(|&v| self.core_nodes[v]).collect()
    }

    pub fn boundary_len(&self) -> usize {
        self.full.mesh().loops()[0].len()
    }

    pub fn interface_len(&self) -> usize {
        self.core.mesh().loops()[0].len()
    }

    /// Full extension of boundary data into the whole manifold.
    pub fn extend(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.full.extend_from_loop(0, u, LoopCondition::Zero)?.values)
    }

    /// Restriction of a full-manifold field to the interface.
    pub fn interface_trace(&self, values: &[f64]) -> Vec<f64> {
        self.interface_nodes().iter().map(|&v| values[v]).collect()
    }

    /// Map from outer boundary data to the interface trace of its extension.
    pub fn restrict_to_interface(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.interface_trace(&self.extend(u)?))
    }

    /// Shell extension with data `u` on the outer boundary and zero on the interface.
    pub fn shell_from_boundary(&self, u: &[f64]) -> Result<Vec<f64>> {
        Ok(self.shell.extend_from_loop(self.shell_outer_loop, u, LoopCondition::Zero)?.values)
    }

    /// Shell extension with data `w` on the interface and zero on the outer boundary.
    pub fn shell_from_interface(&self, w: &[f64]) -> Result<Vec<f64>> {
        Ok(self.shell.extend_from_loop(self.shell_interface_loop, w, LoopCondition::Zero)?.values)
    }

    /// `(K_shell U)` on the interface, in interface order.
    pub fn shell_interface_covector(&self, shell_values: &[f64]) -> Result<Vec<f64>> {
        self.shell.conormal_covector(shell_values, self.shell_interface_loop)
    }

    /// `(K_shell U)` on the outer boundary.
    pub fn shell_boundary_covector(&self, shell_values: &[f64]) -> Result<Vec<f64>> {
        self.shell.conormal_covector(shell_values, self.shell_outer_loop)
    }

    pub fn full_dn(&self) -> Result<DnOperator> {
        self.full.boundary_dn()
    }

    pub fn core_dn(&self) -> Result<DnOperator> {
        self.core.dn_map(&[0], LoopCondition::Zero, DnKind::Core)
    }

    pub fn shell_dn_interface(&self) -> Result<DnOperator> {
        self.shell.dn_map(&[self.shell_interface_loop], LoopCondition::Zero, DnKind::ShellFromInterface)
    }

    pub fn shell_dn_boundary(&self) -> Result<DnOperator> {
        self.shell.dn_map(&[self.shell_outer_loop], LoopCondition::Zero, DnKind::ShellFromBoundary)
    }

    pub fn boundary_calculus(&self) -> Result<BoundaryCalculus> {
        self.full.loop_calculus(0)
    }

    /// Calculus of the interface measured from the core side.
    pub fn interface_calculus(&self) -> Result<BoundaryCalculus> {
        self.core.loop_calculus(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_annulus, build_disk, DiskBuilder};
    use std::f64::consts::PI;

    #[test]
    fn reference_triangle_stiffness() {
        let k = local_stiffness([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], Sym2::IDENTITY).unwrap();
        let expected = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expected[i][j]).abs() < 1e-15);
            }
        }
        assert!(local_stiffness([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]], Sym2::IDENTITY).is_err());
    }

    #[test]
    fn constants_in_kernel() {
        let m = build_disk(1.0, 32).unwrap();
        let g = MetricField::constant(m.triangle_count(), Sym2::new(1.3, 0.2, 0.8)).unwrap();
        let s = StiffnessSystem::assemble(&m, &g).unwrap();
        let r = s.residual(&vec![1.0; m.node_count()]).unwrap();
        assert!(r.iter().all(|v| v.abs() < 1e-12));
        assert!(s.matrix().asymmetry() < 1e-14);
        let f = s.extend_from_loop(0, &[2.5; 32], LoopCondition::Zero).unwrap();
        assert!(f.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn disk_extension_of_cos() {
        let m = build_disk(1.0, 64).unwrap();
        let s = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap();
        let pts = m.loop_points(0).unwrap();
        let f: Vec<f64> = pts.iter().map(|p| p[0]).collect();
        let u = s.extend_from_loop(0, &f, LoopCondition::Zero).unwrap();
        assert!(u.interior_residual(&s).unwrap() < 1e-12);
        let err = m.nodes().iter().zip(&u.values).map(|(p, v)| (p[0] - v).abs()).fold(0.0, f64::max);
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn annulus_log_solution() {
        let m = build_annulus(0.5, 1.0, 64).unwrap();
        let s = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap();
        let n0 = m.loops()[0].len();
        let n1 = m.loops()[1].len();
        let (one, zero) = (vec![1.0; n0], vec![0.0; n1]);
        let u = s.harmonic_extension(&[LoopData::Values(&one), LoopData::Values(&zero)]).unwrap();
        for (p, v) in m.nodes().iter().zip(&u.values) {
            let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
            assert!((v - (r / 0.5).ln() / 2f64.ln()).abs() < 0.01);
        }
    }

    #[test]
    fn dn_matches_conormal_trace_and_energy() {
        let m = build_disk(1.0, 48).unwrap();
        let g = MetricField::constant(m.triangle_count(), Sym2::new(1.1, 0.3, 0.9)).unwrap();
        let s = StiffnessSystem::assemble(&m, &g).unwrap();
        let dn = s.boundary_dn().unwrap();
        assert!(dn.mass_asymmetry() < 1e-10);
        let f: Vec<f64> = (0..48).map(|k| ((k * k) % 7) as f64 - 3.0).collect();
        let u = s.extend_from_loop(0, &f, LoopCondition::Zero).unwrap();
        let a = dn.apply(&f).unwrap();
        let b = s.conormal_trace(&u.values, 0).unwrap();
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * scale);
        }
        let energy: f64 = s.residual(&u.values).unwrap().iter().zip(&u.values).map(|(a, b)| a * b).sum();
        assert!((energy - dn.pairing(&f, &f).unwrap()).abs() < 1e-10 * energy);
        let ones = dn.apply(&[1.0; 48]).unwrap();
        assert!(ones.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn shell_interface_flux_of_constant() {
        let m = DiskBuilder::new(1.0, 96).collar(0.5).build().unwrap();
        let split = ShellCoreSplit::new(&m, &MetricField::euclidean(&m)).unwrap();
        let d = split.shell_dn_interface().unwrap();
        let ones = vec![1.0; d.len()];
        let flux: f64 = d.form.row_sum().iter().sum();
        assert!((flux - 2.0 * PI / 2f64.ln()).abs() < 0.01 * flux, "{flux}");
        let pointwise = d.apply(&ones).unwrap();
        let mean = pointwise.iter().sum::<f64>() / pointwise.len() as f64;
        assert!((mean - 2.0 / 2f64.ln()).abs() < 0.02 * mean);
        assert!(d.eigenvalues()[0] > 0.0);
        let core = split.core_dn().unwrap();
        assert!(core.apply(&ones).unwrap().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn csv_round_trip() {
        let m = build_disk(1.0, 16).unwrap();
        let s = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap();
        let dn = s.boundary_dn().unwrap();
        let back = DnOperator::matrix_from_csv(&dn.to_csv()).unwrap();
        assert!((back - dn.operator()).amax() < 1e-14);
        assert!(DnOperator::matrix_from_csv("dn 1 2\n1,2\n").is_err());
    }
}
