//! Spectral calculus on boundary loops: lumped mass, the boundary Laplacian,
//! fractional Sobolev norms and operator norms between Sobolev scales.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{check_dim, LabError, Result};
use crate::geometry::{Point, Sym2, TriMesh};
use crate::geometry::MetricField;

/// Largest admissible Sobolev exponent in absolute value.
pub const MAX_EXPONENT: f64 = 2.0;

/// Which symbol a fractional power is taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowerBase {
    /// `(I + Laplacian)^s`.
    Shifted,
    /// `Laplacian^s` with the constant modes sent to zero.
    Laplacian,
}

/// Mass matrix, Laplacian and its generalised eigendecomposition on one or
/// more closed polygonal loops.
///
/// Eigenvectors are columns of `eigenvectors`, orthonormal for the lumped mass.
/// The first `zero_modes` pairs are the exact per-loop constants with eigenvalue 0.
#[derive(Debug, Clone)]
pub struct BoundaryCalculus {
    mass: DVector<f64>,
    laplacian: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
    zero_modes: usize,
    lengths: Vec<f64>,
    edge_lengths: Vec<f64>,
    /// First node of each loop in the concatenated numbering.
    offsets: Vec<usize>,
}

fn check_exponent(s: f64) -> Result<()> {
    if s.is_finite() && s.abs() <= MAX_EXPONENT {
        Ok(())
    } else {
        Err(LabError::Domain(format!("Sobolev exponent {s} outside [-2, 2]")))
    }
}

impl BoundaryCalculus {
    /// Calculus on a single loop. `metrics[k]` measures the edge from node `k` to node `k + 1`.
    pub fn from_loop(points: &[Point], metrics: &[Sym2]) -> Result<Self> {
        Self::from_loops(&[(points, metrics)])
    }

    /// Calculus on the disjoint union of loops, nodes numbered loop after loop.
    pub fn from_loops(loops: &[(&[Point], &[Sym2])]) -> Result<Self> {
        let total: usize = loops.iter().map(|l| l.0.len()).sum();
        let mut mass: DVector<f64> = DVector::zeros(total);
        let mut laplacian: DMatrix<f64> = DMatrix::zeros(total, total);
        let mut lengths = Vec::with_capacity(loops.len());
        let mut edge_lengths = Vec::with_capacity(total);
        let mut offsets = Vec::with_capacity(loops.len());
        let mut base = 0;
        for (points, metrics) in loops {
            let n = points.len();
            check_dim(n, metrics.len())?;
            if n < 3 {
                return Err(LabError::Domain(format!("a boundary loop needs at least 3 nodes, got {n}")));
            }
            offsets.push(base);
            let mut length = 0.0;
            for k in 0..n {
                let (p, q) = (points[k], points[(k + 1) % n]);
                let l = metrics[k].norm([q[0] - p[0], q[1] - p[1]]);
                if !(l > 0.0) {
                    return Err(LabError::Geometry(format!("boundary edge {k} has zero length")));
                }
                let (i, j) = (base + k, base + (k + 1) % n);
                mass[i] += 0.5 * l;
                mass[j] += 0.5 * l;
                laplacian[(i, i)] += 1.0 / l;
                laplacian[(j, j)] += 1.0 / l;
                laplacian[(i, j)] -= 1.0 / l;
                laplacian[(j, i)] -= 1.0 / l;
                edge_lengths.push(l);
                length += l;
            }
            lengths.push(length);
            base += n;
        }
        let scale = mass.map(|m| 1.0 / m.sqrt());
        let mut sym: DMatrix<f64> = laplacian.clone();
        for i in 0..total {
            for j in 0..total {
                sym[(i, j)] *= scale[i] * scale[j];
            }
        }
        let eig = SymmetricEigen::new(sym);
        let mut order: Vec<usize> = (0..total).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let zero_modes = loops.len();
        let mut eigenvalues = Vec::with_capacity(total);
        let mut eigenvectors = DMatrix::zeros(total, total);
        for (c, &k) in order.iter().enumerate() {
            eigenvalues.push(eig.eigenvalues[k].max(0.0));
            let v = eig.eigenvectors.column(k).component_mul(&scale);
            eigenvectors.set_column(c, &v);
        }
        // exact kernel: per-loop constants
        for (l, &start) in offsets.iter().enumerate() {
            let end = offsets.get(l + 1).copied().unwrap_or(total);
            let mut v = DVector::zeros(total);
            for i in start..end {
                v[i] = 1.0 / lengths[l].sqrt();
            }
            eigenvalues[l] = 0.0;
            eigenvectors.set_column(l, &v);
        }
        // re-orthogonalise the remaining modes against the kernel in the mass inner product
        for c in zero_modes..total {
            let mut v = eigenvectors.column(c).into_owned();
            for z in 0..zero_modes {
                let e = eigenvectors.column(z);
                let p = (0..total).map(|i| e[i] * mass[i] * v[i]).sum::<f64>();
                v -= e * p;
            }
            let nrm = (0..total).map(|i| mass[i] * v[i] * v[i]).sum::<f64>().sqrt();
            eigenvectors.set_column(c, &(v / nrm));
        }
        Ok(Self { mass, laplacian, eigenvalues, eigenvectors, zero_modes, lengths, edge_lengths, offsets })
    }

    /// Calculus on loop `l` of a mesh, edge lengths measured by the owning triangle's metric.
    pub fn for_mesh_loop(mesh: &TriMesh, metric: &MetricField, l: usize) -> Result<Self> {
        let points = mesh.loop_points(l)?;
        let metrics: Vec<Sym2> = mesh.loop_edge_triangles(l).iter().map(|&t| metric.get(t)).collect();
        Self::from_loop(&points, &metrics)
    }

    /// Loop of `n` equally spaced nodes on a circle of the given radius, Euclidean metric.
    pub fn circle(n: usize, radius: f64) -> Result<Self> {
        let points: Vec<Point> = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                [radius * th.cos(), radius * th.sin()]
            })
            .collect();
        Self::from_loop(&points, &vec![Sym2::IDENTITY; n])
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    /// Diagonal of the lumped mass matrix.
    pub fn mass(&self) -> &DVector<f64> {
        &self.mass
    }

    /// Stiffness matrix of the boundary Laplacian (a form; divide rows by the mass for the operator).
    pub fn laplacian_form(&self) -> &DMatrix<f64> {
        &self.laplacian
    }

    /// The boundary Laplacian as an operator on nodal functions, `M^{-1} L`.
    pub fn laplacian_operator(&self) -> DMatrix<f64> {
        let mut a = self.laplacian.clone();
        for i in 0..self.len() {
            a.row_mut(i).scale_mut(1.0 / self.mass[i]);
        }
        a
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn zero_modes(&self) -> usize {
        self.zero_modes
    }

    /// Total length of each loop.
    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    /// Length of the edge leaving each node.
    pub fn edge_lengths(&self) -> &[f64] {
        &self.edge_lengths
    }

    pub fn loop_offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn check(&self, f: &[f64]) -> Result<()> {
        check_dim(self.len(), f.len())
    }

    /// `L^2` inner product `f^T M g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        f.iter().zip(g).zip(self.mass.iter()).map(|((a, b), m)| a * b * m).sum()
    }

    /// Mass-inner-product coefficients `E^T M f`.
    pub fn coefficients(&self, f: &[f64]) -> Result<DVector<f64>> {
        self.check(f)?;
        let mf = DVector::from_iterator(self.len(), f.iter().zip(self.mass.iter()).map(|(a, m)| a * m));
        Ok(self.eigenvectors.tr_mul(&mf))
    }

    /// Function with the given eigen-coefficients.
    pub fn synthesize(&self, coeffs: &DVector<f64>) -> Result<Vec<f64>> {
        check_dim(self.len(), coeffs.len())?;
        Ok((&self.eigenvectors * coeffs).as_slice().to_vec())
    }

    fn weight(&self, i: usize, s: f64, base: PowerBase) -> f64 {
        match base {
            PowerBase::Shifted => (1.0 + self.eigenvalues[i]).powf(s),
            PowerBase::Laplacian if i < self.zero_modes => 0.0,
            PowerBase::Laplacian => self.eigenvalues[i].powf(s),
        }
    }

    /// `(sum_i (1 + lambda_i)^s a_i^2)^{1/2}`.
    pub fn hs_norm(&self, f: &[f64], s: f64) -> Result<f64> {
        self.hs_norm_band(f, s, self.len())
    }

    /// As [`hs_norm`](Self::hs_norm) restricted to the lowest `modes` eigenmodes.
    pub fn hs_norm_band(&self, f: &[f64], s: f64, modes: usize) -> Result<f64> {
        check_exponent(s)?;
        let a = self.coefficients(f)?;
        Ok((0..modes.min(self.len())).map(|i| (1.0 + self.eigenvalues[i]).powf(s) * a[i] * a[i]).sum::<f64>().sqrt())
    }

    /// Spectral application `sum_i w_i(s) a_i e_i`.
    pub fn frac_power_apply(&self, f: &[f64], s: f64, base: PowerBase) -> Result<Vec<f64>> {
        check_exponent(s)?;
        let mut a = self.coefficients(f)?;
        for i in 0..self.len() {
            a[i] *= self.weight(i, s, base);
        }
        self.synthesize(&a)
    }

    /// Matrix of the fractional power acting on nodal functions.
    pub fn frac_power_matrix(&self, s: f64, base: PowerBase) -> Result<DMatrix<f64>> {
        check_exponent(s)?;
        let n = self.len();
        let mut scaled = self.eigenvectors.clone();
        for i in 0..n {
            let w = self.weight(i, s, base);
            scaled.column_mut(i).scale_mut(w);
        }
        let mut et_m = self.eigenvectors.transpose();
        for j in 0..n {
            et_m.column_mut(j).scale_mut(self.mass[j]);
        }
        Ok(scaled * et_m)
    }

    /// `D^{s/2} E^T M` restricted to the modes in `modes`.
    fn analysis(&self, s: f64, modes: Range<usize>) -> DMatrix<f64> {
        let n = self.len();
        let rows = modes.len();
        let mut a = DMatrix::zeros(rows, n);
        for (r, i) in modes.enumerate() {
            let w = (1.0 + self.eigenvalues[i]).powf(0.5 * s);
            for j in 0..n {
                a[(r, j)] = w * self.eigenvectors[(j, i)] * self.mass[j];
            }
        }
        a
    }

    /// `E D^{-s/2}` restricted to the modes in `modes`.
    fn synthesis(&self, s: f64, modes: Range<usize>) -> DMatrix<f64> {
        let n = self.len();
        let cols = modes.len();
        let mut a = DMatrix::zeros(n, cols);
        for (c, i) in modes.enumerate() {
            let w = (1.0 + self.eigenvalues[i]).powf(-0.5 * s);
            for j in 0..n {
                a[(j, c)] = w * self.eigenvectors[(j, i)];
            }
        }
        a
    }

    /// Largest singular value of `(I + Laplacian)^{s_to/2} op (I + Laplacian)^{-s_from/2}`
    /// for an operator on nodal functions of this loop.
    pub fn operator_norm(&self, op: &DMatrix<f64>, s_from: f64, s_to: f64) -> Result<f64> {
        operator_norm_between(op, self, 0..self.len(), s_from, self, 0..self.len(), s_to)
    }

    /// Operator norm between the spans of the given eigenmodes.
    pub fn operator_norm_band(&self, op: &DMatrix<f64>, s_from: f64, s_to: f64, modes: Range<usize>) -> Result<f64> {
        operator_norm_between(op, self, modes.clone(), s_from, self, modes, s_to)
    }

    /// Discrete `W^{1,infinity}` norm: maximum of the sup norm and the largest edge slope.
    pub fn w1_inf_norm(&self, f: &[f64]) -> Result<f64> {
        self.check(f)?;
        let mut best = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (l, &start) in self.offsets.iter().enumerate() {
            let end = self.offsets.get(l + 1).copied().unwrap_or(self.len());
            for i in start..end {
                let j = if i + 1 == end { start } else { i + 1 };
                best = best.max((f[j] - f[i]).abs() / self.edge_lengths[i]);
            }
        }
        Ok(best)
    }

    /// Spectral truncation at the smallest cutoff with `||f - f_eps||_{1/2} <= eps`.
    pub fn lipschitz_approximation(&self, f: &[f64], eps: f64) -> Result<LipschitzApproximation> {
        if !(eps > 0.0) {
            return Err(LabError::Domain(format!("tolerance must be positive, got {eps}")));
        }
        let a = self.coefficients(f)?;
        let n = self.len();
        let energy: Vec<f64> = (0..n).map(|i| (1.0 + self.eigenvalues[i]).sqrt() * a[i] * a[i]).collect();
        // tail[k] = energy of modes k..n
        let mut tail = vec![0.0; n + 1];
        for i in (0..n).rev() {
            tail[i] = tail[i + 1] + energy[i];
        }
        let cutoff = (0..=n).find(|&k| tail[k].max(0.0).sqrt() <= eps).unwrap_or(n);
        let mut kept = a.clone();
        for i in cutoff..n {
            kept[i] = 0.0;
        }
        let function = self.synthesize(&kept)?;
        let w1_inf = if cutoff == 0 { 0.0 } else { self.w1_inf_norm(&function)? };
        Ok(LipschitzApproximation { function, cutoff, error: tail[cutoff].max(0.0).sqrt(), w1_inf })
    }

    /// A fixed exponent on this calculus.
    pub fn scale(&self, s: f64) -> Result<SobolevScale<'_>> {
        check_exponent(s)?;
        Ok(SobolevScale { calculus: self, s })
    }
}

/// Largest singular value of `D_to^{s_to/2} E_to^T M_to op E_from D_from^{-s_from/2}`,
/// restricted to the given eigenmodes on each side.
pub fn operator_norm_between(
    op: &DMatrix<f64>,
    from: &BoundaryCalculus,
    from_modes: Range<usize>,
    s_from: f64,
    to: &BoundaryCalculus,
    to_modes: Range<usize>,
    s_to: f64,
) -> Result<f64> {
    check_exponent(s_from)?;
    check_exponent(s_to)?;
    check_dim(to.len(), op.nrows())?;
    check_dim(from.len(), op.ncols())?;
    if from_modes.end > from.len() || to_modes.end > to.len() {
        return Err(LabError::Domain("mode range exceeds the number of eigenmodes".into()));
    }
    if from_modes.is_empty() || to_modes.is_empty() {
        return Ok(0.0);
    }
    let m = to.analysis(s_to, to_modes) * op * from.synthesis(s_from, from_modes);
    Ok(m.singular_values().iter().copied().fold(0.0, f64::max))
}

/// Output of [`BoundaryCalculus::lipschitz_approximation`].
#[derive(Debug, Clone)]
pub struct LipschitzApproximation {
    pub function: Vec<f64>,
    /// Number of eigenmodes kept.
    pub cutoff: usize,
    /// `||f - f_eps||_{1/2}`.
    pub error: f64,
    pub w1_inf: f64,
}

/// A Sobolev space `H^s` on a loop.
#[derive(Debug, Clone, Copy)]
pub struct SobolevScale<'a> {
    pub calculus: &'a BoundaryCalculus,
    pub s: f64,
}

impl SobolevScale<'_> {
    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        self.calculus.hs_norm(f, self.s)
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        let (a, b) = (self.calculus.coefficients(f)?, self.calculus.coefficients(g)?);
        Ok((0..a.len()).map(|i| (1.0 + self.calculus.eigenvalues[i]).powf(self.s) * a[i] * b[i]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn uniform_loop_spectrum() {
        let n = 40;
        let c = BoundaryCalculus::circle(n, 1.0).unwrap();
        let l = c.lengths()[0];
        let mut expected: Vec<f64> = (0..n).map(|k| (2.0 * n as f64 / l).powi(2) * (PI * k as f64 / n as f64).sin().powi(2)).collect();
        expected.sort_by(f64::total_cmp);
        for (a, b) in c.eigenvalues().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9 * (1.0 + b), "{a} vs {b}");
        }
        assert_eq!(c.eigenvalues()[0], 0.0);
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal() {
        let pts: Vec<Point> = (0..30).map(|k| {
            let t = 2.0 * PI * k as f64 / 30.0;
            [1.3 * t.cos() + 0.1 * (2.0 * t).cos(), 0.8 * t.sin()]
        }).collect();
        let c = BoundaryCalculus::from_loop(&pts, &vec![Sym2::new(1.5, 0.2, 0.9); 30]).unwrap();
        let e = c.eigenvectors();
        let m = DMatrix::from_diagonal(c.mass());
        let g = e.transpose() * m * e;
        assert!((g - DMatrix::identity(30, 30)).amax() < 1e-10);
    }

    #[test]
    fn constant_norm_is_root_length() {
        let c = BoundaryCalculus::circle(64, 1.0).unwrap();
        let one = vec![1.0; 64];
        for s in [-2.0, -0.5, 0.0, 0.5, 1.0, 2.0] {
            assert!((c.hs_norm(&one, s).unwrap() - c.lengths()[0].sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn l2_norm_matches_mass() {
        let c = BoundaryCalculus::circle(32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = random_vec(&mut rng, 32);
        assert!((c.hs_norm(&f, 0.0).unwrap() - c.inner(&f, &f).sqrt()).abs() < 1e-12);
        assert!(c.hs_norm(&f, 3.0).is_err());
        assert!(c.hs_norm(&f[..5], 0.0).is_err());
    }

    #[test]
    fn powers_compose() {
        let c = BoundaryCalculus::circle(48, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = random_vec(&mut rng, 48);
        let g = c.frac_power_apply(&c.frac_power_apply(&f, 0.7, PowerBase::Shifted).unwrap(), -0.7, PowerBase::Shifted).unwrap();
        for (a, b) in f.iter().zip(&g) {
            assert!((a - b).abs() < 1e-10);
        }
        let e3: Vec<f64> = c.eigenvectors().column(3).iter().copied().collect();
        let p = c.frac_power_apply(&e3, 1.0, PowerBase::Shifted).unwrap();
        for (a, b) in e3.iter().zip(&p) {
            assert!((a * (1.0 + c.eigenvalues()[3]) - b).abs() < 1e-10);
        }
        let m = c.frac_power_matrix(0.5, PowerBase::Laplacian).unwrap();
        assert!((&m * DVector::from_element(48, 1.0)).amax() < 1e-10);
    }

    #[test]
    fn operator_norms() {
        let c = BoundaryCalculus::circle(32, 1.0).unwrap();
        let id = DMatrix::identity(32, 32);
        assert!((c.operator_norm(&id, 0.5, 0.5).unwrap() - 1.0).abs() < 1e-10);
        assert_eq!(c.operator_norm(&DMatrix::zeros(32, 32), 0.5, -0.5).unwrap(), 0.0);
        let lap = c.laplacian_operator();
        let expected = c.eigenvalues().iter().map(|l| l / (1.0 + l)).fold(0.0, f64::max);
        assert!((c.operator_norm(&lap, 1.0, -1.0).unwrap() - expected).abs() < 1e-10);
        assert!(expected < 1.0);
    }

    #[test]
    fn lipschitz_approximation_edges() {
        let c = BoundaryCalculus::circle(32, 1.0).unwrap();
        let e: Vec<f64> = c.eigenvectors().column(5).iter().copied().collect();
        let nrm = c.hs_norm(&e, 0.5).unwrap();
        let z = c.lipschitz_approximation(&e, 1.01 * nrm).unwrap();
        assert!(z.function.iter().all(|v| v.abs() < 1e-14) && z.w1_inf == 0.0);
        let same = c.lipschitz_approximation(&e, 0.5 * nrm).unwrap();
        for (a, b) in e.iter().zip(&same.function) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn duality_by_brute_force() {
        let c = BoundaryCalculus::circle(24, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_vec(&mut rng, 24);
        for s in [0.5, 1.0] {
            // maximiser of <f, g>_{L2} / ||g||_s is g = (I + Lap)^{-s} f
            let g = c.frac_power_apply(&f, -s, PowerBase::Shifted).unwrap();
            let sup = c.inner(&f, &g) / c.hs_norm(&g, s).unwrap();
            assert!((sup - c.hs_norm(&f, -s).unwrap()).abs() < 1e-10);
            for _ in 0..200 {
                let h = random_vec(&mut rng, 24);
                assert!(c.inner(&f, &h) / c.hs_norm(&h, s).unwrap() <= sup * (1.0 + 1e-12));
            }
        }
    }
}
