//! Piecewise-constant Riemannian metrics on triangle meshes.

use serde::{Deserialize, Serialize};

use super::mesh::{Region, TriMesh};
use crate::error::{check_dim, LabError, Result};

/// Symmetric 2x2 tensor `[[a11, a12], [a12, a22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub a11: f64,
    pub a12: f64,
    pub a22: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 { a11: 1.0, a12: 0.0, a22: 1.0 };

    pub const fn new(a11: f64, a12: f64, a22: f64) -> Self {
        Self { a11, a12, a22 }
    }

    pub const fn diag(a11: f64, a22: f64) -> Self {
        Self { a11, a12: 0.0, a22 }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a12
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::new(c * self.a11, c * self.a12, c * self.a22)
    }

    pub fn add(&self, other: &Sym2) -> Self {
        Self::new(self.a11 + other.a11, self.a12 + other.a12, self.a22 + other.a22)
    }

    pub fn sub(&self, other: &Sym2) -> Self {
        Self::new(self.a11 - other.a11, self.a12 - other.a12, self.a22 - other.a22)
    }

    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.a22 / d, -self.a12 / d, self.a11 / d)
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a12 * v[0] + self.a22 * v[1]]
    }

    /// `u^T A v`.
    pub fn inner(&self, u: [f64; 2], v: [f64; 2]) -> f64 {
        let av = self.apply(v);
        u[0] * av[0] + u[1] * av[1]
    }

    pub fn norm(&self, v: [f64; 2]) -> f64 {
        self.inner(v, v).max(0.0).sqrt()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let m = 0.5 * self.trace();
        let r = (0.25 * (self.a11 - self.a22).powi(2) + self.a12 * self.a12).sqrt();
        (m - r, m + r)
    }

    pub fn is_spd(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a22.is_finite() && self.a11 > 0.0 && self.det() > 0.0
    }

    /// Eigenvalues of `self^{-1} other`, ascending.
    pub fn relative_eigenvalues(&self, other: &Sym2) -> (f64, f64) {
        // det(other - l self) = 0
        let a = self.det();
        let b = -(self.a11 * other.a22 + self.a22 * other.a11 - 2.0 * self.a12 * other.a12);
        let c = other.det();
        let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
        let (l1, l2) = ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a));
        (l1.min(l2), l1.max(l2))
    }

    /// The coefficient tensor `sqrt(det G) G^{-1}` of the weak Laplace-Beltrami form.
    pub fn conductivity(&self) -> Self {
        self.inverse().scale(self.det().sqrt())
    }

    /// Whether `self` is a positive multiple of `other` up to relative tolerance.
    pub fn is_conformal_to(&self, other: &Sym2, tol: f64) -> bool {
        let c = self.trace() / other.trace();
        let d = self.sub(&other.scale(c));
        let scale = self.a11.abs().max(self.a22.abs()).max(self.a12.abs()).max(f64::MIN_POSITIVE);
        d.a11.abs().max(d.a12.abs()).max(d.a22.abs()) <= tol * scale
    }
}

/// One metric tensor per triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    values: Vec<Sym2>,
}

impl MetricField {
    pub fn new(values: Vec<Sym2>) -> Result<Self> {
        for (t, m) in values.iter().enumerate() {
            if !m.is_spd() {
                return Err(LabError::Metric(format!("tensor on triangle {t} is not positive definite: {m:?}")));
            }
        }
        Ok(Self { values })
    }

    pub fn constant(triangles: usize, value: Sym2) -> Result<Self> {
        Self::new(vec![value; triangles])
    }

    pub fn euclidean(mesh: &TriMesh) -> Self {
        Self { values: vec![Sym2::IDENTITY; mesh.triangle_count()] }
    }

    /// Per-triangle value chosen by region tag.
    pub fn by_region(mesh: &TriMesh, f: impl Fn(Region) -> Sym2) -> Result<Self> {
        Self::new(mesh.regions().iter().map(|&r| f(r)).collect())
    }

    pub fn values(&self) -> &[Sym2] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, t: usize) -> Sym2 {
        self.values[t]
    }

    /// Multiplies the tensor on triangle `t` by `factors[t]`.
    pub fn conformal_scale(&self, factors: &[f64]) -> Result<Self> {
        check_dim(self.values.len(), factors.len())?;
        Self::new(self.values.iter().zip(factors).map(|(m, &c)| m.scale(c)).collect())
    }

    /// Restricts the field to a subset of triangles.
    pub fn restrict(&self, triangles: &[usize]) -> Self {
        Self { values: triangles.iter().map(|&t| self.values[t]).collect() }
    }

    /// Checks that every eigenvalue lies in `[1/bound, bound]`.
    pub fn check_bounds(&self, bound: f64) -> Result<()> {
        for (t, m) in self.values.iter().enumerate() {
            let (lo, hi) = m.eigenvalues();
            if lo < 1.0 / bound || hi > bound {
                return Err(LabError::Metric(format!(
                    "eigenvalues ({lo}, {hi}) on triangle {t} outside [1/{bound}, {bound}]"
                )));
            }
        }
        Ok(())
    }

    /// Text serialisation: `metric 1` followed by one `a11 a12 a22` line per triangle.
    pub fn to_text(&self) -> String {
        let mut s = String::from("metric 1\n");
        for m in &self.values {
            s.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", m.a11, m.a12, m.a22));
        }
        s
    }

    pub fn from_text(text: &str, triangles: usize) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, l)) if l.trim() == "metric 1" => {}
            Some((i, _)) => return Err(LabError::Parse { line: i + 1, message: "expected header `metric 1`".into() }),
            None => return Err(LabError::Parse { line: 1, message: "empty metric file".into() }),
        }
        let mut values = Vec::with_capacity(triangles);
        for (i, l) in lines {
            let parts: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| LabError::Parse { line: i + 1, message: format!("{e}") })?;
            if parts.len() != 3 {
                return Err(LabError::Parse { line: i + 1, message: "expected `a11 a12 a22`".into() });
            }
            values.push(Sym2::new(parts[0], parts[1], parts[2]));
        }
        check_dim(triangles, values.len())?;
        Self::new(values)
    }
}

/// The field `g + chi_Sigma (h - g)` together with its boundary contrast.
#[derive(Debug, Clone)]
pub struct CompositeMetric {
    pub field: MetricField,
    /// `max |lambda_i(g^{-1} h) - 1|` over inclusion triangles touching the inclusion boundary.
    pub contrast: f64,
}

/// Uses `h` on inclusion-tagged triangles and `g` elsewhere.
pub fn composite_metric(g: &MetricField, h: &MetricField, mesh: &TriMesh) -> Result<CompositeMetric> {
    check_dim(mesh.triangle_count(), g.len())?;
    check_dim(mesh.triangle_count(), h.len())?;
    let on_interface = mesh.inclusion_boundary_nodes();
    let mut values = Vec::with_capacity(g.len());
    let mut contrast: f64 = 0.0;
    for (t, &region) in mesh.regions().iter().enumerate() {
        if region == Region::Inclusion {
            let (gt, ht) = (g.get(t), h.get(t));
            values.push(ht);
            if mesh.triangles()[t].iter().any(|&v| on_interface[v]) {
                let (l1, l2) = gt.relative_eigenvalues(&ht);
                contrast = contrast.max((l1 - 1.0).abs()).max((l2 - 1.0).abs());
            }
        } else {
            values.push(g.get(t));
        }
    }
    Ok(CompositeMetric { field: MetricField { values }, contrast })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_eigenvalues_of_scaled_identity() {
        let (a, b) = Sym2::IDENTITY.relative_eigenvalues(&Sym2::diag(2.0, 2.0));
        assert!((a - 2.0).abs() < 1e-14 && (b - 2.0).abs() < 1e-14);
        let g = Sym2::new(2.0, 0.5, 1.0);
        let (a, b) = g.relative_eigenvalues(&g.scale(3.0));
        assert!((a - 3.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
    }

    #[test]
    fn conductivity_is_conformally_invariant() {
        let g = Sym2::new(2.0, 0.3, 0.7);
        let a = g.conductivity();
        let b = g.scale(5.5).conductivity();
        assert!((a.a11 - b.a11).abs() < 1e-14 && (a.a12 - b.a12).abs() < 1e-14 && (a.a22 - b.a22).abs() < 1e-14);
    }

    #[test]
    fn non_spd_is_rejected() {
        assert!(MetricField::new(vec![Sym2::new(1.0, 2.0, 1.0)]).is_err());
        assert!(MetricField::new(vec![Sym2::diag(-1.0, 1.0)]).is_err());
    }

    #[test]
    fn conformal_detection() {
        let g = Sym2::new(2.0, 0.3, 0.7);
        assert!(g.scale(0.2).is_conformal_to(&g, 1e-12));
        assert!(!Sym2::diag(1.0, 0.0).is_conformal_to(&Sym2::IDENTITY, 1e-12));
    }

    #[test]
    fn metric_text_round_trip() {
        let f = MetricField::new(vec![Sym2::new(1.0, 0.1, 2.0), Sym2::IDENTITY]).unwrap();
        let back = MetricField::from_text(&f.to_text(), 2).unwrap();
        assert_eq!(f, back);
        assert!(MetricField::from_text("metric 1\n1 0 1\n", 2).is_err());
        assert!(MetricField::from_text("metrik 1\n", 0).is_err());
    }
}
