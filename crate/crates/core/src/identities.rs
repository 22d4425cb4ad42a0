//! Numerical certificates for the exact transmission identities and the
//! boundedness properties of DN maps.
//!
//! Exact identities produce an [`IdentityReport`]; properties that only hold up
//! to discretisation are checked by stabilisation along a refinement ladder and
//! produce a [`BoundednessReport`].

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dn::{DnOperator, LoopCondition, ShellCoreSplit, StiffnessSystem};
use crate::error::{check_dim, LabError, Result};
use crate::geometry::{build_annulus, build_disk, composite_metric, DiskBuilder, MetricField, Region, Sym2, TriMesh};
use crate::sobolev::{operator_norm_between, BoundaryCalculus, PowerBase};

/// Default tolerance on relative residuals of exact identities.
pub const EXACT_TOLERANCE: f64 = 1e-9;

/// Ratio of successive refinements accepted as stabilised.
pub const STABILITY_RATIO: f64 = 1.2;

/// Residual of one exact identity, serialised as one JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub identity: String,
    pub abs: f64,
    pub rel: f64,
    pub resolution: usize,
    pub pass: bool,
}

impl IdentityReport {
    pub fn new(identity: &str, abs: f64, scale: f64, resolution: usize, tol: f64) -> Self {
        let rel = abs / scale.max(1e-30);
        Self { identity: identity.to_string(), abs, rel, resolution, pass: rel <= tol }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    /// Worst case of several reports of the same identity.
    pub fn worst(reports: &[IdentityReport]) -> Option<IdentityReport> {
        reports.iter().max_by(|a, b| a.rel.total_cmp(&b.rel)).cloned()
    }
}

/// How a refinement ladder is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LadderVerdict {
    /// No value exceeds its predecessor by more than the threshold factor.
    Bounded,
    /// Consecutive values agree within the threshold factor in both directions.
    Converged,
}

/// Values of a discretisation-limited quantity along a refinement ladder.
#[derive(Debug, Clone, Serialize)]
pub struct BoundednessReport {
    pub check: String,
    pub verdict: LadderVerdict,
    pub resolutions: Vec<usize>,
    pub values: Vec<f64>,
    /// `v_k / v_{k-1}` for consecutive entries.
    pub ratios: Vec<f64>,
    pub stable: bool,
}

impl BoundednessReport {
    pub fn from_ladder(check: &str, verdict: LadderVerdict, resolutions: Vec<usize>, values: Vec<f64>, threshold: f64) -> Self {
        let ratios: Vec<f64> = values
            .windows(2)
            .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 1.0 } else { w[1].abs() / w[0].abs() })
            .collect();
        let ok = |r: f64| match verdict {
            LadderVerdict::Bounded => r <= threshold,
            LadderVerdict::Converged => r <= threshold && r >= 1.0 / threshold,
        };
        let stable = values.iter().all(|v| v.is_finite()) && ratios.iter().all(|&r| ok(r));
        Self { check: check.to_string(), verdict, resolutions, values, ratios, stable }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything needed to evaluate the single-metric identities on a split manifold.
#[derive(Debug)]
pub struct SplitOperators {
    pub split: ShellCoreSplit,
    pub full_dn: DnOperator,
    pub core_dn: DnOperator,
    pub shell_interface_dn: DnOperator,
    pub resolution: usize,
}

impl SplitOperators {
    pub fn new(mesh: &TriMesh, metric: &MetricField) -> Result<Self> {
        let split = ShellCoreSplit::new(mesh, metric)?;
        let full_dn = split.full_dn()?;
        let core_dn = split.core_dn()?;
        let shell_interface_dn = split.shell_dn_interface()?;
        let resolution = split.boundary_len();
        Ok(Self { split, full_dn, core_dn, shell_interface_dn, resolution })
    }

    /// Form of `Lambda^{0,1} + Lambda_core` on the interface.
    pub fn transmission_form(&self) -> DMatrix<f64> {
        &self.shell_interface_dn.form + &self.core_dn.form
    }

    /// Transmission identity `(S_shell + S_core) u' = -(K_shell E^{1,0} u)|_interface`.
    pub fn transmission_residual(&self, u: &[f64]) -> Result<IdentityReport> {
        check_dim(self.split.boundary_len(), u.len())?;
        let up = self.split.restrict_to_interface(u)?;
        let lhs = (self.transmission_form() * DVector::from_column_slice(&up)).as_slice().to_vec();
        let shell = self.split.shell_from_boundary(u)?;
        let rhs: Vec<f64> = self.split.shell_interface_covector(&shell)?.iter().map(|v| -v).collect();
        let abs = max_abs(&lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect::<Vec<_>>());
        Ok(IdentityReport::new("transmission", abs, max_abs(&lhs).max(max_abs(&rhs)), self.resolution, EXACT_TOLERANCE))
    }

    /// Restriction map `T: u -> E(u)|_interface` assembled column by column.
    pub fn restriction_matrix(&self) -> Result<DMatrix<f64>> {
        let (nb, ni) = (self.split.boundary_len(), self.split.interface_len());
        let mut t = DMatrix::zeros(ni, nb);
        for j in 0..nb {
            let mut e = vec![0.0; nb];
            e[j] = 1.0;
            let col = self.split.restrict_to_interface(&e)?;
            t.set_column(j, &DVector::from_vec(col));
        }
        Ok(t)
    }

    /// `-M_b^{-1} S_bi (S_shell + S_core)^{-1} M_i`: the adjoint of the restriction map
    /// built from the shell extension of interface data.
    pub fn adjoint_by_formula(&self, interface_mass: &DVector<f64>, boundary_mass: &DVector<f64>) -> Result<DMatrix<f64>> {
        let (nb, ni) = (self.split.boundary_len(), self.split.interface_len());
        let chol = self
            .transmission_form()
            .cholesky()
            .ok_or_else(|| LabError::Conditioning("transmission form is not positive definite".into()))?;
        let mut rhs = DMatrix::from_diagonal(interface_mass);
        chol.solve_mut(&mut rhs);
        let mut sbi = DMatrix::zeros(nb, ni);
        for j in 0..ni {
            let mut e = vec![0.0; ni];
            e[j] = 1.0;
            let w = self.split.shell_from_interface(&e)?;
            let c = self.split.shell_boundary_covector(&w)?;
            sbi.set_column(j, &DVector::from_vec(c));
        }
        let mut a = -(sbi * rhs);
        for i in 0..nb {
            a.row_mut(i).scale_mut(1.0 / boundary_mass[i]);
        }
        Ok(a)
    }
}

/// Difference formula for metrics `g` and `h` on the same split mesh:
/// `u^T (S_g - S_h) v = U_g^T (K_shell,g - K_shell,h) V_h + u'^T (S_core,g - S_core,h) v''`.
#[derive(Debug)]
pub struct PairOperators {
    pub g: SplitOperators,
    pub h: SplitOperators,
}

impl PairOperators {
    pub fn new(mesh: &TriMesh, g: &MetricField, h: &MetricField) -> Result<Self> {
        check_tags(mesh)?;
        Ok(Self { g: SplitOperators::new(mesh, g)?, h: SplitOperators::new(mesh, h)? })
    }

    pub fn difference_residual(&self, u: &[f64], v: &[f64]) -> Result<IdentityReport> {
        let (sg, sh) = (&self.g.split, &self.h.split);
        let lhs_g = self.g.full_dn.pairing(u, v)?;
        let lhs_h = self.h.full_dn.pairing(u, v)?;
        let ug = sg.extend(u)?;
        let vh = sh.extend(v)?;
        let ug_shell: Vec<f64> = sg.shell_nodes.iter().map(|&p| ug[p]).collect();
        let vh_shell: Vec<f64> = sg.shell_nodes.iter().map(|&p| vh[p]).collect();
        let shell_g = dot(&ug_shell, &sg.shell.matrix().mul_vec(&vh_shell));
        let shell_h = dot(&ug_shell, &sh.shell.matrix().mul_vec(&vh_shell));
        let up = sg.interface_trace(&ug);
        let vpp = sh.interface_trace(&vh);
        let core_g = self.g.core_dn.pairing(&up, &vpp)?;
        let core_h = self.h.core_dn.pairing(&up, &vpp)?;
        let lhs = lhs_g - lhs_h;
        let rhs = (shell_g - shell_h) + (core_g - core_h);
        let scale = [lhs_g, lhs_h, shell_g, shell_h, core_g, core_h].iter().map(|x| x.abs()).sum::<f64>();
        Ok(IdentityReport::new("difference_formula", (lhs - rhs).abs(), scale, self.g.resolution, EXACT_TOLERANCE))
    }

    /// `E_h(v)|_interface` against `(S_shell + S_core,h)^{-1} (S_shell + S_core,g) E_g(v)|_interface`.
    pub fn comparison_residual(&self, v: &[f64]) -> Result<IdentityReport> {
        let direct = self.h.split.restrict_to_interface(v)?;
        let vg = self.g.split.restrict_to_interface(v)?;
        let rhs = self.g.transmission_form() * DVector::from_vec(vg);
        let chol = self
            .h
            .transmission_form()
            .cholesky()
            .ok_or_else(|| LabError::Conditioning("shell plus perturbed core form is not positive definite".into()))?;
        let formula = chol.solve(&rhs);
        let abs = max_abs(&direct.iter().zip(formula.iter()).map(|(a, b)| a - b).collect::<Vec<_>>());
        let scale = max_abs(&direct).max(formula.amax());
        Ok(IdentityReport::new("comparison_map", abs, scale, self.g.resolution, EXACT_TOLERANCE))
    }
}

fn check_tags(mesh: &TriMesh) -> Result<()> {
    let has = |r: Region| mesh.regions().contains(&r);
    if !has(Region::Exterior) || !(has(Region::Annulus) || has(Region::Inclusion)) {
        return Err(LabError::Domain("mesh must carry shell and core region tags".into()));
    }
    Ok(())
}

/// Relative residual of the difference formula for one pair of boundary functions.
pub fn difference_formula_residual(mesh: &TriMesh, g: &MetricField, h: &MetricField, u: &[f64], v: &[f64]) -> Result<IdentityReport> {
    PairOperators::new(mesh, g, h)?.difference_residual(u, v)
}

/// Relative residual of the transmission identity for one boundary function.
pub fn transmission_residual(mesh: &TriMesh, g: &MetricField, u: &[f64]) -> Result<IdentityReport> {
    SplitOperators::new(mesh, g)?.transmission_residual(u)
}

/// Relative residual of the comparison map between extensions for `g` and `h`.
pub fn comparison_map_residual(mesh: &TriMesh, g: &MetricField, h: &MetricField, v: &[f64]) -> Result<IdentityReport> {
    PairOperators::new(mesh, g, h)?.comparison_residual(v)
}

/// Adjoint of the restriction map: mass adjoint of the assembled matrix against the
/// shell-extension formula, measured in the `L^2` operator norm.
pub fn adjoint_formula_residual(mesh: &TriMesh, g: &MetricField) -> Result<(IdentityReport, AdjointPair)> {
    let ops = SplitOperators::new(mesh, g)?;
    adjoint_residual(&ops)
}

/// Both routes to the adjoint of the restriction map.
#[derive(Debug, Clone)]
pub struct AdjointPair {
    /// `T`, from boundary to interface functions.
    pub restriction: DMatrix<f64>,
    /// `M_b^{-1} T^T M_i`.
    pub mass_adjoint: DMatrix<f64>,
    /// The shell-extension formula.
    pub formula: DMatrix<f64>,
    pub boundary: BoundaryCalculus,
    pub interface: BoundaryCalculus,
}

impl AdjointPair {
    /// `(<T f, w>_interface, <f, T* w>_boundary)` with `T*` from the formula.
    pub fn pairing(&self, f: &[f64], w: &[f64]) -> (f64, f64) {
        let tf = &self.restriction * DVector::from_column_slice(f);
        let tsw = &self.formula * DVector::from_column_slice(w);
        (self.interface.inner(tf.as_slice(), w), self.boundary.inner(f, tsw.as_slice()))
    }
}

pub fn adjoint_residual(ops: &SplitOperators) -> Result<(IdentityReport, AdjointPair)> {
    let boundary = ops.split.boundary_calculus()?;
    let interface = ops.split.interface_calculus()?;
    let t = ops.restriction_matrix()?;
    let mut mass_adjoint = t.transpose();
    for i in 0..mass_adjoint.nrows() {
        mass_adjoint.row_mut(i).scale_mut(1.0 / boundary.mass()[i]);
    }
    for j in 0..mass_adjoint.ncols() {
        mass_adjoint.column_mut(j).scale_mut(interface.mass()[j]);
    }
    let formula = ops.adjoint_by_formula(interface.mass(), boundary.mass())?;
    let diff = &mass_adjoint - &formula;
    let full = |c: &BoundaryCalculus| 0..c.len();
    let abs = operator_norm_between(&diff, &interface, full(&interface), 0.0, &boundary, full(&boundary), 0.0)?;
    let scale = operator_norm_between(&mass_adjoint, &interface, full(&interface), 0.0, &boundary, full(&boundary), 0.0)?;
    let report = IdentityReport::new("adjoint_formula", abs, scale, ops.resolution, EXACT_TOLERANCE);
    Ok((report, AdjointPair { restriction: t, mass_adjoint, formula, boundary, interface }))
}

/// Reference geometry for the identity suite: unit disk, inclusion at `(0.15, 0.1)`
/// of radius `0.25`, default collar.
pub fn reference_inclusion_mesh(resolution: usize) -> Result<TriMesh> {
    DiskBuilder::new(1.0, resolution).inclusion([0.15, 0.1], 0.25).build()
}

/// Euclidean background and an anisotropic perturbation on the inclusion.
pub fn reference_metrics(mesh: &TriMesh, inclusion: Sym2) -> Result<(MetricField, MetricField)> {
    let g = MetricField::euclidean(mesh);
    let h = MetricField::constant(mesh.triangle_count(), inclusion)?;
    Ok((g.clone(), composite_metric(&g, &h, mesh)?.field))
}

/// Runs the four exact identities on `trials` random inputs at one resolution.
pub fn verify_identities(resolution: usize, trials: usize, seed: u64, tol: f64) -> Result<Vec<IdentityReport>> {
    let mesh = reference_inclusion_mesh(resolution)?;
    let (g, h) = reference_metrics(&mesh, Sym2::diag(2.0, 1.0))?;
    verify_identities_on(&mesh, &g, &h, trials, seed, tol)
}

/// Runs the four exact identities for the pair `(g, h)` on a mesh with an inclusion.
pub fn verify_identities_on(
    mesh: &TriMesh,
    g: &MetricField,
    h: &MetricField,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<Vec<IdentityReport>> {
    let pair = PairOperators::new(mesh, g, h)?;
    let n = pair.g.split.boundary_len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut random = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let mut diff = Vec::new();
    let mut trans = Vec::new();
    let mut comp = Vec::new();
    for _ in 0..trials {
        let (u, v) = (random(n), random(n));
        diff.push(pair.difference_residual(&u, &v)?);
        trans.push(pair.g.transmission_residual(&u)?);
        comp.push(pair.comparison_residual(&v)?);
    }
    let (adj, _) = adjoint_residual(&pair.g)?;
    let mut out: Vec<IdentityReport> = [diff, trans, comp].iter().filter_map(|r| IdentityReport::worst(r)).collect();
    out.push(adj);
    for r in &mut out {
        r.pass = r.rel <= tol;
    }
    Ok(out)
}

/// Number of Fourier pairs kept by the band-limited boundedness checks.
pub const BAND_PAIRS: usize = 8;

pub(crate) fn band(calc: &BoundaryCalculus) -> std::ops::Range<usize> {
    0..(2 * BAND_PAIRS + 1).min(calc.len())
}

/// Geometry on which the remainder of the DN symbol is measured.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SymbolGeometry {
    /// Euclidean unit disk.
    Disk,
    /// Euclidean annulus `e^{-length} < r < 1` with a free inner loop: conformally a
    /// flat cylinder of the given length with an insulated far end.
    Cylinder { length: f64 },
}

fn symbol_system(geometry: SymbolGeometry, resolution: usize) -> Result<(StiffnessSystem, LoopCondition)> {
    match geometry {
        SymbolGeometry::Disk => {
            let m = build_disk(1.0, resolution)?;
            Ok((StiffnessSystem::assemble(&m, &MetricField::euclidean(&m))?, LoopCondition::Zero))
        }
        SymbolGeometry::Cylinder { length } => {
            let m = build_annulus((-length).exp(), 1.0, resolution)?;
            Ok((StiffnessSystem::assemble(&m, &MetricField::euclidean(&m))?, LoopCondition::Free))
        }
    }
}

/// Band-limited `H^s` norm of `Lambda - Laplacian^{1/2}` at one resolution.
pub fn symbol_remainder_norm(geometry: SymbolGeometry, resolution: usize, s: f64) -> Result<f64> {
    let (sys, others) = symbol_system(geometry, resolution)?;
    let dn = sys.dn_map(&[0], others, crate::dn::DnKind::Full)?;
    let calc = sys.loop_calculus(0)?;
    let r = dn.operator() - calc.frac_power_matrix(0.5, PowerBase::Laplacian)?;
    calc.operator_norm_band(&r, s, s, band(&calc))
}

/// Remainder norm along a refinement ladder with its stabilisation verdict.
pub fn symbol_remainder_check(geometry: SymbolGeometry, s: f64, resolutions: &[usize]) -> Result<BoundednessReport> {
    if !(-1.0..=1.0).contains(&s) {
        return Err(LabError::Domain(format!("symbol check exponent {s} outside [-1, 1]")));
    }
    let values = resolutions.iter().map(|&n| symbol_remainder_norm(geometry, n, s)).collect::<Result<Vec<_>>>()?;
    Ok(BoundednessReport::from_ladder("symbol_remainder", LadderVerdict::Bounded, resolutions.to_vec(), values, STABILITY_RATIO))
}

/// Derivative along the loop: `X f = a * df/ds` with central differences in arclength.
pub fn tangential_derivative(calc: &BoundaryCalculus, field: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(calc.len(), field.len())?;
    if calc.loop_offsets().len() != 1 {
        return Err(LabError::Domain("tangential derivative is defined on a single loop".into()));
    }
    let n = calc.len();
    let l = calc.edge_lengths();
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
        let span = l[im] + l[i];
        d[(i, ip)] += field[i] / span;
        d[(i, im)] -= field[i] / span;
    }
    Ok(d)
}

/// `[Lambda, eta]` in `H^s -> H^s` and `[X, Lambda]` in `H^s -> H^{s-1}`, band-limited.
pub fn commutator_norms_at(dn: &DnOperator, calc: &BoundaryCalculus, eta: &[f64], drift: &[f64], s: f64) -> Result<(f64, f64)> {
    check_dim(dn.len(), eta.len())?;
    let a = dn.operator();
    let e = DMatrix::from_diagonal(&DVector::from_column_slice(eta));
    let x = tangential_derivative(calc, drift)?;
    let c1 = &a * &e - &e * &a;
    let c2 = &x * &a - &a * &x;
    let modes = band(calc);
    Ok((calc.operator_norm_band(&c1, s, s, modes.clone())?, calc.operator_norm_band(&c2, s, s - 1.0, modes)?))
}

/// Commutator norms on the Euclidean unit disk along a refinement ladder, with
/// multiplier and drift given as functions of the polar angle.
pub fn commutator_norms(
    eta: impl Fn(f64) -> f64,
    drift: impl Fn(f64) -> f64,
    s: f64,
    resolutions: &[usize],
) -> Result<(BoundednessReport, BoundednessReport)> {
    let mut multiplier = Vec::new();
    let mut derivation = Vec::new();
    for &n in resolutions {
        let m = build_disk(1.0, n)?;
        let sys = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m))?;
        let dn = sys.boundary_dn()?;
        let calc = sys.loop_calculus(0)?;
        let th: Vec<f64> = m.loop_points(0)?.iter().map(|p| p[1].atan2(p[0])).collect();
        let e: Vec<f64> = th.iter().map(|&t| eta(t)).collect();
        let x: Vec<f64> = th.iter().map(|&t| drift(t)).collect();
        let (a, b) = commutator_norms_at(&dn, &calc, &e, &x, s)?;
        multiplier.push(a);
        derivation.push(b);
    }
    Ok((
        BoundednessReport::from_ladder("commutator_multiplier", LadderVerdict::Converged, resolutions.to_vec(), multiplier, STABILITY_RATIO),
        BoundednessReport::from_ladder("commutator_derivation", LadderVerdict::Converged, resolutions.to_vec(), derivation, STABILITY_RATIO),
    ))
}

/// Kernel and coercivity data of one DN map.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralGap {
    pub resolution: usize,
    /// Eigenvalues below `kernel_tol` times the largest one.
    pub kernel_dim: usize,
    pub gap: f64,
    /// Smallest `C` with `||f||_{1/2} <= C (||f||_{-1/2} + ||Lambda f||_{-1/2})` over the sample.
    pub constant: f64,
}

/// Gap and fitted coercivity constant from DN eigenvectors and `random` random vectors.
pub fn spectral_gap_at(dn: &DnOperator, calc: &BoundaryCalculus, random: usize, seed: u64) -> Result<SpectralGap> {
    let ev = dn.eigenvalues();
    let top = ev.last().copied().unwrap_or(0.0);
    let kernel_dim = ev.iter().filter(|&&l| l.abs() <= 1e-9 * top.max(1.0)).count();
    let gap = ev.get(kernel_dim).copied().unwrap_or(0.0);
    let ratio = |f: &[f64]| -> Result<f64> {
        let lf = dn.apply(f)?;
        Ok(calc.hs_norm(f, 0.5)? / (calc.hs_norm(f, -0.5)? + calc.hs_norm(&lf, -0.5)?))
    };
    let mut constant: f64 = 0.0;
    // eigenvectors of M^{-1} S via the symmetric form
    let s = dn.mass.map(|m| 1.0 / m.sqrt());
    let mut a = dn.form.clone();
    for i in 0..dn.len() {
        for j in 0..dn.len() {
            a[(i, j)] *= s[i] * s[j];
        }
    }
    crate::linalg::symmetrize(&mut a);
    let eig = a.symmetric_eigen();
    for k in 0..dn.len() {
        let v: Vec<f64> = eig.eigenvectors.column(k).iter().zip(s.iter()).map(|(x, w)| x * w).collect();
        constant = constant.max(ratio(&v)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random {
        let f: Vec<f64> = (0..dn.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        constant = constant.max(ratio(&f)?);
    }
    Ok(SpectralGap { resolution: dn.len(), kernel_dim, gap, constant })
}

/// Spectral gap on the Euclidean unit disk along a refinement ladder.
pub fn spectral_gap_check(resolutions: &[usize], seed: u64) -> Result<(Vec<SpectralGap>, BoundednessReport)> {
    let mut gaps = Vec::new();
    for &n in resolutions {
        let m = build_disk(1.0, n)?;
        let sys = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m))?;
        gaps.push(spectral_gap_at(&sys.boundary_dn()?, &sys.loop_calculus(0)?, 50, seed)?);
    }
    let constants = gaps.iter().map(|g| g.constant).collect();
    let report = BoundednessReport::from_ladder("spectral_gap_constant", LadderVerdict::Converged, resolutions.to_vec(), constants, STABILITY_RATIO);
    Ok((gaps, report))
}

/// Mesh of an annulus, exposed for callers that want the symbol check on their own ladder.
pub fn cylinder_mesh(length: f64, resolution: usize) -> Result<TriMesh> {
    build_annulus((-length).exp(), 1.0, resolution)
}
