//! Layer stripping along a shrinking family: DN maps pulled back to the fixed
//! outer loop, the transport law of a fixed harmonic function, the time
//! derivative of the DN map, and Rayleigh quotient traces of the generic
//! evolution `df/dt = -B f + X f + S f`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dn::{DnOperator, LoopCondition, StiffnessSystem};
use crate::error::{check_dim, LabError, Result};
use crate::geometry::{LevelFields, MetricField, NestedFamily, PointLocator, TriMesh};
use crate::identities::{band, IdentityReport};
use crate::linalg::{par_map, symmetrize};
use crate::sobolev::BoundaryCalculus;

/// Discretisation of the tangential drift `a d/d theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftScheme {
    /// One-sided difference taken from the side the transport comes from.
    Upwind,
    Central,
}

/// Operators of one level, all acting on nodal functions of the fixed outer loop.
#[derive(Debug, Clone)]
pub struct EvolutionOperators {
    pub t: f64,
    pub fields: LevelFields,
    pub dn: DnOperator,
    /// Calculus of the morphed loop; its mass is the level inner product.
    pub calculus: BoundaryCalculus,
    /// Pulled-back DN map `M_t^{-1} S_t`.
    pub a: DMatrix<f64>,
    /// `eta^{1/2} A eta^{1/2}`.
    pub b: DMatrix<f64>,
    /// `eta^{1/2} [A, eta^{1/2}]`, so that `S - B = -eta A`.
    pub s: DMatrix<f64>,
    /// Drift matrix `a d/d theta`.
    pub drift: DMatrix<f64>,
}

impl EvolutionOperators {
    pub fn len(&self) -> usize {
        self.a.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mass(&self) -> &DVector<f64> {
        self.calculus.mass()
    }

    /// Level inner product `f^T M_t g`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.calculus.inner(f, g)
    }

    /// `max |M B - (M B)^T| / max |M B|`.
    pub fn b_asymmetry(&self) -> f64 {
        let mb = weighted(self.mass(), &self.b);
        (&mb - mb.transpose()).amax() / mb.amax().max(1e-300)
    }

    /// Eigenvalues of `B`, ascending.
    pub fn b_eigenvalues(&self) -> Vec<f64> {
        let m = self.mass();
        let n = self.len();
        let mut sym = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sym[(i, j)] = m[i].sqrt() * self.b[(i, j)] / m[j].sqrt();
            }
        }
        symmetrize(&mut sym);
        let mut e: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    /// Generator `-B + X + S` of the generic evolution.
    pub fn generator(&self) -> DMatrix<f64> {
        &self.drift + &self.s - &self.b
    }

    /// Range of `<B e, e>_t / ||e||_{1/2}^2` over the nonconstant eigenmodes `1..modes`
    /// of the level Laplacian.
    pub fn equivalence_band(&self, modes: usize) -> (f64, f64) {
        let e = self.calculus.eigenvectors();
        let ev = self.calculus.eigenvalues();
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for i in self.calculus.zero_modes()..modes.min(self.len()) {
            let v: Vec<f64> = e.column(i).iter().copied().collect();
            let bv = mat_vec(&self.b, &v);
            let r = self.inner(&bv, &v) / (1.0 + ev[i]).sqrt();
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }
}

fn weighted(mass: &DVector<f64>, op: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = op.clone();
    for i in 0..m.nrows() {
        m.row_mut(i).scale_mut(mass[i]);
    }
    m
}

fn mat_vec(op: &DMatrix<f64>, f: &[f64]) -> Vec<f64> {
    (op * DVector::from_column_slice(f)).as_slice().to_vec()
}

/// Spacing of consecutive loop angles, wrapped into `(0, 2 pi)`.
fn angle_steps(theta: &[f64]) -> Result<Vec<f64>> {
    let n = theta.len();
    let steps: Vec<f64> = (0..n).map(|i| (theta[(i + 1) % n] - theta[i]).rem_euclid(2.0 * PI)).collect();
    if steps.iter().any(|&d| !(d > 0.0 && d < PI)) {
        return Err(LabError::Structure("outer loop angles are not increasing counterclockwise".into()));
    }
    Ok(steps)
}

/// Matrix of `a d/d theta` on a closed loop with node angles `theta`.
pub fn drift_matrix(theta: &[f64], coefficient: &[f64], scheme: DriftScheme) -> Result<DMatrix<f64>> {
    check_dim(theta.len(), coefficient.len())?;
    let n = theta.len();
    let d = angle_steps(theta)?;
    let mut x = DMatrix::zeros(n, n);
    for i in 0..n {
        let (ip, im) = ((i + 1) % n, (i + n - 1) % n);
        let a = coefficient[i];
        match scheme {
            DriftScheme::Central => {
                let span = d[im] + d[i];
                x[(i, ip)] += a / span;
                x[(i, im)] -= a / span;
            }
            DriftScheme::Upwind if a >= 0.0 => {
                x[(i, ip)] += a / d[i];
                x[(i, i)] -= a / d[i];
            }
            DriftScheme::Upwind => {
                x[(i, i)] += a / d[im];
                x[(i, im)] -= a / d[im];
            }
        }
    }
    Ok(x)
}

fn level_system(family: &NestedFamily, mesh: &TriMesh) -> Result<StiffnessSystem> {
    let metric = MetricField::constant(mesh.triangle_count(), family.metric)?;
    StiffnessSystem::assemble(mesh, &metric)
}

fn assemble_level(family: &NestedFamily, mesh: &TriMesh, fields: LevelFields, scheme: DriftScheme) -> Result<EvolutionOperators> {
    let min_eta = fields.eta.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_eta > 0.0) {
        return Err(LabError::Transversality(format!("normal speed {min_eta:e} at t = {}", fields.t)));
    }
    let system = level_system(family, mesh)?;
    let dn = system.boundary_dn()?;
    let calculus = system.loop_calculus(0)?;
    let a = dn.operator();
    let root = DMatrix::from_diagonal(&DVector::from_iterator(fields.eta.len(), fields.eta.iter().map(|e| e.sqrt())));
    let b = &root * &a * &root;
    let s = &root * (&a * &root - &root * &a);
    let drift = drift_matrix(&family.theta, &fields.drift, scheme)?;
    Ok(EvolutionOperators { t: fields.t, fields, dn, calculus, a, b, s, drift })
}

/// Operators of level `level`, with the drift upwinded.
pub fn pullback_dn(family: &NestedFamily, level: usize) -> Result<EvolutionOperators> {
    pullback_dn_with(family, level, DriftScheme::Upwind)
}

pub fn pullback_dn_with(family: &NestedFamily, level: usize, scheme: DriftScheme) -> Result<EvolutionOperators> {
    let mesh = family
        .levels
        .get(level)
        .ok_or_else(|| LabError::Domain(format!("level {level} out of range 0..{}", family.level_count())))?;
    assemble_level(family, mesh, family.fields[level].clone(), scheme)
}

/// Operators of every level, assembled in parallel.
pub fn family_operators(family: &NestedFamily, scheme: DriftScheme) -> Result<Vec<EvolutionOperators>> {
    let levels: Vec<usize> = (0..family.level_count()).collect();
    par_map(&levels, |&k| pullback_dn_with(family, k, scheme)).into_iter().collect()
}

/// Pulled-back DN map of the morph at an arbitrary time.
fn dn_at(family: &NestedFamily, t: f64) -> Result<DMatrix<f64>> {
    let (mesh, _) = family.level_at(t)?;
    Ok(level_system(family, &mesh)?.boundary_dn()?.operator())
}

/// Residual of the transport law for `u_t = E(f) o phi_t` at levels `1..`.
#[derive(Debug, Clone, Serialize)]
pub struct TautologicalCurve {
    pub times: Vec<f64>,
    /// `L^2_t` norm of `(u_k - u_{k-1}) / delta + eta A u_k - X u_k`.
    pub residuals: Vec<f64>,
    /// Residual divided by `||u_k||_{L^2_t}`.
    pub relative: Vec<f64>,
}

/// Samples the harmonic extension of `f` on the base mesh at the morphed
/// boundary nodes and compares a backward difference in `t` with
/// `-eta A u + X u` at every level after the first.
pub fn tautological_residual(family: &NestedFamily, f: &[f64]) -> Result<TautologicalCurve> {
    if family.level_count() < 3 {
        return Err(LabError::Domain("the transport check needs at least 3 levels".into()));
    }
    let base = &family.levels[0];
    let outer = base.loop_nodes(0)?.to_vec();
    check_dim(outer.len(), f.len())?;
    let system = level_system(family, base)?;
    let ext = system.extend_from_loop(0, f, LoopCondition::Zero)?;
    let locator = PointLocator::new(base);
    let ops = family_operators(family, DriftScheme::Upwind)?;
    let samples: Vec<Vec<f64>> = family
        .levels
        .iter()
        .map(|mesh| outer.iter().map(|&v| locator.interpolate(&ext.values, mesh.nodes()[v])).collect())
        .collect::<Result<_>>()?;
    let delta = family.step();
    let mut curve = TautologicalCurve { times: Vec::new(), residuals: Vec::new(), relative: Vec::new() };
    for k in 1..family.level_count() {
        let op = &ops[k];
        let u = &samples[k];
        let au = mat_vec(&op.a, u);
        let xu = mat_vec(&op.drift, u);
        let r: Vec<f64> = (0..u.len())
            .map(|i| (u[i] - samples[k - 1][i]) / delta + op.fields.eta[i] * au[i] - xu[i])
            .collect();
        let norm = op.inner(&r, &r).sqrt();
        let scale = op.inner(u, u).sqrt();
        curve.times.push(family.times[k]);
        curve.residuals.push(norm);
        curve.relative.push(if scale > 0.0 { norm / scale } else { norm });
    }
    Ok(curve)
}

/// Right side of the DN time derivative at one level:
/// `A eta A + d/ds eta d/ds - [A, X] + (div X - gamma) A`, with `X` central.
pub fn derivative_formula(ops: &EvolutionOperators, family: &NestedFamily) -> Result<DMatrix<f64>> {
    let x = drift_matrix(&family.theta, &ops.fields.drift, DriftScheme::Central)?;
    let n = ops.len();
    let eta = DMatrix::from_diagonal(&DVector::from_column_slice(&ops.fields.eta));
    let mut rhs = &ops.a * &eta * &ops.a - (&ops.a * &x - &x * &ops.a);
    for i in 0..n {
        let c = ops.fields.div_drift[i] - ops.fields.gamma[i];
        for j in 0..n {
            rhs[(i, j)] += c * ops.a[(i, j)];
        }
    }
    // d/ds eta d/ds = -M^{-1} L_eta with edge weights eta_e / l_e
    let l = ops.calculus.edge_lengths();
    let m = ops.mass();
    for i in 0..n {
        let j = (i + 1) % n;
        let w = 0.5 * (ops.fields.eta[i] + ops.fields.eta[j]) / l[i];
        rhs[(i, i)] -= w / m[i];
        rhs[(i, j)] += w / m[i];
        rhs[(j, j)] -= w / m[j];
        rhs[(j, i)] += w / m[j];
    }
    Ok(rhs)
}

/// Leading part `eta (A^2 - Delta_t)` of the derivative formula.
pub fn derivative_leading_part(ops: &EvolutionOperators) -> DMatrix<f64> {
    let mut p = &ops.a * &ops.a - ops.calculus.laplacian_operator();
    for i in 0..ops.len() {
        p.row_mut(i).scale_mut(ops.fields.eta[i]);
    }
    p
}

/// Mode-pair Rayleigh quotients `<Q e, e>_t` averaged over the cosine and sine
/// modes of frequency `frequency`.
#[derive(Debug, Clone, Serialize)]
pub struct ModeComparison {
    pub frequency: usize,
    pub finite_difference: f64,
    pub formula: f64,
    pub leading: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeCheck {
    pub report: IdentityReport,
    pub modes: Vec<ModeComparison>,
}

fn mode_pair_quotient(ops: &EvolutionOperators, q: &DMatrix<f64>, frequency: usize) -> f64 {
    let e = ops.calculus.eigenvectors();
    let cols = [2 * frequency - 1, 2 * frequency];
    let mut acc = 0.0;
    for &c in &cols {
        let v: Vec<f64> = e.column(c).iter().copied().collect();
        acc += ops.inner(&mat_vec(q, &v), &v);
    }
    acc / cols.len() as f64
}

/// Band-limited `H^1 -> H^{-1}` norm of the difference between the central
/// difference `(A_{k+1} - A_{k-1}) / 2 delta` and the derivative formula at level `k`,
/// plus mode-wise comparison over the band.
pub fn dn_time_derivative_residual(family: &NestedFamily, level: usize, tol: f64) -> Result<DerivativeCheck> {
    if level == 0 || level + 1 >= family.level_count() {
        return Err(LabError::Domain(format!("level {level} has no central difference")));
    }
    let ops = pullback_dn_with(family, level, DriftScheme::Central)?;
    let neighbours = [level - 1, level + 1];
    let side: Vec<DMatrix<f64>> = par_map(&neighbours, |&k| -> Result<DMatrix<f64>> {
        Ok(level_system(family, &family.levels[k])?.boundary_dn()?.operator())
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let delta = family.times[level + 1] - family.times[level - 1];
    let fd = (&side[1] - &side[0]) / delta;
    compare_derivative(family, &ops, &fd, tol)
}

fn compare_derivative(family: &NestedFamily, ops: &EvolutionOperators, fd: &DMatrix<f64>, tol: f64) -> Result<DerivativeCheck> {
    let rhs = derivative_formula(ops, family)?;
    let modes = band(&ops.calculus);
    let abs = ops.calculus.operator_norm_band(&(fd - &rhs), 1.0, -1.0, modes.clone())?;
    let scale = ops.calculus.operator_norm_band(fd, 1.0, -1.0, modes.clone())?;
    let leading = derivative_leading_part(ops);
    let pairs = (modes.end - 1) / 2;
    let comparisons = (1..=pairs)
        .map(|k| {
            let a = mode_pair_quotient(ops, fd, k);
            let b = mode_pair_quotient(ops, &rhs, k);
            ModeComparison {
                frequency: k,
                finite_difference: a,
                formula: b,
                leading: mode_pair_quotient(ops, &leading, k),
                rel: (a - b).abs() / a.abs().max(1e-300),
            }
        })
        .collect();
    let report = IdentityReport::new("dn_time_derivative", abs, scale, ops.len(), tol);
    Ok(DerivativeCheck { report, modes: comparisons })
}

/// Derivative residual at time `t` for each central-difference step in `deltas`.
pub fn derivative_delta_sweep(family: &NestedFamily, t: f64, deltas: &[f64]) -> Result<Vec<(f64, f64)>> {
    let (mesh, fields) = family.level_at(t)?;
    let ops = assemble_level(family, &mesh, fields, DriftScheme::Central)?;
    let rhs = derivative_formula(&ops, family)?;
    let modes = band(&ops.calculus);
    par_map(deltas, |&d| -> Result<(f64, f64)> {
        if !(d > 0.0 && t - d >= 0.0) {
            return Err(LabError::Domain(format!("step {d} leaves the family at t = {t}")));
        }
        let fd = (dn_at(family, t + d)? - dn_at(family, t - d)?) / (2.0 * d);
        Ok((d, ops.calculus.operator_norm_band(&(fd - &rhs), 1.0, -1.0, modes.clone())?))
    })
    .into_iter()
    .collect()
}

/// Whether a residual sequence for halving steps keeps dropping by `factor`
/// until it is within `floor_margin` of its final value.
pub fn decreases_until_floor(residuals: &[f64], factor: f64, floor_margin: f64) -> bool {
    let Some(&floor) = residuals.last() else { return false };
    let mut dropped = false;
    for w in residuals.windows(2) {
        if w[0] <= floor_margin * floor {
            break;
        }
        if w[0] / w[1] < factor {
            return false;
        }
        dropped = true;
    }
    dropped
}

/// Time stepping of the generic evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Stepping {
    /// `(I + delta B_k) f_{k+1} = f_k + delta (X_k + S_k) f_k`.
    Implicit,
    /// `f_{k+1} = f_k + delta (-B_k + X_k + S_k) f_k`.
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    pub stepping: Stepping,
    /// Include `X + S`; without it the evolution is `df/dt = -B f`.
    pub transport: bool,
    /// Use the level-0 operators throughout.
    pub frozen: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { stepping: Stepping::Implicit, transport: true, frozen: false }
    }
}

/// States `f_0, ..., f_K` of the generic evolution over the levels of `ops`.
pub fn evolve(ops: &[EvolutionOperators], times: &[f64], f: &[f64], options: TraceOptions) -> Result<Vec<Vec<f64>>> {
    check_dim(ops.len(), times.len())?;
    if ops.is_empty() {
        return Err(LabError::Domain("evolution needs at least one level".into()));
    }
    check_dim(ops[0].len(), f.len())?;
    let mut states = vec![f.to_vec()];
    let n = f.len();
    for k in 0..times.len() - 1 {
        let op = if options.frozen { &ops[0] } else { &ops[k] };
        let delta = times[k + 1] - times[k];
        let cur = DVector::from_column_slice(&states[k]);
        let mut rhs = cur.clone();
        if options.transport {
            rhs += (&op.drift + &op.s) * &cur * delta;
        }
        let next = match options.stepping {
            Stepping::Implicit => {
                let m = DMatrix::identity(n, n) + &op.b * delta;
                m.lu().solve(&rhs).ok_or_else(|| LabError::Solver("implicit step matrix is singular".into()))?
            }
            Stepping::Explicit => {
                let top = op.b_eigenvalues().last().copied().unwrap_or(0.0);
                if delta * top > 2.0 {
                    return Err(LabError::StepSize(format!(
                        "explicit step {delta:e} exceeds the stability limit; use delta <= {:e}",
                        2.0 / top
                    )));
                }
                rhs - &op.b * &cur * delta
            }
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(LabError::StepSize(format!("evolution blew up at step {k}; reduce delta below {delta:e}")));
        }
        states.push(next.as_slice().to_vec());
    }
    Ok(states)
}

/// Frequency content of an evolving trace.
#[derive(Debug, Clone, Serialize)]
pub struct RayleighTrace {
    pub times: Vec<f64>,
    /// `<B f, B f>_t / <f, f>_t`.
    pub lambda: Vec<f64>,
    pub mass_norm: Vec<f64>,
    /// `<B f, f>_t`.
    pub energy: Vec<f64>,
    pub norm_half: Vec<f64>,
    pub norm_one: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub bound: Vec<f64>,
}

impl RayleighTrace {
    /// Columns `t, lambda, norm_half, norm_one, bound_value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lambda,norm_half,norm_one,bound_value\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.lambda[i], self.norm_half[i], self.norm_one[i], self.bound[i]
            ));
        }
        out
    }

    /// Whether every recorded quadratic form is nonnegative.
    pub fn forms_nonnegative(&self) -> bool {
        self.lambda.iter().chain(&self.mass_norm).chain(&self.energy).all(|&v| v >= -1e-12 * (1.0 + v.abs()))
    }
}

/// `e^{c1 t} (lambda0 + c2 / c1) - c2 / c1`, read as `lambda0 + c2 t` when `c1 = 0`.
pub fn gronwall_bound(t: f64, lambda0: f64, c1: f64, c2: f64) -> f64 {
    if c1 == 0.0 {
        lambda0 + c2 * t
    } else {
        let e = (c1 * t).exp();
        e * (lambda0 + c2 / c1) - c2 / c1
    }
}

/// Smallest `c2 >= 0` making the bound hold on a trace for a given `c1`.
fn min_c2(times: &[f64], lambda: &[f64], c1: f64) -> f64 {
    let mut c2: f64 = 0.0;
    for (&t, &l) in times.iter().zip(lambda).skip(1) {
        let growth = if c1 == 0.0 { t } else { ((c1 * t).exp() - 1.0) / c1 };
        let free = if c1 == 0.0 { lambda[0] } else { (c1 * t).exp() * lambda[0] };
        c2 = c2.max((l - free) / growth);
    }
    c2
}

/// Jointly fitted `(c1, c2)` valid on all traces, chosen to minimise the
/// summed gap between the bound and the traces.
pub fn gronwall_fit(traces: &[(&[f64], &[f64])]) -> Result<(f64, f64)> {
    if traces.is_empty() {
        return Err(LabError::Fit("no traces to fit".into()));
    }
    let mut c1_max: f64 = 0.0;
    for (times, lambda) in traces {
        check_dim(times.len(), lambda.len())?;
        if lambda[0] <= 0.0 {
            return Err(LabError::Fit("initial Rayleigh quotient must be positive".into()));
        }
        for (&t, &l) in times.iter().zip(lambda.iter()).skip(1) {
            c1_max = c1_max.max((l / lambda[0]).ln() / t);
        }
    }
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=200 {
        let c1 = c1_max * i as f64 / 200.0;
        let c2 = traces.iter().map(|(t, l)| min_c2(t, l, c1)).fold(0.0, f64::max);
        let gap: f64 = traces
            .iter()
            .flat_map(|(t, l)| t.iter().zip(l.iter()).map(move |(&ti, &li)| gronwall_bound(ti, l[0], c1, c2) - li))
            .sum();
        if gap < best.0 {
            best = (gap, c1, c2);
        }
    }
    if !(best.1.is_finite() && best.2.is_finite()) {
        return Err(LabError::Fit("Groenwall constants are not finite".into()));
    }
    Ok((best.1, best.2))
}

/// Records the Rayleigh quotient of `f` evolved over precomputed level operators.
pub fn rayleigh_trace_with(ops: &[EvolutionOperators], times: &[f64], f: &[f64], options: TraceOptions) -> Result<RayleighTrace> {
    if f.iter().all(|&v| v == 0.0) {
        return Err(LabError::Domain("the Rayleigh trace needs a nonzero initial function".into()));
    }
    let states = evolve(ops, times, f, options)?;
    let mut trace = RayleighTrace {
        times: times.to_vec(),
        lambda: Vec::new(),
        mass_norm: Vec::new(),
        energy: Vec::new(),
        norm_half: Vec::new(),
        norm_one: Vec::new(),
        c1: 0.0,
        c2: 0.0,
        bound: Vec::new(),
    };
    for (k, u) in states.iter().enumerate() {
        let op = if options.frozen { &ops[0] } else { &ops[k] };
        let bu = mat_vec(&op.b, u);
        let mass = op.inner(u, u);
        trace.lambda.push(op.inner(&bu, &bu) / mass);
        trace.mass_norm.push(mass);
        trace.energy.push(op.inner(&bu, u));
        trace.norm_half.push(op.calculus.hs_norm(u, 0.5)?);
        trace.norm_one.push(op.calculus.hs_norm(u, 1.0)?);
    }
    let (c1, c2) = gronwall_fit(&[(&trace.times, &trace.lambda)])?;
    trace.bound = trace.times.iter().map(|&t| gronwall_bound(t, trace.lambda[0], c1, c2)).collect();
    trace.c1 = c1;
    trace.c2 = c2;
    Ok(trace)
}

/// Rayleigh trace of `f` along the family.
pub fn rayleigh_trace(family: &NestedFamily, f: &[f64], options: TraceOptions) -> Result<RayleighTrace> {
    let ops = family_operators(family, DriftScheme::Upwind)?;
    rayleigh_trace_with(&ops, &family.times, f, options)
}

/// Outcome of [`spd_rayleigh_inequality`].
#[derive(Debug, Clone, Serialize)]
pub struct SpdInequalityReport {
    pub trials: usize,
    pub violations: usize,
    /// Smallest relative slack `(lhs - rhs) / (|lhs| + |rhs|)` seen.
    pub worst_slack: f64,
}

impl SpdInequalityReport {
    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

/// Relative slack of `<B^2 f, B f> <f, f> >= <B f, B f> <B f, f>`.
pub fn rayleigh_slack(b: &DMatrix<f64>, f: &DVector<f64>) -> f64 {
    let bf = b * f;
    let b2f = b * &bf;
    let lhs = b2f.dot(&bf) * f.dot(f);
    let rhs = bf.dot(&bf) * bf.dot(f);
    let scale = lhs.abs() + rhs.abs();
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs) / scale
    }
}

/// Random positive semidefinite `B = Q diag(mu) Q^T` of dimension up to `max_dim`
/// with log-spread spectra and random rank, paired with random `f`.
pub fn spd_rayleigh_inequality(max_dim: usize, trials: usize, seed: u64) -> SpdInequalityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SpdInequalityReport { trials, violations: 0, worst_slack: f64::INFINITY };
    for _ in 0..trials {
        let dim = rng.random_range(1..=max_dim.max(1));
        let rank = rng.random_range(1..=dim);
        let g = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let q = g.qr().q();
        let mu = DVector::from_fn(dim, |i, _| if i < rank { 10f64.powf(rng.random_range(-3.0..3.0)) } else { 0.0 });
        let b = &q * DMatrix::from_diagonal(&mu) * q.transpose();
        let f = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        let slack = rayleigh_slack(&b, &f);
        report.worst_slack = report.worst_slack.min(slack);
        if slack < -1e-12 {
            report.violations += 1;
        }
    }
    report
}

/// Right side of the lower bound at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NormReading {
    /// `||f_0||_1`, as displayed.
    Literal,
    /// `||f_0||_1^2`.
    SquaredOne,
    /// `||f_0||_{1/2}^2`.
    SquaredHalf,
}

impl NormReading {
    pub const ALL: [NormReading; 3] = [NormReading::Literal, NormReading::SquaredOne, NormReading::SquaredHalf];
}

/// Constants of `||f_t||_{1/2}^2 >= e^{-(c2 lambda + c3) t} N(f_0)` for one reading.
#[derive(Debug, Clone, Serialize)]
pub struct ReadingFit {
    pub reading: NormReading,
    pub c2: f64,
    pub c3: f64,
    /// Whether `||f_0||_{1/2}^2 >= N(f_0)` for every function.
    pub anchor_holds: bool,
    /// Required rate `max_t (ln N - ln ||f_t||_{1/2}^2) / t` for each function.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundFit {
    /// `<B_0 f, B_0 f>_0 / <f, f>_0` for each function.
    pub lambdas: Vec<f64>,
    pub readings: Vec<ReadingFit>,
}

/// Smallest `(c2, c3) >= 0` with `c2 lambda_i + c3 >= rate_i` for all `i`,
/// minimising `c2 mean(lambda) + c3` over the vertices of the feasible set.
pub fn fit_rate_constants(lambdas: &[f64], rates: &[f64]) -> Result<(f64, f64)> {
    check_dim(lambdas.len(), rates.len())?;
    if lambdas.is_empty() {
        return Err(LabError::Fit("no functions to fit".into()));
    }
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let feasible = |c2: f64, c3: f64| {
        c2 >= 0.0 && c3 >= 0.0 && lambdas.iter().zip(rates).all(|(l, r)| c2 * l + c3 >= r - 1e-12 * (1.0 + r.abs()))
    };
    let mut candidates = vec![(0.0, rates.iter().copied().fold(0.0, f64::max))];
    let c2_only = lambdas
        .iter()
        .zip(rates)
        .filter(|(l, _)| **l > 0.0)
        .map(|(l, r)| r / l)
        .fold(0.0, f64::max);
    candidates.push((c2_only, 0.0));
    for i in 0..lambdas.len() {
        for j in i + 1..lambdas.len() {
            let dl = lambdas[i] - lambdas[j];
            if dl.abs() > 1e-12 * (lambdas[i].abs() + lambdas[j].abs()) {
                let c2 = (rates[i] - rates[j]) / dl;
                candidates.push((c2, rates[i] - c2 * lambdas[i]));
            }
        }
    }
    candidates
        .into_iter()
        .filter(|&(a, b)| feasible(a, b))
        .min_by(|a, b| (a.0 * mean + a.1).total_cmp(&(b.0 * mean + b.1)))
        .ok_or_else(|| LabError::Fit("no feasible rate constants".into()))
}

/// Evolves each function along the family and fits the lower-bound constants
/// under every reading of the time-zero norm.
pub fn lower_bound_fit(family: &NestedFamily, functions: &[Vec<f64>], options: TraceOptions) -> Result<LowerBoundFit> {
    let ops = family_operators(family, DriftScheme::Upwind)?;
    lower_bound_fit_with(&ops, &family.times, functions, options)
}

pub fn lower_bound_fit_with(ops: &[EvolutionOperators], times: &[f64], functions: &[Vec<f64>], options: TraceOptions) -> Result<LowerBoundFit> {
    let mut lambdas = Vec::with_capacity(functions.len());
    let mut curves = Vec::with_capacity(functions.len());
    for f in functions {
        let states = evolve(ops, times, f, options)?;
        let bf = mat_vec(&ops[0].b, f);
        lambdas.push(ops[0].inner(&bf, &bf) / ops[0].inner(f, f));
        let half: Vec<f64> = states
            .iter()
            .enumerate()
            .map(|(k, u)| {
                let op = if options.frozen { &ops[0] } else { &ops[k] };
                op.calculus.hs_norm(u, 0.5).map(|v| v * v)
            })
            .collect::<Result<_>>()?;
        let one = ops[0].calculus.hs_norm(f, 1.0)?;
        curves.push((half, one));
    }
    let mut readings = Vec::new();
    for reading in NormReading::ALL {
        let mut anchor_holds = true;
        let mut rates = Vec::with_capacity(curves.len());
        for (half, one) in &curves {
            let n0 = match reading {
                NormReading::Literal => *one,
                NormReading::SquaredOne => one * one,
                NormReading::SquaredHalf => half[0],
            };
            anchor_holds &= half[0] >= n0 * (1.0 - 1e-12);
            let rate = times
                .iter()
                .zip(half)
                .skip(1)
                .map(|(&t, &h)| (n0.ln() - h.ln()) / t)
                .fold(f64::NEG_INFINITY, f64::max);
            rates.push(rate);
        }
        let (c2, c3) = fit_rate_constants(&lambdas, &rates)?;
        readings.push(ReadingFit { reading, c2, c3, anchor_holds, rates });
    }
    Ok(LowerBoundFit { lambdas, readings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_disk, nested_family, Profile, Sym2};

    fn disk_family(n: usize, levels: usize, profile: Profile) -> NestedFamily {
        nested_family(&build_disk(1.0, n).unwrap(), Sym2::IDENTITY, levels, profile).unwrap()
    }

    fn cos_mode(family: &NestedFamily, k: f64) -> Vec<f64> {
        family.theta.iter().map(|t| (k * t).cos()).collect()
    }

    #[test]
    fn level_zero_is_the_boundary_dn() {
        let fam = disk_family(32, 4, Profile::LinearShrink { rate: 0.5 });
        let ops = pullback_dn(&fam, 0).unwrap();
        let m = build_disk(1.0, 32).unwrap();
        let direct = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap().boundary_dn().unwrap().operator();
        assert!((&ops.a - direct).amax() < 1e-12);
    }

    #[test]
    fn uniform_shrink_scales_spectrum() {
        let fam = disk_family(48, 4, Profile::LinearShrink { rate: 0.5 });
        let e0 = pullback_dn(&fam, 0).unwrap().dn.eigenvalues();
        let ops = pullback_dn(&fam, 2).unwrap();
        let r = 1.0 - 0.5 * fam.times[2];
        for (a, b) in ops.dn.eigenvalues().iter().zip(&e0) {
            assert!((a - b / r).abs() < 1e-9 * (1.0 + b / r));
        }
    }

    #[test]
    fn b_structure() {
        let fam = disk_family(32, 3, Profile::Wobble { rate: 0.4, amplitude: 0.1, mode: 3 });
        let ops = pullback_dn(&fam, 2).unwrap();
        assert!(ops.b_asymmetry() < 1e-10);
        let ev = ops.b_eigenvalues();
        assert!(ev[0].abs() < 1e-9 * ev.last().unwrap());
        assert!(ev[1] > 1e-3);
        let eta_root = DMatrix::from_diagonal(&DVector::from_iterator(32, ops.fields.eta.iter().map(|e| e.sqrt())));
        assert!((&ops.s - &ops.b + &eta_root * &eta_root * &ops.a).amax() < 1e-10 * ops.a.amax());
    }

    #[test]
    fn upwind_and_central_drift_on_linear_angle() {
        let th: Vec<f64> = (0..16).map(|k| -PI + 2.0 * PI * k as f64 / 16.0 + 0.01).collect();
        let a = vec![1.0; 16];
        let f: Vec<f64> = th.iter().map(|t| t.sin()).collect();
        for scheme in [DriftScheme::Upwind, DriftScheme::Central] {
            let x = drift_matrix(&th, &a, scheme).unwrap();
            let d = mat_vec(&x, &f);
            let err = d.iter().zip(&th).map(|(v, t)| (v - t.cos()).abs()).fold(0.0, f64::max);
            assert!(err < 0.25, "{scheme:?}: {err}");
        }
        let x = drift_matrix(&th, &a, DriftScheme::Central).unwrap();
        assert!(mat_vec(&x, &[1.0; 16]).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn constant_data_has_zero_transport_residual() {
        let fam = disk_family(32, 4, Profile::ExponentialShrink { rate: 0.5 });
        let c = tautological_residual(&fam, &[2.0; 32]).unwrap();
        assert!(c.residuals.iter().all(|&r| r < 1e-10), "{:?}", c.residuals);
    }

    #[test]
    fn transport_residual_is_first_order_in_time() {
        let coarse = disk_family(64, 4, Profile::ExponentialShrink { rate: 0.5 });
        let fine = disk_family(64, 8, Profile::ExponentialShrink { rate: 0.5 });
        let a = tautological_residual(&coarse, &cos_mode(&coarse, 1.0)).unwrap();
        let b = tautological_residual(&fine, &cos_mode(&fine, 1.0)).unwrap();
        let ratio = a.residuals.last().unwrap() / b.residuals.last().unwrap();
        assert!((ratio - 2.0).abs() < 0.6, "{ratio}");
    }

    #[test]
    fn frozen_eigenvector_keeps_its_quotient() {
        let fam = disk_family(32, 4, Profile::LinearShrink { rate: 0.5 });
        let ops = family_operators(&fam, DriftScheme::Upwind).unwrap();
        // uniform shrink: eta is constant, so the cosine modes diagonalise B
        let f = ops[0].calculus.eigenvectors().column(1).iter().copied().collect::<Vec<_>>();
        let opts = TraceOptions { transport: false, frozen: true, ..Default::default() };
        let tr = rayleigh_trace_with(&ops, &fam.times, &f, opts).unwrap();
        for l in &tr.lambda {
            assert!((l - tr.lambda[0]).abs() < 1e-8 * tr.lambda[0]);
        }
        assert!(tr.c2 < 1e-8);
    }

    #[test]
    fn frozen_heat_flow_does_not_raise_the_quotient() {
        let fam = disk_family(32, 6, Profile::LinearShrink { rate: 0.5 });
        let ops = family_operators(&fam, DriftScheme::Upwind).unwrap();
        let f: Vec<f64> = fam.theta.iter().map(|t| (t).cos() + 0.5 * (5.0 * t).sin() + 0.2 * (9.0 * t).cos()).collect();
        let opts = TraceOptions { transport: false, frozen: true, ..Default::default() };
        let tr = rayleigh_trace_with(&ops, &fam.times, &f, opts).unwrap();
        for w in tr.lambda.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(tr.forms_nonnegative());
    }

    #[test]
    fn explicit_stepping_reports_step_size() {
        let fam = disk_family(64, 2, Profile::LinearShrink { rate: 0.5 });
        let opts = TraceOptions { stepping: Stepping::Explicit, ..Default::default() };
        let err = rayleigh_trace(&fam, &cos_mode(&fam, 3.0), opts).unwrap_err();
        assert!(matches!(err, LabError::StepSize(_)));
    }

    #[test]
    fn gronwall_fit_covers_traces() {
        let t = [0.0, 0.5, 1.0];
        let l = [1.0, 1.5, 3.0];
        let (c1, c2) = gronwall_fit(&[(&t, &l)]).unwrap();
        for (ti, li) in t.iter().zip(&l) {
            assert!(gronwall_bound(*ti, 1.0, c1, c2) >= li - 1e-9);
        }
    }

    #[test]
    fn rayleigh_inequality_edge_cases() {
        let b = DMatrix::identity(4, 4);
        let f = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        assert!(rayleigh_slack(&b, &f).abs() < 1e-15);
        let b1 = DMatrix::from_element(1, 1, 2.5);
        assert!(rayleigh_slack(&b1, &DVector::from_element(1, 0.7)).abs() < 1e-15);
        assert!(spd_rayleigh_inequality(12, 500, 3).pass());
    }

    #[test]
    fn rate_constants_cover_every_function() {
        let lambdas = [1.0, 2.0, 4.0];
        let rates = [1.5, 2.0, 5.0];
        let (c2, c3) = fit_rate_constants(&lambdas, &rates).unwrap();
        for (l, r) in lambdas.iter().zip(&rates) {
            assert!(c2 * l + c3 >= r - 1e-12);
        }
    }

    #[test]
    fn single_mode_decay_rate_is_covered() {
        let fam = disk_family(32, 4, Profile::LinearShrink { rate: 0.5 });
        let ops = family_operators(&fam, DriftScheme::Upwind).unwrap();
        let f = ops[0].calculus.eigenvectors().column(2).iter().copied().collect::<Vec<_>>();
        let opts = TraceOptions { transport: false, frozen: true, ..Default::default() };
        let fit = lower_bound_fit_with(&ops, &fam.times, std::slice::from_ref(&f), opts).unwrap();
        let mu = mat_vec(&ops[0].b, &f).iter().zip(&f).map(|(a, b)| a * b).sum::<f64>()
            / f.iter().map(|v| v * v).sum::<f64>();
        let half = fit.readings.iter().find(|r| r.reading == NormReading::SquaredHalf).unwrap();
        // the squared norm decays at twice the eigenvalue, up to the implicit-step factor
        let delta = fam.step();
        let discrete = 2.0 * (1.0 + delta * mu).ln() / delta;
        assert!((half.rates[0] - discrete).abs() < 1e-8 * discrete);
        assert!(half.c2 * fit.lambdas[0] + half.c3 >= discrete - 1e-9);
        assert!(half.anchor_holds);
    }
}
