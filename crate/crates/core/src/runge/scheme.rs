//! Adjoint-based approximation of interface data by restrictions of global
//! harmonic functions.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::li::LiEvaluator;
use super::recurrence::precondition_floor;
use crate::error::{check_dim, LabError, Result};
use crate::geometry::{attach_cylinder, DiskBuilder, MetricField, TriMesh};
use crate::identities::SplitOperators;
use crate::sobolev::BoundaryCalculus;

/// Operators of one split geometry: `T` maps outer-boundary data to the
/// interface trace of its harmonic extension; `T*` is its `L^2` adjoint.
#[derive(Debug)]
pub struct RungeOperators {
    pub split: SplitOperators,
    pub boundary: BoundaryCalculus,
    pub interface: BoundaryCalculus,
    pub restriction: DMatrix<f64>,
    pub adjoint: DMatrix<f64>,
    /// `(I + Lambda_0)^{-1}` on outer-boundary functions, `Lambda_0` the full DN map.
    boundary_resolvent: DMatrix<f64>,
    /// `I + Lambda_core` on interface functions.
    core_shift: DMatrix<f64>,
    /// Rows `(1 + mu_i)^{1/4} e_i^T M`, so `|W f| = ||f||_{1/2}` on the interface.
    half_weight: DMatrix<f64>,
}

fn weight_matrix(calc: &BoundaryCalculus, s: f64) -> DMatrix<f64> {
    let n = calc.len();
    let e = calc.eigenvectors();
    let m = calc.mass();
    DMatrix::from_fn(n, n, |i, j| (1.0 + calc.eigenvalues()[i]).powf(0.5 * s) * e[(j, i)] * m[j])
}

impl RungeOperators {
    pub fn new(mesh: &TriMesh, metric: &MetricField) -> Result<Self> {
        let split = SplitOperators::new(mesh, metric)?;
        let boundary = split.split.boundary_calculus()?;
        let interface = split.split.interface_calculus()?;
        let restriction = split.restriction_matrix()?;
        let mut adjoint = restriction.transpose();
        for i in 0..adjoint.nrows() {
            adjoint.row_mut(i).scale_mut(1.0 / boundary.mass()[i]);
        }
        for j in 0..adjoint.ncols() {
            adjoint.column_mut(j).scale_mut(interface.mass()[j]);
        }
        // (I + M^{-1} S)^{-1} = (M + S)^{-1} M
        let shifted = DMatrix::from_diagonal(boundary.mass()) + &split.full_dn.form;
        let chol = shifted
            .cholesky()
            .ok_or_else(|| LabError::Conditioning("M + S on the boundary is not positive definite".into()))?;
        let boundary_resolvent = chol.solve(&DMatrix::from_diagonal(boundary.mass()));
        let core_shift = DMatrix::identity(interface.len(), interface.len()) + split.core_dn.operator();
        let half_weight = weight_matrix(&interface, 0.5);
        Ok(Self { split, boundary, interface, restriction, adjoint, boundary_resolvent, core_shift, half_weight })
    }

    pub fn interface_len(&self) -> usize {
        self.interface.len()
    }

    pub fn boundary_len(&self) -> usize {
        self.boundary.len()
    }

    /// `H^{1/2}` inner product on the interface.
    pub fn half_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        let wf = &self.half_weight * DVector::from_column_slice(f);
        let wg = &self.half_weight * DVector::from_column_slice(g);
        wf.dot(&wg)
    }

    pub fn half_norm(&self, f: &[f64]) -> f64 {
        self.half_inner(f, f).sqrt()
    }

    /// `||v||_1^2 / ||v||_{1/2}^2` on the interface.
    pub fn smoothness_ratio(&self, v: &[f64]) -> Result<f64> {
        let one = self.interface.hs_norm(v, 1.0)?;
        let half = self.interface.hs_norm(v, 0.5)?;
        Ok((one / half).powi(2))
    }

    /// `E(u)|_interface`.
    pub fn restrict(&self, u: &[f64]) -> Vec<f64> {
        (&self.restriction * DVector::from_column_slice(u)).as_slice().to_vec()
    }

    /// Step direction `(I + Lambda_0)^{-1} T* (I + Lambda_core) v` on the outer boundary.
    pub fn direction(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.interface_len(), v.len())?;
        let av = &self.core_shift * DVector::from_column_slice(v);
        Ok((&self.boundary_resolvent * (&self.adjoint * av)).as_slice().to_vec())
    }

    /// Boundary data whose restriction is closest to `v` in `H^{1/2}`,
    /// by truncated least squares.
    pub fn exact_solve(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.interface_len(), v.len())?;
        let a = &self.half_weight * &self.restriction;
        let b = &self.half_weight * DVector::from_column_slice(v);
        let svd = a.svd(true, true);
        let top = svd.singular_values.max();
        let x = svd.solve(&b, 1e-13 * top).map_err(|e| LabError::Solver(e.to_string()))?;
        Ok(x.as_slice().to_vec())
    }
}

/// How the step length along the adjoint direction is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepRule {
    /// `sigma = e^{-K lambda}` exactly.
    Scheduled,
    /// Largest residual drop among the scheduled sigma, the exact minimiser along the
    /// direction and a geometric ladder between them, subject to the smoothness bound.
    LineSearch,
    /// Least-squares fit over all boundary data, ignoring the direction.
    ExactSolve,
}

/// One approximation step.
#[derive(Debug, Clone, Serialize)]
pub struct RungeStep {
    /// Boundary data of the step.
    pub u: Vec<f64>,
    /// Normalised residual `(v - E(u)|) / (1 - mu)^{1/2}`.
    pub v_next: Vec<f64>,
    /// Achieved drop `1 - ||v - E(u)|||_{1/2}^2`.
    pub mu: f64,
    pub sigma: f64,
    /// Whether the chosen step satisfied the smoothness bound.
    pub smooth: bool,
}

/// Residual of `v - sigma w` for a unit `v`: `1 - 2 sigma a + sigma^2 b`.
fn residual_sq(a: f64, b: f64, sigma: f64) -> f64 {
    1.0 - 2.0 * sigma * a + sigma * sigma * b
}

/// One step for interface data `v`, renormalised to `||v||_{1/2} = 1` first.
pub fn runge_step(v: &[f64], k: f64, c: f64, lambda: f64, ops: &RungeOperators, rule: StepRule) -> Result<RungeStep> {
    check_dim(ops.interface_len(), v.len())?;
    let norm = ops.half_norm(v);
    if !(norm > 0.0) {
        return Err(LabError::Domain("step data must be nonzero".into()));
    }
    let v: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let scheduled = (-k * lambda).exp();
    let (u, sigma, smooth) = match rule {
        StepRule::ExactSolve => (ops.exact_solve(&v)?, 1.0, true),
        StepRule::Scheduled | StepRule::LineSearch => {
            let d = ops.direction(&v)?;
            let w = ops.restrict(&d);
            let a = ops.half_inner(&v, &w);
            let b = ops.half_inner(&w, &w);
            if !(b > 0.0) || a == 0.0 {
                return Err(LabError::Stagnation(format!("direction has no component along v (a = {a:e}, b = {b:e})")));
            }
            let signed = scheduled * a.signum();
            let (sigma, smooth) = if rule == StepRule::Scheduled {
                (signed, true)
            } else {
                let best = a / b;
                let mut candidates = vec![signed, best];
                let ratio = best / signed;
                if ratio > 1.0 {
                    candidates.extend((1..16).map(|j| signed * ratio.powf(j as f64 / 16.0)));
                }
                let limit = lambda * (1.0 + c * scheduled);
                let mut chosen = None;
                for s in candidates {
                    let r2 = residual_sq(a, b, s);
                    if !(r2 < 1.0) {
                        continue;
                    }
                    let r: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x - s * y).collect();
                    if ops.smoothness_ratio(&r)? <= limit && chosen.is_none_or(|(_, best_r2)| r2 < best_r2) {
                        chosen = Some((s, r2));
                    }
                }
                match chosen {
                    Some((s, _)) => (s, true),
                    None => (signed, false),
                }
            };
            (d.iter().map(|x| sigma * x).collect(), sigma, smooth)
        }
    };
    let w = ops.restrict(&u);
    let r: Vec<f64> = v.iter().zip(&w).map(|(x, y)| x - y).collect();
    let r2 = ops.half_inner(&r, &r);
    let mu = 1.0 - r2;
    if !(mu > 0.0) {
        return Err(LabError::Stagnation(format!("step with sigma = {sigma:e} did not reduce the residual (mu = {mu:e})")));
    }
    let scale = 1.0 / r2.sqrt();
    let v_next = r.iter().map(|x| x * scale).collect();
    // report the step against the caller's scaling
    let u = u.iter().map(|x| x * norm).collect();
    Ok(RungeStep { u, v_next, mu, sigma, smooth })
}

/// A named constant and the experiment that produced it.
#[derive(Debug, Clone, Serialize)]
pub struct FittedConstant {
    pub value: f64,
    pub provenance: String,
}

/// Measured constants of the approximation scheme, all positive.
#[derive(Debug, Clone, Default, Serialize)]
pub struct FitConstants {
    entries: BTreeMap<String, FittedConstant>,
}

impl FitConstants {
    pub const NAMES: [&'static str; 7] = ["K", "C", "C1", "C2", "C3", "alpha", "sigma0"];

    pub fn set(&mut self, name: &str, value: f64, provenance: &str) -> Result<()> {
        if !Self::NAMES.contains(&name) {
            return Err(LabError::Fit(format!("unknown constant {name}")));
        }
        if !(value > 0.0 && value.is_finite()) {
            return Err(LabError::Fit(format!("constant {name} must be positive and finite, got {value}")));
        }
        self.entries.insert(name.to_string(), FittedConstant { value, provenance: provenance.to_string() });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<f64> {
        self.entries.get(name).map(|c| c.value).ok_or_else(|| LabError::Fit(format!("constant {name} has not been fitted")))
    }

    pub fn entry(&self, name: &str) -> Option<&FittedConstant> {
        self.entries.get(name)
    }

    /// `{"K": .., "C": .., ...}` with the fitted values only.
    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, f64> = self.entries.iter().map(|(k, v)| (k.as_str(), v.value)).collect();
        serde_json::to_string(&map).expect("finite floats serialise")
    }
}

/// Data of the adjoint lower-bound experiment.
#[derive(Debug, Clone, Serialize)]
pub struct AdjointExperiment {
    pub cylinder_length: f64,
    /// `||f||_0^2 / ||f||_{-1/2}^2` for each function.
    pub lambdas: Vec<f64>,
    /// `||T* f||_{-1/2}^2 / ||f||_{-1/2}^2`.
    pub ratios: Vec<f64>,
    /// Smallest `K >= 0` with `ratio >= e^{-K lambda}` for every function.
    pub k: f64,
    pub violations: usize,
    /// Whether `ln ratio` is nonincreasing in `lambda` (up to ties within 1e-9).
    pub monotone: bool,
}

/// `||T* f||_{-1/2}^2 / ||f||_{-1/2}^2` and `lambda` for one interface function.
pub fn adjoint_ratio(ops: &RungeOperators, f: &[f64]) -> Result<(f64, f64)> {
    check_dim(ops.interface_len(), f.len())?;
    let tf = (&ops.adjoint * DVector::from_column_slice(f)).as_slice().to_vec();
    let neg = ops.interface.hs_norm(f, -0.5)?.powi(2);
    let l2 = ops.interface.hs_norm(f, 0.0)?.powi(2);
    let out = ops.boundary.hs_norm(&tf, -0.5)?.powi(2);
    Ok((l2 / neg, out / neg))
}

/// Attaches a product cylinder of the given length outside the mesh, then
/// measures the adjoint ratio on `functions` and fits `K`.
pub fn adjoint_lower_bound_experiment(
    mesh: &TriMesh,
    metric: &MetricField,
    cylinder_length: f64,
    functions: &[Vec<f64>],
) -> Result<AdjointExperiment> {
    let ops = cylinder_operators(mesh, metric, cylinder_length)?;
    adjoint_experiment_with(&ops, cylinder_length, functions)
}

/// Split operators of the mesh with a cylinder glued to its outer boundary.
pub fn cylinder_operators(mesh: &TriMesh, metric: &MetricField, length: f64) -> Result<RungeOperators> {
    let n = mesh.loop_nodes(0)?.len();
    let layers = ((length * n as f64 / (2.0 * std::f64::consts::PI)).ceil() as usize).max(2);
    let cyl = attach_cylinder(mesh, metric, length, layers)?;
    RungeOperators::new(&cyl.mesh, &cyl.extend_metric(metric)?)
}

pub fn adjoint_experiment_with(ops: &RungeOperators, cylinder_length: f64, functions: &[Vec<f64>]) -> Result<AdjointExperiment> {
    if functions.is_empty() {
        return Err(LabError::Fit("no functions for the adjoint experiment".into()));
    }
    let mut lambdas = Vec::with_capacity(functions.len());
    let mut ratios = Vec::with_capacity(functions.len());
    for f in functions {
        let (l, r) = adjoint_ratio(ops, f)?;
        lambdas.push(l);
        ratios.push(r);
    }
    let k = lambdas.iter().zip(&ratios).map(|(l, r)| -r.ln() / l).fold(0.0, f64::max);
    let violations = lambdas.iter().zip(&ratios).filter(|(l, r)| **r < (-k * **l).exp() * (1.0 - 1e-12)).count();
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[a].total_cmp(&lambdas[b]));
    let monotone = order.windows(2).all(|w| {
        let (a, b) = (w[0], w[1]);
        let tie = (lambdas[b] - lambdas[a]).abs() <= 1e-9 * lambdas[b];
        tie || ratios[b].ln() <= ratios[a].ln() + 1e-9
    });
    Ok(AdjointExperiment { cylinder_length, lambdas, ratios, k, violations, monotone })
}

/// The first `count` eigenmodes of the interface Laplacian.
pub fn interface_modes(ops: &RungeOperators, count: usize) -> Vec<Vec<f64>> {
    let e = ops.interface.eigenvectors();
    (0..count.min(ops.interface_len())).map(|i| e.column(i).iter().copied().collect()).collect()
}

/// Smallest `C` with `ratio(v_next) <= lambda (1 + C e^{-K lambda})` over scheduled steps
/// from the given starting functions, `lambda` being each function's own ratio.
pub fn fit_smoothness_constant(ops: &RungeOperators, k: f64, functions: &[Vec<f64>]) -> Result<f64> {
    let mut c: f64 = 0.0;
    for f in functions {
        let lambda = ops.smoothness_ratio(f)?;
        let step = runge_step(f, k, 0.0, lambda, ops, StepRule::Scheduled)?;
        let next = ops.smoothness_ratio(&step.v_next)?;
        c = c.max((next / lambda - 1.0) * (k * lambda).exp());
    }
    Ok(c)
}

/// Per-iteration record of [`runge_iterate`].
#[derive(Debug, Clone, Serialize)]
pub struct RungeTrace {
    pub k: f64,
    pub c: f64,
    pub sigma0: f64,
    pub eps: f64,
    pub rule: StepRule,
    /// `lambda_i`, strictly increasing.
    pub lambda: Vec<f64>,
    /// Scheduled `e^{-K lambda_i}`.
    pub mu: Vec<f64>,
    /// Achieved drops.
    pub achieved: Vec<f64>,
    /// `||f - E(u~_i)|||_{1/2} / ||f||_{1/2}` after `i` steps, starting at 1.
    pub residual: Vec<f64>,
    /// `||u~_i||_{1/2}` on the outer boundary.
    pub cost: Vec<f64>,
    /// `sigma0 / ln li^{-1}(C i + li(e^{sigma0}))`, compared with the squared residual.
    pub envelope: Vec<f64>,
    /// Largest gap between the product of `1 - mu` and the directly measured residual.
    pub renormalization_error: f64,
    /// Steps where the smoothness bound could not be met.
    pub smoothness_misses: usize,
    pub converged: bool,
    /// Final accumulated boundary data.
    pub u: Vec<f64>,
}

impl RungeTrace {
    /// Columns `i, lambda, mu, residual, cost`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,lambda,mu,residual,cost\n");
        for i in 0..self.residual.len() {
            let (l, m) = (self.lambda.get(i).copied().unwrap_or(f64::NAN), self.mu.get(i).copied().unwrap_or(f64::NAN));
            out.push_str(&format!("{i},{l},{m},{},{}\n", self.residual[i], self.cost[i]));
        }
        out
    }

    pub fn monotone(&self) -> bool {
        self.residual.windows(2).all(|w| w[1] <= w[0])
    }

    /// Whether the squared residual stays below the envelope at every step.
    pub fn dominated(&self) -> bool {
        self.residual.iter().zip(&self.envelope).all(|(r, e)| r * r <= e * (1.0 + 1e-9))
    }
}

/// Iteration settings.
#[derive(Debug, Clone, Copy)]
pub struct IterateOptions {
    pub rule: StepRule,
    pub max_iterations: usize,
}

impl Default for IterateOptions {
    fn default() -> Self {
        Self { rule: StepRule::LineSearch, max_iterations: 1000 }
    }
}

/// Approximates `f` on the interface to relative `H^{1/2}` accuracy `eps`.
pub fn runge_iterate(
    f: &[f64],
    eps: f64,
    constants: &FitConstants,
    ops: &RungeOperators,
    li: &LiEvaluator,
    options: IterateOptions,
) -> Result<RungeTrace> {
    check_dim(ops.interface_len(), f.len())?;
    if !(eps > 0.0) {
        return Err(LabError::Domain(format!("target accuracy must be positive, got {eps}")));
    }
    let k = constants.get("K")?;
    let c = constants.get("C")?;
    let scale = ops.half_norm(f);
    if !(scale > 0.0) {
        return Err(LabError::Domain("target function must be nonzero".into()));
    }
    let mut v: Vec<f64> = f.iter().map(|x| x / scale).collect();
    let lambda0 = ops.smoothness_ratio(&v)?;
    let sigma0 = (k * lambda0).max(precondition_floor(c));
    let d = li.li_exp(sigma0)?;
    let mut trace = RungeTrace {
        k,
        c,
        sigma0,
        eps,
        rule: options.rule,
        lambda: vec![lambda0],
        mu: vec![(-k * lambda0).exp()],
        achieved: Vec::new(),
        residual: vec![1.0],
        cost: vec![0.0],
        envelope: vec![1.0],
        renormalization_error: 0.0,
        smoothness_misses: 0,
        converged: false,
        u: vec![0.0; ops.boundary_len()],
    };
    let mut log_residual_sq = 0.0f64;
    for i in 0..options.max_iterations {
        if trace.residual[i] <= eps {
            trace.converged = true;
            break;
        }
        let lambda = trace.lambda[i];
        let step = runge_step(&v, k, c, lambda, ops, options.rule)?;
        let weight = scale * (0.5 * log_residual_sq).exp();
        for (acc, x) in trace.u.iter_mut().zip(&step.u) {
            *acc += weight * x;
        }
        log_residual_sq += (-step.mu).ln_1p();
        let residual = (0.5 * log_residual_sq).exp();
        let direct: Vec<f64> = f.iter().zip(ops.restrict(&trace.u)).map(|(a, b)| a - b).collect();
        let measured = ops.half_norm(&direct) / scale;
        trace.renormalization_error = trace.renormalization_error.max((measured - residual).abs());
        if !step.smooth {
            trace.smoothness_misses += 1;
        }
        v = step.v_next;
        let scheduled = lambda * (1.0 + c * (-k * lambda).exp());
        let next = scheduled.max(ops.smoothness_ratio(&v)?);
        trace.achieved.push(step.mu);
        trace.residual.push(residual);
        trace.cost.push(ops.boundary.hs_norm(&trace.u, 0.5)?);
        trace.envelope.push(sigma0 / li.log_li_inv(c * (i + 1) as f64 + d)?);
        trace.lambda.push(next);
        trace.mu.push((-k * next).exp());
    }
    if !trace.converged && trace.residual.last().is_some_and(|&r| r <= eps) {
        trace.converged = true;
    }
    Ok(trace)
}

/// Least-squares `alpha` in `ln(ln cost + 2 ln sigma0) = alpha ln(sigma0 / eps)`.
pub fn fit_cost_exponent(sigma0: f64, eps: &[f64], costs: &[f64]) -> Result<f64> {
    check_dim(eps.len(), costs.len())?;
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(costs)
        .filter_map(|(&e, &c)| {
            let y = c.ln() + 2.0 * sigma0.ln();
            let x = (sigma0 / e).ln();
            (y > 0.0 && x > 0.0).then(|| (x, y.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return Err(LabError::Fit("fewer than two usable cost points".into()));
    }
    let num: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let den: f64 = pts.iter().map(|(x, _)| x * x).sum();
    Ok(num / den)
}

/// The reference split geometry: unit disk with the core bounded by the circle
/// of radius `1/2`, Euclidean metric.
pub fn reference_runge_mesh(resolution: usize) -> Result<(TriMesh, MetricField)> {
    let mesh = DiskBuilder::new(1.0, resolution).collar(0.5).build()?;
    let metric = MetricField::euclidean(&mesh);
    Ok((mesh, metric))
}

/// Reference target on the interface: `cos th + sin(2 th) / 2 + cos(3 th) / 4`.
pub fn reference_target(ops: &RungeOperators) -> Result<Vec<f64>> {
    let nodes = ops.split.split.interface_nodes();
    let pts = ops.split.split.full.mesh().nodes();
    Ok(nodes
        .iter()
        .map(|&v| {
            let th = pts[v][1].atan2(pts[v][0]);
            th.cos() + 0.5 * (2.0 * th).sin() + 0.25 * (3.0 * th).cos()
        })
        .collect())
}

/// Random interface functions mixing the lowest `band` modes.
pub fn random_interface_functions(ops: &RungeOperators, count: usize, band: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes = interface_modes(ops, band);
    (0..count)
        .map(|_| {
            let mut f = vec![0.0; ops.interface_len()];
            for m in &modes[1..] {
                let a: f64 = rng.random_range(-1.0..1.0);
                for (x, y) in f.iter_mut().zip(m) {
                    *x += a * y;
                }
            }
            f
        })
        .collect()
}
