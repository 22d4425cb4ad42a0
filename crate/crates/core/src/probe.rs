//! Oscillating boundary probes for pointwise inclusion contrast, and the
//! contrast sweep behind the logarithmic stability curve.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dn::{LoopData, StiffnessSystem};
use crate::error::{check_dim, LabError, Result};
use crate::geometry::family::smooth_step;
use crate::geometry::{build_curved_patch, composite_metric, MetricField, Point, Region, Sym2, TriMesh};
use crate::linalg::par_map;
use crate::runge::{runge_iterate, FitConstants, IterateOptions, LiEvaluator, RungeOperators};
use crate::sobolev::BoundaryCalculus;

/// Default lower bound for `(|xi| r0)^{1/2}`.
pub const DEFAULT_THRESHOLD: f64 = 2.0;

/// A localised oscillation `psi(|p - center|) cos(xi . (p - center))` on a boundary loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeSpec {
    pub center: Point,
    /// Tangential frequency covector.
    pub xi: [f64; 2],
    /// Support radius `r0`.
    pub radius: f64,
    pub threshold: f64,
}

impl ProbeSpec {
    pub fn new(center: Point, xi: [f64; 2], radius: f64) -> Result<Self> {
        Self::with_threshold(center, xi, radius, DEFAULT_THRESHOLD)
    }

    pub fn with_threshold(center: Point, xi: [f64; 2], radius: f64, threshold: f64) -> Result<Self> {
        let spec = Self { center, xi, radius, threshold };
        let k = spec.frequency();
        if !(k > 0.0 && k.is_finite()) {
            return Err(LabError::Domain("probe frequency must be nonzero".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LabError::Domain(format!("probe radius must be positive, got {radius}")));
        }
        let size = (k * radius).sqrt();
        if size <= threshold {
            return Err(LabError::Domain(format!(
                "(|xi| r0)^(1/2) = {size:.4} does not exceed the threshold {threshold}"
            )));
        }
        Ok(spec)
    }

    /// Euclidean `|xi|`.
    pub fn frequency(&self) -> f64 {
        self.xi[0].hypot(self.xi[1])
    }

    /// Cutoff `psi`: 1 on `[0, r0/4]`, 0 beyond `3 r0 / 4`, smooth in between.
    pub fn cutoff(&self, r: f64) -> f64 {
        1.0 - smooth_step(2.0 * (r / self.radius - 0.25))
    }

    fn offset(&self, p: Point) -> [f64; 2] {
        [p[0] - self.center[0], p[1] - self.center[1]]
    }

    fn sample(&self, points: &[Point], phase: f64) -> Vec<f64> {
        points
            .iter()
            .map(|&p| {
                let d = self.offset(p);
                let r = d[0].hypot(d[1]);
                self.cutoff(r) * (self.xi[0] * d[0] + self.xi[1] * d[1] - phase).cos()
            })
            .collect()
    }
}

/// Cosine and sine phases of a probe, each of unit `H^{1/2}` norm on its loop.
#[derive(Debug, Clone, Serialize)]
pub struct ProbePair {
    pub spec: ProbeSpec,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Loop positions inside the support ball.
    pub support: Vec<usize>,
}

impl ProbePair {
    /// Share of `||u||_{1/2}^2` carried by the part of `u` within `radius` of the center.
    pub fn energy_fraction_within(&self, points: &[Point], calc: &BoundaryCalculus, radius: f64) -> Result<f64> {
        check_dim(points.len(), self.u.len())?;
        let inner: Vec<f64> = points
            .iter()
            .zip(&self.u)
            .map(|(&p, &x)| {
                let d = self.spec.offset(p);
                if d[0].hypot(d[1]) <= radius {
                    x
                } else {
                    0.0
                }
            })
            .collect();
        Ok((calc.hs_norm(&inner, 0.5)? / calc.hs_norm(&self.u, 0.5)?).powi(2))
    }
}

/// Checks that the loop positions within `r0` of the center form one proper arc.
fn support_arc(spec: &ProbeSpec, points: &[Point]) -> Result<Vec<usize>> {
    let n = points.len();
    let inside: Vec<bool> = points
        .iter()
        .map(|&p| {
            let d = spec.offset(p);
            d[0].hypot(d[1]) < spec.radius
        })
        .collect();
    let support: Vec<usize> = (0..n).filter(|&i| inside[i]).collect();
    if support.is_empty() {
        return Err(LabError::Geometry("probe center is farther than r0 from the loop".into()));
    }
    let entries = (0..n).filter(|&i| inside[i] && !inside[(i + n - 1) % n]).count();
    if support.len() == n || entries != 1 {
        return Err(LabError::Geometry("probe support overflows a single coordinate patch of the loop".into()));
    }
    Ok(support)
}

/// Probe sampled at loop points and normalised with the loop calculus.
pub fn oscillating_probe_on(spec: &ProbeSpec, points: &[Point], calc: &BoundaryCalculus) -> Result<ProbePair> {
    check_dim(calc.len(), points.len())?;
    let support = support_arc(spec, points)?;
    let mut phases = [spec.sample(points, 0.0), spec.sample(points, std::f64::consts::FRAC_PI_2)];
    for w in &mut phases {
        let norm = calc.hs_norm(w, 0.5)?;
        if !(norm > 0.0) {
            return Err(LabError::Geometry("probe vanishes on the loop nodes".into()));
        }
        w.iter_mut().for_each(|x| *x /= norm);
    }
    let [u, v] = phases;
    Ok(ProbePair { spec: *spec, u, v, support })
}

/// Probe on boundary loop `l` of a mesh.
pub fn oscillating_probe(spec: &ProbeSpec, mesh: &TriMesh, metric: &MetricField, l: usize) -> Result<ProbePair> {
    let calc = BoundaryCalculus::for_mesh_loop(mesh, metric, l)?;
    oscillating_probe_on(spec, &mesh.loop_points(l)?, &calc)
}

/// Weak-form covector `(K E f)|_loop` of the harmonic extension of `f` from loop `l`.
fn loop_covector(sys: &StiffnessSystem, l: usize, f: &[f64]) -> Result<Vec<f64>> {
    let mut data = vec![LoopData::Zero; sys.loop_count()];
    data[l] = LoopData::Values(f);
    let field = sys.harmonic_extension(&data)?;
    sys.conormal_covector(&field.values, l)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Measured response of a pair of metrics to one probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeEstimate {
    /// `<Lambda_h w, w>_g / <Lambda_g w, w>_g` summed over both phases.
    pub ratio: f64,
    /// `|xi|_h / |xi|_g` at the probe center.
    pub expected: f64,
    /// `|ratio - expected| / expected`.
    pub deviation: f64,
    /// `(Lambda_g - Lambda_h)(w)(w)` in weak form, summed over both phases.
    pub pairing: f64,
    /// `<(Lambda_g - Lambda_h) w, w>` in the boundary volume of `g`, summed over both phases.
    pub boundary_pairing: f64,
}

/// Compares the DN quadratic forms of `g` and `h` on a probe of loop `l`, with both
/// metrics required to be constant where the probe is nonzero.
pub fn contrast_lower_bound_estimate(
    mesh: &TriMesh,
    g: &MetricField,
    h: &MetricField,
    spec: &ProbeSpec,
    l: usize,
) -> Result<ProbeEstimate> {
    let pts = mesh.loop_points(l)?;
    let owners = mesh.loop_edge_triangles(l);
    let n = owners.len();
    let dist = |i: usize| (pts[i][0] - spec.center[0]).hypot(pts[i][1] - spec.center[1]);
    let active: Vec<usize> = (0..n).filter(|&i| spec.cutoff(dist(i)) > 0.0).collect();
    let nearest = (0..n).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).expect("loop has nodes");
    let (gc, hc) = (g.get(owners[nearest]), h.get(owners[nearest]));
    for &i in &active {
        for t in [owners[i], owners[(i + n - 1) % n]] {
            if g.get(t) != gc || h.get(t) != hc {
                return Err(LabError::Domain("metrics must be constant along the probe support".into()));
            }
        }
    }
    probe_response(mesh, g, h, spec, l)
}

/// Probe response without the constant-metric precondition; `expected` uses the
/// metrics on the loop edge nearest the center.
pub fn probe_response(mesh: &TriMesh, g: &MetricField, h: &MetricField, spec: &ProbeSpec, l: usize) -> Result<ProbeEstimate> {
    let probe = oscillating_probe(spec, mesh, g, l)?;
    let pts = mesh.loop_points(l)?;
    let owners = mesh.loop_edge_triangles(l);
    let dist = |i: usize| (pts[i][0] - spec.center[0]).hypot(pts[i][1] - spec.center[1]);
    let nearest = (0..pts.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).expect("loop has nodes");
    let (gc, hc) = (g.get(owners[nearest]), h.get(owners[nearest]));
    let (sg, sh) = (StiffnessSystem::assemble(mesh, g)?, StiffnessSystem::assemble(mesh, h)?);
    let (mg, mh) = (sg.loop_mass(l)?, sh.loop_mass(l)?);
    let (mut num, mut den, mut pairing) = (0.0, 0.0, 0.0);
    for w in [&probe.u, &probe.v] {
        let (cg, ch) = (loop_covector(&sg, l, w)?, loop_covector(&sh, l, w)?);
        // <M_h^{-1} S_h w, w> in the mass of g
        num += w.iter().zip(&ch).zip(mg.iter().zip(&mh)).map(|((x, c), (a, b))| x * c * a / b).sum::<f64>();
        den += dot(w, &cg);
        pairing += dot(w, &cg) - dot(w, &ch);
    }
    let ratio = num / den;
    let expected = hc.inverse().norm(spec.xi) / gc.inverse().norm(spec.xi);
    Ok(ProbeEstimate {
        ratio,
        expected,
        deviation: (ratio - expected).abs() / expected,
        pairing,
        boundary_pairing: den - num,
    })
}

/// `h` on triangles whose centroid lies within `radius` of `center`, `g` elsewhere.
pub fn local_metric(mesh: &TriMesh, g: &MetricField, h: Sym2, center: Point, radius: f64) -> Result<MetricField> {
    check_dim(mesh.triangle_count(), g.len())?;
    let values = (0..mesh.triangle_count())
        .map(|t| {
            let c = mesh.corners(t);
            let (x, y) = ((c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0);
            if (x - center[0]).hypot(y - center[1]) <= radius {
                h
            } else {
                g.get(t)
            }
        })
        .collect();
    MetricField::new(values)
}

/// Unit-circle arc through `(0, 1)`, resolved at `spacing` within arclength `0.6`.
pub fn reference_probe_patch(spacing: f64) -> Result<TriMesh> {
    build_curved_patch(1.0, 1.2, 0.6, 0.6, spacing, 1.08)
}

/// Ratio estimates for Euclidean `g` and constant `h`, probes centred at `center`
/// with frequency `k` along `tangent`.
pub fn probe_frequency_ladder(
    mesh: &TriMesh,
    center: Point,
    tangent: [f64; 2],
    h: Sym2,
    radius: f64,
    frequencies: &[f64],
) -> Result<Vec<ProbeEstimate>> {
    let g = MetricField::euclidean(mesh);
    let hf = MetricField::constant(mesh.triangle_count(), h)?;
    let specs = frequencies
        .iter()
        .map(|&k| ProbeSpec::new(center, [k * tangent[0], k * tangent[1]], radius))
        .collect::<Result<Vec<_>>>()?;
    par_map(&specs, |s| contrast_lower_bound_estimate(mesh, &g, &hf, s, 0)).into_iter().collect()
}

/// Settings of the probe-to-boundary pipeline run at every sweep point.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    /// `C''` in `eps = contrast / C''`.
    pub eps_divisor: f64,
    /// Probe frequency `|xi|` on the interface.
    pub frequency: f64,
    pub radius: f64,
    pub constants: FitConstants,
    pub max_iterations: usize,
}

/// DN difference norms along `g + c delta` on the inclusion.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityCurve {
    pub scales: Vec<f64>,
    /// `sup |h - g|_g` on the inclusion boundary, strictly increasing.
    pub contrasts: Vec<f64>,
    /// `||Lambda_g - Lambda_h||_{1/2 -> -1/2}` with constants projected out.
    pub norms: Vec<f64>,
    pub resolution: usize,
    /// `|(Lambda_g - Lambda_h)(u0)(u0)|` for the transported probe, when the pipeline ran.
    pub pairings: Option<Vec<f64>>,
    /// Runge accuracy used at each point.
    pub eps: Option<Vec<f64>>,
}

impl StabilityCurve {
    /// Columns `contrast, opnorm, resolution, pairing`; pairing is empty without the pipeline.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("contrast,opnorm,resolution,pairing\n");
        for i in 0..self.contrasts.len() {
            let p = self.pairings.as_ref().map_or(String::new(), |p| p[i].to_string());
            out.push_str(&format!("{},{},{},{}\n", self.contrasts[i], self.norms[i], self.resolution, p));
        }
        out
    }

    /// No decrease beyond `1e-12` relative slack.
    pub fn monotone(&self) -> bool {
        self.norms.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12))
    }

    pub fn strictly_increasing(&self) -> bool {
        self.norms.windows(2).all(|w| w[1] > w[0])
    }
}

/// `g + c delta` on inclusion triangles, checked positive definite.
pub fn perturbed_metric(mesh: &TriMesh, g: &MetricField, delta: Sym2, c: f64) -> Result<MetricField> {
    check_dim(mesh.triangle_count(), g.len())?;
    let values = mesh
        .regions()
        .iter()
        .enumerate()
        .map(|(t, &r)| if r == Region::Inclusion { g.get(t).add(&delta.scale(c)) } else { g.get(t) })
        .collect();
    MetricField::new(values)
}

/// DN difference operator `M^{-1}(S_g - S_h)` on the outer boundary and its
/// `H^{1/2} -> H^{-1/2}` norm off constants.
fn difference_norm(calc: &BoundaryCalculus, sg: &DMatrix<f64>, sh: &DMatrix<f64>) -> Result<f64> {
    let mut op = sg - sh;
    for i in 0..op.nrows() {
        op.row_mut(i).scale_mut(1.0 / calc.mass()[i]);
    }
    calc.operator_norm_band(&op, 0.5, -0.5, 1..calc.len())
}

/// Interface node closest to the inclusion's centroid and the unit tangent there.
fn probe_anchor(mesh: &TriMesh, points: &[Point]) -> Result<(Point, [f64; 2])> {
    let (mut cx, mut cy, mut area) = (0.0, 0.0, 0.0);
    for (t, &r) in mesh.regions().iter().enumerate() {
        if r == Region::Inclusion {
            let a = mesh.area(t);
            let c = mesh.corners(t);
            cx += a * (c[0][0] + c[1][0] + c[2][0]) / 3.0;
            cy += a * (c[0][1] + c[1][1] + c[2][1]) / 3.0;
            area += a;
        }
    }
    if area == 0.0 {
        return Err(LabError::Geometry("mesh has no inclusion".into()));
    }
    let (cx, cy) = (cx / area, cy / area);
    let n = points.len();
    let i = (0..n)
        .min_by(|&a, &b| {
            let d = |p: Point| (p[0] - cx).hypot(p[1] - cy);
            d(points[a]).total_cmp(&d(points[b]))
        })
        .expect("interface has nodes");
    let (p, q) = (points[(i + n - 1) % n], points[(i + 1) % n]);
    let len = (q[0] - p[0]).hypot(q[1] - p[1]);
    Ok((points[i], [(q[0] - p[0]) / len, (q[1] - p[1]) / len]))
}

fn pipeline_pairing(
    mesh: &TriMesh,
    ops: &RungeOperators,
    li: &LiEvaluator,
    h: &MetricField,
    eps: f64,
    options: &PipelineOptions,
) -> Result<f64> {
    let pts = ops.split.split.full.mesh().nodes();
    let points: Vec<Point> = ops.split.split.interface_nodes().iter().map(|&v| pts[v]).collect();
    let (center, tangent) = probe_anchor(mesh, &points)?;
    let k = options.frequency;
    let spec = ProbeSpec::with_threshold(center, [k * tangent[0], k * tangent[1]], options.radius, 0.0)?;
    let probe = oscillating_probe_on(&spec, &points, &ops.interface)?;
    let approx = ops.interface.lipschitz_approximation(&probe.u, eps)?;
    if approx.cutoff == 0 {
        return Ok(0.0);
    }
    let iterate = IterateOptions { max_iterations: options.max_iterations, ..IterateOptions::default() };
    let trace = runge_iterate(&approx.function, eps, &options.constants, ops, li, iterate)?;
    let sh = StiffnessSystem::assemble(mesh, h)?;
    let ch = loop_covector(&sh, 0, &trace.u)?;
    let cg = (&ops.split.full_dn.form * DVector::from_column_slice(&trace.u)).as_slice().to_vec();
    Ok((dot(&trace.u, &cg) - dot(&trace.u, &ch)).abs())
}

/// Sweeps `h_c = g + c delta` on the inclusion over increasing `scales`.
/// Directions conformal to `g` are rejected after confirming the DN maps agree.
pub fn stability_sweep(
    mesh: &TriMesh,
    g: &MetricField,
    delta: Sym2,
    scales: &[f64],
    pipeline: Option<&PipelineOptions>,
) -> Result<StabilityCurve> {
    if scales.is_empty() || scales.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
        return Err(LabError::Domain("contrast scales must be nonnegative and finite".into()));
    }
    if scales.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Domain("contrast scales must be strictly increasing".into()));
    }
    let calc = BoundaryCalculus::for_mesh_loop(mesh, g, 0)?;
    let sg = StiffnessSystem::assemble(mesh, g)?.boundary_dn()?.form;
    let norm_at = |c: f64| -> Result<(f64, f64, MetricField)> {
        let h = perturbed_metric(mesh, g, delta, c)?;
        let comp = composite_metric(g, &h, mesh)?;
        let sh = StiffnessSystem::assemble(mesh, &comp.field)?.boundary_dn()?.form;
        Ok((comp.contrast, difference_norm(&calc, &sg, &sh)?, comp.field))
    };
    let inclusion: Vec<usize> = (0..mesh.triangle_count()).filter(|&t| mesh.regions()[t] == Region::Inclusion).collect();
    if inclusion.iter().all(|&t| delta.is_conformal_to(&g.get(t), 1e-12)) {
        let (_, norm, _) = norm_at(*scales.last().expect("nonempty"))?;
        let scale = sg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if norm > 1e-10 * scale.max(1.0) {
            return Err(LabError::Assembly(format!("conformal perturbation changed the DN map by {norm:e}")));
        }
        return Err(LabError::Conformal { norm });
    }
    let points = par_map(scales, |&c| norm_at(c)).into_iter().collect::<Result<Vec<_>>>()?;
    let contrasts: Vec<f64> = points.iter().map(|p| p.0).collect();
    if contrasts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::Domain("measured contrasts are not strictly increasing".into()));
    }
    let norms = points.iter().map(|p| p.1).collect();
    let (pairings, eps) = match pipeline {
        None => (None, None),
        Some(options) => {
            let ops = RungeOperators::new(mesh, g)?;
            let li = LiEvaluator::default();
            let eps: Vec<f64> = contrasts.iter().map(|c| c / options.eps_divisor).collect();
            let mut pairings = Vec::with_capacity(points.len());
            for (p, &e) in points.iter().zip(&eps) {
                pairings.push(if e > 0.0 { pipeline_pairing(mesh, &ops, &li, &p.2, e, options)? } else { 0.0 });
            }
            (Some(pairings), Some(eps))
        }
    };
    Ok(StabilityCurve { scales: scales.to_vec(), contrasts, norms, resolution: calc.len(), pairings, eps })
}

/// Linear lower bound `pairing >= C c - C' eps` with the smallest `C' >= 0` and largest `C`.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineBound {
    pub c: f64,
    pub c_prime: f64,
    pub holds: bool,
}

pub fn fit_pipeline_bound(curve: &StabilityCurve) -> Result<PipelineBound> {
    let (Some(p), Some(eps)) = (&curve.pairings, &curve.eps) else {
        return Err(LabError::Fit("curve was computed without the pipeline".into()));
    };
    let idx: Vec<usize> = (0..p.len()).filter(|&i| curve.contrasts[i] > 0.0).collect();
    if idx.is_empty() {
        return Err(LabError::Fit("no positive contrasts".into()));
    }
    let c_prime = idx.iter().map(|&i| (-p[i] / eps[i]).max(0.0)).fold(0.0, f64::max);
    let c = idx.iter().map(|&i| (p[i] + c_prime * eps[i]) / curve.contrasts[i]).fold(f64::INFINITY, f64::min);
    let holds = c > 0.0 && idx.iter().all(|&i| p[i] >= c * curve.contrasts[i] - c_prime * eps[i] - 1e-12);
    Ok(PipelineBound { c, c_prime, holds })
}

/// `contrast = C1 |ln norm|^{-1/C2}` fitted by least squares in log-log coordinates.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityFit {
    /// Least-squares prefactor.
    pub c1: f64,
    pub c2: f64,
    /// Smallest prefactor for which the inequality holds at every point.
    pub c1_envelope: f64,
    /// Root-mean-square residual of the log-log fit.
    pub residual: f64,
    /// Whether `contrast <= c1_envelope |ln norm|^{-1/c2}` at every point.
    pub holds: bool,
    pub points: usize,
}

impl StabilityFit {
    pub fn constants(&self) -> Result<FitConstants> {
        let mut c = FitConstants::default();
        c.set("C1", self.c1_envelope, "log stability envelope")?;
        c.set("C2", self.c2, "log stability fit")?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite floats serialise")
    }
}

pub fn log_stability_fit(curve: &StabilityCurve) -> Result<StabilityFit> {
    check_dim(curve.contrasts.len(), curve.norms.len())?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&c, &n) in curve.contrasts.iter().zip(&curve.norms) {
        if c <= 0.0 {
            continue;
        }
        if !(n > 0.0) {
            return Err(LabError::Fit(format!("zero DN difference at contrast {c}")));
        }
        if n >= 1.0 {
            return Err(LabError::Fit(format!("norm {n} at contrast {c} is not below 1")));
        }
        xs.push((-n.ln()).ln());
        ys.push(c.ln());
    }
    if xs.len() < 4 {
        return Err(LabError::Fit(format!("need at least 4 points with positive contrast, got {}", xs.len())));
    }
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(LabError::Fit("norms do not vary".into()));
    }
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(LabError::Fit(format!("contrast does not decrease in |ln norm| (slope {slope})")));
    }
    let intercept = my - slope * mx;
    let residual = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    let c2 = -1.0 / slope;
    let c1 = intercept.exp();
    let envelope_log = xs.iter().zip(&ys).map(|(x, y)| y - slope * x).fold(f64::NEG_INFINITY, f64::max);
    let c1_envelope = envelope_log.exp().max(c1);
    let holds = xs.iter().zip(&ys).all(|(x, y)| *y <= c1_envelope.ln() + slope * x + 1e-12);
    Ok(StabilityFit { c1, c2, c1_envelope, residual, holds, points: xs.len() })
}

/// Curve generated exactly from `contrast = c1 |ln norm|^{-1/c2}`.
pub fn synthetic_stability_curve(c1: f64, c2: f64, contrasts: &[f64]) -> StabilityCurve {
    let norms = contrasts.iter().map(|&c| (-(c1 / c).powf(c2)).exp()).collect();
    StabilityCurve {
        scales: contrasts.to_vec(),
        contrasts: contrasts.to_vec(),
        norms,
        resolution: 0,
        pairings: None,
        eps: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::DiskBuilder;

    #[test]
    fn cutoff_profile() {
        let s = ProbeSpec::new([0.0, 0.0], [40.0, 0.0], 0.5).unwrap();
        assert_eq!(s.cutoff(0.0), 1.0);
        assert_eq!(s.cutoff(0.125), 1.0);
        assert_eq!(s.cutoff(0.375), 0.0);
        assert_eq!(s.cutoff(0.49), 0.0);
        assert!((s.cutoff(0.25) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_frequency_is_rejected() {
        assert!(ProbeSpec::new([0.0, 0.0], [0.0, 0.0], 0.5).is_err());
        assert!(ProbeSpec::new([0.0, 0.0], [2.0, 0.0], 0.5).is_err());
    }

    #[test]
    fn probe_vanishes_outside_support() {
        let mesh = reference_probe_patch(0.02).unwrap();
        let g = MetricField::euclidean(&mesh);
        let spec = ProbeSpec::new([0.0, 1.0], [30.0, 0.0], 0.5).unwrap();
        let p = oscillating_probe(&spec, &mesh, &g, 0).unwrap();
        let pts = mesh.loop_points(0).unwrap();
        for (i, q) in pts.iter().enumerate() {
            if q[0].hypot(q[1] - 1.0) >= 0.5 {
                assert_eq!(p.u[i], 0.0);
                assert_eq!(p.v[i], 0.0);
            }
        }
        let calc = BoundaryCalculus::for_mesh_loop(&mesh, &g, 0).unwrap();
        assert!((calc.hs_norm(&p.u, 0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn overflowing_support_is_a_geometry_error() {
        let mesh = DiskBuilder::new(1.0, 32).build().unwrap();
        let g = MetricField::euclidean(&mesh);
        let spec = ProbeSpec::new([1.0, 0.0], [10.0, 10.0], 3.0).unwrap();
        assert!(matches!(oscillating_probe(&spec, &mesh, &g, 0), Err(LabError::Geometry(_))));
    }

    #[test]
    fn equal_metrics_pair_to_zero() {
        let mesh = reference_probe_patch(0.04).unwrap();
        let g = MetricField::euclidean(&mesh);
        let spec = ProbeSpec::new([0.0, 1.0], [20.0, 0.0], 0.5).unwrap();
        let e = contrast_lower_bound_estimate(&mesh, &g, &g, &spec, 0).unwrap();
        assert!(e.pairing.abs() < 1e-10);
        assert!((e.ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn synthetic_fit_recovers_constants() {
        let curve = synthetic_stability_curve(1.0, 2.0, &[0.05, 0.1, 0.2, 0.4, 0.8]);
        let fit = log_stability_fit(&curve).unwrap();
        assert!((fit.c1 - 1.0).abs() < 1e-9 && (fit.c2 - 2.0).abs() < 1e-9, "{fit:?}");
        assert!(fit.holds);
    }

    #[test]
    fn degenerate_curves_are_rejected() {
        let mut curve = synthetic_stability_curve(1.0, 2.0, &[0.05, 0.1, 0.2, 0.4, 0.8]);
        curve.norms[2] = 0.0;
        assert!(log_stability_fit(&curve).is_err());
        let short = synthetic_stability_curve(1.0, 2.0, &[0.1, 0.2, 0.4]);
        assert!(log_stability_fit(&short).is_err());
    }
}
