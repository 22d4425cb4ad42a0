//! Shrinking families of domains obtained by radially morphing a fixed mesh.
//!
//! A profile `rho(t, theta)` moves every node `x` to `rho(t, arg x) x`. On the
//! outer loop this is the boundary map `phi_t`; the normal speed, tangential
//! drift and volume derivative along the loop are evaluated from analytic
//! derivatives of the profile.

use std::f64::consts::PI;

use super::builders::Inclusion;
use super::mesh::{Point, TriMesh};
use super::metric::Sym2;
use crate::error::{LabError, Result};

/// Shape of the morph. All profiles satisfy `rho(0, theta) = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    /// No motion; rejected as non-transversal.
    Identity,
    /// `rho = 1 - rate t`.
    LinearShrink { rate: f64 },
    /// `rho = exp(-rate t)`.
    ExponentialShrink { rate: f64 },
    /// `rho = 1 - t (rate + amplitude cos(mode theta))`.
    Wobble { rate: f64, amplitude: f64, mode: u32 },
    /// Uniform shrink by `base_shrink` with a smooth notch reaching toward an inclusion.
    Tentacle(Tentacle),
}

/// A notch that brings the final boundary within `gap` of the inclusion near
/// the point of the inclusion boundary closest to the outer circle.
#[derive(Debug, Clone, PartialEq)]
pub struct Tentacle {
    pub inclusion: Inclusion,
    /// Radius of the outer loop being morphed.
    pub outer_radius: f64,
    /// Radius of the ball around the target point that the notch must reach.
    pub reach: f64,
    pub gap: f64,
    pub base_shrink: f64,
    direction: f64,
    core: f64,
    transition: f64,
}

impl Tentacle {
    /// Notch toward the inclusion point farthest from the origin, covering the
    /// arc of the inclusion boundary within distance `reach` of that point.
    pub fn toward(inclusion: Inclusion, outer_radius: f64, reach: f64, base_shrink: f64) -> Result<Self> {
        let c = inclusion.center;
        let dc = (c[0] * c[0] + c[1] * c[1]).sqrt();
        if dc <= inclusion.radius {
            return Err(LabError::Geometry("tentacle target requires an inclusion away from the origin".into()));
        }
        if !(reach > 0.0 && reach <= 0.5 * inclusion.radius) {
            return Err(LabError::Geometry("tentacle reach must lie in (0, inclusion radius / 2]".into()));
        }
        let direction = c[1].atan2(c[0]);
        // largest angular offset of the arc of the inclusion boundary within `reach` of the target
        let phi = 2.0 * (reach / (2.0 * inclusion.radius)).asin();
        let arc_point = [
            c[0] + inclusion.radius * (direction + phi).cos(),
            c[1] + inclusion.radius * (direction + phi).sin(),
        ];
        let core = angle_diff(arc_point[1].atan2(arc_point[0]), direction).abs() * 1.05;
        let limit = (inclusion.radius / dc).asin();
        let transition = core.min(0.9 * limit - core);
        if transition <= 0.0 {
            return Err(LabError::Geometry("tentacle window does not fit inside the inclusion's shadow".into()));
        }
        let t = Self { inclusion, outer_radius, reach, gap: reach / 8.0, base_shrink, direction, core, transition };
        let q_min = (0..720)
            .map(|k| {
                let th = 2.0 * PI * k as f64 / 720.0;
                t.final_radius(th) - t.shadow_radius(th).unwrap_or(0.0)
            })
            .fold(f64::INFINITY, f64::min);
        if q_min < 0.5 * t.gap {
            return Err(LabError::Geometry("tentacle profile would cross the inclusion".into()));
        }
        if !(base_shrink > 0.0 && base_shrink < 1.0) {
            return Err(LabError::Geometry("base shrink must lie in (0, 1)".into()));
        }
        Ok(t)
    }

    /// Outer intersection of the ray at angle `theta` with the inclusion circle.
    fn shadow_radius(&self, theta: f64) -> Option<f64> {
        let c = self.inclusion.center;
        let b = c[0] * theta.cos() + c[1] * theta.sin();
        let disc = b * b - (c[0] * c[0] + c[1] * c[1]) + self.inclusion.radius.powi(2);
        (disc >= 0.0 && b > 0.0).then(|| b + disc.sqrt())
    }

    fn window(&self, theta: f64) -> f64 {
        let d = angle_diff(theta, self.direction).abs();
        if d <= self.core {
            1.0
        } else if d >= self.core + self.transition {
            0.0
        } else {
            smooth_step(1.0 - (d - self.core) / self.transition)
        }
    }

    /// Radius of the final (t = 1) boundary at angle `theta`.
    pub fn final_radius(&self, theta: f64) -> f64 {
        let base = self.outer_radius * (1.0 - self.base_shrink);
        let w = self.window(theta);
        if w == 0.0 {
            return base;
        }
        let tip = self.shadow_radius(theta).map_or(base, |r| (r + self.gap).min(base));
        base + w * (tip - base)
    }

    /// Angles of the core window, where the final boundary tracks the inclusion.
    pub fn core_window(&self) -> (f64, f64) {
        (self.direction - self.core, self.direction + self.core)
    }

    /// Target point on the inclusion boundary.
    pub fn target(&self) -> Point {
        let c = self.inclusion.center;
        let r = self.inclusion.radius;
        [c[0] + r * self.direction.cos(), c[1] + r * self.direction.sin()]
    }
}

fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    if d > PI {
        d - 2.0 * PI
    } else {
        d
    }
}

/// C-infinity step from 0 at `x <= 0` to 1 at `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    let f = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    let (a, b) = (f(x), f(1.0 - x));
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

/// Profile value with the derivatives used by the boundary fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct ProfileJet {
    pub rho: f64,
    pub rho_t: f64,
    pub rho_th: f64,
    pub rho_thth: f64,
    pub rho_tth: f64,
}

impl Profile {
    pub fn jet(&self, t: f64, th: f64) -> ProfileJet {
        match self {
            Profile::Identity => ProfileJet { rho: 1.0, ..Default::default() },
            Profile::LinearShrink { rate } => ProfileJet { rho: 1.0 - rate * t, rho_t: -rate, ..Default::default() },
            Profile::ExponentialShrink { rate } => {
                let e = (-rate * t).exp();
                ProfileJet { rho: e, rho_t: -rate * e, ..Default::default() }
            }
            Profile::Wobble { rate, amplitude, mode } => {
                let m = *mode as f64;
                let (s, c) = (m * th).sin_cos();
                ProfileJet {
                    rho: 1.0 - t * (rate + amplitude * c),
                    rho_t: -(rate + amplitude * c),
                    rho_th: t * amplitude * m * s,
                    rho_thth: t * amplitude * m * m * c,
                    rho_tth: amplitude * m * s,
                }
            }
            Profile::Tentacle(tn) => {
                let q = |a: f64| tn.final_radius(a) / tn.outer_radius;
                let h = 1e-3;
                let (q0, qp, qm, qpp, qmm) = (q(th), q(th + h), q(th - h), q(th + 2.0 * h), q(th - 2.0 * h));
                let d1 = (8.0 * (qp - qm) - (qpp - qmm)) / (12.0 * h);
                let d2 = (-qpp + 16.0 * qp - 30.0 * q0 + 16.0 * qm - qmm) / (12.0 * h * h);
                ProfileJet { rho: 1.0 - t * (1.0 - q0), rho_t: -(1.0 - q0), rho_th: t * d1, rho_thth: t * d2, rho_tth: d1 }
            }
        }
    }
}

/// Boundary fields of one level, indexed like the outer loop of the base mesh.
#[derive(Debug, Clone)]
pub struct LevelFields {
    pub t: f64,
    /// Normal speed `-g(d phi/dt, nu)`; positive for shrinking families.
    pub eta: Vec<f64>,
    /// Coefficient `a` of the tangential drift `X = a d/d theta`.
    pub drift: Vec<f64>,
    /// `d/dt log |d phi / d theta|_g`.
    pub gamma: Vec<f64>,
    /// `(1/w) d/d theta (w a)` with `w = |d phi/d theta|_g`.
    pub div_drift: Vec<f64>,
    /// `|d phi / d theta|_g`.
    pub speed: Vec<f64>,
}

/// The morphed meshes `Sigma_{t_k}` with their boundary fields.
#[derive(Debug, Clone)]
pub struct NestedFamily {
    pub metric: Sym2,
    pub profile: Profile,
    pub times: Vec<f64>,
    pub levels: Vec<TriMesh>,
    pub fields: Vec<LevelFields>,
    /// Polar angle of every outer-loop node of the base mesh.
    pub theta: Vec<f64>,
    pub base_radius: f64,
}

impl NestedFamily {
    pub fn level_count(&self) -> usize {
        self.levels.len()
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    /// Smallest normal speed over all levels and nodes.
    pub fn min_eta(&self) -> f64 {
        self.fields.iter().flat_map(|f| f.eta.iter().copied()).fold(f64::INFINITY, f64::min)
    }
}

/// Builds `levels + 1` meshes at `t_k = k / levels` for a constant metric `metric`.
/// The outer loop of the base mesh must be a circle centered at the origin.
pub fn nested_family(mesh: &TriMesh, metric: Sym2, levels: usize, profile: Profile) -> Result<NestedFamily> {
    nested_family_on(mesh, metric, levels, 1.0, profile)
}

/// As [`nested_family`] with times `t_k = k t_end / levels`.
pub fn nested_family_on(mesh: &TriMesh, metric: Sym2, levels: usize, t_end: f64, profile: Profile) -> Result<NestedFamily> {
    if levels == 0 {
        return Err(LabError::Geometry("a family needs at least one level".into()));
    }
    if !metric.is_spd() {
        return Err(LabError::Metric("family metric must be positive definite".into()));
    }
    let outer = mesh.loop_nodes(0)?;
    let radii: Vec<f64> = outer.iter().map(|&v| norm(mesh.nodes()[v])).collect();
    let base_radius = radii.iter().sum::<f64>() / radii.len() as f64;
    if radii.iter().any(|r| (r - base_radius).abs() > 1e-9 * base_radius) {
        return Err(LabError::Geometry("nested families require a circular outer loop centered at the origin".into()));
    }
    let theta: Vec<f64> = outer.iter().map(|&v| mesh.nodes()[v][1].atan2(mesh.nodes()[v][0])).collect();
    let times: Vec<f64> = (0..=levels).map(|k| t_end * k as f64 / levels as f64).collect();
    let mut meshes = Vec::with_capacity(times.len());
    let mut fields = Vec::with_capacity(times.len());
    for &t in &times {
        let (level, f) = morph(mesh, metric, &profile, base_radius, &theta, t)?;
        meshes.push(level);
        fields.push(f);
    }
    let family = NestedFamily { metric, profile, times, levels: meshes, fields, theta, base_radius };
    let c = family.min_eta();
    if !(c > 1e-12) {
        return Err(LabError::Transversality(format!("minimum normal speed {c:e} is not positive")));
    }
    Ok(family)
}

fn morph(mesh: &TriMesh, metric: Sym2, profile: &Profile, r0: f64, theta: &[f64], t: f64) -> Result<(TriMesh, LevelFields)> {
    let fields = level_fields(profile, metric, r0, theta, t);
    if t == 0.0 {
        return Ok((mesh.clone(), fields));
    }
    let nodes: Vec<Point> = mesh
        .nodes()
        .iter()
        .map(|p| {
            let rho = profile.jet(t, p[1].atan2(p[0])).rho;
            [rho * p[0], rho * p[1]]
        })
        .collect();
    let level = TriMesh::new(nodes, mesh.triangles().to_vec(), mesh.regions().to_vec())
        .map_err(|e| LabError::Geometry(format!("morph at t = {t} is not a valid mesh: {e}")))?;
    if level.loop_nodes(0)? != mesh.loop_nodes(0)? {
        return Err(LabError::Geometry(format!("morph at t = {t} reorders the outer loop")));
    }
    Ok((level, fields))
}

impl NestedFamily {
    /// Morph of the base mesh at an arbitrary time, with its boundary fields.
    pub fn level_at(&self, t: f64) -> Result<(TriMesh, LevelFields)> {
        morph(&self.levels[0], self.metric, &self.profile, self.base_radius, &self.theta, t)
    }
}

fn norm(p: Point) -> f64 {
    (p[0] * p[0] + p[1] * p[1]).sqrt()
}

fn level_fields(profile: &Profile, g: Sym2, r0: f64, theta: &[f64], t: f64) -> LevelFields {
    let n = theta.len();
    let mut f = LevelFields {
        t,
        eta: vec![0.0; n],
        drift: vec![0.0; n],
        gamma: vec![0.0; n],
        div_drift: vec![0.0; n],
        speed: vec![0.0; n],
    };
    let ginv = g.inverse();
    for (i, &th) in theta.iter().enumerate() {
        let j = profile.jet(t, th);
        let (r, r_t, r_th, r_thth, r_tth) = (r0 * j.rho, r0 * j.rho_t, r0 * j.rho_th, r0 * j.rho_thth, r0 * j.rho_tth);
        let er = [th.cos(), th.sin()];
        let et = [-th.sin(), th.cos()];
        let comb = |a: f64, b: f64| [a * er[0] + b * et[0], a * er[1] + b * et[1]];
        let phi_t = comb(r_t, 0.0);
        let phi_th = comb(r_th, r);
        let phi_thth = comb(r_thth - r, 2.0 * r_th);
        let phi_tth = comb(r_tth, r_t);
        // covector annihilating the tangent, oriented outward
        let omega = [phi_th[1], -phi_th[0]];
        let w2 = g.inner(phi_th, phi_th);
        let w = w2.sqrt();
        f.eta[i] = -(omega[0] * phi_t[0] + omega[1] * phi_t[1]) / ginv.norm(omega);
        let a = g.inner(phi_t, phi_th) / w2;
        f.drift[i] = a;
        f.gamma[i] = g.inner(phi_th, phi_tth) / w2;
        f.div_drift[i] = (g.inner(phi_tth, phi_th) + g.inner(phi_t, phi_thth) - a * g.inner(phi_th, phi_thth)) / w2;
        f.speed[i] = w;
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::builders::build_disk;

    #[test]
    fn identity_profile_is_not_transversal() {
        let m = build_disk(1.0, 32).unwrap();
        let err = nested_family(&m, Sym2::IDENTITY, 1, Profile::Identity).unwrap_err();
        assert!(matches!(err, LabError::Transversality(_)));
    }

    #[test]
    fn uniform_shrink_fields() {
        let m = build_disk(1.0, 32).unwrap();
        let fam = nested_family(&m, Sym2::IDENTITY, 4, Profile::LinearShrink { rate: 0.5 }).unwrap();
        for (k, f) in fam.fields.iter().enumerate() {
            let rho = 1.0 - 0.5 * fam.times[k];
            for i in 0..32 {
                assert!((f.eta[i] - 0.5).abs() < 1e-14);
                assert!(f.drift[i].abs() < 1e-14);
                assert!((f.gamma[i] + 0.5 / rho).abs() < 1e-14);
                assert!(f.div_drift[i].abs() < 1e-14);
            }
        }
        assert_eq!(fam.levels[0].nodes(), m.nodes());
    }

    #[test]
    fn wobble_divergence_matches_finite_differences() {
        let p = Profile::Wobble { rate: 0.3, amplitude: 0.1, mode: 2 };
        let g = Sym2::new(1.2, 0.1, 0.9);
        let d = 1e-5;
        for k in 0..40 {
            let th = 0.157 * k as f64;
            let f = level_fields(&p, g, 1.0, &[th - d, th, th + d], 0.7);
            let wa = |i: usize| f.speed[i] * f.drift[i];
            let fd = (wa(2) - wa(0)) / (2.0 * d) / f.speed[1];
            assert!((fd - f.div_drift[1]).abs() < 1e-7, "{fd} vs {}", f.div_drift[1]);
            let ft = level_fields(&p, g, 1.0, &[th], 0.7 + d);
            let fb = level_fields(&p, g, 1.0, &[th], 0.7 - d);
            let gamma = (ft.speed[0].ln() - fb.speed[0].ln()) / (2.0 * d);
            assert!((gamma - f.gamma[1]).abs() < 1e-7);
        }
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-1.0), 0.0);
        assert_eq!(smooth_step(2.0), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }
}
