//! Browser bindings: DN spectra with an anisotropic inclusion, harmonic extensions
//! for drawing, and the recurrence against its logarithmic-integral bounds.

use wasm_bindgen::prelude::*;

use dnlab_core::dn::{LoopCondition, StiffnessSystem};
use dnlab_core::geometry::{build_disk, MetricField, Sym2};
use dnlab_core::identities::{reference_inclusion_mesh, reference_metrics};
use dnlab_core::runge::{li_bound_curve, recurrence_sandwich_check, recurrence_simulate, LiEvaluator};
use dnlab_core::Result;

/// Rows of the recurrence table returned to the page.
pub const RECURRENCE_SAMPLES: usize = 200;

/// DN eigenvalues of the unit disk whose inclusion carries `h`, ascending.
pub fn inclusion_spectrum(resolution: usize, h: Sym2) -> Result<Vec<f64>> {
    let mesh = reference_inclusion_mesh(resolution)?;
    let (_, metric) = reference_metrics(&mesh, h)?;
    Ok(StiffnessSystem::assemble(&mesh, &metric)?.boundary_dn()?.eigenvalues())
}

/// Triangles of the unit disk as `x0, y0, u0, x1, y1, u1, x2, y2, u2` with `u` the
/// harmonic extension of `cos(mode theta)`.
pub fn harmonic_triangles(resolution: usize, mode: u32) -> Result<Vec<f64>> {
    let mesh = build_disk(1.0, resolution)?;
    let sys = StiffnessSystem::assemble(&mesh, &MetricField::euclidean(&mesh))?;
    let f: Vec<f64> = mesh.loop_points(0)?.iter().map(|p| (mode as f64 * p[1].atan2(p[0])).cos()).collect();
    let u = sys.extend_from_loop(0, &f, LoopCondition::Zero)?.values;
    let nodes = mesh.nodes();
    let mut out = Vec::with_capacity(9 * mesh.triangle_count());
    for tri in mesh.triangles() {
        for &v in tri {
            out.extend_from_slice(&[nodes[v][0], nodes[v][1], u[v]]);
        }
    }
    Ok(out)
}

/// `k, s_k, lower_k` at about [`RECURRENCE_SAMPLES`] steps, then a final row
/// `steps, pass, min_lower_margin`.
pub fn recurrence_table(sigma0: f64, c: f64, steps: usize) -> Result<Vec<f64>> {
    let li = LiEvaluator::default();
    let report = recurrence_sandwich_check(&li, sigma0, c, steps)?;
    let s = recurrence_simulate(sigma0, c, steps)?.values;
    let lower = li_bound_curve(&li, sigma0, c, steps)?;
    let stride = (steps / RECURRENCE_SAMPLES).max(1);
    let mut out = Vec::new();
    for k in (0..=steps).step_by(stride) {
        out.extend_from_slice(&[k as f64, s[k], lower[k]]);
    }
    out.extend_from_slice(&[steps as f64, if report.pass { 1.0 } else { 0.0 }, report.min_lower_margin]);
    Ok(out)
}

fn js<T>(r: Result<T>) -> std::result::Result<T, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn dn_spectrum(resolution: usize, h11: f64, h12: f64, h22: f64) -> std::result::Result<Vec<f64>, JsError> {
    js(inclusion_spectrum(resolution, Sym2::new(h11, h12, h22)))
}

#[wasm_bindgen]
pub fn harmonic_field(resolution: usize, mode: u32) -> std::result::Result<Vec<f64>, JsError> {
    js(harmonic_triangles(resolution, mode))
}

#[wasm_bindgen]
pub fn recurrence(sigma0: f64, c: f64, steps: usize) -> std::result::Result<Vec<f64>, JsError> {
    js(recurrence_table(sigma0, c, steps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_inclusion_leaves_the_disk_spectrum() {
        let e = inclusion_spectrum(48, Sym2::IDENTITY).unwrap();
        assert!(e[0].abs() < 1e-10);
        assert!((0.5 * (e[1] + e[2]) - 1.0).abs() < 0.01);
    }

    #[test]
    fn conformal_inclusion_is_invisible() {
        let a = inclusion_spectrum(32, Sym2::IDENTITY).unwrap();
        let b = inclusion_spectrum(32, Sym2::diag(3.0, 3.0)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x));
        }
    }

    #[test]
    fn field_has_nine_numbers_per_triangle() {
        let t = harmonic_triangles(24, 2).unwrap();
        assert_eq!(t.len() % 9, 0);
        assert!(t.chunks(3).all(|c| c[2].abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn recurrence_ends_with_a_verdict() {
        let t = recurrence_table(4.0, 1.0, 1000).unwrap();
        let tail = &t[t.len() - 3..];
        assert_eq!(tail[0], 1000.0);
        assert_eq!(tail[1], 1.0);
        assert!(recurrence_table(3.0, 1.0, 10).is_err());
    }
}
