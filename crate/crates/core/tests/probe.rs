use proptest::prelude::*;

use dnlab_core::geometry::{MetricField, Sym2};
use dnlab_core::identities::reference_inclusion_mesh;
use dnlab_core::probe::{
    local_metric, log_stability_fit, oscillating_probe, perturbed_metric, probe_response, reference_probe_patch,
    stability_sweep, synthetic_stability_curve, ProbeSpec, StabilityCurve,
};
use dnlab_core::sobolev::BoundaryCalculus;
use dnlab_core::LabError;

#[test]
fn low_frequency_probes_are_rejected() {
    assert!(ProbeSpec::new([0.0, 1.0], [4.0, 0.0], 1.0).is_err());
    assert!(ProbeSpec::new([0.0, 1.0], [0.0, 0.0], 1.0).is_err());
    assert!(ProbeSpec::new([0.0, 1.0], [10.0, 0.0], 0.5).is_ok());
}

#[test]
fn probe_energy_concentrates_near_its_center() {
    let mesh = reference_probe_patch(0.01).unwrap();
    let g = MetricField::euclidean(&mesh);
    let calc = BoundaryCalculus::for_mesh_loop(&mesh, &g, 0).unwrap();
    let pts = mesh.loop_points(0).unwrap();
    let spec = ProbeSpec::new([0.0, 1.0], [40.0, 0.0], 0.5).unwrap();
    let p = oscillating_probe(&spec, &mesh, &g, 0).unwrap();
    assert!(p.energy_fraction_within(&pts, &calc, 0.25).unwrap() >= 0.9);
}

#[test]
fn response_fades_as_the_probe_leaves_the_inclusion() {
    let mesh = reference_probe_patch(0.01).unwrap();
    let g = MetricField::euclidean(&mesh);
    let h = local_metric(&mesh, &g, Sym2::diag(4.0, 1.0), [0.0, 1.0], 0.3).unwrap();
    let mut last = f64::INFINITY;
    for d in [0.1f64, 0.2, 0.3, 0.4, 0.5] {
        let spec = ProbeSpec::new([d.sin(), d.cos()], [40.0 * d.cos(), -40.0 * d.sin()], 0.3).unwrap();
        let r = probe_response(&mesh, &g, &h, &spec, 0).unwrap().boundary_pairing;
        assert!(r < last, "{d}: {r}");
        last = r;
    }
    assert!(last.abs() < 1e-2);
}

#[test]
fn conformal_direction_is_rejected() {
    let mesh = reference_inclusion_mesh(32).unwrap();
    let g = MetricField::euclidean(&mesh);
    let err = stability_sweep(&mesh, &g, Sym2::diag(1.0, 1.0), &[0.1, 0.2], None).unwrap_err();
    assert!(matches!(err, LabError::Conformal { norm } if norm <= 1e-10));
}

#[test]
fn sweep_csv_has_one_row_per_scale() {
    let mesh = reference_inclusion_mesh(32).unwrap();
    let g = MetricField::euclidean(&mesh);
    let curve = stability_sweep(&mesh, &g, Sym2::diag(1.0, -0.5), &[0.0, 0.1, 0.2], None).unwrap();
    let csv = curve.to_csv();
    assert!(csv.starts_with("contrast,opnorm,resolution,pairing\n"));
    assert_eq!(csv.lines().count(), 4);
    assert_eq!(curve.norms[0], 0.0);
}

#[test]
fn fit_rejects_too_few_points() {
    let c = synthetic_stability_curve(1.0, 2.0, &[0.1, 0.2, 0.3]);
    assert!(matches!(log_stability_fit(&c), Err(LabError::Fit(_))));
}

fn permuted(curve: &StabilityCurve, order: &[usize]) -> StabilityCurve {
    let mut c = curve.clone();
    c.contrasts = order.iter().map(|&i| curve.contrasts[i]).collect();
    c.norms = order.iter().map(|&i| curve.norms[i]).collect();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn weak_pairing_is_antisymmetric(a in 0.3f64..4.0, c in 0.3f64..4.0, k in 10.0f64..30.0) {
        let mesh = reference_inclusion_mesh(48).unwrap();
        let g = MetricField::euclidean(&mesh);
        let h = perturbed_metric(&mesh, &g, Sym2::diag(a - 1.0, c - 1.0), 1.0).unwrap();
        let spec = ProbeSpec::new([1.0, 0.0], [0.0, k], 0.6).unwrap();
        let gh = probe_response(&mesh, &g, &h, &spec, 0).unwrap().pairing;
        let hg = probe_response(&mesh, &h, &g, &spec, 0).unwrap().pairing;
        prop_assert!((gh + hg).abs() <= 1e-10 * (1.0 + gh.abs()));
    }

    #[test]
    fn sweep_norms_increase_with_contrast(a in 0.2f64..1.0, b in -0.9f64..-0.2) {
        let mesh = reference_inclusion_mesh(32).unwrap();
        let g = MetricField::euclidean(&mesh);
        let curve = stability_sweep(&mesh, &g, Sym2::diag(a, b), &[0.05, 0.1, 0.2, 0.4, 0.8], None).unwrap();
        prop_assert!(curve.strictly_increasing(), "{:?}", curve.norms);
    }

    #[test]
    fn synthetic_constants_are_recovered(c1 in 0.2f64..3.0, c2 in 0.5f64..4.0) {
        let curve = synthetic_stability_curve(c1, c2, &[0.05, 0.1, 0.2, 0.4, 0.8]);
        prop_assume!(curve.norms.iter().all(|&n| n > 1e-300 && n < 1.0));
        let fit = log_stability_fit(&curve).unwrap();
        prop_assert!((fit.c1 - c1).abs() < 1e-6 * c1 && (fit.c2 - c2).abs() < 1e-6 * c2);
        prop_assert!(fit.holds);
    }

    #[test]
    fn fit_ignores_point_order(order in Just((0..5).collect::<Vec<usize>>()).prop_shuffle()) {
        let mesh = reference_inclusion_mesh(32).unwrap();
        let g = MetricField::euclidean(&mesh);
        let curve = stability_sweep(&mesh, &g, Sym2::diag(1.0, -0.5), &[0.05, 0.1, 0.2, 0.4, 0.8], None).unwrap();
        let a = log_stability_fit(&curve).unwrap();
        let b = log_stability_fit(&permuted(&curve, &order)).unwrap();
        prop_assert!((a.c1 - b.c1).abs() < 1e-9 * a.c1 && (a.c2 - b.c2).abs() < 1e-9 * a.c2);
        prop_assert!((a.c1_envelope - b.c1_envelope).abs() < 1e-9 * a.c1_envelope);
    }
}
