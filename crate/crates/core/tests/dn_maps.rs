use proptest::prelude::*;

use dnlab_core::dn::{DnKind, DnOperator, LoopCondition, StiffnessSystem};
use dnlab_core::geometry::{build_annulus, build_disk, MetricField, Sym2, TriMesh};
use dnlab_core::identities::reference_inclusion_mesh;

fn angle_mode(mesh: &TriMesh, l: usize, k: f64) -> Vec<f64> {
    mesh.loop_points(l).unwrap().iter().map(|p| (k * p[1].atan2(p[0])).cos()).collect()
}

fn outer_loop(mesh: &TriMesh) -> usize {
    let r = |l: usize| mesh.loop_points(l).unwrap()[0][0].hypot(mesh.loop_points(l).unwrap()[0][1]);
    (0..mesh.loop_count()).max_by(|&a, &b| r(a).total_cmp(&r(b))).unwrap()
}

#[test]
fn disk_spectrum_pairs_with_frequencies() {
    let m = build_disk(1.0, 128).unwrap();
    let e = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap().boundary_dn().unwrap().eigenvalues();
    assert!(e[0].abs() < 1e-10);
    for k in 1..=5 {
        let pair = 0.5 * (e[2 * k - 1] + e[2 * k]);
        assert!((pair - k as f64).abs() < 0.01 * k as f64, "{k}: {pair}");
    }
}

#[test]
fn annulus_modes_match_separated_solutions() {
    let a: f64 = 0.5;
    let m = build_annulus(a, 1.0, 128).unwrap();
    let s = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap();
    let outer = outer_loop(&m);
    let grounded = s.dn_map(&[outer], LoopCondition::Zero, DnKind::Mixed).unwrap();
    let insulated = s.dn_map(&[outer], LoopCondition::Free, DnKind::Mixed).unwrap();
    for k in 1..=4 {
        let q = a.powi(2 * k);
        let f = angle_mode(&m, outer, k as f64);
        let kf = k as f64;
        let zero = grounded.rayleigh(&f).unwrap();
        let free = insulated.rayleigh(&f).unwrap();
        assert!((zero - kf * (1.0 + q) / (1.0 - q)).abs() < 0.01 * kf, "{k}: {zero}");
        assert!((free - kf * (1.0 - q) / (1.0 + q)).abs() < 0.01 * kf, "{k}: {free}");
    }
}

#[test]
fn csv_export_round_trips() {
    let m = build_disk(1.0, 24).unwrap();
    let dn = StiffnessSystem::assemble(&m, &MetricField::euclidean(&m)).unwrap().boundary_dn().unwrap();
    let back = DnOperator::matrix_from_csv(&dn.to_csv()).unwrap();
    assert!((back - dn.operator()).amax() < 1e-12);
}

fn random_metric(mesh: &TriMesh, seeds: &[(f64, f64, f64)]) -> MetricField {
    let values = (0..mesh.triangle_count())
        .map(|t| {
            let (a, b, c) = seeds[t % seeds.len()];
            Sym2::new(a, b * (a * c).sqrt(), c)
        })
        .collect();
    MetricField::new(values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dn_form_is_symmetric_psd_with_constant_kernel(seeds in prop::collection::vec((0.2f64..5.0, -0.6f64..0.6, 0.2f64..5.0), 1..12)) {
        let m = reference_inclusion_mesh(24).unwrap();
        let g = random_metric(&m, &seeds);
        let dn = StiffnessSystem::assemble(&m, &g).unwrap().boundary_dn().unwrap();
        prop_assert!(dn.mass_asymmetry() < 1e-10);
        let ones = vec![1.0; dn.len()];
        prop_assert!(dn.apply(&ones).unwrap().iter().all(|v| v.abs() < 1e-9));
        let e = dn.eigenvalues();
        prop_assert!(e[0] > -1e-9 * e.last().unwrap());
    }

    #[test]
    fn dn_form_ignores_conformal_factors(
        seeds in prop::collection::vec((0.2f64..5.0, -0.6f64..0.6, 0.2f64..5.0), 1..8),
        factors in prop::collection::vec(0.05f64..20.0, 1..30),
    ) {
        let m = reference_inclusion_mesh(24).unwrap();
        let g = random_metric(&m, &seeds);
        let c: Vec<f64> = (0..m.triangle_count()).map(|t| factors[t % factors.len()]).collect();
        let a = StiffnessSystem::assemble(&m, &g).unwrap().boundary_dn().unwrap().form;
        let b = StiffnessSystem::assemble(&m, &g.conformal_scale(&c).unwrap()).unwrap().boundary_dn().unwrap().form;
        prop_assert!((&a - &b).amax() <= 1e-10 * a.amax());
    }
}
