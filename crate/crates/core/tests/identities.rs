use proptest::prelude::*;

use dnlab_core::geometry::Sym2;
use dnlab_core::identities::{
    comparison_map_residual, difference_formula_residual, reference_inclusion_mesh, reference_metrics,
    symbol_remainder_check, transmission_residual, verify_identities, PairOperators, SymbolGeometry,
};

#[test]
fn suite_passes_at_two_resolutions() {
    for res in [32, 48] {
        let reports = verify_identities(res, 10, 1, 1e-9).unwrap();
        assert_eq!(reports.len(), 4);
        assert!(reports.iter().all(|r| r.pass), "{:?}", reports);
    }
}

#[test]
fn reports_serialise_as_json_lines() {
    let r = &verify_identities(32, 2, 1, 1e-9).unwrap()[0];
    let v: serde_json::Value = serde_json::from_str(&r.to_json_line()).unwrap();
    assert_eq!(v["resolution"], 32);
    assert!(v["rel"].as_f64().unwrap() >= 0.0);
}

#[test]
fn symbol_remainder_stays_bounded_under_refinement() {
    let r = symbol_remainder_check(SymbolGeometry::Disk, 0.5, &[32, 64, 128]).unwrap();
    assert!(r.stable, "{:?}", r.values);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn identities_hold_for_random_anisotropy(
        a in 0.3f64..4.0, b in -0.5f64..0.5, c in 0.3f64..4.0,
        u in prop::collection::vec(-1.0f64..1.0, 32),
        v in prop::collection::vec(-1.0f64..1.0, 32),
    ) {
        let m = reference_inclusion_mesh(32).unwrap();
        let (g, h) = reference_metrics(&m, Sym2::new(a, b * (a * c).sqrt(), c)).unwrap();
        prop_assert!(difference_formula_residual(&m, &g, &h, &u, &v).unwrap().rel < 1e-9);
        prop_assert!(comparison_map_residual(&m, &g, &h, &v).unwrap().rel < 1e-9);
        prop_assert!(transmission_residual(&m, &h, &u).unwrap().rel < 1e-9);
    }

    #[test]
    fn difference_is_antisymmetric_in_the_metrics(
        a in 0.3f64..4.0, c in 0.3f64..4.0,
        u in prop::collection::vec(-1.0f64..1.0, 32),
    ) {
        let m = reference_inclusion_mesh(32).unwrap();
        let (g, h) = reference_metrics(&m, Sym2::diag(a, c)).unwrap();
        let gh = PairOperators::new(&m, &g, &h).unwrap();
        let hg = PairOperators::new(&m, &h, &g).unwrap();
        let d1 = gh.g.full_dn.pairing(&u, &u).unwrap() - gh.h.full_dn.pairing(&u, &u).unwrap();
        let d2 = hg.g.full_dn.pairing(&u, &u).unwrap() - hg.h.full_dn.pairing(&u, &u).unwrap();
        prop_assert!((d1 + d2).abs() < 1e-12 * (1.0 + d1.abs()));
    }
}
