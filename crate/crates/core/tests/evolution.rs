use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use dnlab_core::evolution::{
    gronwall_bound, gronwall_fit, pullback_dn, rayleigh_slack, rayleigh_trace, tautological_residual, TraceOptions,
};
use dnlab_core::geometry::{build_disk, nested_family, NestedFamily, Profile, Sym2};

fn family(n: usize, levels: usize, profile: Profile) -> NestedFamily {
    nested_family(&build_disk(1.0, n).unwrap(), Sym2::IDENTITY, levels, profile).unwrap()
}

#[test]
fn uniform_shrink_rescales_the_disk_spectrum() {
    let fam = family(48, 4, Profile::LinearShrink { rate: 0.5 });
    let base = pullback_dn(&fam, 0).unwrap().dn.eigenvalues();
    let last = pullback_dn(&fam, 3).unwrap().dn.eigenvalues();
    let r = 1.0 - 0.5 * fam.times[3];
    for (a, b) in last.iter().zip(&base).skip(1).take(6) {
        assert!((a * r - b).abs() < 1e-9 * b, "{a} {b}");
    }
}

#[test]
fn transport_residual_shrinks_with_the_step() {
    let f = |fam: &NestedFamily| fam.theta.iter().map(|t| t.cos()).collect::<Vec<_>>();
    let coarse = family(48, 4, Profile::ExponentialShrink { rate: 0.5 });
    let fine = family(48, 8, Profile::ExponentialShrink { rate: 0.5 });
    let a = *tautological_residual(&coarse, &f(&coarse)).unwrap().residuals.last().unwrap();
    let b = *tautological_residual(&fine, &f(&fine)).unwrap().residuals.last().unwrap();
    assert!(a > 1.4 * b && a < 2.6 * b, "{a} {b}");
}

#[test]
fn traces_export_csv_and_respect_the_gronwall_envelope() {
    let fam = family(32, 6, Profile::Wobble { rate: 0.4, amplitude: 0.1, mode: 3 });
    let f: Vec<f64> = fam.theta.iter().map(|t| (2.0 * t).cos() + 0.3 * (5.0 * t).sin()).collect();
    let tr = rayleigh_trace(&fam, &f, TraceOptions::default()).unwrap();
    assert!(tr.to_csv().starts_with("t,lambda,norm_half,norm_one,bound_value\n"));
    assert_eq!(tr.to_csv().lines().count(), tr.times.len() + 1);
    let (c1, c2) = gronwall_fit(&[(&tr.times, &tr.lambda)]).unwrap();
    for (t, l) in tr.times.iter().zip(&tr.lambda) {
        assert!(gronwall_bound(*t, tr.lambda[0], c1, c2) >= l * (1.0 - 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn psd_rayleigh_slack_is_nonnegative(
        dim in 1usize..12,
        entries in prop::collection::vec(-1.0f64..1.0, 144),
        f in prop::collection::vec(-1.0f64..1.0, 12),
    ) {
        let g = DMatrix::from_fn(dim, dim, |i, j| entries[i * 12 + j]);
        let b = &g * g.transpose();
        let v = DVector::from_fn(dim, |i, _| f[i]);
        prop_assert!(rayleigh_slack(&b, &v) >= -1e-12);
    }
}
