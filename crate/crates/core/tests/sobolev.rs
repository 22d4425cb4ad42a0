use proptest::prelude::*;

use dnlab_core::sobolev::{BoundaryCalculus, PowerBase};

fn mode(n: usize, k: f64) -> Vec<f64> {
    (0..n).map(|j| (k * 2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()).collect()
}

#[test]
fn circle_laplacian_matches_polygon_spectrum() {
    let n = 64;
    let c = BoundaryCalculus::circle(n, 1.0).unwrap();
    let e = c.eigenvalues();
    assert_eq!(c.zero_modes(), 1);
    // lumped P1 on the inscribed polygon: (2 / h)^2 sin^2(pi k / n) with h = 2 sin(pi / n)
    let h = 2.0 * (std::f64::consts::PI / n as f64).sin();
    for k in 1..=6 {
        let exact = (2.0 / h * (std::f64::consts::PI * k as f64 / n as f64).sin()).powi(2);
        let pair = 0.5 * (e[2 * k - 1] + e[2 * k]);
        assert!((pair - exact).abs() < 1e-9 * exact, "{k}: {pair} vs {exact}");
    }
}

#[test]
fn pure_mode_norm_is_a_weighted_l2_norm() {
    let c = BoundaryCalculus::circle(96, 1.0).unwrap();
    let f = mode(96, 3.0);
    let l2 = c.hs_norm(&f, 0.0).unwrap();
    let lam = c.eigenvalues()[5];
    for s in [-1.0, -0.5, 0.5, 1.0] {
        let hs = c.hs_norm(&f, s).unwrap();
        assert!((hs - (1.0 + lam).powf(0.5 * s) * l2).abs() < 1e-10 * hs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn norms_increase_with_order(f in prop::collection::vec(-1.0f64..1.0, 40), s in -1.0f64..0.9) {
        let c = BoundaryCalculus::circle(40, 1.0).unwrap();
        prop_assert!(c.hs_norm(&f, s).unwrap() <= c.hs_norm(&f, s + 0.1).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn fractional_powers_compose(f in prop::collection::vec(-1.0f64..1.0, 32), s in 0.05f64..0.5) {
        let c = BoundaryCalculus::circle(32, 1.0).unwrap();
        let once = c.frac_power_apply(&c.frac_power_apply(&f, s, PowerBase::Shifted).unwrap(), s, PowerBase::Shifted).unwrap();
        let twice = c.frac_power_apply(&f, 2.0 * s, PowerBase::Shifted).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn synthesis_inverts_analysis(f in prop::collection::vec(-1.0f64..1.0, 24)) {
        let c = BoundaryCalculus::circle(24, 0.7).unwrap();
        let back = c.synthesize(&c.coefficients(&f).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&f) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
