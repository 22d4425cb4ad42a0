use proptest::prelude::*;

use dnlab_core::runge::{
    adjoint_experiment_with, check_sandwich_precondition, cylinder_operators, fit_smoothness_constant, interface_modes,
    li_bound_curve, random_interface_functions, recurrence_sandwich_check, recurrence_simulate, reference_runge_mesh,
    runge_iterate, runge_step, FitConstants, IterateOptions, LiEvaluator, RungeOperators, StepRule,
};
use dnlab_core::LabError;

fn reference_ops() -> RungeOperators {
    let (m, g) = reference_runge_mesh(32).unwrap();
    RungeOperators::new(&m, &g).unwrap()
}

fn fitted_constants(ops: &RungeOperators) -> FitConstants {
    let exp = adjoint_experiment_with(ops, 0.0, &interface_modes(ops, 50)).unwrap();
    let c = fit_smoothness_constant(ops, exp.k, &random_interface_functions(ops, 20, 8, 1)).unwrap();
    let mut consts = FitConstants::default();
    consts.set("K", exp.k, "adjoint lower bound").unwrap();
    consts.set("C", c.max(1e-3), "smoothness fit").unwrap();
    consts
}

#[test]
fn li_matches_reference_values() {
    // offset logarithmic integral, 30-digit reference evaluation
    let li = LiEvaluator::default();
    for (t, v) in [(3.0, 1.118_424_814_549_699), (10.0, 5.120_435_724_669_805), (100.0, 29.080_977_803_962_14), (1e6, 78_626.503_995_682_1)] {
        assert!((li.li(t).unwrap() - v).abs() < 1e-10 * v, "{t}");
    }
    assert!((li.li_inv(1000.0).unwrap() - 7_772.348_510_015_964).abs() < 1e-7);
}

#[test]
fn li_rejects_points_below_two() {
    assert!(LiEvaluator::default().li(1.5).is_err());
}

#[test]
fn sandwich_rejects_violated_smallness() {
    let err = recurrence_sandwich_check(&LiEvaluator::default(), 3.0, 1.0, 10).unwrap_err();
    assert!(matches!(err, LabError::Config(_)));
    assert!(check_sandwich_precondition(4.0, 1.0).is_ok());
}

#[test]
fn adjoint_constant_grows_with_cylinder_length() {
    let (m, g) = reference_runge_mesh(32).unwrap();
    let mut ks = Vec::new();
    for len in [0.5, 1.0, 2.0] {
        let ops = cylinder_operators(&m, &g, len).unwrap();
        let exp = adjoint_experiment_with(&ops, len, &interface_modes(&ops, 50)).unwrap();
        assert_eq!(exp.violations, 0);
        ks.push(exp.k);
    }
    // affine growth with unit slope: e^{-K lambda} absorbs e^{-L sqrt(lambda)}
    for (w, dl) in ks.windows(2).zip([0.5, 1.0]) {
        let slope = (w[1] - w[0]) / dl;
        assert!((slope - 1.0).abs() < 0.3, "{ks:?}");
    }
}

#[test]
fn iteration_meets_the_target_and_stays_under_the_envelope() {
    let ops = reference_ops();
    let consts = fitted_constants(&ops);
    let f = random_interface_functions(&ops, 1, 6, 9).pop().unwrap();
    let trace = runge_iterate(&f, 0.2, &consts, &ops, &LiEvaluator::default(), IterateOptions::default()).unwrap();
    assert!(trace.converged && trace.monotone() && trace.dominated());
    assert!(trace.renormalization_error < 1e-10);
    assert!(trace.to_csv().starts_with("i,lambda,mu,residual,cost\n"));
}

#[test]
fn one_step_rate_stays_within_twice_the_adjoint_constant() {
    // sigma and the overlap are both of order e^{-K lambda}, so mu ~ 2 e^{-2K lambda}
    let ops = reference_ops();
    let consts = fitted_constants(&ops);
    let (k, c) = (consts.get("K").unwrap(), consts.get("C").unwrap());
    for rule in [StepRule::Scheduled, StepRule::LineSearch] {
        for v in random_interface_functions(&ops, 20, 8, 5) {
            let lambda = ops.smoothness_ratio(&v).unwrap();
            let step = runge_step(&v, k, c, lambda, &ops, rule).unwrap();
            let rate = -step.mu.ln() / lambda;
            assert!(step.mu > 0.0 && rate <= 2.0 * k, "{rule:?}: rate {rate} against K {k}");
        }
    }
}

#[test]
fn exact_restriction_solves_in_one_step() {
    let ops = reference_ops();
    let consts = fitted_constants(&ops);
    let w: Vec<f64> = (0..ops.boundary_len()).map(|i| (i as f64 * 0.4).cos()).collect();
    let f = ops.restrict(&w);
    let opts = IterateOptions { rule: StepRule::ExactSolve, max_iterations: 5 };
    let trace = runge_iterate(&f, 1e-6, &consts, &ops, &LiEvaluator::default(), opts).unwrap();
    assert_eq!(trace.residual.len(), 2);
}

#[test]
fn constants_reject_unknown_names_and_nonpositive_values() {
    let mut c = FitConstants::default();
    assert!(c.set("K", -1.0, "x").is_err());
    assert!(c.set("K", f64::NAN, "x").is_err());
    assert!(c.set("unknown", 1.0, "x").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn li_is_increasing_and_inverts(a in 2.001f64..1e6, b in 2.001f64..1e6) {
        let li = LiEvaluator::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9 * hi);
        prop_assert!(li.li(lo).unwrap() < li.li(hi).unwrap());
        let back = li.li_inv(li.li(a).unwrap()).unwrap();
        prop_assert!((back - a).abs() <= 1e-8 * a);
    }

    #[test]
    fn recurrence_is_strictly_increasing(sigma0 in 0.5f64..20.0, c in 0.01f64..5.0) {
        let r = recurrence_simulate(sigma0, c, 500).unwrap();
        prop_assert!(r.values.windows(2).all(|w| w[1] > w[0] || w[0] > 700.0));
    }

    #[test]
    fn sandwich_holds_where_admissible(c in 0.05f64..3.0, extra in 0.0f64..3.0) {
        let li = LiEvaluator::default();
        let sigma0 = dnlab_core::runge::precondition_floor(c) + extra;
        let r = recurrence_sandwich_check(&li, sigma0, c, 2000).unwrap();
        prop_assert!(r.pass, "{:?}", r);
        let bounds = li_bound_curve(&li, sigma0, c, 10).unwrap();
        prop_assert!((bounds[0] - sigma0).abs() < 1e-8 * sigma0);
    }

    #[test]
    fn fitted_constants_are_positive(k in -5.0f64..5.0) {
        let mut c = FitConstants::default();
        prop_assert_eq!(c.set("alpha", k, "x").is_ok(), k > 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn residual_never_increases(seed in 0u64..1000, band in 3usize..8) {
        let ops = reference_ops();
        let consts = fitted_constants(&ops);
        let f = random_interface_functions(&ops, 1, band, seed).pop().unwrap();
        let opts = IterateOptions { rule: StepRule::LineSearch, max_iterations: 200 };
        let trace = runge_iterate(&f, 0.3, &consts, &ops, &LiEvaluator::default(), opts).unwrap();
        prop_assert!(trace.monotone());
    }
}
