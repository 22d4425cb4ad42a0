//! Approximating interface data by restrictions of global harmonic functions,
//! and the scalar recurrence governing its rate.

pub mod li;
pub mod recurrence;
pub mod scheme;

pub use li::{integrate, LiEvaluator, LI_TOLERANCE};
pub use recurrence::{
    check_sandwich_precondition, li_bound_curve, precondition_floor, recurrence_sandwich_check, recurrence_simulate,
    Recurrence, SandwichReport,
};
pub use scheme::{
    adjoint_experiment_with, adjoint_lower_bound_experiment, adjoint_ratio, cylinder_operators, fit_cost_exponent,
    fit_smoothness_constant, interface_modes, random_interface_functions, reference_runge_mesh, reference_target,
    runge_iterate, runge_step, AdjointExperiment, FitConstants, FittedConstant, IterateOptions, RungeOperators,
    RungeStep, RungeTrace, StepRule,
};
