//! The scalar recurrence `s_{k+1} = s_k (1 + C e^{-s_k})` and its
//! logarithmic-integral sandwich.

use serde::Serialize;

use super::li::LiEvaluator;
use crate::error::{LabError, Result};

/// Iterates of the recurrence; `truncated` when an iterate stopped being finite.
#[derive(Debug, Clone, Serialize)]
pub struct Recurrence {
    pub values: Vec<f64>,
    pub truncated: bool,
}

pub fn recurrence_simulate(sigma0: f64, c: f64, steps: usize) -> Result<Recurrence> {
    if !(sigma0 > 0.0 && sigma0.is_finite()) {
        return Err(LabError::Domain(format!("initial value must be positive, got {sigma0}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(LabError::Domain(format!("growth constant must be nonnegative, got {c}")));
    }
    let mut values = Vec::with_capacity(steps + 1);
    values.push(sigma0);
    let mut s = sigma0;
    for _ in 0..steps {
        // s e^{-s} underflows gracefully; the increment is computed in log space
        let inc = c * (s.ln() - s).exp();
        let next = s + inc;
        if !next.is_finite() {
            return Ok(Recurrence { values, truncated: true });
        }
        s = next;
        values.push(s);
    }
    Ok(Recurrence { values, truncated: false })
}

/// Outcome of [`recurrence_sandwich_check`].
#[derive(Debug, Clone, Serialize)]
pub struct SandwichReport {
    pub sigma0: f64,
    pub c: f64,
    pub steps: usize,
    pub first_lower_violation: Option<usize>,
    pub first_upper_violation: Option<usize>,
    /// Smallest `s_k - lower_k`.
    pub min_lower_margin: f64,
    /// Smallest `lower_k + 1 - s_k`.
    pub min_upper_margin: f64,
    pub pass: bool,
}

/// `ln li^{-1}(C k + li(e^{sigma0}))` for `k = 0..=steps`.
pub fn li_bound_curve(li: &LiEvaluator, sigma0: f64, c: f64, steps: usize) -> Result<Vec<f64>> {
    let d = li.li_exp(sigma0)?;
    (0..=steps).map(|k| li.log_li_inv(c * k as f64 + d)).collect()
}

/// Rejects `(C, sigma0)` outside the induction hypotheses: `sigma0 >= 1` and
/// `sigma0 e^{-sigma0} <= 1 / (12 C)`.
pub fn check_sandwich_precondition(sigma0: f64, c: f64) -> Result<()> {
    if !(sigma0 >= 1.0) {
        return Err(LabError::Config(format!("sigma0 = {sigma0} must be at least 1")));
    }
    if !(c >= 0.0) {
        return Err(LabError::Config(format!("C = {c} must be nonnegative")));
    }
    let lhs = sigma0 * (-sigma0).exp();
    if 12.0 * c * lhs > 1.0 {
        return Err(LabError::Config(format!(
            "smallness condition theta e^(-theta) <= 1/(12 C) fails at theta = sigma0 = {sigma0}: {lhs:.6} > {:.6}",
            1.0 / (12.0 * c)
        )));
    }
    Ok(())
}

/// Checks `lower_k <= s_k <= lower_k + 1` at every `k <= steps`.
pub fn recurrence_sandwich_check(li: &LiEvaluator, sigma0: f64, c: f64, steps: usize) -> Result<SandwichReport> {
    check_sandwich_precondition(sigma0, c)?;
    let seq = recurrence_simulate(sigma0, c, steps)?;
    if seq.truncated {
        return Err(LabError::Domain("recurrence overflowed before the requested step count".into()));
    }
    let bounds = li_bound_curve(li, sigma0, c, steps)?;
    let mut report = SandwichReport {
        sigma0,
        c,
        steps,
        first_lower_violation: None,
        first_upper_violation: None,
        min_lower_margin: f64::INFINITY,
        min_upper_margin: f64::INFINITY,
        pass: true,
    };
    for (k, (&s, &b)) in seq.values.iter().zip(&bounds).enumerate() {
        let slack = 1e-9 * (1.0 + b.abs());
        let lower = s - b;
        let upper = b + 1.0 - s;
        report.min_lower_margin = report.min_lower_margin.min(lower);
        report.min_upper_margin = report.min_upper_margin.min(upper);
        if lower < -slack && report.first_lower_violation.is_none() {
            report.first_lower_violation = Some(k);
        }
        if upper < -slack && report.first_upper_violation.is_none() {
            report.first_upper_violation = Some(k);
        }
    }
    report.pass = report.first_lower_violation.is_none() && report.first_upper_violation.is_none();
    Ok(report)
}

/// Smallest `x >= 1` with `e^x / x >= 12 C`, the precondition floor for `sigma0`.
pub fn precondition_floor(c: f64) -> f64 {
    let target = 12.0 * c;
    if target <= std::f64::consts::E {
        return 1.0;
    }
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    while hi.exp() / hi < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid.exp() / mid < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}
