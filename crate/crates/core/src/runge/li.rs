//! The logarithmic integral `li(t) = int_2^t d tau / ln tau` and its inverse.

use crate::error::{LabError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// Gauss-Kronrod 7/15 pair on `[a, b]`: (Kronrod estimate, error estimate).
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to relative tolerance `rel`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    let (whole, err) = gk15(&f, a, b);
    if err <= rel * whole.abs() {
        return whole;
    }
    let tol = rel * whole.abs().max(f64::MIN_POSITIVE);
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(&f, lo, hi);
        if e <= tol * (hi - lo) / (b - a) || depth >= 50 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Relative accuracy of every quadrature.
pub const LI_TOLERANCE: f64 = 1e-12;

/// `li` on `[2, e^{u_max}]` with a table of values at equally spaced `ln t`
/// used both to shorten quadratures and to bracket the inverse.
#[derive(Debug, Clone)]
pub struct LiEvaluator {
    tolerance: f64,
    /// `ln t` of the table nodes, starting at `ln 2`.
    nodes: Vec<f64>,
    values: Vec<f64>,
    step: f64,
}

impl Default for LiEvaluator {
    fn default() -> Self {
        Self::new(LI_TOLERANCE, 700.0)
    }
}

/// `e^u / u`, the integrand of `li` in the variable `u = ln t`.
fn integrand(u: f64) -> f64 {
    u.exp() / u
}

impl LiEvaluator {
    pub fn new(tolerance: f64, u_max: f64) -> Self {
        let step = 0.05;
        let start = 2f64.ln();
        let count = ((u_max - start) / step).ceil() as usize + 1;
        let mut nodes = Vec::with_capacity(count);
        let mut values = Vec::with_capacity(count);
        let mut acc = 0.0;
        for j in 0..count {
            let u = start + step * j as f64;
            if j > 0 {
                acc += integrate(integrand, nodes[j - 1], u, tolerance);
            }
            nodes.push(u);
            values.push(acc);
        }
        Self { tolerance, nodes, values, step }
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Largest argument the table covers.
    pub fn t_max(&self) -> f64 {
        self.nodes.last().map_or(2.0, |u| u.exp())
    }

    fn li_log(&self, u: f64) -> f64 {
        let j = (((u - self.nodes[0]) / self.step).floor() as usize).min(self.nodes.len() - 1);
        self.values[j] + integrate(integrand, self.nodes[j], u, self.tolerance)
    }

    /// `li(t)` for `2 <= t <= t_max`.
    pub fn li(&self, t: f64) -> Result<f64> {
        if !(t >= 2.0) {
            return Err(LabError::Domain(format!("li is evaluated for t >= 2, got {t}")));
        }
        if t > self.t_max() {
            return Err(LabError::Domain(format!("li argument {t:e} beyond the tabulated range")));
        }
        if t == 2.0 {
            return Ok(0.0);
        }
        Ok(self.li_log(t.ln()))
    }

    /// `li(e^u)`, avoiding the exponential for large `u`.
    pub fn li_exp(&self, u: f64) -> Result<f64> {
        if !(u >= self.nodes[0]) || u > *self.nodes.last().unwrap() {
            return Err(LabError::Domain(format!("li(e^u) needs ln 2 <= u <= {}, got {u}", self.nodes.last().unwrap())));
        }
        Ok(self.li_log(u))
    }

    /// `ln li^{-1}(y)` for `y >= 0`, by Newton in `u = ln t` inside a table bracket.
    pub fn log_li_inv(&self, y: f64) -> Result<f64> {
        if !(y >= 0.0) {
            return Err(LabError::Domain(format!("li^-1 is defined for y >= 0, got {y}")));
        }
        let last = *self.values.last().unwrap();
        if y > last {
            return Err(LabError::Domain(format!("li^-1 argument {y:e} beyond the tabulated range")));
        }
        if y == 0.0 {
            return Ok(self.nodes[0]);
        }
        let j = self.values.partition_point(|&v| v <= y).saturating_sub(1);
        let (mut lo, mut hi) = (self.nodes[j], self.nodes[(j + 1).min(self.nodes.len() - 1)]);
        let span = self.values[(j + 1).min(self.values.len() - 1)] - self.values[j];
        let mut u = if span > 0.0 { lo + (hi - lo) * (y - self.values[j]) / span } else { lo };
        for _ in 0..100 {
            let r = self.li_log(u) - y;
            if r > 0.0 {
                hi = u;
            } else {
                lo = u;
            }
            // d li(e^u) / du = e^u / u
            let mut next = u - r / integrand(u);
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - u).abs() <= 1e-15 * u.abs().max(1.0) {
                return Ok(next);
            }
            u = next;
        }
        Ok(u)
    }

    /// `li^{-1}(y)`.
    pub fn li_inv(&self, y: f64) -> Result<f64> {
        let u = self.log_li_inv(y)?;
        if u > 709.0 {
            return Err(LabError::Domain(format!("li^-1({y:e}) overflows")));
        }
        Ok(u.exp())
    }
}
