use crate::covariates::Exposure;
use crate::survival::msm_pattern;
use serde::{Deserialize, Serialize};

/// Ground truth of a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub beta: [f64; 5],
    pub baseline_hazard: f64,
    pub censoring_rate: f64,
    pub max_follow_up_months: f64,
    pub seed: u64,
    pub n: usize,
}

/// Integration tolerance of [`true_cate`], months.
pub const CATE_TOLERANCE: f64 = 1e-6;

impl SimTruth {
    pub fn hazard_ratio(&self, a: Exposure, v: u8) -> f64 {
        msm_pattern(a, v).iter().zip(&self.beta).map(|(x, b)| x * b).sum::<f64>().exp()
    }

    /// Counterfactual survival S^a(t | V = v).
    pub fn survival(&self, a: Exposure, v: u8, t: f64) -> f64 {
        (-self.baseline_hazard * self.hazard_ratio(a, v) * t).exp()
    }

    /// (1 − e^{−λ r t}) / (λ r).
    pub fn rmst_closed_form(&self, a: Exposure, v: u8, t: f64) -> f64 {
        let rate = self.baseline_hazard * self.hazard_ratio(a, v);
        (1.0 - (-rate * t).exp()) / rate
    }

    /// Numerically integrated RMST.
    pub fn rmst(&self, a: Exposure, v: u8, t: f64, tol: f64) -> f64 {
        adaptive_simpson(&|s| self.survival(a, v, s), 0.0, t, tol)
    }
}

/// True RMST difference between strategy `a` and the standard strategy.
pub fn true_cate(truth: &SimTruth, a: Exposure, v: u8, t: f64) -> f64 {
    true_cate_with_tolerance(truth, a, v, t, CATE_TOLERANCE)
}

pub fn true_cate_with_tolerance(truth: &SimTruth, a: Exposure, v: u8, t: f64, tol: f64) -> f64 {
    adaptive_simpson(
        &|s| truth.survival(a, v, s) - truth.survival(Exposure::Standard, v, s),
        0.0,
        t,
        tol,
    )
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
