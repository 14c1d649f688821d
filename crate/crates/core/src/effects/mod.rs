//! Restricted mean survival time, conditional average treatment effects and
//! the stratified weighted bootstrap.

mod bootstrap;
mod msm;

pub use bootstrap::{
    bootstrap_cate_ci, bootstrap_plan, percentile_bounds, summarize_replicates, BootstrapOutput,
    BootstrapPlan, SubCohort, FAILURE_TOLERANCE,
};
pub use msm::{cate_vector, fit_msm, run_bootstrap, MsmSettings, ReplicateWeights};

use crate::covariates::Exposure;
use crate::iptw::IptwError;
use crate::survival::{predict_survival, CoxFit, StepSurvival, SurvivalError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EffectsError {
    #[error("sub-cohort (a = {a}, v = {v}) is empty")]
    EmptySubCohort { a: u8, v: u8 },
    #[error("{failed} of {total} bootstrap replicates failed")]
    TooManyFailedReplicates { failed: usize, total: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Survival(#[from] SurvivalError),
    #[error(transparent)]
    Iptw(#[from] IptwError),
}

/// The (a, v) contrasts against the standard strategy, in output order.
pub const CONTRASTS: [(Exposure, u8); 4] = [
    (Exposure::Reduced, 0),
    (Exposure::Reduced, 1),
    (Exposure::HighlyReduced, 0),
    (Exposure::HighlyReduced, 1),
];

/// Monthly grid 1..=horizon.
pub fn monthly_grid(horizon: u32) -> Vec<f64> {
    (1..=horizon).map(f64::from).collect()
}

/// Exact area under a step survival curve on [0, t].
pub fn rmst(curve: &StepSurvival, t: f64) -> f64 {
    assert!(t > 0.0, "RMST horizon must be positive");
    let mut area = 0.0;
    let mut prev_t = 0.0;
    let mut prev_s = 1.0;
    for (&ti, &si) in curve.times().iter().zip(curve.values()) {
        if ti >= t {
            break;
        }
        area += prev_s * (ti - prev_t);
        prev_t = ti;
        prev_s = si;
    }
    area + prev_s * (t - prev_t)
}

/// RMST difference between strategy `a` and the standard strategy in
/// stratum `v`.
pub fn cate(fit: &CoxFit, a: Exposure, v: u8, t: f64) -> f64 {
    rmst(&predict_survival(fit, a, v), t) - rmst(&predict_survival(fit, Exposure::Standard, v), t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CateResult {
    pub a: u8,
    pub v: u8,
    pub times: Vec<f64>,
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Successful bootstrap replicates behind the bounds.
    pub replicates: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_curve_area_is_horizon() {
        assert_eq!(rmst(&StepSurvival::one(), 12.0), 12.0);
    }

    #[test]
    fn single_drop_halves_area() {
        let s = StepSurvival::new(vec![5.0], vec![0.0]).unwrap();
        assert_eq!(rmst(&s, 10.0), 5.0);
        assert_eq!(rmst(&s, 5.0), 5.0);
        assert_eq!(rmst(&s, 3.0), 3.0);
    }

    #[test]
    fn discretized_exponential() {
        let lambda = 0.05;
        let t = 60.0;
        let h = 1e-3;
        let steps = (t / h) as usize;
        let times: Vec<f64> = (1..=steps).map(|k| k as f64 * h).collect();
        let values: Vec<f64> = times.iter().map(|s| (-lambda * s).exp()).collect();
        let curve = StepSurvival::new(times, values).unwrap();
        let exact = (1.0 - (-lambda * t).exp()) / lambda;
        // a right-continuous step overshoots by at most h · (S(0) − S(t))
        let err = rmst(&curve, t) - exact;
        assert!(err >= 0.0 && err <= h * (1.0 - (-lambda * t).exp()) + 1e-12, "{err}");
    }

    fn curve_strategy() -> impl Strategy<Value = StepSurvival> {
        prop::collection::vec((0.01f64..5.0, 0.0f64..1.0), 0..20).prop_map(|steps| {
            let mut t = 0.0;
            let mut s = 1.0;
            let mut times = Vec::new();
            let mut values = Vec::new();
            for (dt, frac) in steps {
                t += dt;
                s *= frac;
                times.push(t);
                values.push(s);
            }
            StepSurvival::new(times, values).unwrap()
        })
    }

    proptest! {
        #[test]
        fn rmst_nondecreasing_and_lipschitz(c in curve_strategy(), t in 0.1f64..50.0, dt in 0.0f64..10.0) {
            let a = rmst(&c, t);
            let b = rmst(&c, t + dt);
            prop_assert!(b >= a - 1e-12);
            prop_assert!(b - a <= dt + 1e-12);
        }

        #[test]
        fn rmst_monotone_in_curve(c in curve_strategy(), t in 0.1f64..50.0, shrink in 0.0f64..1.0) {
            let lower = StepSurvival::new(
                c.times().to_vec(),
                c.values().iter().map(|v| v * shrink).collect(),
            ).unwrap();
            prop_assert!(rmst(&lower, t) <= rmst(&c, t) + 1e-12);
        }
    }
}
