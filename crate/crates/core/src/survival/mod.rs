//! Weighted Cox regression, Kaplan–Meier estimation and the log-rank test.

mod cox;
mod km;
mod logrank;

pub use cox::{
    fit_weighted_cox, log_partial_likelihood, msm_design, msm_pattern, partial_score,
    predict_survival, CoxFit, CoxOptions, MSM_TERMS,
};
pub use km::{kaplan_meier, nelson_aalen, reverse_kaplan_meier_median};
pub use logrank::{logrank_test, LogRankTest};

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SurvivalError {
    #[error("no events with positive weight")]
    NoEvents,
    #[error("design columns are collinear among subjects at risk")]
    Collinear,
    #[error("Newton iterations did not converge after {iterations} steps")]
    NotConverged { iterations: usize },
    #[error("partial likelihood is monotone; coefficients diverge (max |linear predictor| {max_eta:.1})")]
    MonotoneLikelihood { max_eta: f64 },
    #[error("survival median undefined: the curve never reaches 0.5")]
    MedianUndefined,
    #[error("log-rank test needs at least two groups with subjects and events: {0}")]
    DegenerateGroups(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Handling of tied event times in the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TieMethod {
    #[default]
    Breslow,
    Efron,
}

impl FromStr for TieMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "breslow" => Ok(TieMethod::Breslow),
            "efron" => Ok(TieMethod::Efron),
            other => Err(format!("unknown tie method `{other}` (breslow or efron)")),
        }
    }
}

/// Right-continuous, nonincreasing step function with S = 1 before the
/// first jump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvival {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvival {
    /// `values[k]` holds on `[times[k], times[k + 1])`.
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, SurvivalError> {
        if times.len() != values.len() {
            return Err(SurvivalError::InvalidInput(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.first().is_some_and(|&t| !(t >= 0.0)) {
            return Err(SurvivalError::InvalidInput("times must be nonnegative and increasing".into()));
        }
        let mut prev = 1.0;
        for &v in &values {
            if !(0.0..=prev).contains(&v) {
                return Err(SurvivalError::InvalidInput(format!(
                    "survival values must be nonincreasing in [0, 1], got {v} after {prev}"
                )));
            }
            prev = v;
        }
        Ok(Self { times, values })
    }

    /// S ≡ 1.
    pub fn one() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }
}
