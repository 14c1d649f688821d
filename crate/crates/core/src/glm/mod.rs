//! Multinomial logistic regression and the cubic B-spline basis used by the
//! weight models.

mod bspline;
mod design;
mod multinomial;

pub use bspline::{bspline_basis, BsplineBasis, KnotRule};
pub use design::{DesignBuilder, DesignMatrix, INTERCEPT};
pub use multinomial::{
    fit_multinomial, log_likelihood, predict_proba, score, MultinomialFit, MultinomialOptions,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GlmError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid design: {0}")]
    InvalidDesign(String),
    #[error("category {0} has no observations")]
    MissingCategory(usize),
    #[error("design columns are linearly dependent")]
    RankDeficient,
    #[error("coefficients diverged (norm {norm:.3e}); the data look separated")]
    Separation { norm: f64 },
    #[error("no convergence after {iterations} iterations (max |score| {max_score:.3e})")]
    NotConverged { iterations: usize, max_score: f64 },
    #[error("design has columns {found:?}, fit expects {expected:?}")]
    ColumnMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{0} outcomes for {1} design rows")]
    LengthMismatch(usize, usize),
}
