//! Causal survival analysis of chemotherapy received dose intensity (RDI).
//!
//! The crate covers the whole pipeline from trial records to effect estimates:
//!
//! * [`data`]: patient records, CSV ingestion and cohort eligibility.
//! * [`covariates`]: standardized dose and time, RDI, exposure strategy,
//!   histological-response effect modifier and MOTox toxicity scores.
//! * [`glm`]: multinomial logistic regression and cubic B-spline bases.
//! * [`iptw`]: stabilized inverse-probability-of-treatment weights under five
//!   denominator specifications, with positivity and balance diagnostics.
//! * [`survival`]: weighted Cox regression with robust variance, Kaplan–Meier,
//!   reverse Kaplan–Meier follow-up and the log-rank test.
//! * [`effects`]: restricted mean survival time, conditional average treatment
//!   effects and the stratified weighted bootstrap.
//! * [`simulator`]: confounded synthetic trials with known ground truth.
//! * [`pipeline`]: configuration and the stages driven by the `rdi-msm` CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod covariates;
pub mod data;
pub mod effects;
pub mod glm;
pub mod iptw;
mod linalg;
pub mod pipeline;
pub mod simulator;
pub mod stats;
pub mod survival;

pub use covariates::{DerivedCovariates, Exposure};
pub use data::{PatientRecord, Period, Toxicity};
pub use effects::{CateResult, BootstrapPlan};
pub use iptw::{StabilizedWeights, WeightSpec};
pub use survival::{CoxFit, StepSurvival, TieMethod};
