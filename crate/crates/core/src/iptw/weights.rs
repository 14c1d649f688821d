use super::spec::{build_design, numerator_design};
use super::{Cohort, IptwError, WeightSpec};
use crate::glm::{fit_multinomial, predict_proba, DesignMatrix, MultinomialFit, MultinomialOptions};
use crate::stats::quantile_sorted;
use serde::{Deserialize, Serialize};

/// Probabilities below this make a weight undefined.
pub const MIN_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl WeightSummary {
    pub fn of(w: &[f64]) -> Self {
        let n = w.len();
        let mean = w.iter().sum::<f64>() / n as f64;
        let ss: f64 = w.iter().map(|x| (x - mean).powi(2)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Self {
            n,
            mean,
            sd,
            min: w.iter().copied().fold(f64::INFINITY, f64::min),
            max: w.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Percentile truncation bounds in [0, 1], e.g. (0.01, 0.99).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightOptions {
    pub glm: MultinomialOptions,
    /// Off unless set.
    pub truncation: Option<Truncation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilizedWeights {
    pub spec_id: String,
    pub weights: Vec<f64>,
    pub summary: WeightSummary,
    pub numerator: MultinomialFit,
    pub denominator: MultinomialFit,
    /// Numerator probability of each subject's own exposure.
    pub p_numerator: Vec<f64>,
    /// Denominator probability of each subject's own exposure.
    pub p_denominator: Vec<f64>,
    pub truncated: bool,
}

/// Weights from explicit numerator and denominator designs.
pub fn weights_from_designs(
    spec_id: &str,
    ids: &[String],
    exposure: &[usize],
    numerator: &DesignMatrix,
    denominator: &DesignMatrix,
    opts: &WeightOptions,
) -> Result<StabilizedWeights, IptwError> {
    let num_fit = fit_multinomial(exposure, numerator, &opts.glm)?;
    let den_fit = fit_multinomial(exposure, denominator, &opts.glm)?;
    let num_p = predict_proba(&num_fit, numerator)?;
    let den_p = predict_proba(&den_fit, denominator)?;
    let n = exposure.len();
    let mut p_numerator = Vec::with_capacity(n);
    let mut p_denominator = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for (i, &a) in exposure.iter().enumerate() {
        let pn = num_p[(i, a)];
        let pd = den_p[(i, a)];
        if pd < MIN_PROBABILITY {
            return Err(IptwError::ZeroDenominator {
                id: ids[i].clone(),
                probability: pd,
            });
        }
        p_numerator.push(pn);
        p_denominator.push(pd);
        weights.push(pn / pd);
    }
    let truncated = if let Some(t) = opts.truncation {
        truncate(&mut weights, t);
        true
    } else {
        false
    };
    Ok(StabilizedWeights {
        spec_id: spec_id.to_string(),
        summary: WeightSummary::of(&weights),
        weights,
        numerator: num_fit,
        denominator: den_fit,
        p_numerator,
        p_denominator,
        truncated,
    })
}

fn truncate(w: &mut [f64], t: Truncation) {
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile_sorted(&sorted, t.lower);
    let hi = quantile_sorted(&sorted, t.upper);
    for x in w.iter_mut() {
        *x = x.clamp(lo, hi);
    }
}

/// sw_i = P(A_i | V_i) / P(A_i | L_i, V_i) under the given denominator spec.
pub fn stabilized_weights(
    spec: &WeightSpec,
    cohort: &Cohort,
    opts: &WeightOptions,
) -> Result<StabilizedWeights, IptwError> {
    if cohort.is_empty() {
        return Err(IptwError::EmptyCohort);
    }
    let ids: Vec<String> = cohort.subjects().iter().map(|s| s.id.clone()).collect();
    weights_from_designs(
        &spec.id,
        &ids,
        &cohort.exposure_indices(),
        &numerator_design(cohort)?,
        &build_design(spec, cohort)?,
        opts,
    )
}
