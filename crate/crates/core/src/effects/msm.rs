use super::{bootstrap_cate_ci, cate, BootstrapOutput, BootstrapPlan, EffectsError, CONTRASTS};
use crate::iptw::{stabilized_weights, Cohort, WeightOptions, WeightSpec};
use crate::survival::{fit_weighted_cox, msm_design, CoxFit, CoxOptions, SurvivalError, MSM_TERMS};
use serde::{Deserialize, Serialize};

/// Weights used by the Cox refit inside each bootstrap replicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicateWeights {
    /// Original-sample weights of the drawn subjects.
    Original,
    /// Unit weights: the weighted draw already forms the pseudo-population.
    #[default]
    Unweighted,
    /// Weights re-estimated on the replicate.
    Reestimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MsmSettings {
    pub cox: CoxOptions,
    pub grid: Vec<f64>,
    pub spec: WeightSpec,
    pub weight_options: WeightOptions,
    pub replicate_weights: ReplicateWeights,
}

/// Weighted Cox fit of the marginal structural model.
pub fn fit_msm(cohort: &Cohort, weights: &[f64], opts: &CoxOptions) -> Result<CoxFit, SurvivalError> {
    let x = msm_design(&cohort.exposures(), &cohort.effect_modifiers());
    fit_weighted_cox(&cohort.times(), &cohort.events(), &x, &MSM_TERMS, weights, opts)
}

/// CATE for every contrast on `grid`, contrast-major.
pub fn cate_vector(fit: &CoxFit, grid: &[f64]) -> Vec<f64> {
    CONTRASTS
        .iter()
        .flat_map(|&(a, v)| grid.iter().map(move |&t| cate(fit, a, v, t)))
        .collect()
}

/// Point estimate plus percentile intervals under `plan`.
pub fn run_bootstrap(
    cohort: &Cohort,
    weights: &[f64],
    plan: &BootstrapPlan,
    settings: &MsmSettings,
) -> Result<(CoxFit, BootstrapOutput), EffectsError> {
    let fit = fit_msm(cohort, weights, &settings.cox)?;
    let point = cate_vector(&fit, &settings.grid);
    let out = bootstrap_cate_ci(plan, &settings.grid, &point, |idx: &[usize]| {
        let sample = cohort.select(idx);
        let w: Vec<f64> = match settings.replicate_weights {
            ReplicateWeights::Original => idx.iter().map(|&i| weights[i]).collect(),
            ReplicateWeights::Unweighted => vec![1.0; idx.len()],
            ReplicateWeights::Reestimate => {
                stabilized_weights(&settings.spec, &sample, &settings.weight_options)?.weights
            }
        };
        let fit = fit_msm(&sample, &w, &settings.cox)?;
        Ok::<_, EffectsError>(cate_vector(&fit, &settings.grid))
    })?;
    Ok((fit, out))
}
