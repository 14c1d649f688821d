use super::SimError;
use serde::{Deserialize, Serialize};

/// Linear predictor of one non-reference exposure category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitCoefficients {
    pub intercept: f64,
    pub bo06: f64,
    pub adolescent: f64,
    pub adult: f64,
    pub male: f64,
    pub gen_pre: f64,
    pub rule_pre: f64,
    pub gen_post: f64,
    pub rule_post: f64,
}

impl LogitCoefficients {
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.intercept,
            self.bo06,
            self.adolescent,
            self.adult,
            self.male,
            self.gen_pre,
            self.rule_pre,
            self.gen_post,
            self.rule_post,
        ]
    }
}

/// Multinomial logit for exposure given the confounders; the standard
/// strategy is the reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureModel {
    pub reduced: LogitCoefficients,
    pub highly_reduced: LogitCoefficients,
}

/// Ordered-probit toxicity grades driven by a shared latent susceptibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToxicityModel {
    /// Correlation between susceptibility and the outcome frailty.
    pub outcome_link: f64,
    /// Loading of every toxicity latent on the susceptibility.
    pub loading: f64,
    pub bo06_shift: f64,
    pub adolescent_shift: f64,
    pub adult_shift: f64,
    pub post_shift: f64,
    /// Grade thresholds per toxicity, in [`crate::data::Toxicity::ALL`] order.
    pub cutpoints: [[f64; 4]; 8],
}

impl Default for ToxicityModel {
    fn default() -> Self {
        Self {
            outcome_link: 0.6,
            loading: 0.7,
            bo06_shift: 0.25,
            adolescent_shift: 0.1,
            adult_shift: 0.3,
            post_shift: 0.2,
            cutpoints: [
                [-1.5, -0.8, -0.2, 0.6],
                [-0.5, 0.0, 0.5, 1.2],
                [0.0, 0.6, 1.2, 2.0],
                [0.3, 1.0, 1.8, 2.6],
                [1.2, 1.8, 2.4, 3.0],
                [1.0, 1.6, 2.3, 3.0],
                [-0.8, -0.1, 0.7, 1.8],
                [0.2, 0.8, 1.5, 2.4],
            ],
        }
    }
}

/// Marginal structural Cox model with an exponential baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    /// Log hazard ratios for a=1, a=2, a=1×V, a=2×V and V.
    pub beta: [f64; 5],
    /// Events per month at the reference pattern.
    pub baseline_hazard: f64,
}

/// Share of subjects given each eligibility defect.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct IneligibilityRates {
    pub missing_hre: f64,
    pub incomplete_treatment: f64,
    pub incomplete_cycle_records: f64,
    pub event_during_treatment: f64,
}

impl IneligibilityRates {
    pub fn as_array(&self) -> [f64; 4] {
        [
            self.missing_hre,
            self.incomplete_treatment,
            self.incomplete_cycle_records,
            self.event_during_treatment,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub seed: u64,
    pub p_bo06: f64,
    /// Child, adolescent, adult.
    pub age_probabilities: [f64; 3],
    pub p_male: f64,
    pub toxicity: ToxicityModel,
    pub exposure: ExposureModel,
    pub outcome: OutcomeModel,
    /// Exponential censoring, per month.
    pub censoring_rate: f64,
    /// Administrative end of follow-up, months.
    pub max_follow_up_months: f64,
    pub hre_prevalence: f64,
    /// Smallest exposure probability any subject may have.
    pub positivity_floor: f64,
    /// Lower end of the RDI range sampled for the highly reduced strategy.
    pub rdi_floor: f64,
    pub max_delay_days: u32,
    pub ineligible: IneligibilityRates,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: 1,
            p_bo06: 0.5,
            age_probabilities: [0.35, 0.45, 0.20],
            p_male: 0.6,
            toxicity: ToxicityModel::default(),
            exposure: ExposureModel {
                reduced: LogitCoefficients {
                    intercept: -1.5,
                    bo06: 0.2,
                    adolescent: 0.1,
                    adult: 0.2,
                    male: -0.1,
                    gen_pre: 0.03,
                    rule_pre: 0.1,
                    gen_post: 0.03,
                    rule_post: 0.15,
                },
                highly_reduced: LogitCoefficients {
                    intercept: -2.8,
                    bo06: 0.3,
                    adolescent: 0.1,
                    adult: 0.3,
                    male: -0.1,
                    gen_pre: 0.05,
                    rule_pre: 0.12,
                    gen_post: 0.05,
                    rule_post: 0.2,
                },
            },
            outcome: OutcomeModel {
                beta: [-0.3, 0.4, 0.3, -0.2, -0.7],
                baseline_hazard: 0.002,
            },
            censoring_rate: 0.002,
            max_follow_up_months: 120.0,
            hre_prevalence: 0.34,
            positivity_floor: 0.02,
            rdi_floor: 0.4,
            max_delay_days: 70,
            ineligible: IneligibilityRates::default(),
        }
    }
}

impl SimConfig {
    /// Strong toxicity → exposure and toxicity → outcome dependence.
    pub fn strongly_confounded() -> Self {
        let mut c = Self::default();
        c.toxicity.outcome_link = 0.9;
        c.toxicity.loading = 0.85;
        c.exposure = ExposureModel {
            reduced: LogitCoefficients {
                intercept: -1.9,
                bo06: 0.3,
                adolescent: 0.1,
                adult: 0.3,
                male: -0.1,
                gen_pre: 0.05,
                rule_pre: 0.15,
                gen_post: 0.05,
                rule_post: 0.25,
            },
            highly_reduced: LogitCoefficients {
                intercept: -3.4,
                bo06: 0.4,
                adolescent: 0.2,
                adult: 0.5,
                male: -0.1,
                gen_pre: 0.08,
                rule_pre: 0.2,
                gen_post: 0.08,
                rule_post: 0.35,
            },
        };
        c
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        let probs = [
            ("p_bo06", self.p_bo06),
            ("p_male", self.p_male),
            ("hre_prevalence", self.hre_prevalence),
            ("positivity_floor", self.positivity_floor),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.age_probabilities.iter().any(|p| !(0.0..=1.0).contains(p))
            || (self.age_probabilities.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad(format!("age probabilities {:?} must sum to one", self.age_probabilities));
        }
        let inel = self.ineligible.as_array();
        if inel.iter().any(|p| !(0.0..=1.0).contains(p)) || inel.iter().sum::<f64>() > 1.0 {
            return bad("ineligibility rates must be probabilities summing to at most one".into());
        }
        if !(self.outcome.baseline_hazard > 0.0) || !(self.censoring_rate > 0.0) {
            return bad("hazard and censoring rates must be positive".into());
        }
        if !(self.max_follow_up_months > 0.0) {
            return bad("max_follow_up_months must be positive".into());
        }
        let t = &self.toxicity;
        if !(0.0..1.0).contains(&t.outcome_link) || !(0.0..=1.0).contains(&t.loading) {
            return bad("outcome_link must lie in [0, 1) and loading in [0, 1]".into());
        }
        if t.cutpoints.iter().any(|c| c.windows(2).any(|w| !(w[1] > w[0]))) {
            return bad("toxicity cutpoints must be increasing".into());
        }
        if !(self.rdi_floor > 0.0 && self.rdi_floor < 0.70) {
            return bad(format!("rdi_floor {} must lie in (0, 0.70)", self.rdi_floor));
        }
        if self.outcome.beta.iter().any(|b| !b.is_finite()) {
            return bad("outcome coefficients must be finite".into());
        }
        Ok(())
    }
}
