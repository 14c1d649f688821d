//! Synthetic confounded trials with known counterfactual survival.
//!
//! A per-subject uniform `U` drives both the outcome (through
//! `T^a = −ln U / (λ0 exp(β·x(a, V)))`) and the latent toxicity
//! susceptibility, so toxicity confounds the exposure–outcome relation while
//! every counterfactual time remains exponential with the model hazard.

mod config;
mod truth;

pub use config::{
    ExposureModel, IneligibilityRates, LogitCoefficients, OutcomeModel, SimConfig, ToxicityModel,
};
pub use truth::{adaptive_simpson, true_cate, true_cate_with_tolerance, SimTruth, CATE_TOLERANCE};

use crate::covariates::{
    classify_effect_modifier, derive, motox_scores, DerivedCovariates, Exposure,
    ANTICIPATED_TREATMENT_DAYS, CDDP_PROTOCOL_DOSE, DAYS_INTO_LAST_CYCLE, DOX_PROTOCOL_DOSE,
    REDUCED_RDI_THRESHOLD, STANDARD_RDI_THRESHOLD,
};
use crate::data::{
    AgeGroup, CycleRecord, ExclusionReason, Gender, PatientRecord, Period, PeriodToxicity, Toxicity,
    Trial, MAX_GRADE, PROTOCOL_CYCLES,
};
use crate::stats::normal_quantile;
use crate::survival::msm_pattern;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("subject {id}: probability {probability:.4} of exposure {exposure} is below the positivity floor")]
    PositivityFloorViolated {
        id: String,
        exposure: u8,
        probability: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub records: Vec<PatientRecord>,
    /// Covariates as generated, not re-derived from the records.
    pub truth_covariates: Vec<DerivedCovariates>,
    /// Injected eligibility defects.
    pub exclusions: Vec<(String, ExclusionReason)>,
    /// Model probabilities of the three strategies per subject.
    pub exposure_probabilities: Vec<[f64; 3]>,
    pub truth: SimTruth,
}

/// Gaps between cycle starts under the anticipated schedule; surgery sits in
/// the 35-day gap.
fn anticipated_gaps(trial: Trial) -> [u32; 5] {
    match trial {
        Trial::BO03 => [21, 21, 35, 21, 21],
        Trial::BO06 => [21, 35, 21, 21, 21],
    }
}

fn exposure_probabilities(model: &ExposureModel, features: &[f64; 9]) -> [f64; 3] {
    let eta = |c: &LogitCoefficients| c.as_array().iter().zip(features).map(|(b, x)| b * x).sum::<f64>();
    let e1 = eta(&model.reduced).exp();
    let e2 = eta(&model.highly_reduced).exp();
    let total = 1.0 + e1 + e2;
    [1.0 / total, e1 / total, e2 / total]
}

fn draw_grades(rng: &mut ChaCha8Rng, cfg: &ToxicityModel, susceptibility: f64, shift: f64, period: Period) -> PeriodToxicity {
    let mut tox = PeriodToxicity::none(period);
    let noise_scale = (1.0 - cfg.loading * cfg.loading).sqrt();
    let period_shift = if period == Period::Post { cfg.post_shift } else { 0.0 };
    for (k, t) in Toxicity::ALL.into_iter().enumerate() {
        let e: f64 = rng.sample(StandardNormal);
        let latent = cfg.loading * susceptibility + shift + period_shift + noise_scale * e;
        let grade = cfg.toxicity_grade(k, latent);
        tox.set_grade(t, grade);
    }
    tox
}

impl ToxicityModel {
    fn toxicity_grade(&self, k: usize, latent: f64) -> u8 {
        let g = self.cutpoints[k].iter().filter(|&&c| latent > c).count() as u8;
        g.min(MAX_GRADE)
    }
}

/// RDI interval sampled for each strategy.
fn rdi_interval(a: Exposure, floor: f64) -> (f64, f64) {
    match a {
        Exposure::Standard => (STANDARD_RDI_THRESHOLD, 1.0),
        Exposure::Reduced => (REDUCED_RDI_THRESHOLD, STANDARD_RDI_THRESHOLD),
        Exposure::HighlyReduced => (floor, REDUCED_RDI_THRESHOLD),
    }
}

struct Schedule {
    cycles: Vec<CycleRecord>,
    delta: f64,
    gamma: f64,
}

/// Cycle doses and start days whose RDI falls in the interval of `a`.
fn build_schedule(rng: &mut ChaCha8Rng, cfg: &SimConfig, trial: Trial, a: Exposure) -> Schedule {
    let (lo, hi) = rdi_interval(a, cfg.rdi_floor);
    let anticipated_last: u32 = anticipated_gaps(trial).iter().sum();
    loop {
        let rdi = rng.random_range(lo..hi);
        // delay keeps the standardized dose at or below one
        let max_delay = ((ANTICIPATED_TREATMENT_DAYS * (1.0 / rdi - 1.0)).floor() as u32).min(cfg.max_delay_days);
        let delay = rng.random_range(0..=max_delay);
        let mut gaps = anticipated_gaps(trial);
        for g in gaps.iter_mut() {
            *g += delay / 5;
        }
        for _ in 0..delay % 5 {
            gaps[rng.random_range(0..5)] += 1;
        }
        let span = f64::from(anticipated_last + delay + DAYS_INTO_LAST_CYCLE);
        let gamma = span / ANTICIPATED_TREATMENT_DAYS;
        let delta = (rdi * gamma).min(1.0);
        // spread the dose reduction over the twelve drug-cycle slots
        let total_reduction = 2.0 * PROTOCOL_CYCLES as f64 * (1.0 - delta);
        let shares: Vec<f64> = (0..2 * PROTOCOL_CYCLES).map(|_| rng.random::<f64>() + 0.5).collect();
        let share_sum: f64 = shares.iter().sum();
        let mut cuts: Vec<f64> = shares.iter().map(|s| total_reduction * s / share_sum).collect();
        if cuts.iter().any(|&c| c > 1.0) {
            cuts = vec![total_reduction / (2 * PROTOCOL_CYCLES) as f64; 2 * PROTOCOL_CYCLES];
        }
        let mut start = 0u32;
        let cycles: Vec<CycleRecord> = (0..PROTOCOL_CYCLES)
            .map(|j| {
                if j > 0 {
                    start += gaps[j - 1];
                }
                CycleRecord {
                    index: j as u8 + 1,
                    dose_cddp_mg_m2: CDDP_PROTOCOL_DOSE * (1.0 - cuts[2 * j]),
                    dose_dox_mg_m2: DOX_PROTOCOL_DOSE * (1.0 - cuts[2 * j + 1]),
                    start_day: start,
                }
            })
            .collect();
        let schedule = Schedule { cycles, delta, gamma };
        // floating-point round trip must land in the intended category
        let check = crate::covariates::standardized_dose(&schedule.cycles)
            .and_then(|d| crate::covariates::standardized_time(&schedule.cycles).map(|g| (d, g)));
        if let Ok((d, g)) = check {
            if crate::covariates::classify_exposure(d / g) == a {
                return schedule;
            }
        }
    }
}

/// Draws a dataset. Deterministic in `config` (including its seed).
pub fn simulate(config: &SimConfig) -> Result<SimOutput, SimError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let censor = Exp::new(config.censoring_rate).expect("validated rate");
    let link = config.toxicity.outcome_link;
    let inel = config.ineligible.as_array();

    let mut records = Vec::with_capacity(config.n);
    let mut truth_covariates = Vec::with_capacity(config.n);
    let mut exclusions = Vec::new();
    let mut probabilities = Vec::with_capacity(config.n);

    for i in 0..config.n {
        let id = format!("P{:05}", i + 1);
        let trial = if rng.random_bool(config.p_bo06) { Trial::BO06 } else { Trial::BO03 };
        let u_age: f64 = rng.random();
        let age_group = if u_age < config.age_probabilities[0] {
            AgeGroup::Child
        } else if u_age < config.age_probabilities[0] + config.age_probabilities[1] {
            AgeGroup::Adolescent
        } else {
            AgeGroup::Adult
        };
        let gender = if rng.random_bool(config.p_male) { Gender::Male } else { Gender::Female };

        // shared frailty uniform and latent susceptibility
        let u: f64 = rng.random_range(f64::EPSILON..1.0);
        let eps: f64 = rng.sample(StandardNormal);
        let susceptibility = link * normal_quantile(u) + (1.0 - link * link).sqrt() * eps;
        let tm = &config.toxicity;
        let shift = match trial {
            Trial::BO06 => tm.bo06_shift,
            Trial::BO03 => 0.0,
        } + match age_group {
            AgeGroup::Child => 0.0,
            AgeGroup::Adolescent => tm.adolescent_shift,
            AgeGroup::Adult => tm.adult_shift,
        };
        let toxicity = [
            draw_grades(&mut rng, tm, susceptibility, shift, Period::Pre),
            draw_grades(&mut rng, tm, susceptibility, shift, Period::Post),
        ];

        let mut record = PatientRecord {
            id: id.clone(),
            trial,
            age_group,
            gender,
            cycles: Vec::new(),
            toxicity,
            hre_necrosis_pct: None,
            efs_time_months: 0.0,
            efs_event: false,
            completed_treatment: true,
            had_surgery: true,
            event_during_treatment: false,
        };
        let motox = motox_scores(&record);
        let flag = |b: bool| f64::from(u8::from(b));
        let features = [
            1.0,
            flag(trial == Trial::BO06),
            flag(age_group == AgeGroup::Adolescent),
            flag(age_group == AgeGroup::Adult),
            flag(gender == Gender::Male),
            motox.gen_pre,
            motox.rule_pre,
            motox.gen_post,
            motox.rule_post,
        ];
        let p = exposure_probabilities(&config.exposure, &features);
        if let Some((k, &pk)) = p.iter().enumerate().find(|(_, &pk)| pk < config.positivity_floor) {
            return Err(SimError::PositivityFloorViolated {
                id,
                exposure: k as u8,
                probability: pk,
            });
        }
        let ua: f64 = rng.random();
        let exposure = if ua < p[0] {
            Exposure::Standard
        } else if ua < p[0] + p[1] {
            Exposure::Reduced
        } else {
            Exposure::HighlyReduced
        };
        let schedule = build_schedule(&mut rng, config, trial, exposure);
        record.cycles = schedule.cycles;

        // effect modifier independent of everything above
        let v = u8::from(rng.random_bool(config.hre_prevalence));
        let necrosis = if v == 1 {
            (rng.random_range(0.900..=1.0f64) * 1000.0).round() / 1000.0
        } else {
            ((rng.random_range(0.0..0.899f64)) * 1000.0).round() / 1000.0
        };
        debug_assert_eq!(classify_effect_modifier(necrosis), v);
        record.hre_necrosis_pct = Some(necrosis);

        let lp: f64 = msm_pattern(exposure, v).iter().zip(&config.outcome.beta).map(|(x, b)| x * b).sum();
        let event_time = -u.ln() / (config.outcome.baseline_hazard * lp.exp());
        let censor_time = censor.sample(&mut rng).min(config.max_follow_up_months);
        record.efs_event = event_time <= censor_time;
        record.efs_time_months = event_time.min(censor_time);

        truth_covariates.push(DerivedCovariates {
            id: id.clone(),
            delta: schedule.delta,
            gamma: schedule.gamma,
            rdi: schedule.delta / schedule.gamma,
            exposure,
            effect_modifier: v,
            motox,
        });

        // eligibility defects, at most one per subject
        let ud: f64 = rng.random();
        let mut acc = 0.0;
        for (reason, rate) in ExclusionReason::STAGES.into_iter().zip(inel) {
            acc += rate;
            if ud < acc {
                inject(&mut rng, &mut record, reason);
                exclusions.push((id.clone(), reason));
                break;
            }
        }

        probabilities.push(p);
        records.push(record);
    }
    debug_assert!(records.iter().all(|r| r.validate().is_ok()));
    Ok(SimOutput {
        records,
        truth_covariates,
        exclusions,
        exposure_probabilities: probabilities,
        truth: SimTruth {
            beta: config.outcome.beta,
            baseline_hazard: config.outcome.baseline_hazard,
            censoring_rate: config.censoring_rate,
            max_follow_up_months: config.max_follow_up_months,
            seed: config.seed,
            n: config.n,
        },
    })
}

fn inject(rng: &mut ChaCha8Rng, record: &mut PatientRecord, reason: ExclusionReason) {
    match reason {
        ExclusionReason::MissingHre => record.hre_necrosis_pct = None,
        ExclusionReason::IncompleteTreatment => {
            record.completed_treatment = false;
            let kept = rng.random_range(2..PROTOCOL_CYCLES);
            record.cycles.truncate(kept);
        }
        ExclusionReason::IncompleteCycleRecords => {
            record.cycles.truncate(PROTOCOL_CYCLES - 1);
        }
        ExclusionReason::EventDuringTreatment => record.event_during_treatment = true,
    }
}

/// Re-derives covariates from the generated records; used to check that
/// the records encode the generated exposure.
pub fn rederive(records: &[PatientRecord]) -> Vec<Option<DerivedCovariates>> {
    records.iter().map(|r| derive(r).ok()).collect()
}
