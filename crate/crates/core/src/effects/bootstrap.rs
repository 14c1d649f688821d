use super::{CateResult, EffectsError, CONTRASTS};
use crate::covariates::Exposure;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Display;

/// Largest tolerated share of failed replicates.
pub const FAILURE_TOLERANCE: f64 = 0.05;

/// Subjects sharing exposure `a` and effect modifier `v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCohort {
    pub exposure: Exposure,
    pub v: u8,
    pub members: Vec<usize>,
    /// Normalized stabilized weights of `members`.
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapPlan {
    pub replicates: usize,
    pub seed: u64,
    pub cohorts: Vec<SubCohort>,
}

/// Partitions subjects by (a, v) and normalizes their weights within each
/// sub-cohort.
pub fn bootstrap_plan(
    exposure: &[Exposure],
    v: &[u8],
    weights: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<BootstrapPlan, EffectsError> {
    if exposure.len() != v.len() || v.len() != weights.len() {
        return Err(EffectsError::InvalidInput("exposure, v and weights differ in length".into()));
    }
    if replicates == 0 {
        return Err(EffectsError::InvalidInput("at least one replicate is required".into()));
    }
    if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
        return Err(EffectsError::InvalidInput("weights must be finite and positive".into()));
    }
    let mut cohorts = Vec::with_capacity(6);
    for a in Exposure::ALL {
        for vv in [0u8, 1] {
            let members: Vec<usize> = (0..exposure.len()).filter(|&i| exposure[i] == a && v[i] == vv).collect();
            if members.is_empty() {
                return Err(EffectsError::EmptySubCohort { a: a.into(), v: vv });
            }
            let total: f64 = members.iter().map(|&i| weights[i]).sum();
            let probabilities = members.iter().map(|&i| weights[i] / total).collect();
            cohorts.push(SubCohort {
                exposure: a,
                v: vv,
                members,
                probabilities,
            });
        }
    }
    Ok(BootstrapPlan {
        replicates,
        seed,
        cohorts,
    })
}

impl BootstrapPlan {
    pub fn n(&self) -> usize {
        self.cohorts.iter().map(|c| c.members.len()).sum()
    }

    /// Replicate `b`: n_g draws with replacement from each sub-cohort, on a
    /// random stream keyed by `b` alone.
    pub fn draw_by_cohort(&self, b: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(b as u64);
        self.cohorts
            .iter()
            .map(|c| {
                let dist = WeightedIndex::new(&c.probabilities).expect("probabilities are positive");
                (0..c.members.len()).map(|_| c.members[dist.sample(&mut rng)]).collect()
            })
            .collect()
    }

    /// Union of the sub-samples of replicate `b`.
    pub fn draw(&self, b: usize) -> Vec<usize> {
        self.draw_by_cohort(b).concat()
    }
}

/// 2.5th and 97.5th percentiles by ceiling rank: with B values the bounds
/// are the ⌈0.025 B⌉-th and ⌈0.975 B⌉-th smallest.
pub fn percentile_bounds(values: &[f64]) -> (f64, f64) {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let b = sorted.len() as f64;
    let rank = |q: f64| ((q * b).ceil() as usize).clamp(1, sorted.len()) - 1;
    (sorted[rank(0.025)], sorted[rank(0.975)])
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutput {
    pub results: Vec<CateResult>,
    /// Per replicate, the CATE vector (contrast-major, then time) or `None`
    /// when the refit failed.
    pub replicates: Vec<Option<Vec<f64>>>,
    pub failed: usize,
}

/// Percentile intervals from stored replicate vectors.
pub fn summarize_replicates(
    grid: &[f64],
    point: &[f64],
    replicates: &[Option<Vec<f64>>],
) -> Vec<CateResult> {
    let ok: Vec<&Vec<f64>> = replicates.iter().flatten().collect();
    let t = grid.len();
    CONTRASTS
        .iter()
        .enumerate()
        .map(|(c, &(a, v))| {
            let mut lower = Vec::with_capacity(t);
            let mut upper = Vec::with_capacity(t);
            for k in 0..t {
                let column: Vec<f64> = ok.iter().map(|r| r[c * t + k]).collect();
                let (lo, hi) = percentile_bounds(&column);
                lower.push(lo);
                upper.push(hi);
            }
            CateResult {
                a: a.into(),
                v,
                times: grid.to_vec(),
                estimate: point[c * t..(c + 1) * t].to_vec(),
                lower,
                upper,
                replicates: ok.len(),
            }
        })
        .collect()
}

/// Runs `estimator` on every replicate in parallel and reports percentile
/// intervals for each (a, v, t).
///
/// `estimator` maps replicate subject indices to a CATE vector laid out
/// like `point`.
pub fn bootstrap_cate_ci<F, E>(
    plan: &BootstrapPlan,
    grid: &[f64],
    point: &[f64],
    estimator: F,
) -> Result<BootstrapOutput, EffectsError>
where
    F: Fn(&[usize]) -> Result<Vec<f64>, E> + Sync,
    E: Display,
{
    let expected = CONTRASTS.len() * grid.len();
    if point.len() != expected {
        return Err(EffectsError::InvalidInput(format!(
            "point estimate has {} values, expected {expected}",
            point.len()
        )));
    }
    let replicates: Vec<Option<Vec<f64>>> = (0..plan.replicates)
        .into_par_iter()
        .map(|b| {
            let parts = plan.draw_by_cohort(b);
            for (part, cohort) in parts.iter().zip(&plan.cohorts) {
                assert_eq!(part.len(), cohort.members.len(), "sub-cohort size changed");
            }
            let idx = parts.concat();
            estimator(&idx).ok().filter(|v| v.len() == expected && v.iter().all(|x| x.is_finite()))
        })
        .collect();
    let failed = replicates.iter().filter(|r| r.is_none()).count();
    if failed as f64 > FAILURE_TOLERANCE * plan.replicates as f64 || failed == plan.replicates {
        return Err(EffectsError::TooManyFailedReplicates {
            failed,
            total: plan.replicates,
        });
    }
    Ok(BootstrapOutput {
        results: summarize_replicates(grid, point, &replicates),
        replicates,
        failed,
    })
}
