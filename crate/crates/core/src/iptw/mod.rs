//! Stabilized inverse-probability-of-treatment weights and their
//! diagnostics.

mod cohort;
mod diagnostics;
mod spec;
mod weights;

pub use cohort::{Cohort, Subject};
pub use diagnostics::{
    balance_table, weight_diagnostics, BalanceRow, BalanceTable, DiagnosticThresholds, EmptyCell,
    WeightDiagnostics, SMD_FORMULA,
};
pub use spec::{build_design, numerator_design, Covariate, Term, WeightSpec};
pub use weights::{
    stabilized_weights, weights_from_designs, StabilizedWeights, Truncation, WeightOptions,
    WeightSummary, MIN_PROBABILITY,
};

use crate::glm::GlmError;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IptwError {
    #[error("patient {id}: missing {field}")]
    MissingField { id: String, field: String },
    #[error("patient {id}: probability of observed exposure is {probability:.3e}")]
    ZeroDenominator { id: String, probability: f64 },
    #[error("confounder {0} has zero pooled standard deviation")]
    ZeroVariance(String),
    #[error("unknown weight specification `{0}`")]
    UnknownSpec(String),
    #[error("cohort is empty")]
    EmptyCohort,
    #[error(transparent)]
    Glm(#[from] GlmError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariates::{Exposure, MotoxScores};
    use crate::data::{AgeGroup, Gender, Trial};
    use crate::glm::{predict_proba, DesignMatrix, INTERCEPT};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cohort(n: usize, seed: u64) -> Cohort {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let score = |rng: &mut ChaCha8Rng| f64::from(rng.random_range(0..6u8)) / 2.0 + rng.random_range(0..3u8) as f64;
        let subjects = (0..n)
            .map(|i| {
                let motox = MotoxScores {
                    rule_pre: score(&mut rng),
                    rule_post: score(&mut rng),
                    gen_pre: score(&mut rng),
                    gen_post: score(&mut rng),
                };
                let eta = -1.0 + 0.4 * motox.rule_post;
                let u: f64 = rng.random();
                let a = if u < 1.0 / (1.0 + eta.exp()) {
                    0
                } else if rng.random_bool(0.6) {
                    1
                } else {
                    2
                };
                Subject {
                    id: format!("s{i}"),
                    trial: if rng.random_bool(0.5) { Trial::BO06 } else { Trial::BO03 },
                    age_group: [AgeGroup::Child, AgeGroup::Adolescent, AgeGroup::Adult][rng.random_range(0..3)],
                    gender: if rng.random_bool(0.6) { Gender::Male } else { Gender::Female },
                    exposure: Exposure::from_index(a).unwrap(),
                    effect_modifier: u8::from(rng.random_bool(0.35)),
                    motox,
                    time: rng.random_range(1.0..60.0),
                    event: rng.random_bool(0.4),
                }
            })
            .collect();
        Cohort::new(subjects)
    }

    #[test]
    fn standard_design_shapes() {
        let c = cohort(300, 1);
        let d1 = build_design(&WeightSpec::iptw1(), &c).unwrap();
        assert_eq!(d1.ncols(), 10);
        assert_eq!(
            d1.names(),
            &[
                INTERCEPT,
                "BO06",
                "adolescent",
                "adult",
                "male",
                "motox_gen_pre",
                "motox_rule_pre",
                "motox_gen_post",
                "motox_rule_post",
                "GR"
            ]
        );
        assert_eq!(build_design(&WeightSpec::iptw2(), &c).unwrap().ncols(), 12);
        assert_eq!(build_design(&WeightSpec::iptw3(), &c).unwrap().ncols(), 14);
        let d4 = build_design(&WeightSpec::iptw4(), &c).unwrap();
        assert_eq!(d4.ncols(), 6 + 4 * 6);
        assert_eq!(d4.names().iter().filter(|n| n.starts_with("bs(motox_rule_post)")).count(), 6);
        assert_eq!(build_design(&WeightSpec::iptw5(), &c).unwrap().ncols(), 14);
    }

    #[test]
    fn zero_pre_scores_zero_interactions() {
        let mut c = cohort(50, 2);
        let mut subjects = c.subjects().to_vec();
        subjects[0].motox.gen_pre = 0.0;
        subjects[0].motox.rule_pre = 0.0;
        c = Cohort::new(subjects);
        let d = build_design(&WeightSpec::iptw2(), &c).unwrap();
        assert_eq!(d.column("motox_gen_pre:motox_rule_pre").unwrap()[0], 0.0);
        assert_eq!(WeightSpec::by_id("IPTW3").unwrap(), WeightSpec::iptw3());
        assert!(WeightSpec::by_id("iptw9").is_err());
    }

    #[test]
    fn gr_only_denominator_gives_unit_weights() {
        let c = cohort(400, 3);
        let spec = WeightSpec::new("gr-only", vec![Term::Main(Covariate::Gr)]);
        let w = stabilized_weights(&spec, &c, &WeightOptions::default()).unwrap();
        assert!(w.weights.iter().all(|x| (x - 1.0).abs() < 1e-10));
    }

    #[test]
    fn identical_designs_give_unit_weights() {
        let c = cohort(200, 4);
        let d = build_design(&WeightSpec::iptw1(), &c).unwrap();
        let ids: Vec<String> = c.subjects().iter().map(|s| s.id.clone()).collect();
        let w = weights_from_designs("same", &ids, &c.exposure_indices(), &d, &d, &Default::default()).unwrap();
        assert!(w.weights.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn weighted_denominator_probabilities_reproduce_numerator_mass() {
        let c = cohort(500, 5);
        let w = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()).unwrap();
        let num = predict_proba(&w.numerator, &numerator_design(&c).unwrap()).unwrap();
        let a = c.exposure_indices();
        for cat in 0..3 {
            let lhs: f64 = (0..c.len())
                .filter(|&i| a[i] == cat)
                .map(|i| w.weights[i] * w.p_denominator[i])
                .sum();
            let rhs: f64 = (0..c.len()).filter(|&i| a[i] == cat).map(|i| num[(i, cat)]).sum();
            assert!((lhs - rhs).abs() < 1e-6);
            // the numerator model reproduces the observed category counts
            let expected: f64 = num.column(cat).sum();
            let observed = a.iter().filter(|&&x| x == cat).count() as f64;
            assert!((expected - observed).abs() < 1e-6);
        }
    }

    #[test]
    fn unit_weights_raise_no_flags() {
        let c = cohort(120, 6);
        let mut w = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()).unwrap();
        w.weights = vec![1.0; c.len()];
        let d = weight_diagnostics(&w, &c, &DiagnosticThresholds::default());
        assert_eq!(d.summary.mean, 1.0);
        assert_eq!(d.summary.sd, 0.0);
        assert!(!d.mean_flag && !d.max_flag);
        let json = serde_json::to_string(&d).unwrap();
        let back: WeightDiagnostics = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn extreme_weights_are_flagged() {
        let c = cohort(60, 7);
        let mut w = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()).unwrap();
        w.weights[0] = 25.0;
        let d = weight_diagnostics(&w, &c, &DiagnosticThresholds::default());
        assert!(d.max_flag && d.flagged());
    }

    #[test]
    fn empty_cells_are_counted() {
        let c = cohort(200, 8);
        let subjects: Vec<Subject> = c
            .subjects()
            .iter()
            .cloned()
            .map(|mut s| {
                if s.exposure == Exposure::HighlyReduced {
                    s.trial = Trial::BO03;
                }
                s
            })
            .collect();
        let c = Cohort::new(subjects);
        let w = stabilized_weights(&WeightSpec::new("rule-post", vec![Term::Main(Covariate::RulePost)]), &c, &Default::default()).unwrap();
        let d = weight_diagnostics(&w, &c, &DiagnosticThresholds::default());
        assert!(d.empty_cells.contains(&EmptyCell {
            confounder: "BO06".into(),
            level: 1,
            exposure: 2
        }));
    }

    #[test]
    fn balance_of_constant_confounder_fails() {
        let c = cohort(100, 9);
        let subjects: Vec<Subject> = c
            .subjects()
            .iter()
            .cloned()
            .map(|mut s| {
                s.gender = Gender::Male;
                s
            })
            .collect();
        let err = balance_table(&Cohort::new(subjects), None).unwrap_err();
        assert_eq!(err, IptwError::ZeroVariance("male".into()));
    }

    #[test]
    fn balance_hand_computed() {
        // one continuous confounder, three groups of two
        let c = cohort(6, 10);
        let mut subjects = c.subjects().to_vec();
        let values = [1.0, 3.0, 2.0, 6.0, 0.0, 4.0];
        for (i, s) in subjects.iter_mut().enumerate() {
            s.exposure = Exposure::from_index(i / 2).unwrap();
            s.motox.rule_post = values[i];
            s.trial = if i % 2 == 0 { Trial::BO03 } else { Trial::BO06 };
            s.age_group = if i % 2 == 0 { AgeGroup::Adolescent } else { AgeGroup::Adult };
            s.gender = if i % 2 == 0 { Gender::Male } else { Gender::Female };
            s.motox.gen_pre = values[i];
            s.motox.rule_pre = values[i];
            s.motox.gen_post = values[i];
        }
        let t = balance_table(&Cohort::new(subjects), None).unwrap();
        // group means 2, 4, 2; variances 2, 8, 8
        let d01 = 2.0 / 5f64.sqrt();
        let d02 = 0.0;
        let d12 = 2.0 / 8f64.sqrt();
        let expected = (d01 + d02 + d12) / 3.0;
        assert!((t.get(Covariate::RulePost).unwrap() - expected).abs() < 1e-14);
        assert_eq!(t.label, "unweighted");
    }

    #[test]
    fn truncation_clamps_to_percentiles() {
        let c = cohort(300, 11);
        let opts = WeightOptions {
            truncation: Some(Truncation { lower: 0.05, upper: 0.95 }),
            ..Default::default()
        };
        let raw = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()).unwrap();
        let cut = stabilized_weights(&WeightSpec::iptw1(), &c, &opts).unwrap();
        assert!(cut.truncated);
        assert!(cut.summary.max <= raw.summary.max && cut.summary.min >= raw.summary.min);
    }

    #[test]
    fn design_rejects_foreign_columns() {
        let c = cohort(50, 12);
        let w = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()).unwrap();
        let other = DesignMatrix::builder(50).build().unwrap();
        assert!(predict_proba(&w.denominator, &other).is_err());
    }

    proptest! {
        #[test]
        fn diagnostics_are_pure_functions_of_weights(seed in 0u64..1000) {
            let c = cohort(80, seed);
            let Ok(w) = stabilized_weights(&WeightSpec::iptw1(), &c, &Default::default()) else {
                return Ok(());
            };
            let t = DiagnosticThresholds::default();
            prop_assert_eq!(weight_diagnostics(&w, &c, &t), weight_diagnostics(&w.clone(), &c, &t));
            prop_assert!(w.weights.iter().all(|x| x.is_finite() && *x > 0.0));
        }
    }
}
