use rdi_msm::data::{apply_eligibility, read_patients, write_patients, ExclusionReason, Schema};
use rdi_msm::iptw::{stabilized_weights, Cohort, WeightSpec};
use rdi_msm::simulator::{simulate, IneligibilityRates, SimConfig};
use rdi_msm::stats::pearson_independence;
use rdi_msm::survival::kaplan_meier;
use rdi_msm::{Exposure, StepSurvival};

const HORIZON: f64 = 60.0;

fn sup_distance(a: &StepSurvival, b: &StepSurvival) -> f64 {
    a.times()
        .iter()
        .chain(b.times())
        .filter(|&&t| t <= HORIZON)
        .map(|&t| (a.eval(t) - b.eval(t)).abs())
        .fold(0.0, f64::max)
}

/// Largest pairwise sup-norm gap on [0, HORIZON] between exposure-group KM
/// curves within a stratum.
fn max_km_gap(cohort: &Cohort, weights: Option<&[f64]>) -> f64 {
    let mut worst: f64 = 0.0;
    for v in 0..=1u8 {
        let curves: Vec<StepSurvival> = Exposure::ALL
            .iter()
            .map(|&a| {
                let rows: Vec<usize> = cohort
                    .subjects()
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.exposure == a && s.effect_modifier == v)
                    .map(|(i, _)| i)
                    .collect();
                let times: Vec<f64> = rows.iter().map(|&i| cohort.subjects()[i].time).collect();
                let events: Vec<bool> = rows.iter().map(|&i| cohort.subjects()[i].event).collect();
                let w: Option<Vec<f64>> = weights.map(|w| rows.iter().map(|&i| w[i]).collect());
                kaplan_meier(&times, &events, w.as_deref())
            })
            .collect();
        for i in 0..3 {
            for j in i + 1..3 {
                worst = worst.max(sup_distance(&curves[i], &curves[j]));
            }
        }
    }
    worst
}

fn null_config(seed: u64) -> SimConfig {
    let mut cfg = SimConfig {
        n: 10_000,
        seed,
        ..SimConfig::default()
    };
    cfg.outcome.beta = [0.0; 5];
    cfg
}

#[test]
fn null_effect_without_confounding_gives_matching_km_curves() {
    let mut cfg = null_config(11);
    cfg.toxicity.outcome_link = 0.0;
    let out = simulate(&cfg).unwrap();
    let cohort = Cohort::from_records(&out.records).unwrap();
    let gap = max_km_gap(&cohort, None);
    assert!(gap < 0.04, "{gap}");
}

#[test]
fn null_effect_under_confounding_needs_weights() {
    let out = simulate(&null_config(12)).unwrap();
    let cohort = Cohort::from_records(&out.records).unwrap();
    let w = stabilized_weights(&WeightSpec::iptw1(), &cohort, &Default::default()).unwrap();
    let weighted = max_km_gap(&cohort, Some(&w.weights));
    let unweighted = max_km_gap(&cohort, None);
    assert!(weighted < 0.04, "{weighted}");
    assert!(unweighted > weighted, "{unweighted} vs {weighted}");
}

#[test]
fn exposure_and_effect_modifier_are_independent() {
    let mut p_values: Vec<f64> = (1..=40)
        .map(|seed| {
            let out = simulate(&SimConfig {
                n: 10_000,
                seed,
                ..SimConfig::default()
            })
            .unwrap();
            let mut table = vec![vec![0.0; 2]; 3];
            for d in &out.truth_covariates {
                table[d.exposure.index()][usize::from(d.effect_modifier)] += 1.0;
            }
            pearson_independence(&table).unwrap().p_value
        })
        .collect();
    p_values.sort_by(f64::total_cmp);
    // Kolmogorov-Smirnov distance to the uniform, 1 % critical value for 40 draws
    let n = p_values.len() as f64;
    let ks = p_values
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i as f64 + 1.0) / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / n.sqrt(), "KS distance {ks}");
}

#[test]
fn large_sample_frequencies_and_odds_ratios() {
    let out = simulate(&SimConfig {
        n: 50_000,
        seed: 5,
        ..SimConfig::default()
    })
    .unwrap();
    let n = out.truth_covariates.len() as f64;
    for a in Exposure::ALL {
        let k = a.index();
        let empirical = out.truth_covariates.iter().filter(|d| d.exposure == a).count() as f64 / n;
        let implied = out.exposure_probabilities.iter().map(|p| p[k]).sum::<f64>() / n;
        assert!((empirical - implied).abs() < 0.01, "{a:?}: {empirical} vs {implied}");
    }
    let count = |a: Exposure, v: u8| {
        out.truth_covariates
            .iter()
            .filter(|d| d.exposure == a && d.effect_modifier == v)
            .count() as f64
    };
    for a in [Exposure::Reduced, Exposure::HighlyReduced] {
        let or = count(a, 1) * count(Exposure::Standard, 0) / (count(a, 0) * count(Exposure::Standard, 1));
        assert!((or - 1.0).abs() < 0.1, "{a:?}: odds ratio {or}");
    }
}

#[test]
fn records_rederive_to_the_generated_covariates() {
    let out = simulate(&SimConfig {
        n: 3000,
        seed: 9,
        ..SimConfig::default()
    })
    .unwrap();
    let cohort = Cohort::from_records(&out.records).unwrap();
    for (s, d) in cohort.subjects().iter().zip(&out.truth_covariates) {
        assert_eq!(s.exposure, d.exposure, "{}", d.id);
        assert_eq!(s.effect_modifier, d.effect_modifier);
        assert_eq!(s.motox, d.motox);
    }
}

#[test]
fn generated_data_survives_both_file_layouts() {
    let cfg = SimConfig {
        n: 400,
        seed: 21,
        ineligible: IneligibilityRates {
            missing_hre: 0.03,
            incomplete_treatment: 0.03,
            incomplete_cycle_records: 0.03,
            event_during_treatment: 0.03,
        },
        ..SimConfig::default()
    };
    let out = simulate(&cfg).unwrap();
    for schema in [Schema::Long, Schema::Wide] {
        let dir = tempfile::tempdir().unwrap();
        let path = match schema {
            Schema::Long => dir.path().to_path_buf(),
            Schema::Wide => dir.path().join("patients_wide.csv"),
        };
        write_patients(&path, schema, &out.records).unwrap();
        let back = read_patients(&path, schema).unwrap();
        assert_eq!(back, out.records);
        let eligibility = apply_eligibility(back);
        let mut excluded: Vec<(String, ExclusionReason)> = eligibility.excluded.clone();
        excluded.sort_by(|a, b| a.0.cmp(&b.0));
        let mut injected = out.exclusions.clone();
        injected.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(excluded, injected);
        assert_eq!(eligibility.eligible.len() + injected.len(), cfg.n);
    }
}
