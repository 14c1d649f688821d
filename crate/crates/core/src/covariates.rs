//! Patient-level derived covariates: standardized dose and time, received
//! dose intensity, the three-level exposure strategy, the histological
//! response effect modifier and the MOTox toxicity-burden scores.

use crate::data::{CycleRecord, PatientRecord, Period, PeriodToxicity, Toxicity, PROTOCOL_CYCLES};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Protocol cisplatin dose per cycle, mg/m².
pub const CDDP_PROTOCOL_DOSE: f64 = 100.0;
/// Protocol doxorubicin dose per cycle, mg/m².
pub const DOX_PROTOCOL_DOSE: f64 = 75.0;
/// Five 21-day cycles, 14 days for surgery and 3 days into cycle 6.
pub const ANTICIPATED_TREATMENT_DAYS: f64 = 122.0;
/// Actual treatment time runs to this many days after the start of cycle 6.
pub const DAYS_INTO_LAST_CYCLE: u32 = 3;

pub const STANDARD_RDI_THRESHOLD: f64 = 0.85;
pub const REDUCED_RDI_THRESHOLD: f64 = 0.70;
pub const GOOD_RESPONSE_NECROSIS: f64 = 0.90;
/// RDI is rounded to this many decimals before it is compared with the
/// exposure thresholds.
pub const RDI_CLASSIFICATION_DECIMALS: i32 = 10;

#[derive(Debug, Error, PartialEq)]
pub enum DerivedError {
    #[error("patient {id}: {cycles} of {PROTOCOL_CYCLES} cycles recorded")]
    IncompleteTreatment { id: String, cycles: usize },
    #[error("patient {id}: non-positive treatment duration ({days} days)")]
    NonPositiveDuration { id: String, days: f64 },
    #[error("patient {id}: histological response missing")]
    MissingHre { id: String },
}

/// RDI-based exposure strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Exposure {
    Standard = 0,
    Reduced = 1,
    HighlyReduced = 2,
}

impl Exposure {
    pub const ALL: [Exposure; 3] = [Exposure::Standard, Exposure::Reduced, Exposure::HighlyReduced];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Exposure> {
        Exposure::ALL.get(i).copied()
    }
}

impl From<Exposure> for u8 {
    fn from(e: Exposure) -> u8 {
        e as u8
    }
}

impl TryFrom<u8> for Exposure {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        Exposure::from_index(v as usize).ok_or_else(|| format!("exposure {v} not in 0..=2"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToxicitySet {
    /// Leucopenia, thrombocytopenia, oral mucositis, oto-, cardio- and
    /// neurotoxicity.
    Rule,
    /// Nausea/vomiting and infection.
    Gen,
}

impl ToxicitySet {
    pub fn members(self) -> impl Iterator<Item = Toxicity> {
        Toxicity::ALL
            .into_iter()
            .filter(move |t| t.is_rule_specific() == (self == ToxicitySet::Rule))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotoxScores {
    pub rule_pre: f64,
    pub rule_post: f64,
    pub gen_pre: f64,
    pub gen_post: f64,
}

impl MotoxScores {
    pub fn get(&self, set: ToxicitySet, period: Period) -> f64 {
        match (set, period) {
            (ToxicitySet::Rule, Period::Pre) => self.rule_pre,
            (ToxicitySet::Rule, Period::Post) => self.rule_post,
            (ToxicitySet::Gen, Period::Pre) => self.gen_pre,
            (ToxicitySet::Gen, Period::Post) => self.gen_post,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedCovariates {
    pub id: String,
    pub delta: f64,
    pub gamma: f64,
    pub rdi: f64,
    pub exposure: Exposure,
    /// 1 for good responders.
    pub effect_modifier: u8,
    pub motox: MotoxScores,
}

fn require_protocol_cycles<'a>(
    id: &str,
    cycles: &'a [CycleRecord],
) -> Result<&'a [CycleRecord], DerivedError> {
    if cycles.len() < PROTOCOL_CYCLES {
        return Err(DerivedError::IncompleteTreatment {
            id: id.to_string(),
            cycles: cycles.len(),
        });
    }
    Ok(cycles)
}

/// Mean over drugs and cycles of received dose relative to protocol dose.
pub fn standardized_dose(cycles: &[CycleRecord]) -> Result<f64, DerivedError> {
    let cycles = require_protocol_cycles("?", cycles)?;
    let cddp: f64 = cycles.iter().map(|c| c.dose_cddp_mg_m2 / CDDP_PROTOCOL_DOSE).sum();
    let dox: f64 = cycles.iter().map(|c| c.dose_dox_mg_m2 / DOX_PROTOCOL_DOSE).sum();
    Ok((cddp + dox) / (2 * PROTOCOL_CYCLES) as f64)
}

/// Actual over anticipated treatment time.
pub fn standardized_time(cycles: &[CycleRecord]) -> Result<f64, DerivedError> {
    let cycles = require_protocol_cycles("?", cycles)?;
    let first = cycles[0].start_day as i64;
    let last = cycles[PROTOCOL_CYCLES - 1].start_day as i64;
    standardized_time_from_span((last + DAYS_INTO_LAST_CYCLE as i64 - first) as f64)
}

/// Standardized time for an actual treatment duration given in days.
pub fn standardized_time_from_span(actual_days: f64) -> Result<f64, DerivedError> {
    if !(actual_days > 0.0) {
        return Err(DerivedError::NonPositiveDuration {
            id: "?".into(),
            days: actual_days,
        });
    }
    Ok(actual_days / ANTICIPATED_TREATMENT_DAYS)
}

fn round_decimals(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale).round() / scale
}

/// Three-level exposure from RDI. Thresholds are inclusive on their lower
/// end and applied to RDI rounded to [`RDI_CLASSIFICATION_DECIMALS`].
pub fn classify_exposure(rdi: f64) -> Exposure {
    let rdi = round_decimals(rdi, RDI_CLASSIFICATION_DECIMALS);
    if rdi >= STANDARD_RDI_THRESHOLD {
        Exposure::Standard
    } else if rdi >= REDUCED_RDI_THRESHOLD {
        Exposure::Reduced
    } else {
        Exposure::HighlyReduced
    }
}

pub fn exposure_from_components(delta: f64, gamma: f64) -> Exposure {
    classify_exposure(delta / gamma)
}

/// 1 (good responder) when necrosis reaches 90%, else 0.
pub fn classify_effect_modifier(necrosis_fraction: f64) -> u8 {
    u8::from(necrosis_fraction >= GOOD_RESPONSE_NECROSIS)
}

/// Mean grade over the set plus the worst grade in the set.
pub fn motox_score(grades: &PeriodToxicity, set: ToxicitySet) -> f64 {
    let (sum, count, max) = set.members().fold((0u32, 0u32, 0u8), |(s, n, m), t| {
        let g = grades.grade(t);
        (s + g as u32, n + 1, m.max(g))
    });
    sum as f64 / count as f64 + max as f64
}

pub fn motox_scores(record: &PatientRecord) -> MotoxScores {
    let pre = record.period_toxicity(Period::Pre);
    let post = record.period_toxicity(Period::Post);
    MotoxScores {
        rule_pre: motox_score(pre, ToxicitySet::Rule),
        rule_post: motox_score(post, ToxicitySet::Rule),
        gen_pre: motox_score(pre, ToxicitySet::Gen),
        gen_post: motox_score(post, ToxicitySet::Gen),
    }
}

pub fn derive(record: &PatientRecord) -> Result<DerivedCovariates, DerivedError> {
    let with_id = |e: DerivedError| match e {
        DerivedError::IncompleteTreatment { cycles, .. } => DerivedError::IncompleteTreatment {
            id: record.id.clone(),
            cycles,
        },
        DerivedError::NonPositiveDuration { days, .. } => DerivedError::NonPositiveDuration {
            id: record.id.clone(),
            days,
        },
        other => other,
    };
    let necrosis = record.hre_necrosis_pct.ok_or_else(|| DerivedError::MissingHre {
        id: record.id.clone(),
    })?;
    let delta = standardized_dose(&record.cycles).map_err(with_id)?;
    let gamma = standardized_time(&record.cycles).map_err(with_id)?;
    let rdi = delta / gamma;
    Ok(DerivedCovariates {
        id: record.id.clone(),
        delta,
        gamma,
        rdi,
        exposure: classify_exposure(rdi),
        effect_modifier: classify_effect_modifier(necrosis),
        motox: motox_scores(record),
    })
}

pub const DERIVED_COLUMNS: [&str; 10] = [
    "id",
    "delta",
    "gamma",
    "rdi",
    "exposure",
    "effect_modifier",
    "motox_rule_pre",
    "motox_rule_post",
    "motox_gen_pre",
    "motox_gen_post",
];

#[derive(Serialize, Deserialize)]
struct DerivedRow {
    id: String,
    delta: f64,
    gamma: f64,
    rdi: f64,
    exposure: u8,
    effect_modifier: u8,
    motox_rule_pre: f64,
    motox_rule_post: f64,
    motox_gen_pre: f64,
    motox_gen_post: f64,
}

pub fn write_derived_csv(path: &Path, rows: &[DerivedCovariates]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for d in rows {
        w.serialize(DerivedRow {
            id: d.id.clone(),
            delta: d.delta,
            gamma: d.gamma,
            rdi: d.rdi,
            exposure: d.exposure.into(),
            effect_modifier: d.effect_modifier,
            motox_rule_pre: d.motox.rule_pre,
            motox_rule_post: d.motox.rule_post,
            motox_gen_pre: d.motox.gen_pre,
            motox_gen_post: d.motox.gen_post,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_derived_csv(path: &Path) -> Result<Vec<DerivedCovariates>, csv::Error> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize::<DerivedRow>() {
        let row = row?;
        let exposure = Exposure::try_from(row.exposure).map_err(|e| {
            csv::Error::from(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
        })?;
        out.push(DerivedCovariates {
            id: row.id,
            delta: row.delta,
            gamma: row.gamma,
            rdi: row.rdi,
            exposure,
            effect_modifier: row.effect_modifier,
            motox: MotoxScores {
                rule_pre: row.motox_rule_pre,
                rule_post: row.motox_rule_post,
                gen_pre: row.motox_gen_pre,
                gen_post: row.motox_gen_post,
            },
        });
    }
    Ok(out)
}
