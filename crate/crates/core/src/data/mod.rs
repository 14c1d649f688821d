//! Canonical in-memory trial data and its file formats.
//!
//! Every downstream stage consumes [`PatientRecord`] values; they are only
//! constructed through [`read_patients`] or by code that calls
//! [`PatientRecord::validate`], so the invariants below hold everywhere.

mod csv_io;
mod eligibility;

pub use csv_io::{read_patients, write_patients, Schema};
pub use eligibility::{apply_eligibility, ConsortSummary, Eligibility, ExclusionReason};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Number of chemotherapy cycles in the protocol regimen.
pub const PROTOCOL_CYCLES: usize = 6;
/// Highest CTCAE grade.
pub const MAX_GRADE: u8 = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}:{line}: malformed row: {reason}")]
    MalformedRow {
        file: String,
        line: u64,
        reason: String,
    },
    #[error("{file}: missing column `{name}`")]
    MissingColumn { file: String, name: String },
    #[error("patient {id}: {detail}")]
    InvariantViolation { id: String, detail: String },
    #[error("duplicate patient id `{0}`")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Trial {
    BO03,
    BO06,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgeGroup {
    Child,
    Adolescent,
    Adult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Period {
    Pre,
    Post,
}

impl Period {
    pub const ALL: [Period; 2] = [Period::Pre, Period::Post];

    pub fn as_str(self) -> &'static str {
        match self {
            Period::Pre => "pre",
            Period::Post => "post",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// The fixed universe of recorded CTCAE toxicities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Toxicity {
    Leucopenia,
    Thrombocytopenia,
    OralMucositis,
    Ototoxicity,
    Cardiotoxicity,
    Neurotoxicity,
    NauseaVomiting,
    Infection,
}

impl Toxicity {
    pub const ALL: [Toxicity; 8] = [
        Toxicity::Leucopenia,
        Toxicity::Thrombocytopenia,
        Toxicity::OralMucositis,
        Toxicity::Ototoxicity,
        Toxicity::Cardiotoxicity,
        Toxicity::Neurotoxicity,
        Toxicity::NauseaVomiting,
        Toxicity::Infection,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Toxicity::Leucopenia => "leucopenia",
            Toxicity::Thrombocytopenia => "thrombocytopenia",
            Toxicity::OralMucositis => "oral_mucositis",
            Toxicity::Ototoxicity => "ototoxicity",
            Toxicity::Cardiotoxicity => "cardiotoxicity",
            Toxicity::Neurotoxicity => "neurotoxicity",
            Toxicity::NauseaVomiting => "nausea_vomiting",
            Toxicity::Infection => "infection",
        }
    }

    pub fn from_name(name: &str) -> Option<Toxicity> {
        Toxicity::ALL.into_iter().find(|t| t.name() == name)
    }

    /// Rule-specific toxicities are those the protocol ties to dose or
    /// timing modifications; the rest are generic.
    pub fn is_rule_specific(self) -> bool {
        !matches!(self, Toxicity::NauseaVomiting | Toxicity::Infection)
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Toxicity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    /// 1-based cycle index.
    pub index: u8,
    pub dose_cddp_mg_m2: f64,
    pub dose_dox_mg_m2: f64,
    /// Day offset from the start of cycle 1.
    pub start_day: u32,
}

/// Highest grade per toxicity observed over one treatment period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodToxicity {
    pub period: Period,
    grades: [u8; 8],
}

impl PeriodToxicity {
    pub fn new(period: Period, grades: [u8; 8]) -> Self {
        Self { period, grades }
    }

    pub fn none(period: Period) -> Self {
        Self::new(period, [0; 8])
    }

    pub fn grade(&self, toxicity: Toxicity) -> u8 {
        self.grades[toxicity.index()]
    }

    pub fn set_grade(&mut self, toxicity: Toxicity, grade: u8) {
        self.grades[toxicity.index()] = grade;
    }

    pub fn grades(&self) -> &[u8; 8] {
        &self.grades
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub id: String,
    pub trial: Trial,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub cycles: Vec<CycleRecord>,
    /// Indexed by [`Period`]: pre-operative first, post-operative second.
    pub toxicity: [PeriodToxicity; 2],
    /// Tumour necrosis after pre-operative chemotherapy, as a fraction.
    pub hre_necrosis_pct: Option<f64>,
    pub efs_time_months: f64,
    pub efs_event: bool,
    pub completed_treatment: bool,
    pub had_surgery: bool,
    pub event_during_treatment: bool,
}

impl PatientRecord {
    pub fn period_toxicity(&self, period: Period) -> &PeriodToxicity {
        &self.toxicity[period.index()]
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let violation = |detail: String| DataError::InvariantViolation {
            id: self.id.clone(),
            detail,
        };
        if self.id.is_empty() {
            return Err(violation("empty patient id".into()));
        }
        if !(self.efs_time_months.is_finite() && self.efs_time_months >= 0.0) {
            return Err(violation(format!(
                "efs_time_months must be finite and nonnegative, got {}",
                self.efs_time_months
            )));
        }
        if let Some(p) = self.hre_necrosis_pct {
            if !(0.0..=1.0).contains(&p) {
                return Err(violation(format!("necrosis fraction {p} outside [0, 1]")));
            }
        }
        if self.cycles.len() > PROTOCOL_CYCLES {
            return Err(violation(format!("{} cycles recorded", self.cycles.len())));
        }
        let mut prev: Option<&CycleRecord> = None;
        for c in &self.cycles {
            if !(1..=PROTOCOL_CYCLES as u8).contains(&c.index) {
                return Err(violation(format!("cycle index {} outside 1..6", c.index)));
            }
            for (drug, dose) in [("cddp", c.dose_cddp_mg_m2), ("dox", c.dose_dox_mg_m2)] {
                if !(dose.is_finite() && dose >= 0.0) {
                    return Err(violation(format!(
                        "cycle {}: {drug} dose must be finite and nonnegative, got {dose}",
                        c.index
                    )));
                }
            }
            if c.index == 1 && c.start_day != 0 {
                return Err(violation("cycle 1 must start at day 0".into()));
            }
            if let Some(p) = prev {
                if c.index <= p.index {
                    return Err(violation(format!(
                        "cycle indices not strictly increasing ({} after {})",
                        c.index, p.index
                    )));
                }
                if c.start_day < p.start_day {
                    return Err(violation(format!(
                        "cycle {} starts before cycle {}",
                        c.index, p.index
                    )));
                }
            }
            prev = Some(c);
        }
        for (slot, period) in Period::ALL.into_iter().enumerate() {
            let tox = &self.toxicity[slot];
            if tox.period != period {
                return Err(violation(format!(
                    "toxicity slot {slot} holds period {}",
                    tox.period.as_str()
                )));
            }
            for t in Toxicity::ALL {
                let g = tox.grade(t);
                if g > MAX_GRADE {
                    return Err(violation(format!(
                        "{} grade {g} outside CTCAE range 0..4 ({} period)",
                        t.name(),
                        period.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// Protocol-adherent patient: full doses, anticipated schedule.
    pub fn adherent(id: &str) -> PatientRecord {
        let starts = [0, 21, 42, 77, 98, 119];
        PatientRecord {
            id: id.to_string(),
            trial: Trial::BO03,
            age_group: AgeGroup::Adolescent,
            gender: Gender::Female,
            cycles: starts
                .iter()
                .enumerate()
                .map(|(j, &s)| CycleRecord {
                    index: j as u8 + 1,
                    dose_cddp_mg_m2: 100.0,
                    dose_dox_mg_m2: 75.0,
                    start_day: s,
                })
                .collect(),
            toxicity: [PeriodToxicity::none(Period::Pre), PeriodToxicity::none(Period::Post)],
            hre_necrosis_pct: Some(0.5),
            efs_time_months: 30.0,
            efs_event: false,
            completed_treatment: true,
            had_surgery: true,
            event_during_treatment: false,
        }
    }
}
