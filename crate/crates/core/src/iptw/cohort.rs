use super::IptwError;
use crate::covariates::{derive, DerivedCovariates, DerivedError, Exposure, MotoxScores};
use crate::data::{AgeGroup, Gender, PatientRecord, Trial};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// One eligible patient with everything the weight and outcome models use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub trial: Trial,
    pub age_group: AgeGroup,
    pub gender: Gender,
    pub exposure: Exposure,
    /// 1 for good histological responders.
    pub effect_modifier: u8,
    pub motox: MotoxScores,
    pub time: f64,
    pub event: bool,
}

impl Subject {
    pub fn new(record: &PatientRecord, derived: &DerivedCovariates) -> Self {
        Self {
            id: record.id.clone(),
            trial: record.trial,
            age_group: record.age_group,
            gender: record.gender,
            exposure: derived.exposure,
            effect_modifier: derived.effect_modifier,
            motox: derived.motox,
            time: record.efs_time_months,
            event: record.efs_event,
        }
    }
}

/// Analysis cohort in a fixed subject order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cohort {
    subjects: Vec<Subject>,
}

impl Cohort {
    pub fn new(subjects: Vec<Subject>) -> Self {
        Self { subjects }
    }

    /// Derives covariates for every record.
    pub fn from_records(records: &[PatientRecord]) -> Result<Self, DerivedError> {
        records
            .iter()
            .map(|r| derive(r).map(|d| Subject::new(r, &d)))
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    /// Joins derived covariates with the baseline and outcome fields of the
    /// matching records, keeping the order of `derived`.
    pub fn join(records: &[PatientRecord], derived: &[DerivedCovariates]) -> Result<Self, IptwError> {
        let by_id: HashMap<&str, &PatientRecord> =
            records.iter().map(|r| (r.id.as_str(), r)).collect();
        derived
            .iter()
            .map(|d| {
                by_id
                    .get(d.id.as_str())
                    .map(|r| Subject::new(r, d))
                    .ok_or_else(|| IptwError::MissingField {
                        id: d.id.clone(),
                        field: "baseline record".into(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn exposures(&self) -> Vec<Exposure> {
        self.subjects.iter().map(|s| s.exposure).collect()
    }

    pub fn exposure_indices(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.exposure.index()).collect()
    }

    pub fn effect_modifiers(&self) -> Vec<u8> {
        self.subjects.iter().map(|s| s.effect_modifier).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.subjects.iter().map(|s| s.event).collect()
    }

    /// Subjects at the given positions, repeats allowed.
    pub fn select(&self, rows: &[usize]) -> Cohort {
        Cohort::new(rows.iter().map(|&i| self.subjects[i].clone()).collect())
    }
}
