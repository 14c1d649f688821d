use super::{PatientRecord, PROTOCOL_CYCLES};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Cohort-selection stages, in the order they are applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingHre,
    /// Fewer than six cycles given, or no surgery.
    IncompleteTreatment,
    /// Treatment is flagged as completed but the cycle log is short.
    IncompleteCycleRecords,
    EventDuringTreatment,
}

impl ExclusionReason {
    pub const STAGES: [ExclusionReason; 4] = [
        ExclusionReason::MissingHre,
        ExclusionReason::IncompleteTreatment,
        ExclusionReason::IncompleteCycleRecords,
        ExclusionReason::EventDuringTreatment,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ExclusionReason::MissingHre => "missing HRe",
            ExclusionReason::IncompleteTreatment => "incomplete treatment",
            ExclusionReason::IncompleteCycleRecords => "incomplete cycle records",
            ExclusionReason::EventDuringTreatment => "event during treatment",
        }
    }
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone)]
pub struct Eligibility {
    pub eligible: Vec<PatientRecord>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

/// Consort-style counts: patients entering each stage and those it removed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsortSummary {
    pub total: usize,
    pub stages: Vec<ConsortStage>,
    pub eligible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsortStage {
    pub reason: ExclusionReason,
    pub label: String,
    pub entering: usize,
    pub excluded: usize,
}

impl Eligibility {
    pub fn consort(&self) -> ConsortSummary {
        let total = self.eligible.len() + self.excluded.len();
        let mut entering = total;
        let stages = ExclusionReason::STAGES
            .into_iter()
            .map(|reason| {
                let excluded = self.excluded.iter().filter(|(_, r)| *r == reason).count();
                let stage = ConsortStage {
                    reason,
                    label: reason.label().to_string(),
                    entering,
                    excluded,
                };
                entering -= excluded;
                stage
            })
            .collect();
        ConsortSummary {
            total,
            stages,
            eligible: self.eligible.len(),
        }
    }
}

fn exclusion(p: &PatientRecord) -> Option<ExclusionReason> {
    if p.hre_necrosis_pct.is_none() {
        return Some(ExclusionReason::MissingHre);
    }
    if !p.completed_treatment || !p.had_surgery {
        return Some(ExclusionReason::IncompleteTreatment);
    }
    if p.cycles.len() < PROTOCOL_CYCLES {
        return Some(ExclusionReason::IncompleteCycleRecords);
    }
    if p.event_during_treatment {
        return Some(ExclusionReason::EventDuringTreatment);
    }
    None
}

/// Splits records into the analysis cohort and the excluded patients, each
/// exclusion tagged with the first stage that removed it.
pub fn apply_eligibility(records: Vec<PatientRecord>) -> Eligibility {
    let mut eligible = Vec::with_capacity(records.len());
    let mut excluded = Vec::new();
    for p in records {
        match exclusion(&p) {
            Some(reason) => excluded.push((p.id, reason)),
            None => eligible.push(p),
        }
    }
    Eligibility { eligible, excluded }
}
