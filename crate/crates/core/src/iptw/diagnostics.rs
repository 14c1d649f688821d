use super::{Cohort, Covariate, IptwError, StabilizedWeights, WeightSummary};
use crate::covariates::Exposure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticThresholds {
    /// Flag when |mean − 1| exceeds this.
    pub mean_tolerance: f64,
    /// Flag when the largest weight exceeds this.
    pub max_weight: f64,
}

impl Default for DiagnosticThresholds {
    fn default() -> Self {
        Self {
            mean_tolerance: 0.05,
            max_weight: 10.0,
        }
    }
}

/// An exposure level never observed at one level of a categorical
/// confounder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmptyCell {
    pub confounder: String,
    pub level: u8,
    pub exposure: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightDiagnostics {
    pub spec: String,
    pub summary: WeightSummary,
    pub mean_flag: bool,
    pub max_flag: bool,
    pub empty_cells: Vec<EmptyCell>,
}

impl WeightDiagnostics {
    pub fn flagged(&self) -> bool {
        self.mean_flag || self.max_flag || !self.empty_cells.is_empty()
    }
}

/// Summary, extreme-value flags and a positivity screen over
/// exposure × categorical-confounder cells.
pub fn weight_diagnostics(
    w: &StabilizedWeights,
    cohort: &Cohort,
    thresholds: &DiagnosticThresholds,
) -> WeightDiagnostics {
    let summary = WeightSummary::of(&w.weights);
    let mut categorical: Vec<Covariate> =
        Covariate::CONFOUNDERS.iter().copied().filter(|c| c.is_categorical()).collect();
    categorical.push(Covariate::Gr);
    let mut empty_cells = Vec::new();
    for c in categorical {
        let mut counts = [[0usize; 3]; 2];
        for s in cohort.subjects() {
            counts[usize::from(c.value(s) != 0.0)][s.exposure.index()] += 1;
        }
        for (level, row) in counts.iter().enumerate() {
            for (a, &n) in row.iter().enumerate() {
                if n == 0 {
                    empty_cells.push(EmptyCell {
                        confounder: c.name().into(),
                        level: level as u8,
                        exposure: a as u8,
                    });
                }
            }
        }
    }
    WeightDiagnostics {
        spec: w.spec_id.clone(),
        mean_flag: (summary.mean - 1.0).abs() > thresholds.mean_tolerance,
        max_flag: summary.max > thresholds.max_weight,
        summary,
        empty_cells,
    }
}

pub const SMD_FORMULA: &str =
    "mean of |pairwise standardized mean differences| across the three exposure groups; \
     (weighted) mean difference over the pooled unweighted SD sqrt((s_a^2 + s_b^2) / 2)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub confounder: String,
    pub smd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    /// Weight spec id, or "unweighted".
    pub label: String,
    pub formula: String,
    pub rows: Vec<BalanceRow>,
}

impl BalanceTable {
    pub fn get(&self, confounder: Covariate) -> Option<f64> {
        self.rows.iter().find(|r| r.confounder == confounder.name()).map(|r| r.smd)
    }
}

fn group_stats(x: &[f64], w: &[f64]) -> (f64, f64) {
    // weighted mean, unweighted sample variance
    let sw: f64 = w.iter().sum();
    let wmean = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (wmean, var)
}

/// Mean absolute pairwise standardized difference for each confounder.
pub fn balance_table(cohort: &Cohort, weights: Option<&StabilizedWeights>) -> Result<BalanceTable, IptwError> {
    let ones;
    let w: &[f64] = match weights {
        Some(sw) => &sw.weights,
        None => {
            ones = vec![1.0; cohort.len()];
            &ones
        }
    };
    let exposure = cohort.exposures();
    let mut rows = Vec::new();
    for c in Covariate::CONFOUNDERS {
        let x = c.values(cohort);
        let mut stats = Vec::new();
        for a in Exposure::ALL {
            let idx: Vec<usize> = (0..x.len()).filter(|&i| exposure[i] == a).collect();
            if idx.is_empty() {
                continue;
            }
            let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
            let ws: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            stats.push(group_stats(&xs, &ws));
        }
        let mut total = 0.0;
        let mut pairs = 0;
        for i in 0..stats.len() {
            for j in i + 1..stats.len() {
                let pooled = ((stats[i].1 + stats[j].1) / 2.0).sqrt();
                if !(pooled > 0.0) {
                    return Err(IptwError::ZeroVariance(c.name().into()));
                }
                total += ((stats[i].0 - stats[j].0) / pooled).abs();
                pairs += 1;
            }
        }
        if pairs == 0 {
            return Err(IptwError::ZeroVariance(c.name().into()));
        }
        rows.push(BalanceRow {
            confounder: c.name().into(),
            smd: total / pairs as f64,
        });
    }
    Ok(BalanceTable {
        label: weights.map_or_else(|| "unweighted".to_string(), |w| w.spec_id.clone()),
        formula: SMD_FORMULA.into(),
        rows,
    })
}
