use super::SurvivalError;
use crate::stats::chi2_sf;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRankTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub observed: Vec<f64>,
    pub expected: Vec<f64>,
}

/// k-sample log-rank test; `groups` holds labels in `0..k`.
pub fn logrank_test(times: &[f64], events: &[bool], groups: &[usize]) -> Result<LogRankTest, SurvivalError> {
    let n = times.len();
    if events.len() != n || groups.len() != n {
        return Err(SurvivalError::InvalidInput("times, events and groups differ in length".into()));
    }
    let k = groups.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &g in groups {
        sizes[g] += 1;
    }
    if k < 2 || sizes.contains(&0) {
        return Err(SurvivalError::DegenerateGroups(format!("group sizes {sizes:?}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let mut cov = DMatrix::zeros(k, k);
    let mut pos = 0;
    while pos < n {
        let t = times[order[pos]];
        let mut deaths = vec![0.0; k];
        let mut leaving = vec![0.0; k];
        while pos < n && times[order[pos]] == t {
            let i = order[pos];
            leaving[groups[i]] += 1.0;
            if events[i] {
                deaths[groups[i]] += 1.0;
            }
            pos += 1;
        }
        let d: f64 = deaths.iter().sum();
        let r: f64 = at_risk.iter().sum();
        if d > 0.0 {
            for g in 0..k {
                observed[g] += deaths[g];
                expected[g] += d * at_risk[g] / r;
            }
            if r > 1.0 {
                let factor = d * (r - d) / (r - 1.0);
                for a in 0..k {
                    for b in 0..k {
                        let delta = if a == b { 1.0 } else { 0.0 };
                        cov[(a, b)] += factor * at_risk[a] / r * (delta - at_risk[b] / r);
                    }
                }
            }
        }
        for g in 0..k {
            at_risk[g] -= leaving[g];
        }
    }
    let m = k - 1;
    let diff = DVector::from_fn(m, |g, _| observed[g] - expected[g]);
    let v = cov.view((0, 0), (m, m)).into_owned();
    let statistic = if diff.iter().all(|&x| x == 0.0) {
        0.0
    } else {
        let chol = v.clone().cholesky().ok_or_else(|| {
            SurvivalError::DegenerateGroups("singular variance (no informative event times)".into())
        })?;
        diff.dot(&chol.solve(&diff))
    };
    Ok(LogRankTest {
        statistic,
        df: m,
        p_value: chi2_sf(statistic, m),
        observed,
        expected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_groups_give_zero() {
        let t = [1.0, 3.0, 4.0, 4.0, 7.0, 9.0];
        let d = [true, false, true, true, true, false];
        let tt = [t, t].concat();
        let dd = [d, d].concat();
        let g: Vec<usize> = (0..12).map(|i| i / 6).collect();
        let r = logrank_test(&tt, &dd, &g).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn empty_group_is_degenerate() {
        assert!(matches!(
            logrank_test(&[1.0, 2.0], &[true, true], &[0, 0]),
            Err(SurvivalError::DegenerateGroups(_))
        ));
        assert!(logrank_test(&[1.0, 2.0], &[true, true], &[0, 2]).is_err());
    }
}
