use super::{StepSurvival, SurvivalError};

/// (time, weighted deaths, weighted number at risk) at each distinct time
/// with at least one event.
fn event_table(times: &[f64], events: &[bool], weights: Option<&[f64]>) -> Vec<(f64, f64, f64)> {
    let n = times.len();
    assert_eq!(events.len(), n, "times and events differ in length");
    if let Some(w) = weights {
        assert_eq!(w.len(), n, "times and weights differ in length");
    }
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut at_risk: f64 = (0..n).map(w).sum();
    let mut out = Vec::new();
    let mut k = 0;
    while k < n {
        let t = times[order[k]];
        let mut deaths = 0.0;
        let mut leaving = 0.0;
        while k < n && times[order[k]] == t {
            let i = order[k];
            leaving += w(i);
            if events[i] {
                deaths += w(i);
            }
            k += 1;
        }
        if deaths > 0.0 {
            out.push((t, deaths, at_risk));
        }
        at_risk -= leaving;
    }
    out
}

/// Product-limit estimator, optionally case-weighted.
pub fn kaplan_meier(times: &[f64], events: &[bool], weights: Option<&[f64]>) -> StepSurvival {
    let mut s = 1.0;
    let mut ts = Vec::new();
    let mut vs = Vec::new();
    for (t, d, r) in event_table(times, events, weights) {
        s *= 1.0 - d / r;
        ts.push(t);
        vs.push(s.max(0.0));
    }
    StepSurvival::new(ts, vs).expect("product-limit steps are valid")
}

/// Nelson–Aalen cumulative hazard at each event time.
pub fn nelson_aalen(times: &[f64], events: &[bool], weights: Option<&[f64]>) -> Vec<(f64, f64)> {
    let mut h = 0.0;
    event_table(times, events, weights)
        .into_iter()
        .map(|(t, d, r)| {
            h += d / r;
            (t, h)
        })
        .collect()
}

/// Median follow-up: Kaplan–Meier with censoring as the event.
pub fn reverse_kaplan_meier_median(times: &[f64], events: &[bool]) -> Result<f64, SurvivalError> {
    let censored: Vec<bool> = events.iter().map(|e| !e).collect();
    if !censored.iter().any(|&c| c) {
        return Err(SurvivalError::MedianUndefined);
    }
    let curve = kaplan_meier(times, &censored, None);
    curve
        .times()
        .iter()
        .zip(curve.values())
        .find(|(_, &s)| s <= 0.5)
        .map(|(&t, _)| t)
        .ok_or(SurvivalError::MedianUndefined)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_event() {
        let s = kaplan_meier(&[5.0], &[true], None);
        assert_eq!(s.eval(4.99), 1.0);
        assert_eq!(s.eval(5.0), 0.0);
    }

    #[test]
    fn no_events_is_flat() {
        let s = kaplan_meier(&[1.0, 2.0, 3.0], &[false; 3], None);
        assert!(s.times().is_empty());
        assert_eq!(s.eval(10.0), 1.0);
    }

    #[test]
    fn weighted_matches_replication() {
        let t = [1.0, 2.0, 2.0, 3.0, 5.0];
        let d = [true, false, true, true, false];
        let w = [2.0, 1.0, 3.0, 1.0, 2.0];
        let weighted = kaplan_meier(&t, &d, Some(&w));
        let mut tr = Vec::new();
        let mut dr = Vec::new();
        for i in 0..5 {
            for _ in 0..w[i] as usize {
                tr.push(t[i]);
                dr.push(d[i]);
            }
        }
        let replicated = kaplan_meier(&tr, &dr, None);
        assert_eq!(weighted.times(), replicated.times());
        for (a, b) in weighted.values().iter().zip(replicated.values()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn all_censored_median() {
        assert_eq!(reverse_kaplan_meier_median(&[7.0; 4], &[false; 4]).unwrap(), 7.0);
        assert_eq!(
            reverse_kaplan_meier_median(&[1.0, 2.0], &[true, true]),
            Err(SurvivalError::MedianUndefined)
        );
    }
}
