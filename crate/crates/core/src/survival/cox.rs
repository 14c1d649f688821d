use super::{StepSurvival, SurvivalError, TieMethod};
use crate::covariates::Exposure;
use crate::linalg::{gram_is_singular, spd_inverse, spd_solve, symmetrize};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Marginal structural Cox model terms, in coefficient order.
pub const MSM_TERMS: [&str; 5] = ["a1", "a2", "a1:V", "a2:V", "V"];

/// Covariate row for exposure `a` and effect modifier `v`.
pub fn msm_pattern(a: Exposure, v: u8) -> [f64; 5] {
    let a1 = f64::from(u8::from(a == Exposure::Reduced));
    let a2 = f64::from(u8::from(a == Exposure::HighlyReduced));
    let v = f64::from(v);
    [a1, a2, a1 * v, a2 * v, v]
}

pub fn msm_design(exposure: &[Exposure], v: &[u8]) -> DMatrix<f64> {
    assert_eq!(exposure.len(), v.len());
    let rows: Vec<[f64; 5]> = exposure.iter().zip(v).map(|(&a, &v)| msm_pattern(a, v)).collect();
    DMatrix::from_fn(rows.len(), 5, |i, j| rows[i][j])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoxOptions {
    pub ties: TieMethod,
    pub max_iter: usize,
    /// Converged once every Newton step component is below this.
    pub tol: f64,
    /// Centered linear predictors beyond this signal a monotone likelihood.
    pub max_linear_predictor: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        Self {
            ties: TieMethod::Breslow,
            max_iter: 50,
            tol: 1e-10,
            max_linear_predictor: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Inverse of the weighted information matrix.
    pub model_covariance: Vec<Vec<f64>>,
    /// Sandwich built from weighted score residuals.
    pub robust_covariance: Vec<Vec<f64>>,
    /// Event times of the baseline cumulative hazard.
    pub baseline_times: Vec<f64>,
    /// Weighted Breslow cumulative hazard at a zero covariate row.
    pub baseline_cumhaz: Vec<f64>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub ties: TieMethod,
    pub n: usize,
    pub n_events: usize,
}

fn diag_sqrt(m: &[Vec<f64>]) -> Vec<f64> {
    (0..m.len()).map(|j| m[j][j].max(0.0).sqrt()).collect()
}

impl CoxFit {
    pub fn model_se(&self) -> Vec<f64> {
        diag_sqrt(&self.model_covariance)
    }

    pub fn robust_se(&self) -> Vec<f64> {
        diag_sqrt(&self.robust_covariance)
    }

    /// Estimate ± 1.96 robust standard errors.
    pub fn robust_ci(&self) -> Vec<(f64, f64)> {
        self.coefficients
            .iter()
            .zip(self.robust_se())
            .map(|(b, se)| (b - 1.959_963_984_540_054 * se, b + 1.959_963_984_540_054 * se))
            .collect()
    }

    pub fn baseline_cumulative_hazard(&self, t: f64) -> f64 {
        let k = self.baseline_times.partition_point(|&s| s <= t);
        if k == 0 {
            0.0
        } else {
            self.baseline_cumhaz[k - 1]
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.coefficients.len());
        x.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum()
    }

    /// S(t | x) = exp(−H0(t) exp(xβ)).
    pub fn survival(&self, x: &[f64]) -> StepSurvival {
        let r = self.linear_predictor(x).exp();
        let values = self.baseline_cumhaz.iter().map(|h| (-h * r).exp()).collect();
        StepSurvival::new(self.baseline_times.clone(), values)
            .expect("cumulative hazard is nondecreasing")
    }
}

/// Survival under the marginal structural model at pattern (a, v).
pub fn predict_survival(fit: &CoxFit, a: Exposure, v: u8) -> StepSurvival {
    fit.survival(&msm_pattern(a, v))
}

/// Relative rounding slack when comparing log-likelihoods across steps.
const LOGLIK_NOISE: f64 = 1e-11;

/// Tied-event-time block in ascending time order.
struct Group {
    time: f64,
    /// Positions (in sorted order) sharing this time.
    start: usize,
    end: usize,
    deaths: Vec<usize>,
}

struct Prepared {
    /// Centered covariates in ascending time order.
    x: DMatrix<f64>,
    w: Vec<f64>,
    dead: Vec<bool>,
    groups: Vec<Group>,
    center: DVector<f64>,
}

impl Prepared {
    fn new(times: &[f64], events: &[bool], x: &DMatrix<f64>, w: &[f64]) -> Result<Self, SurvivalError> {
        let n = times.len();
        if events.len() != n || x.nrows() != n || w.len() != n {
            return Err(SurvivalError::InvalidInput(format!(
                "lengths differ: {n} times, {} events, {} rows, {} weights",
                events.len(),
                x.nrows(),
                w.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(SurvivalError::InvalidInput("times must be finite and nonnegative".into()));
        }
        if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(SurvivalError::InvalidInput("weights must be finite and positive".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SurvivalError::InvalidInput("design has non-finite entries".into()));
        }
        if !events.iter().any(|&d| d) {
            return Err(SurvivalError::NoEvents);
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
        let wsum: f64 = w.iter().sum();
        let p = x.ncols();
        let center = DVector::from_fn(p, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / wsum);
        let xs = DMatrix::from_fn(n, p, |r, j| x[(order[r], j)] - center[j]);
        let ws: Vec<f64> = order.iter().map(|&i| w[i]).collect();
        let dead: Vec<bool> = order.iter().map(|&i| events[i]).collect();
        let mut groups = Vec::new();
        let mut start = 0;
        while start < n {
            let t = times[order[start]];
            let mut end = start;
            while end < n && times[order[end]] == t {
                end += 1;
            }
            let deaths: Vec<usize> = (start..end).filter(|&r| dead[r]).collect();
            groups.push(Group {
                time: t,
                start,
                end,
                deaths,
            });
            start = end;
        }
        Ok(Self {
            x: xs,
            w: ws,
            dead,
            groups,
            center,
        })
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn eta(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.x * beta
    }
}

/// One term of the tie-corrected denominator sum.
struct PseudoEvent {
    group: usize,
    fraction: f64,
    mass: f64,
    den: f64,
    xbar: DVector<f64>,
}

struct Evaluation {
    loglik: f64,
    score: DVector<f64>,
    info: DMatrix<f64>,
    pseudo: Vec<PseudoEvent>,
}

fn evaluate(data: &Prepared, beta: &DVector<f64>, ties: TieMethod, keep_pseudo: bool) -> Evaluation {
    let p = data.p();
    let eta = data.eta(beta);
    let mut s0 = 0.0;
    let mut s1 = DVector::zeros(p);
    let mut s2 = DMatrix::zeros(p, p);
    let mut loglik = 0.0;
    let mut score = DVector::zeros(p);
    let mut info = DMatrix::zeros(p, p);
    let mut pseudo = Vec::new();
    for (gi, g) in data.groups.iter().enumerate().rev() {
        for r in g.start..g.end {
            let risk = data.w[r] * eta[r].exp();
            let xr = data.x.row(r).transpose();
            s0 += risk;
            s1.axpy(risk, &xr, 1.0);
            s2.ger(risk, &xr, &xr, 1.0);
        }
        if g.deaths.is_empty() {
            continue;
        }
        let mut d0 = 0.0;
        let mut d1 = DVector::zeros(p);
        let mut d2 = DMatrix::zeros(p, p);
        let mut wd = 0.0;
        for &r in &g.deaths {
            let risk = data.w[r] * eta[r].exp();
            let xr = data.x.row(r).transpose();
            wd += data.w[r];
            loglik += data.w[r] * eta[r];
            score.axpy(data.w[r], &xr, 1.0);
            if ties == TieMethod::Efron {
                d0 += risk;
                d1.axpy(risk, &xr, 1.0);
                d2.ger(risk, &xr, &xr, 1.0);
            }
        }
        let (count, mass) = match ties {
            TieMethod::Breslow => (1, wd),
            TieMethod::Efron => (g.deaths.len(), wd / g.deaths.len() as f64),
        };
        for k in 0..count {
            let f = k as f64 / count as f64;
            let den = s0 - f * d0;
            let xbar = (&s1 - &d1 * f) / den;
            let second = (&s2 - &d2 * f) / den;
            loglik -= mass * den.ln();
            score.axpy(-mass, &xbar, 1.0);
            info += (second - &xbar * xbar.transpose()) * mass;
            if keep_pseudo {
                pseudo.push(PseudoEvent {
                    group: gi,
                    fraction: f,
                    mass,
                    den,
                    xbar,
                });
            }
        }
    }
    symmetrize(&mut info);
    pseudo.reverse();
    Evaluation {
        loglik,
        score,
        info,
        pseudo,
    }
}

/// Weighted log partial likelihood at `beta`.
pub fn log_partial_likelihood(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    weights: &[f64],
    beta: &[f64],
    ties: TieMethod,
) -> Result<f64, SurvivalError> {
    let data = Prepared::new(times, events, x, weights)?;
    let b = DVector::from_column_slice(beta);
    // centering shifts every linear predictor by a constant, which cancels
    Ok(evaluate(&data, &b, ties, false).loglik)
}

/// Analytic gradient of [`log_partial_likelihood`].
pub fn partial_score(
    times: &[f64],
    events: &[bool],
    x: &DMatrix<f64>,
    weights: &[f64],
    beta: &[f64],
    ties: TieMethod,
) -> Result<Vec<f64>, SurvivalError> {
    let data = Prepared::new(times, events, x, weights)?;
    let b = DVector::from_column_slice(beta);
    Ok(evaluate(&data, &b, ties, false).score.iter().copied().collect())
}

fn robust_meat(data: &Prepared, beta: &DVector<f64>, pseudo: &[PseudoEvent]) -> DMatrix<f64> {
    let n = data.x.nrows();
    let p = data.p();
    let eta = data.eta(beta);
    // per-group cumulative hazard-type sums over event times <= group time
    let mut by_group: Vec<Vec<&PseudoEvent>> = vec![Vec::new(); data.groups.len()];
    for pe in pseudo {
        by_group[pe.group].push(pe);
    }
    let mut cum_a = 0.0;
    let mut cum_b = DVector::zeros(p);
    let mut meat = DMatrix::zeros(p, p);
    for (gi, g) in data.groups.iter().enumerate() {
        let events = &by_group[gi];
        let wd: f64 = g.deaths.iter().map(|&r| data.w[r]).sum();
        let mut mean_xbar = DVector::zeros(p);
        for pe in events {
            cum_a += pe.mass / pe.den;
            cum_b.axpy(pe.mass / pe.den, &pe.xbar, 1.0);
            mean_xbar.axpy(pe.mass / wd, &pe.xbar, 1.0);
        }
        for r in g.start..g.end {
            let xr = data.x.row(r).transpose();
            let risk = eta[r].exp();
            let mut l = -(&xr * cum_a - &cum_b) * risk;
            if data.dead[r] {
                l += &xr - &mean_xbar;
                for pe in events.iter().filter(|pe| pe.fraction > 0.0) {
                    l += (&xr - &pe.xbar) * (risk * pe.mass * pe.fraction / pe.den);
                }
            }
            meat.ger(data.w[r] * data.w[r], &l, &l, 1.0);
        }
    }
    debug_assert_eq!(n, data.w.len());
    symmetrize(&mut meat);
    meat
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Case-weighted Cox regression by Newton's method with step halving.
///
/// `design` has one row per subject; `names` labels its columns.
pub fn fit_weighted_cox(
    times: &[f64],
    events: &[bool],
    design: &DMatrix<f64>,
    names: &[&str],
    weights: &[f64],
    opts: &CoxOptions,
) -> Result<CoxFit, SurvivalError> {
    if names.len() != design.ncols() {
        return Err(SurvivalError::InvalidInput(format!(
            "{} names for {} columns",
            names.len(),
            design.ncols()
        )));
    }
    let data = Prepared::new(times, events, design, weights)?;
    let p = data.p();
    let wx = DMatrix::from_fn(data.x.nrows(), p, |i, j| data.w[i].sqrt() * data.x[(i, j)]);
    if gram_is_singular(&wx.tr_mul(&wx), 1e-10) {
        return Err(SurvivalError::Collinear);
    }

    let mut beta = DVector::zeros(p);
    let mut current = evaluate(&data, &beta, opts.ties, false);
    let null_loglik = current.loglik;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let Some(step) = spd_solve(&current.info, &current.score) else {
            // the design has full rank, so a singular information matrix
            // means the risk sets have separated
            let max_eta = data.eta(&beta).amax();
            return Err(SurvivalError::MonotoneLikelihood { max_eta });
        };
        if step.amax() < opts.tol {
            beta += step;
            converged = true;
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand = &beta + &step * scale;
            let eval = evaluate(&data, &cand, opts.ties, false);
            if eval.loglik.is_finite() && eval.loglik >= current.loglik - LOGLIK_NOISE * (1.0 + current.loglik.abs()) {
                accepted = Some((cand, eval));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, eval)) = accepted else {
            // no further ascent representable in double precision
            converged = step.amax() < opts.tol.sqrt();
            break;
        };
        beta = cand;
        current = eval;
        let max_eta = data.eta(&beta).amax();
        if max_eta > opts.max_linear_predictor {
            return Err(SurvivalError::MonotoneLikelihood { max_eta });
        }
    }
    if !converged {
        let max_eta = data.eta(&beta).amax();
        if max_eta > opts.max_linear_predictor / 2.0 {
            return Err(SurvivalError::MonotoneLikelihood { max_eta });
        }
        return Err(SurvivalError::NotConverged { iterations });
    }

    let final_eval = evaluate(&data, &beta, opts.ties, true);
    let inv = spd_inverse(&final_eval.info).ok_or(SurvivalError::Collinear)?;
    let meat = robust_meat(&data, &beta, &final_eval.pseudo);
    let mut robust = &inv * meat * &inv;
    symmetrize(&mut robust);

    // baseline at x = 0 on the original scale
    let shift = (-data.center.dot(&beta)).exp();
    let mut baseline_times = Vec::new();
    let mut baseline_cumhaz = Vec::new();
    let mut h = 0.0;
    let mut last_group = usize::MAX;
    for pe in &final_eval.pseudo {
        h += pe.mass / pe.den * shift;
        if pe.group == last_group {
            *baseline_cumhaz.last_mut().unwrap() = h;
        } else {
            baseline_times.push(data.groups[pe.group].time);
            baseline_cumhaz.push(h);
            last_group = pe.group;
        }
    }

    Ok(CoxFit {
        names: names.iter().map(|s| s.to_string()).collect(),
        coefficients: beta.iter().copied().collect(),
        model_covariance: to_rows(&inv),
        robust_covariance: to_rows(&robust),
        baseline_times,
        baseline_cumhaz,
        log_likelihood: final_eval.loglik,
        null_log_likelihood: null_loglik,
        iterations,
        converged,
        ties: opts.ties,
        n: times.len(),
        n_events: events.iter().filter(|&&d| d).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::nelson_aalen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_data(n: usize, p: usize, seed: u64, tied: bool) -> (Vec<f64>, Vec<bool>, DMatrix<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, j| if j % 2 == 0 { f64::from(u8::from(rng.random_bool(0.4))) } else { rng.random_range(-1.0..1.0) });
        let times: Vec<f64> = (0..n)
            .map(|_| {
                let t: f64 = rng.random_range(0.1..10.0);
                if tied { t.ceil() } else { t }
            })
            .collect();
        let events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..3.0)).collect();
        (times, events, x, w)
    }

    /// Direct O(n²) Breslow partial likelihood, no grouping or centering.
    fn breslow_direct(times: &[f64], events: &[bool], x: &DMatrix<f64>, w: &[f64], beta: &[f64]) -> f64 {
        let eta: Vec<f64> = (0..times.len())
            .map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum())
            .collect();
        let mut ll = 0.0;
        for i in 0..times.len() {
            if events[i] {
                let den: f64 = (0..times.len())
                    .filter(|&k| times[k] >= times[i])
                    .map(|k| w[k] * eta[k].exp())
                    .sum();
                ll += w[i] * (eta[i] - den.ln());
            }
        }
        ll
    }

    #[test]
    fn breslow_likelihood_matches_direct_sum() {
        let (t, d, x, w) = random_data(40, 3, 1, true);
        let beta = [0.3, -0.7, 0.2];
        let a = log_partial_likelihood(&t, &d, &x, &w, &beta, TieMethod::Breslow).unwrap();
        let b = breslow_direct(&t, &d, &x, &w, &beta);
        assert!((a - b).abs() < 1e-10 * b.abs());
    }

    /// Efron with unit weights written from the textbook definition.
    fn efron_direct(times: &[f64], events: &[bool], x: &DMatrix<f64>, beta: &[f64]) -> f64 {
        let n = times.len();
        let eta: Vec<f64> = (0..n).map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum()).collect();
        let mut distinct: Vec<f64> = (0..n).filter(|&i| events[i]).map(|i| times[i]).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        let mut ll = 0.0;
        for t in distinct {
            let deaths: Vec<usize> = (0..n).filter(|&i| events[i] && times[i] == t).collect();
            let risk: f64 = (0..n).filter(|&i| times[i] >= t).map(|i| eta[i].exp()).sum();
            let tied: f64 = deaths.iter().map(|&i| eta[i].exp()).sum();
            let d = deaths.len() as f64;
            for (k, &i) in deaths.iter().enumerate() {
                ll += eta[i] - (risk - k as f64 / d * tied).ln();
            }
        }
        ll
    }

    #[test]
    fn efron_likelihood_matches_textbook_definition() {
        let (t, d, x, _) = random_data(50, 2, 2, true);
        let w = vec![1.0; 50];
        let beta = [0.5, -0.4];
        let a = log_partial_likelihood(&t, &d, &x, &w, &beta, TieMethod::Efron).unwrap();
        let b = efron_direct(&t, &d, &x, &beta);
        assert!((a - b).abs() < 1e-10 * b.abs());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn score_matches_central_differences(seed in 0u64..10_000, efron in any::<bool>()) {
            let ties = if efron { TieMethod::Efron } else { TieMethod::Breslow };
            let (t, d, x, w) = random_data(30, 3, seed, true);
            prop_assume!(d.iter().any(|&e| e));
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let beta: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = partial_score(&t, &d, &x, &w, &beta, ties).unwrap();
            for j in 0..3 {
                let h = 1e-6;
                let mut up = beta.clone();
                let mut dn = beta.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (log_partial_likelihood(&t, &d, &x, &w, &up, ties).unwrap()
                    - log_partial_likelihood(&t, &d, &x, &w, &dn, ties).unwrap()) / (2.0 * h);
                let rel = (fd - g[j]).abs() / g[j].abs().max(1e-3);
                prop_assert!(rel < 1e-5, "component {}: fd {} vs analytic {}", j, fd, g[j]);
            }
        }

        #[test]
        fn scaling_weights_keeps_coefficients_and_robust_covariance(seed in 0u64..10_000, c in 0.1f64..20.0) {
            let (t, d, x, w) = random_data(60, 2, seed, false);
            let scaled: Vec<f64> = w.iter().map(|v| v * c).collect();
            let names = ["x1", "x2"];
            let a = fit_weighted_cox(&t, &d, &x, &names, &w, &CoxOptions::default());
            let b = fit_weighted_cox(&t, &d, &x, &names, &scaled, &CoxOptions::default());
            if let (Ok(a), Ok(b)) = (a, b) {
                for j in 0..2 {
                    prop_assert!((a.coefficients[j] - b.coefficients[j]).abs() < 1e-10);
                    for k in 0..2 {
                        prop_assert!((a.robust_covariance[j][k] - b.robust_covariance[j][k]).abs() < 1e-9 * a.robust_covariance[j][j].abs().max(1e-12));
                        prop_assert!((a.model_covariance[j][k] - c * b.model_covariance[j][k]).abs() < 1e-9 * a.model_covariance[j][j]);
                    }
                }
            }
        }
    }

    #[test]
    fn duplicating_subjects_equals_doubling_weights() {
        let (t, d, x, w) = random_data(80, 3, 5, true);
        let names = ["a", "b", "c"];
        for ties in [TieMethod::Breslow, TieMethod::Efron] {
            let opts = CoxOptions { ties, ..Default::default() };
            let doubled: Vec<f64> = w.iter().map(|v| 2.0 * v).collect();
            let base = fit_weighted_cox(&t, &d, &x, &names, &w, &opts).unwrap();
            let dbl = fit_weighted_cox(&t, &d, &x, &names, &doubled, &opts).unwrap();
            let t2 = [t.clone(), t.clone()].concat();
            let d2 = [d.clone(), d.clone()].concat();
            let w2 = [w.clone(), w.clone()].concat();
            let x2 = DMatrix::from_fn(160, 3, |i, j| x[(i % 80, j)]);
            let dup = fit_weighted_cox(&t2, &d2, &x2, &names, &w2, &opts).unwrap();
            if ties == TieMethod::Breslow {
                for j in 0..3 {
                    assert!((dbl.coefficients[j] - dup.coefficients[j]).abs() < 1e-10);
                }
            }
            for j in 0..3 {
                assert!((dbl.coefficients[j] - base.coefficients[j]).abs() < 1e-10);
                for k in 0..3 {
                    assert!((dbl.model_covariance[j][k] * 2.0 - base.model_covariance[j][k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn loglik_nondecreasing_over_iterations() {
        let (t, d, x, w) = random_data(200, 3, 7, false);
        let names = ["a", "b", "c"];
        let mut prev = f64::NEG_INFINITY;
        for max_iter in 1..6 {
            let opts = CoxOptions {
                max_iter,
                tol: 0.0,
                ..Default::default()
            };
            let data = Prepared::new(&t, &d, &x, &w).unwrap();
            let _ = fit_weighted_cox(&t, &d, &x, &names, &w, &opts);
            // replay the same iterations directly
            let mut beta = DVector::zeros(3);
            for _ in 0..max_iter {
                let e = evaluate(&data, &beta, TieMethod::Breslow, false);
                let step = spd_solve(&e.info, &e.score).unwrap();
                let mut s = 1.0;
                loop {
                    let cand = &beta + &step * s;
                    if evaluate(&data, &cand, TieMethod::Breslow, false).loglik >= e.loglik || s < 1e-12 {
                        beta = cand;
                        break;
                    }
                    s *= 0.5;
                }
            }
            let ll = evaluate(&data, &beta, TieMethod::Breslow, false).loglik;
            assert!(ll >= prev - 1e-12);
            prev = ll;
        }
    }

    #[test]
    fn baseline_at_zero_effect_is_nelson_aalen() {
        let (t, d, _, w) = random_data(70, 1, 8, true);
        // a column with no association pins the coefficient near zero; use
        // the evaluation at beta = 0 directly instead
        let x = DMatrix::from_fn(70, 1, |i, _| (i % 2) as f64);
        let data = Prepared::new(&t, &d, &x, &w).unwrap();
        let e = evaluate(&data, &DVector::zeros(1), TieMethod::Breslow, true);
        let mut h = 0.0;
        let mut cum = Vec::new();
        for pe in &e.pseudo {
            h += pe.mass / pe.den;
            cum.push((data.groups[pe.group].time, h));
        }
        let na = nelson_aalen(&t, &d, Some(&w));
        assert_eq!(na.len(), cum.len());
        for ((t1, h1), (t2, h2)) in na.iter().zip(&cum) {
            assert_eq!(t1, t2);
            assert!((h1 - h2).abs() < 1e-10);
        }
    }

    #[test]
    fn errors_for_degenerate_inputs() {
        let x = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let t = [1.0, 2.0, 3.0, 4.0];
        let w = [1.0; 4];
        assert_eq!(
            fit_weighted_cox(&t, &[false; 4], &x, &["x"], &w, &Default::default()).unwrap_err(),
            SurvivalError::NoEvents
        );
        let x2 = DMatrix::from_fn(4, 2, |i, j| (i as f64) * (j as f64 + 1.0));
        assert_eq!(
            fit_weighted_cox(&t, &[true; 4], &x2, &["a", "b"], &w, &Default::default()).unwrap_err(),
            SurvivalError::Collinear
        );
        // the exposed group always fails first
        let sep = DMatrix::from_fn(6, 1, |i, _| f64::from(u8::from(i < 3)));
        let t6 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let err = fit_weighted_cox(&t6, &[true, true, true, false, false, false], &sep, &["x"], &[1.0; 6], &Default::default())
            .unwrap_err();
        assert!(matches!(err, SurvivalError::MonotoneLikelihood { .. }), "{err:?}");
    }

    #[test]
    fn msm_patterns() {
        assert_eq!(msm_pattern(Exposure::Standard, 0), [0.0; 5]);
        assert_eq!(msm_pattern(Exposure::Reduced, 1), [1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(msm_pattern(Exposure::HighlyReduced, 1), [0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(msm_pattern(Exposure::HighlyReduced, 0), [0.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
