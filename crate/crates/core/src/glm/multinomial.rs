use super::{DesignMatrix, GlmError};
use crate::linalg::{gram_is_singular, spd_solve, symmetrize};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultinomialOptions {
    /// Converged once every score component is below this in absolute value.
    pub tol: f64,
    /// ... or once the relative log-likelihood change drops below this.
    pub rel_loglik_tol: f64,
    pub max_iter: usize,
    /// Coefficient norm beyond which the fit is declared separated.
    pub separation_norm: f64,
}

impl Default for MultinomialOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            rel_loglik_tol: 1e-12,
            max_iter: 100,
            separation_norm: 1e3,
        }
    }
}

/// Baseline-category logit fit; category 0 is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub reference: usize,
    pub n_categories: usize,
    pub feature_names: Vec<String>,
    /// One coefficient vector per non-reference category, in category order.
    pub coefficients: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

const MAX_HALVINGS: usize = 40;
/// Fitted probabilities this close to 0 or 1 indicate separation.
const SEPARATION_PROBABILITY: f64 = 1e-10;

fn softmax_row(eta: &[f64], out: &mut [f64]) -> f64 {
    // eta excludes the reference (whose predictor is 0)
    let m = eta.iter().cloned().fold(0.0f64, f64::max);
    let mut total = (-m).exp();
    for &e in eta {
        total += (e - m).exp();
    }
    let lse = m + total.ln();
    out[0] = (-lse).exp();
    for (k, &e) in eta.iter().enumerate() {
        out[k + 1] = (e - lse).exp();
    }
    lse
}

/// Linear predictors, n × (K − 1).
fn linear_predictors(x: &DMatrix<f64>, beta: &[f64], k1: usize) -> DMatrix<f64> {
    let p = x.ncols();
    let b = DMatrix::from_fn(p, k1, |j, k| beta[k * p + j]);
    x * b
}

fn eval(y: &[usize], x: &DMatrix<f64>, beta: &[f64], k: usize) -> (f64, DMatrix<f64>) {
    let eta = linear_predictors(x, beta, k - 1);
    let mut probs = DMatrix::zeros(x.nrows(), k);
    let mut ll = 0.0;
    let mut row_eta = vec![0.0; k - 1];
    let mut row_p = vec![0.0; k];
    for i in 0..x.nrows() {
        for c in 0..k - 1 {
            row_eta[c] = eta[(i, c)];
        }
        let lse = softmax_row(&row_eta, &mut row_p);
        ll += if y[i] == 0 { 0.0 } else { row_eta[y[i] - 1] } - lse;
        for c in 0..k {
            probs[(i, c)] = row_p[c];
        }
    }
    (ll, probs)
}

fn score_from_probs(y: &[usize], x: &DMatrix<f64>, probs: &DMatrix<f64>) -> DVector<f64> {
    let k = probs.ncols();
    let p = x.ncols();
    let mut g = DVector::zeros((k - 1) * p);
    for c in 1..k {
        let resid = DVector::from_fn(x.nrows(), |i, _| f64::from(y[i] == c) - probs[(i, c)]);
        let block = x.tr_mul(&resid);
        g.rows_mut((c - 1) * p, p).copy_from(&block);
    }
    g
}

/// Negative Hessian of the log-likelihood.
fn information(x: &DMatrix<f64>, probs: &DMatrix<f64>) -> DMatrix<f64> {
    let k = probs.ncols();
    let p = x.ncols();
    let n = x.nrows();
    let mut info = DMatrix::zeros((k - 1) * p, (k - 1) * p);
    for a in 1..k {
        for b in a..k {
            let mut scaled = x.clone();
            for i in 0..n {
                let w = if a == b {
                    probs[(i, a)] * (1.0 - probs[(i, a)])
                } else {
                    -probs[(i, a)] * probs[(i, b)]
                };
                scaled.row_mut(i).scale_mut(w);
            }
            let block = x.tr_mul(&scaled);
            info.view_mut(((a - 1) * p, (b - 1) * p), (p, p)).copy_from(&block);
            if a != b {
                info.view_mut(((b - 1) * p, (a - 1) * p), (p, p))
                    .copy_from(&block.transpose());
            }
        }
    }
    symmetrize(&mut info);
    info
}

fn check_inputs(y: &[usize], x: &DesignMatrix) -> Result<usize, GlmError> {
    if y.len() != x.nrows() {
        return Err(GlmError::LengthMismatch(y.len(), x.nrows()));
    }
    let k = y.iter().copied().max().map_or(0, |m| m + 1).max(2);
    let mut counts = vec![0usize; k];
    for &c in y {
        counts[c] += 1;
    }
    if let Some(missing) = counts.iter().position(|&c| c == 0) {
        return Err(GlmError::MissingCategory(missing));
    }
    Ok(k)
}

/// Multinomial log-likelihood at a flattened coefficient vector laid out as
/// `[β_1, β_2, ...]`, one block of `ncols` per non-reference category.
pub fn log_likelihood(y: &[usize], x: &DesignMatrix, beta: &[f64]) -> Result<f64, GlmError> {
    let k = check_inputs(y, x)?;
    Ok(eval(y, x.values(), beta, k).0)
}

/// Analytic gradient of [`log_likelihood`].
pub fn score(y: &[usize], x: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>, GlmError> {
    let k = check_inputs(y, x)?;
    let (_, probs) = eval(y, x.values(), beta, k);
    Ok(score_from_probs(y, x.values(), &probs).iter().copied().collect())
}

/// Maximum likelihood by Newton's method with step halving.
pub fn fit_multinomial(
    y: &[usize],
    x: &DesignMatrix,
    opts: &MultinomialOptions,
) -> Result<MultinomialFit, GlmError> {
    let k = check_inputs(y, x)?;
    let xm = x.values();
    let p = xm.ncols();
    if gram_is_singular(&xm.tr_mul(xm), 1e-12) {
        return Err(GlmError::RankDeficient);
    }
    let n = y.len() as f64;
    let intercept = x
        .names()
        .iter()
        .position(|s| s == super::INTERCEPT)
        .expect("validated design has an intercept");

    let mut beta = vec![0.0; (k - 1) * p];
    let n0 = y.iter().filter(|&&c| c == 0).count() as f64;
    for c in 1..k {
        let nc = y.iter().filter(|&&v| v == c).count() as f64;
        beta[(c - 1) * p + intercept] = (nc / n0).ln();
    }
    let (mut ll, mut probs) = eval(y, xm, &beta, k);
    let mut grad = score_from_probs(y, xm, &probs);
    let mut converged = grad.amax() < opts.tol;
    let mut iterations = 0;

    while !converged && iterations < opts.max_iter {
        iterations += 1;
        let info = information(xm, &probs);
        let step = spd_solve(&info, &grad).ok_or(GlmError::RankDeficient)?;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            let (cand_ll, cand_probs) = eval(y, xm, &cand, k);
            if cand_ll.is_finite() && cand_ll >= ll {
                accepted = Some((cand, cand_ll, cand_probs));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, cand_ll, cand_probs)) = accepted else {
            // no ascent possible at double precision: at the optimum
            converged = grad.amax() < opts.tol.sqrt();
            break;
        };
        let rel_change = (cand_ll - ll).abs() / (ll.abs() + n * f64::EPSILON);
        beta = cand;
        ll = cand_ll;
        probs = cand_probs;
        grad = score_from_probs(y, xm, &probs);
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if norm > opts.separation_norm {
            return Err(GlmError::Separation { norm });
        }
        converged = grad.amax() < opts.tol || rel_change < opts.rel_loglik_tol;
    }
    if !converged {
        return Err(GlmError::NotConverged {
            iterations,
            max_score: grad.amax(),
        });
    }
    if probs.min() < SEPARATION_PROBABILITY {
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        return Err(GlmError::Separation { norm });
    }
    Ok(MultinomialFit {
        reference: 0,
        n_categories: k,
        feature_names: x.names().to_vec(),
        coefficients: beta.chunks(p).map(<[f64]>::to_vec).collect(),
        log_likelihood: ll,
        converged,
        iterations,
    })
}

/// Row-stochastic matrix of category probabilities (rows × categories).
pub fn predict_proba(fit: &MultinomialFit, x: &DesignMatrix) -> Result<DMatrix<f64>, GlmError> {
    if x.names() != fit.feature_names.as_slice() {
        return Err(GlmError::ColumnMismatch {
            expected: fit.feature_names.clone(),
            found: x.names().to_vec(),
        });
    }
    let beta: Vec<f64> = fit.coefficients.concat();
    let eta = linear_predictors(x.values(), &beta, fit.n_categories - 1);
    let mut out = DMatrix::zeros(x.nrows(), fit.n_categories);
    let mut row_eta = vec![0.0; fit.n_categories - 1];
    let mut row_p = vec![0.0; fit.n_categories];
    for i in 0..x.nrows() {
        for c in 0..fit.n_categories - 1 {
            row_eta[c] = eta[(i, c)];
        }
        softmax_row(&row_eta, &mut row_p);
        for c in 0..fit.n_categories {
            out[(i, c)] = row_p[c];
        }
    }
    Ok(out)
}
