use super::GlmError;
use crate::stats::quantile_sorted;
use serde::{Deserialize, Serialize};

/// Interior knot placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KnotRule {
    /// Empirical quantiles of `x` at equally spaced probabilities.
    #[default]
    Quantile,
    /// Empirical quantiles of the distinct values of `x`; useful for
    /// heavily tied scores whose plain quantiles coincide.
    DistinctQuantile,
    /// Equally spaced between min and max.
    Uniform,
    Explicit(Vec<f64>),
}

/// A clamped B-spline basis with boundary knots at the data range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsplineBasis {
    degree: usize,
    /// Full knot vector, boundary knots repeated `degree + 1` times.
    knots: Vec<f64>,
}

const MIN_DISTINCT_FOR_QUANTILES: usize = 5;

impl BsplineBasis {
    pub fn fit(
        x: &[f64],
        degree: usize,
        n_interior_knots: usize,
        rule: &KnotRule,
    ) -> Result<Self, GlmError> {
        if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
            return Err(GlmError::DegenerateInput("x must be finite and non-empty".into()));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        if !(hi > lo) {
            return Err(GlmError::DegenerateInput("x is constant".into()));
        }
        let mut distinct = sorted.clone();
        distinct.dedup();
        let probs = (1..=n_interior_knots).map(|i| i as f64 / (n_interior_knots + 1) as f64);
        let interior: Vec<f64> = match rule {
            KnotRule::Quantile | KnotRule::DistinctQuantile => {
                if distinct.len() < MIN_DISTINCT_FOR_QUANTILES {
                    return Err(GlmError::DegenerateInput(format!(
                        "{} distinct values, need at least {MIN_DISTINCT_FOR_QUANTILES} for quantile knots",
                        distinct.len()
                    )));
                }
                let base = if *rule == KnotRule::Quantile { &sorted } else { &distinct };
                probs.map(|p| quantile_sorted(base, p)).collect()
            }
            KnotRule::Uniform => probs.map(|p| lo + p * (hi - lo)).collect(),
            KnotRule::Explicit(k) => k.clone(),
        };
        if interior.len() != n_interior_knots {
            return Err(GlmError::DegenerateInput(format!(
                "{} interior knots given, {n_interior_knots} expected",
                interior.len()
            )));
        }
        let mut prev = lo;
        for &k in &interior {
            if !(k > prev) || !(k < hi) {
                return Err(GlmError::DegenerateInput(format!(
                    "interior knots {interior:?} not strictly inside ({lo}, {hi}) and increasing"
                )));
            }
            prev = k;
        }
        let mut knots = vec![lo; degree + 1];
        knots.extend(&interior);
        knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.knots.len() - self.degree - 1]
    }

    /// Number of basis functions including the first one, which sums with
    /// the others to one.
    pub fn full_dimension(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    fn lo(&self) -> f64 {
        self.knots[0]
    }

    fn hi(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    /// Knot span `k` with `knots[k] <= x < knots[k + 1]`; the right boundary
    /// belongs to the last non-empty span.
    fn span(&self, x: f64) -> usize {
        let n = self.full_dimension();
        if x >= self.knots[n] {
            return n - 1;
        }
        // first knot strictly greater than x, minus one
        let upper = self.knots.partition_point(|&k| k <= x);
        (upper - 1).clamp(self.degree, n - 1)
    }

    /// All basis functions at `x`; values outside the boundary knots are
    /// clamped to the boundary.
    pub fn evaluate(&self, x: f64) -> Vec<f64> {
        let x = x.clamp(self.lo(), self.hi());
        let p = self.degree;
        let k = self.span(x);
        let t = &self.knots;
        // triangular table of the p + 1 nonzero functions on span k
        let mut local = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        local[0] = 1.0;
        for j in 1..=p {
            left[j] = x - t[k + 1 - j];
            right[j] = t[k + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { local[r] / denom };
                local[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            local[j] = saved;
        }
        let mut out = vec![0.0; self.full_dimension()];
        for (r, v) in local.into_iter().enumerate() {
            out[k - p + r] = v;
        }
        out
    }

    /// Design columns without the first basis function, so that the basis
    /// can sit next to an intercept.
    pub fn design_columns(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let dim = self.full_dimension();
        let mut cols = vec![Vec::with_capacity(x.len()); dim - 1];
        for &xi in x {
            let row = self.evaluate(xi);
            for (c, v) in cols.iter_mut().zip(&row[1..]) {
                c.push(*v);
            }
        }
        cols
    }
}

/// Basis columns (without the redundant first function) for `x`.
pub fn bspline_basis(
    x: &[f64],
    degree: usize,
    n_interior_knots: usize,
    rule: &KnotRule,
) -> Result<(BsplineBasis, Vec<Vec<f64>>), GlmError> {
    let basis = BsplineBasis::fit(x, degree, n_interior_knots, rule)?;
    let cols = basis.design_columns(x);
    Ok((basis, cols))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Plain Cox–de Boor recursion over the full knot vector, with 0/0 = 0
    /// and the last non-empty interval closed on the right.
    fn de_boor_recursive(knots: &[f64], i: usize, p: usize, x: f64) -> f64 {
        let hi = *knots.last().unwrap();
        if p == 0 {
            let inside = knots[i] <= x && x < knots[i + 1];
            let right_end = x == hi && knots[i] < knots[i + 1] && knots[i + 1] == hi;
            return if inside || right_end { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[i + p] - knots[i];
        if d1 > 0.0 {
            v += (x - knots[i]) / d1 * de_boor_recursive(knots, i, p - 1, x);
        }
        let d2 = knots[i + p + 1] - knots[i + 1];
        if d2 > 0.0 {
            v += (knots[i + p + 1] - x) / d2 * de_boor_recursive(knots, i + 1, p - 1, x);
        }
        v
    }

    #[test]
    fn constant_input_is_degenerate() {
        let e = bspline_basis(&[2.0; 10], 3, 3, &KnotRule::Quantile);
        assert!(matches!(e, Err(GlmError::DegenerateInput(_))));
        let e = bspline_basis(&[0.0, 1.0, 2.0, 1.0, 0.0], 3, 3, &KnotRule::Quantile);
        assert!(matches!(e, Err(GlmError::DegenerateInput(_))));
    }

    #[test]
    fn grid_matches_recursive_oracle() {
        let x: Vec<f64> = (0..=8).map(f64::from).collect();
        let (basis, cols) = bspline_basis(&x, 3, 3, &KnotRule::Quantile).unwrap();
        assert_eq!(basis.interior_knots(), &[2.0, 4.0, 6.0]);
        assert_eq!(cols.len(), 6);
        let knots = basis.knots().to_vec();
        for (row, &xi) in x.iter().enumerate() {
            for (j, col) in cols.iter().enumerate() {
                let oracle = de_boor_recursive(&knots, j + 1, 3, xi);
                assert!((col[row] - oracle).abs() < 1e-14, "x={xi} j={j}");
            }
            // the dropped first function completes the partition of unity
            let first = de_boor_recursive(&knots, 0, 3, xi);
            let total: f64 = cols.iter().map(|c| c[row]).sum::<f64>() + first;
            assert!((total - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn distinct_quantiles_survive_heavy_ties() {
        let mut x = vec![0.0; 60];
        x.extend([1.5, 2.0, 3.0, 4.5, 6.0, 7.5, 3.0, 1.5]);
        assert!(BsplineBasis::fit(&x, 3, 3, &KnotRule::Quantile).is_err());
        let b = BsplineBasis::fit(&x, 3, 3, &KnotRule::DistinctQuantile).unwrap();
        assert_eq!(b.interior_knots().len(), 3);
    }

    proptest! {
        #[test]
        fn partition_of_unity_and_nonnegativity(
            x in prop::collection::vec(-5.0f64..5.0, 8..40),
            probe in 0.0f64..1.0,
        ) {
            let Ok(basis) = BsplineBasis::fit(&x, 3, 3, &KnotRule::Quantile) else {
                return Ok(());
            };
            let lo = basis.knots()[0];
            let hi = *basis.knots().last().unwrap();
            for xi in x.iter().copied().chain([lo + probe * (hi - lo), hi]) {
                let v = basis.evaluate(xi);
                prop_assert_eq!(v.len(), 7);
                prop_assert!(v.iter().all(|&b| b >= -1e-15));
                prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
