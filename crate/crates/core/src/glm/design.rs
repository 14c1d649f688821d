use super::GlmError;
use nalgebra::DMatrix;
use std::collections::HashSet;

pub const INTERCEPT: &str = "(Intercept)";

/// Subjects by named features. Exactly one column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self, GlmError> {
        if names.len() != values.ncols() {
            return Err(GlmError::InvalidDesign(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(GlmError::InvalidDesign(format!("duplicate column `{n}`")));
            }
        }
        let intercepts: Vec<usize> = names
            .iter()
            .enumerate()
            .filter(|(_, n)| n.as_str() == INTERCEPT)
            .map(|(j, _)| j)
            .collect();
        if intercepts.len() != 1 {
            return Err(GlmError::InvalidDesign("intercept column missing".into()));
        }
        if values.column(intercepts[0]).iter().any(|&v| v != 1.0) {
            return Err(GlmError::InvalidDesign("intercept column is not all ones".into()));
        }
        if let Some((idx, _)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let col = idx / values.nrows().max(1);
            return Err(GlmError::InvalidDesign(format!(
                "non-finite entry in column `{}`",
                names[col]
            )));
        }
        Ok(Self { names, values })
    }

    pub fn builder(nrows: usize) -> DesignBuilder {
        DesignBuilder {
            nrows,
            names: vec![INTERCEPT.to_string()],
            columns: vec![vec![1.0; nrows]],
        }
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.values.column(j).iter().copied().collect())
    }

    /// Rows in the given order (repeats allowed).
    pub fn select_rows(&self, rows: &[usize]) -> DesignMatrix {
        let values = DMatrix::from_fn(rows.len(), self.ncols(), |i, j| self.values[(rows[i], j)]);
        DesignMatrix {
            names: self.names.clone(),
            values,
        }
    }
}

/// Column-by-column construction of a design that starts with the intercept.
#[derive(Debug, Clone)]
pub struct DesignBuilder {
    nrows: usize,
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl DesignBuilder {
    pub fn push(mut self, name: impl Into<String>, column: Vec<f64>) -> Self {
        self.add(name, column);
        self
    }

    pub fn add(&mut self, name: impl Into<String>, column: Vec<f64>) {
        assert_eq!(column.len(), self.nrows, "column length must match row count");
        self.names.push(name.into());
        self.columns.push(column);
    }

    pub fn build(self) -> Result<DesignMatrix, GlmError> {
        let n = self.nrows;
        let p = self.columns.len();
        let values = DMatrix::from_fn(n, p, |i, j| self.columns[j][i]);
        DesignMatrix::new(self.names, values)
    }
}
