use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Columns with a standard deviation below this are treated as constant.
pub const ZERO_VARIANCE_GUARD: f64 = 1e-12;

/// Column-wise z-scoring with the population (1/n) standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    #[serde(with = "crate::codec")]
    pub means: Vec<f64>,
    /// Always > 0; guarded columns store 1.0.
    #[serde(with = "crate::codec")]
    pub stds: Vec<f64>,
    /// Columns that were constant on the fitting data; they standardize to 0.
    pub constant: Vec<bool>,
}

pub fn fit_standardizer(x: &Matrix) -> Result<Standardizer> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "standardizer needs at least 2 rows, got {n}"
        )));
    }
    let p = x.ncols();
    let mut means = vec![0.0; p];
    let mut stds = vec![0.0; p];
    let mut constant = vec![false; p];
    for j in 0..p {
        let col = x.column(j);
        let rough = col.iter().sum::<f64>() / n as f64;
        // second pass removes most of the rounding left in the first
        let m = rough + col.iter().map(|v| v - rough).sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
        let s = var.sqrt();
        means[j] = m;
        if s < ZERO_VARIANCE_GUARD || !s.is_finite() {
            stds[j] = 1.0;
            constant[j] = true;
        } else {
            stds[j] = s;
        }
    }
    Ok(Standardizer { means, stds, constant })
}

impl Standardizer {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, v)| {
                if self.constant[j] {
                    0.0
                } else {
                    (v - self.means[j]) / self.stds[j]
                }
            })
            .collect()
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.n_features() {
            return Err(Error::Argument(format!(
                "standardizer fitted on {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let rows: Vec<Vec<f64>> = x.rows().map(|r| self.transform_row(r)).collect();
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, x.ncols()));
        }
        Matrix::from_rows(&rows)
    }
}
