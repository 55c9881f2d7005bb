use serde::{Deserialize, Serialize};

use super::{argmax, check_training, distinct_classes};
use crate::error::{Error, Result};
use crate::linalg::{dot, spd_inverse, Matrix};

/// Relative ridge added to the pooled covariance: `λ = RIDGE · trace(Σ_w) / m`.
pub const RIDGE: f64 = 1e-6;

/// Linear discriminant analysis with a shared, ridge-regularized covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub classes: Vec<usize>,
    /// `[C × m]`.
    pub class_means: Matrix,
    /// Inverse of the regularized pooled within-class covariance, `[m × m]`.
    pub precision: Matrix,
    #[serde(with = "crate::codec")]
    pub log_priors: Vec<f64>,
    pub ridge: f64,
}

pub fn lda_fit(x: &Matrix, labels: &[usize]) -> Result<LdaModel> {
    check_training(x, labels)?;
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "LDA needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let n = x.nrows();
    let m = x.ncols();
    let c = classes.len();

    let mut counts = vec![0usize; c];
    let mut means = Matrix::zeros(c, m);
    for (row, label) in x.rows().zip(labels) {
        let ci = classes.binary_search(label).expect("label is a known class");
        counts[ci] += 1;
        for (acc, v) in means.row_mut(ci).iter_mut().zip(row) {
            *acc += v;
        }
    }
    for (ci, &cnt) in counts.iter().enumerate() {
        if cnt < 2 {
            return Err(Error::InsufficientData(format!(
                "class {} has {cnt} training row(s), LDA needs at least 2",
                classes[ci]
            )));
        }
        means.row_mut(ci).iter_mut().for_each(|v| *v /= cnt as f64);
    }

    let mut pooled = Matrix::zeros(m, m);
    for (row, label) in x.rows().zip(labels) {
        let ci = classes.binary_search(label).expect("known class");
        let d: Vec<f64> = row.iter().zip(means.row(ci)).map(|(a, b)| a - b).collect();
        for i in 0..m {
            for j in i..m {
                pooled[(i, j)] += d[i] * d[j];
            }
        }
    }
    let dof = (n - c) as f64;
    for i in 0..m {
        for j in i..m {
            let v = pooled[(i, j)] / dof;
            pooled[(i, j)] = v;
            pooled[(j, i)] = v;
        }
    }
    let ridge = RIDGE * pooled.trace() / m as f64;
    for i in 0..m {
        pooled[(i, i)] += ridge;
    }
    let precision = spd_inverse(&pooled).map_err(|e| {
        Error::Numerical(format!("pooled covariance is singular after regularization: {e}"))
    })?;

    let log_priors = counts.iter().map(|&k| (k as f64 / n as f64).ln()).collect();

    Ok(LdaModel {
        classes,
        class_means: means,
        precision,
        log_priors,
        ridge,
    })
}

impl LdaModel {
    /// `δ_c(x) = xᵀΣ⁻¹μ_c − ½μ_cᵀΣ⁻¹μ_c + ln π_c` for every class.
    pub fn discriminants(&self, x: &[f64]) -> Vec<f64> {
        (0..self.classes.len())
            .map(|ci| {
                let mu = self.class_means.row(ci);
                let w = self.precision.mul_vec(mu);
                dot(x, &w) - 0.5 * dot(mu, &w) + self.log_priors[ci]
            })
            .collect()
    }

    /// Highest discriminant; exact ties go to the lowest label index.
    pub fn predict(&self, x: &[f64]) -> usize {
        self.classes[argmax(&self.discriminants(x))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(points: &[(f64, usize)]) -> (Matrix, Vec<usize>) {
        let rows: Vec<[f64; 1]> = points.iter().map(|(x, _)| [*x]).collect();
        (
            Matrix::from_rows(&rows).unwrap(),
            points.iter().map(|(_, l)| *l).collect(),
        )
    }

    #[test]
    fn symmetric_two_class_problem() {
        // class 0 around -1, class 1 around +1
        let (x, y) = one_d(&[(-1.5, 0), (-0.5, 0), (0.5, 1), (1.5, 1)]);
        let lda = lda_fit(&x, &y).unwrap();
        assert_eq!(lda.predict(&[0.9]), 1);
        assert_eq!(lda.predict(&[-0.2]), 0);
        // exactly on the boundary: tie goes to the lower label
        let d = lda.discriminants(&[0.0]);
        assert_eq!(d[0], d[1]);
        assert_eq!(lda.predict(&[0.0]), 0);
    }

    #[test]
    fn single_row_class_rejected() {
        let (x, y) = one_d(&[(-1.0, 0), (-0.5, 0), (2.0, 1)]);
        assert!(matches!(lda_fit(&x, &y), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn single_class_rejected() {
        let (x, y) = one_d(&[(-1.0, 0), (-0.5, 0)]);
        assert!(matches!(lda_fit(&x, &y), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn zero_scatter_is_numerical_error() {
        let (x, y) = one_d(&[(-1.0, 0), (-1.0, 0), (1.0, 1), (1.0, 1)]);
        assert!(matches!(lda_fit(&x, &y), Err(Error::Numerical(_))));
    }

    #[test]
    fn priors_sum_to_one() {
        let (x, y) = one_d(&[(-1.0, 0), (-0.7, 0), (-0.2, 0), (1.0, 3), (1.4, 3)]);
        let lda = lda_fit(&x, &y).unwrap();
        let total: f64 = lda.log_priors.iter().map(|l| l.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(lda.classes, vec![0, 3]);
    }
}
