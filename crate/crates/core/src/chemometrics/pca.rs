use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, symmetric_eigen, Matrix};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;

/// Slack on the cumulative-variance comparison so a target of exactly 1.0 is
/// reachable despite rounding.
const CUMULATIVE_SLACK: f64 = 1e-12;

/// Principal axes of a (standardized) feature matrix.
///
/// All `p` axes are kept so the model can be truncated to any order; only the
/// first `n_selected` are used for projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    #[serde(with = "crate::codec")]
    pub means: Vec<f64>,
    /// `[p × p]`, one unit axis per column, sorted by descending variance.
    pub axes: Matrix,
    #[serde(with = "crate::codec")]
    pub eigenvalues: Vec<f64>,
    /// Ratio for every axis; sums to 1.
    #[serde(with = "crate::codec")]
    pub explained_variance_ratio: Vec<f64>,
    pub n_selected: usize,
    pub variance_target: f64,
}

/// Fits PCA by eigen-decomposing the sample covariance and keeps the fewest
/// components whose cumulative explained variance reaches `variance_target`.
///
/// Each axis is signed so that its largest-magnitude loading is positive.
pub fn fit_pca(x: &Matrix, variance_target: f64) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Argument(format!(
            "variance target must be in (0, 1], got {variance_target}"
        )));
    }
    let (n, p) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 rows, got {n}")));
    }
    if !x.is_finite() {
        return Err(Error::Data("PCA input contains non-finite values".into()));
    }

    let means: Vec<f64> = (0..p).map(|j| x.column(j).iter().sum::<f64>() / n as f64).collect();
    let mut cov = Matrix::zeros(p, p);
    for r in x.rows() {
        let c: Vec<f64> = r.iter().zip(&means).map(|(v, m)| v - m).collect();
        for i in 0..p {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..p {
                cov[(i, j)] += c[i] * c[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..p {
        for j in i..p {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let total = cov.trace();
    if !(total > f64::MIN_POSITIVE) {
        return Err(Error::Numerical(
            "PCA input has no variance (all rows identical or all zero)".into(),
        ));
    }

    let eig = symmetric_eigen(&cov)?;
    let mut order: Vec<usize> = (0..p).collect();
    // stable: equal eigenvalues keep their original axis order
    order.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]));

    let mut axes = Matrix::zeros(p, p);
    let mut eigenvalues = Vec::with_capacity(p);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.vectors.column(src);
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        for i in 0..p {
            axes[(i, dst)] = v[i];
        }
        eigenvalues.push(eig.values[src].max(0.0));
    }

    let sum: f64 = eigenvalues.iter().sum();
    let explained_variance_ratio: Vec<f64> = eigenvalues.iter().map(|e| e / sum).collect();

    let mut cumulative = 0.0;
    let mut n_selected = p;
    for (i, r) in explained_variance_ratio.iter().enumerate() {
        cumulative += r;
        if cumulative >= variance_target - CUMULATIVE_SLACK {
            n_selected = i + 1;
            break;
        }
    }

    Ok(PcaModel {
        means,
        axes,
        eigenvalues,
        explained_variance_ratio,
        n_selected,
        variance_target,
    })
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    /// Selected components, `[p × n_selected]`.
    pub fn components(&self) -> Matrix {
        self.axes.leading_columns(self.n_selected)
    }

    pub fn selected_ratios(&self) -> &[f64] {
        &self.explained_variance_ratio[..self.n_selected]
    }

    pub fn cumulative_ratio(&self, m: usize) -> f64 {
        self.explained_variance_ratio[..m].iter().sum()
    }

    /// Same axes, keeping `m` components.
    pub fn truncated(&self, m: usize) -> Result<PcaModel> {
        if m == 0 || m > self.n_features() {
            return Err(Error::Argument(format!(
                "cannot keep {m} of {} components",
                self.n_features()
            )));
        }
        let mut out = self.clone();
        out.n_selected = m;
        Ok(out)
    }

    pub fn project_row(&self, row: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = row.iter().zip(&self.means).map(|(v, m)| v - m).collect();
        (0..self.n_selected)
            .map(|k| {
                (0..centered.len())
                    .map(|i| centered[i] * self.axes[(i, k)])
                    .sum()
            })
            .collect()
    }

    /// Scores `[n × n_selected]`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        if x.ncols() != self.n_features() {
            return Err(Error::Argument(format!(
                "PCA fitted on {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        let data: Vec<f64> = x.rows().flat_map(|r| self.project_row(r)).collect();
        Matrix::from_row_major(x.nrows(), self.n_selected, data)
    }

    /// Maps scores back to feature space.
    pub fn reconstruct(&self, scores: &Matrix) -> Matrix {
        let p = self.n_features();
        let mut out = Matrix::zeros(scores.nrows(), p);
        for (r, s) in scores.rows().enumerate() {
            for i in 0..p {
                let axis_row = &self.axes.row(i)[..self.n_selected];
                out[(r, i)] = self.means[i] + dot(axis_row, s);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn two_points_are_rank_one() {
        let mut a = vec![0.0; 75];
        let mut b = vec![0.0; 75];
        for i in 0..75 {
            a[i] = i as f64 * 0.1;
            b[i] = (i as f64).sqrt();
        }
        let pca = fit_pca(&Matrix::from_rows(&[a, b]).unwrap(), 0.95).unwrap();
        assert_eq!(pca.n_selected, 1);
        assert!((pca.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_matrix_is_numerical_error() {
        let x = Matrix::zeros(5, 75);
        assert!(matches!(fit_pca(&x, 0.95), Err(Error::Numerical(_))));
    }

    #[test]
    fn rejects_bad_target() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(fit_pca(&x, 0.0).is_err());
        assert!(fit_pca(&x, 1.5).is_err());
        assert!(fit_pca(&x, 1.0).is_ok());
    }

    fn random_matrix(n: usize, p: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * p)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * (1.0 + (i % p) as f64)
            })
            .collect();
        Matrix::from_row_major(n, p, data).unwrap()
    }

    #[test]
    fn axes_orthonormal_and_ratios_sorted() {
        let x = random_matrix(60, 12, 4);
        let pca = fit_pca(&x, 0.95).unwrap();
        let gram = pca.axes.transpose().matmul(&pca.axes);
        for i in 0..12 {
            for j in 0..12 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[(i, j)] - want).abs() < 1e-8);
            }
        }
        let r = &pca.explained_variance_ratio;
        assert!(r.windows(2).all(|w| w[0] >= w[1]));
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(pca.cumulative_ratio(pca.n_selected) >= 0.95);
        assert!(pca.cumulative_ratio(pca.n_selected - 1) < 0.95);
    }

    #[test]
    fn reconstruction_error_non_increasing() {
        let x = random_matrix(40, 10, 8);
        let pca = fit_pca(&x, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for m in 1..=10 {
            let t = pca.truncated(m).unwrap();
            let back = t.reconstruct(&t.project(&x).unwrap());
            let err: f64 = back
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            assert!(err <= last + 1e-9, "m={m}: {err} > {last}");
            last = err;
        }
        assert!(last < 1e-18 * x.as_slice().len() as f64 + 1e-12);
    }

    #[test]
    fn scores_invariant_to_row_order() {
        let x = random_matrix(30, 6, 2);
        let rev: Vec<usize> = (0..30).rev().collect();
        let a = fit_pca(&x, 0.95).unwrap();
        let b = fit_pca(&x.select_rows(&rev), 0.95).unwrap();
        assert_eq!(a.n_selected, b.n_selected);
        let sa = a.project(&x).unwrap();
        let sb = b.project(&x).unwrap();
        for (u, v) in sa.as_slice().iter().zip(sb.as_slice()) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}
