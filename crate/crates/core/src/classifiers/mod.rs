//! The four predictors: LDA, k-nearest neighbours, bagged CART trees and the
//! class-frequency baseline.
//!
//! Labels are `usize` indices into a task's label map. Every model keeps the
//! sorted list of classes it saw during training and reports scores aligned
//! with that list.

mod bagging;
mod baseline;
mod knn;
mod lda;

use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use bagging::{bagged_fit, bagged_fit_with, bootstrap_indices, BaggedTreesModel, DecisionTree, Node};
pub use baseline::{baseline_fit, BaselineModel};
pub use knn::{knn_fit, KnnModel};
pub use lda::{lda_fit, LdaModel};

pub const DEFAULT_K: usize = 3;
pub const DEFAULT_N_TREES: usize = 50;

/// Sorted distinct labels.
pub(crate) fn distinct_classes(labels: &[usize]) -> Vec<usize> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_training(x: &Matrix, labels: &[usize]) -> Result<()> {
    if x.nrows() != labels.len() {
        return Err(Error::Argument(format!(
            "{} rows but {} labels",
            x.nrows(),
            labels.len()
        )));
    }
    if !x.is_finite() {
        return Err(Error::Data("training matrix contains non-finite values".into()));
    }
    Ok(())
}

/// Which classifier to train, with its fixed hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Baseline,
    Lda,
    Knn { k: usize },
    BaggedTrees { n_trees: usize },
}

impl ModelKind {
    /// The four models in results-table column order.
    pub fn table_set(k: usize, n_trees: usize) -> [ModelKind; 4] {
        [
            ModelKind::Baseline,
            ModelKind::Lda,
            ModelKind::Knn { k },
            ModelKind::BaggedTrees { n_trees },
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Lda => "lda",
            ModelKind::Knn { .. } => "knn",
            ModelKind::BaggedTrees { .. } => "bagged_trees",
        }
    }

    pub fn is_discriminative(&self) -> bool {
        !matches!(self, ModelKind::Baseline)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ModelKind::Baseline),
            "lda" => Ok(ModelKind::Lda),
            "knn" => Ok(ModelKind::Knn { k: DEFAULT_K }),
            "bagged_trees" | "bagged" | "bag_trees" => Ok(ModelKind::BaggedTrees {
                n_trees: DEFAULT_N_TREES,
            }),
            other => Err(Error::Argument(format!("unknown model '{other}'"))),
        }
    }
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifierModel {
    Baseline(BaselineModel),
    Lda(LdaModel),
    Knn(KnnModel),
    BaggedTrees(BaggedTreesModel),
}

/// Trains `kind` on score rows `x` with label indices `labels`.
/// `seed` drives the bootstrap of bagged trees and is ignored otherwise.
pub fn fit_classifier(kind: ModelKind, x: &Matrix, labels: &[usize], seed: u64) -> Result<ClassifierModel> {
    Ok(match kind {
        ModelKind::Baseline => ClassifierModel::Baseline(baseline_fit(labels)?),
        ModelKind::Lda => ClassifierModel::Lda(lda_fit(x, labels)?),
        ModelKind::Knn { k } => ClassifierModel::Knn(knn_fit(x, labels, k)?),
        ModelKind::BaggedTrees { n_trees } => {
            ClassifierModel::BaggedTrees(bagged_fit(x, labels, n_trees, seed)?)
        }
    })
}

impl ClassifierModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            ClassifierModel::Baseline(_) => "baseline",
            ClassifierModel::Lda(_) => "lda",
            ClassifierModel::Knn(_) => "knn",
            ClassifierModel::BaggedTrees(_) => "bagged_trees",
        }
    }

    pub fn classes(&self) -> &[usize] {
        match self {
            ClassifierModel::Baseline(m) => &m.classes,
            ClassifierModel::Lda(m) => &m.classes,
            ClassifierModel::Knn(m) => &m.classes,
            ClassifierModel::BaggedTrees(m) => &m.classes,
        }
    }

    /// Per-class scores aligned with [`classes`](Self::classes): LDA
    /// discriminants, KNN or ensemble vote counts, baseline probabilities.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ClassifierModel::Baseline(m) => m.probabilities.clone(),
            ClassifierModel::Lda(m) => m.discriminants(x),
            ClassifierModel::Knn(m) => m.votes(x).into_iter().map(|v| v as f64).collect(),
            ClassifierModel::BaggedTrees(m) => m.votes(x).into_iter().map(|v| v as f64).collect(),
        }
    }

    /// Predicted label. Only the baseline consumes randomness.
    pub fn predict(&self, x: &[f64], rng: &mut dyn RngCore) -> usize {
        match self {
            ClassifierModel::Baseline(m) => m.predict(rng),
            ClassifierModel::Lda(m) => m.predict(x),
            ClassifierModel::Knn(m) => m.predict(x),
            ClassifierModel::BaggedTrees(m) => m.predict(x),
        }
    }

    /// Structural checks for models that arrive from outside (e.g. a bundle).
    pub fn validate(&self, n_inputs: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(format!("{} model: {msg}", self.kind_name())));
        if self.classes().is_empty() {
            return bad("no classes".into());
        }
        match self {
            ClassifierModel::Baseline(m) => {
                if m.probabilities.len() != m.classes.len() {
                    return bad("probabilities do not match classes".into());
                }
            }
            ClassifierModel::Lda(m) => {
                let c = m.classes.len();
                if m.class_means.nrows() != c
                    || m.class_means.ncols() != n_inputs
                    || m.precision.nrows() != n_inputs
                    || m.precision.ncols() != n_inputs
                    || m.log_priors.len() != c
                {
                    return bad("parameter shapes do not match".into());
                }
            }
            ClassifierModel::Knn(m) => {
                if m.training.nrows() == 0 {
                    return Err(Error::State("knn model has an empty training set".into()));
                }
                if m.training.ncols() != n_inputs
                    || m.labels.len() != m.training.nrows()
                    || m.k == 0
                    || m.k > m.training.nrows()
                {
                    return bad("training set shape or k is inconsistent".into());
                }
            }
            ClassifierModel::BaggedTrees(m) => {
                if m.trees.is_empty() {
                    return bad("no trees".into());
                }
                for t in &m.trees {
                    t.validate(n_inputs, m.classes.len())
                        .or_else(|e| bad(e.to_string()))?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[1, 3, 3, 2]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn model_kind_parses() {
        assert_eq!("knn".parse::<ModelKind>().unwrap(), ModelKind::Knn { k: 3 });
        assert_eq!(
            "bagged_trees".parse::<ModelKind>().unwrap(),
            ModelKind::BaggedTrees { n_trees: 50 }
        );
        assert!("svm".parse::<ModelKind>().is_err());
    }
}
