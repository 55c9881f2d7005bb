use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::distinct_classes;
use crate::error::{Error, Result};

/// Weighted random predictor: draws class `c` with its training frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineModel {
    pub classes: Vec<usize>,
    pub probabilities: Vec<f64>,
}

pub fn baseline_fit(labels: &[usize]) -> Result<BaselineModel> {
    if labels.is_empty() {
        return Err(Error::InsufficientData("baseline needs at least one label".into()));
    }
    let classes = distinct_classes(labels);
    let n = labels.len() as f64;
    let probabilities = classes
        .iter()
        .map(|c| labels.iter().filter(|l| *l == c).count() as f64 / n)
        .collect();
    Ok(BaselineModel { classes, probabilities })
}

impl BaselineModel {
    pub fn probability(&self, class: usize) -> f64 {
        self.classes
            .binary_search(&class)
            .map_or(0.0, |i| self.probabilities[i])
    }

    pub fn predict(&self, rng: &mut dyn RngCore) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (c, p) in self.classes.iter().zip(&self.probabilities) {
            acc += p;
            if u < acc {
                return *c;
            }
        }
        *self.classes.last().expect("non-empty")
    }

    /// `Σ_c p_c · q_c` for test-set class frequencies `q`.
    pub fn expected_accuracy(&self, test_frequencies: &BTreeMap<usize, f64>) -> f64 {
        test_frequencies
            .iter()
            .map(|(c, q)| self.probability(*c) * q)
            .sum()
    }

    pub fn expected_accuracy_on(&self, test_labels: &[usize]) -> f64 {
        let mut q = BTreeMap::new();
        for l in test_labels {
            *q.entry(*l).or_insert(0.0) += 1.0 / test_labels.len() as f64;
        }
        self.expected_accuracy(&q)
    }
}
