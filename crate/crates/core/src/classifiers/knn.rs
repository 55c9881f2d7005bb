use serde::{Deserialize, Serialize};

use super::{check_training, distinct_classes};
use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

/// Exhaustive-search k-nearest-neighbour classifier (Euclidean distance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    pub classes: Vec<usize>,
    pub training: Matrix,
    pub labels: Vec<usize>,
}

pub fn knn_fit(x: &Matrix, labels: &[usize], k: usize) -> Result<KnnModel> {
    check_training(x, labels)?;
    if x.nrows() == 0 {
        return Err(Error::State("knn has an empty training set".into()));
    }
    if k == 0 || k > x.nrows() {
        return Err(Error::Argument(format!(
            "k must be in 1..={}, got {k}",
            x.nrows()
        )));
    }
    Ok(KnnModel {
        k,
        classes: distinct_classes(labels),
        training: x.clone(),
        labels: labels.to_vec(),
    })
}

impl KnnModel {
    /// Training-row indices of the `k` nearest rows, nearest first. Equal
    /// distances are ordered by row index.
    pub fn neighbours(&self, x: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .training
            .rows()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, x), i))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(self.k).map(|(_, i)| i).collect()
    }

    /// Votes per class among the nearest neighbours, aligned with `classes`.
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.classes.len()];
        for i in self.neighbours(x) {
            let ci = self.classes.binary_search(&self.labels[i]).expect("known class");
            votes[ci] += 1;
        }
        votes
    }

    /// Majority label; a vote tie goes to the nearest neighbour whose label
    /// is among the tied ones.
    pub fn predict(&self, x: &[f64]) -> usize {
        let nearest = self.neighbours(x);
        let mut votes = vec![0usize; self.classes.len()];
        for &i in &nearest {
            votes[self.classes.binary_search(&self.labels[i]).expect("known class")] += 1;
        }
        let top = *votes.iter().max().expect("at least one class");
        nearest
            .iter()
            .map(|&i| self.labels[i])
            .find(|l| votes[self.classes.binary_search(l).expect("known class")] == top)
            .expect("a top-voted label occurs among the neighbours")
    }
}
