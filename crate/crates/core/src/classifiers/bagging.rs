//! Bootstrap-aggregated CART trees (Gini impurity, no feature subsampling,
//! grown to purity).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax, check_training, distinct_classes};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Smallest impurity decrease that justifies a split.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training-row counts per class (aligned with the ensemble's classes).
    Leaf { counts: Vec<u32> },
}

/// One CART tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "TreeRepr", try_from = "TreeRepr")]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
    n_classes: usize,
}

/// Column layout used on the wire: `feature = -1` marks a leaf, and leaf
/// counts are concatenated in node order.
#[derive(Serialize, Deserialize)]
struct TreeRepr {
    n_classes: usize,
    feature: Vec<i64>,
    #[serde(with = "crate::codec")]
    threshold: Vec<f64>,
    left: Vec<u32>,
    right: Vec<u32>,
    counts: Vec<u32>,
}

impl From<DecisionTree> for TreeRepr {
    fn from(t: DecisionTree) -> Self {
        let mut r = TreeRepr {
            n_classes: t.n_classes,
            feature: Vec::with_capacity(t.nodes.len()),
            threshold: Vec::with_capacity(t.nodes.len()),
            left: Vec::with_capacity(t.nodes.len()),
            right: Vec::with_capacity(t.nodes.len()),
            counts: Vec::new(),
        };
        for node in t.nodes {
            match node {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    r.feature.push(feature as i64);
                    r.threshold.push(threshold);
                    r.left.push(left as u32);
                    r.right.push(right as u32);
                }
                Node::Leaf { counts } => {
                    r.feature.push(-1);
                    r.threshold.push(0.0);
                    r.left.push(0);
                    r.right.push(0);
                    r.counts.extend(counts);
                }
            }
        }
        r
    }
}

impl TryFrom<TreeRepr> for DecisionTree {
    type Error = String;

    fn try_from(r: TreeRepr) -> std::result::Result<Self, String> {
        let n = r.feature.len();
        if r.threshold.len() != n || r.left.len() != n || r.right.len() != n {
            return Err("tree columns have different lengths".into());
        }
        let mut counts = r.counts.chunks_exact(r.n_classes.max(1));
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            if r.feature[i] < 0 {
                let c = counts.next().ok_or("missing leaf counts")?;
                nodes.push(Node::Leaf { counts: c.to_vec() });
            } else {
                nodes.push(Node::Split {
                    feature: r.feature[i] as usize,
                    threshold: r.threshold[i],
                    left: r.left[i] as usize,
                    right: r.right[i] as usize,
                });
            }
        }
        if counts.next().is_some() || !counts.remainder().is_empty() {
            return Err("surplus leaf counts".into());
        }
        Ok(DecisionTree {
            nodes,
            n_classes: r.n_classes,
        })
    }
}

fn gini(counts: &[u32], total: u32) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>()
}

impl DecisionTree {
    /// Grows a tree on `rows` (indices into `x`, repeats allowed). `y` holds
    /// class positions in `0..n_classes`.
    pub fn fit(x: &Matrix, y: &[usize], rows: &[usize], n_classes: usize) -> DecisionTree {
        let mut tree = DecisionTree {
            nodes: Vec::new(),
            n_classes,
        };
        tree.grow(x, y, rows.to_vec());
        tree
    }

    fn grow(&mut self, x: &Matrix, y: &[usize], rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let mut counts = vec![0u32; self.n_classes];
        for &r in &rows {
            counts[y[r]] += 1;
        }
        let total = rows.len() as u32;
        let parent = gini(&counts, total);

        let split = if parent > 0.0 { best_split(x, y, &rows, &counts) } else { None };
        match split {
            Some((feature, threshold, impurity)) if parent - impurity > MIN_GAIN => {
                self.nodes.push(Node::Split {
                    feature,
                    threshold,
                    left: 0,
                    right: 0,
                });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| x[(i, feature)] <= threshold);
                let left = self.grow(x, y, l);
                let right = self.grow(x, y, r);
                if let Node::Split {
                    left: ls, right: rs, ..
                } = &mut self.nodes[id]
                {
                    *ls = left;
                    *rs = right;
                }
            }
            _ => self.nodes.push(Node::Leaf { counts }),
        }
        id
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    /// Class position (not label) of the majority in the reached leaf.
    pub fn predict_position(&self, x: &[f64]) -> usize {
        argmax(self.leaf_counts(x))
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, *left).max(go(t, *right)),
            }
        }
        go(self, 0)
    }

    pub(crate) fn validate(&self, n_inputs: usize, n_classes: usize) -> Result<()> {
        if self.nodes.is_empty() || self.n_classes != n_classes {
            return Err(Error::Validation("tree is empty or has wrong class count".into()));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(Error::Validation("tree links are not a proper tree".into()));
            }
            seen[i] = true;
            match &self.nodes[i] {
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|c| *c == 0) {
                        return Err(Error::Validation("leaf without training rows".into()));
                    }
                }
                Node::Split {
                    feature, left, right, ..
                } => {
                    if *feature >= n_inputs {
                        return Err(Error::Validation("split on unknown feature".into()));
                    }
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation("unreachable tree nodes".into()));
        }
        Ok(())
    }
}

/// Best Gini split `(feature, threshold, weighted child impurity)`. Candidate
/// thresholds are midpoints between consecutive distinct values; ties keep
/// the first feature and the lowest threshold.
fn best_split(x: &Matrix, y: &[usize], rows: &[usize], counts: &[u32]) -> Option<(usize, f64, f64)> {
    let total = rows.len() as u32;
    let mut best: Option<(usize, f64, f64)> = None;
    let mut sorted = rows.to_vec();
    for f in 0..x.ncols() {
        sorted.sort_by(|&a, &b| x[(a, f)].total_cmp(&x[(b, f)]));
        let mut left = vec![0u32; counts.len()];
        for i in 0..sorted.len() - 1 {
            left[y[sorted[i]]] += 1;
            let lo = x[(sorted[i], f)];
            let hi = x[(sorted[i + 1], f)];
            if lo == hi {
                continue;
            }
            let n_left = (i + 1) as u32;
            let right: Vec<u32> = counts.iter().zip(&left).map(|(c, l)| c - l).collect();
            let impurity = (n_left as f64 * gini(&left, n_left)
                + (total - n_left) as f64 * gini(&right, total - n_left))
                / total as f64;
            if best.is_none_or(|(_, _, b)| impurity < b) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some((f, threshold, impurity));
            }
        }
    }
    best
}

/// Ensemble of CART trees, each fitted on its own bootstrap resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaggedTreesModel {
    pub classes: Vec<usize>,
    pub trees: Vec<DecisionTree>,
    pub bootstrap_seed: u64,
}

/// Bootstrap sample (size `n`, with replacement) for tree `tree_index`.
/// The stream depends only on `(seed, tree_index)`.
pub fn bootstrap_indices(seed: u64, tree_index: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree_index as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn bagged_fit(x: &Matrix, labels: &[usize], n_trees: usize, seed: u64) -> Result<BaggedTreesModel> {
    bagged_fit_with(x, labels, n_trees, seed, true)
}

/// As [`bagged_fit`], choosing whether trees are grown in parallel. Both
/// paths produce identical forests.
pub fn bagged_fit_with(
    x: &Matrix,
    labels: &[usize],
    n_trees: usize,
    seed: u64,
    parallel: bool,
) -> Result<BaggedTreesModel> {
    check_training(x, labels)?;
    let n = x.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "bagged trees need at least 2 rows, got {n}"
        )));
    }
    if n_trees == 0 {
        return Err(Error::Argument("n_trees must be >= 1".into()));
    }
    let classes = distinct_classes(labels);
    let positions: Vec<usize> = labels
        .iter()
        .map(|l| classes.binary_search(l).expect("known class"))
        .collect();

    let grow = |t: usize| {
        let rows = bootstrap_indices(seed, t, n);
        DecisionTree::fit(x, &positions, &rows, classes.len())
    };
    let trees = if parallel {
        (0..n_trees).into_par_iter().map(grow).collect()
    } else {
        (0..n_trees).map(grow).collect()
    };

    Ok(BaggedTreesModel {
        classes,
        trees,
        bootstrap_seed: seed,
    })
}

impl BaggedTreesModel {
    pub fn votes(&self, x: &[f64]) -> Vec<usize> {
        let mut votes = vec![0; self.classes.len()];
        for t in &self.trees {
            votes[t.predict_position(x)] += 1;
        }
        votes
    }

    /// Majority vote; ties go to the lowest label index.
    pub fn predict(&self, x: &[f64]) -> usize {
        self.classes[argmax(&self.votes(x))]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[(f64, usize)]) -> (Matrix, Vec<usize>) {
        let rows: Vec<[f64; 1]> = points.iter().map(|p| [p.0]).collect();
        (Matrix::from_rows(&rows).unwrap(), points.iter().map(|p| p.1).collect())
    }

    #[test]
    fn threshold_is_midpoint_inside_margin() {
        let (x, y) = line(&[(-3.0, 0), (-1.0, 0), (-0.5, 0), (0.5, 1), (2.0, 1)]);
        let tree = DecisionTree::fit(&x, &y, &[0, 1, 2, 3, 4], 2);
        match &tree.nodes[0] {
            Node::Split { threshold, .. } => assert_eq!(*threshold, 0.0),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.nodes.len(), 3);
    }

    #[test]
    fn pure_data_is_single_leaf() {
        let (x, y) = line(&[(1.0, 2), (2.0, 2), (3.0, 2)]);
        let m = bagged_fit(&x, &y, 10, 1).unwrap();
        assert!(m.trees.iter().all(|t| t.nodes.len() == 1));
        assert_eq!(m.predict(&[-100.0]), 2);
        assert_eq!(m.predict(&[100.0]), 2);
    }

    #[test]
    fn separable_line_is_fully_learned() {
        let pts: Vec<(f64, usize)> = (0..10)
            .map(|i| (-5.5 + i as f64 * 0.5, 0))
            .chain((0..10).map(|i| (1.0 + i as f64 * 0.5, 1)))
            .collect();
        let (x, y) = line(&pts);
        let m = bagged_fit(&x, &y, 50, 9).unwrap();
        for (r, l) in x.rows().zip(&y) {
            assert_eq!(m.predict(r), *l);
        }
        // every root split separates the classes: x <= threshold goes left
        for t in &m.trees {
            if let Node::Split { threshold, .. } = t.nodes[0] {
                assert!((-1.0..1.0).contains(&threshold), "{threshold}");
            }
        }
    }

    #[test]
    fn ensemble_tie_goes_to_lowest_label() {
        let (x, y) = line(&[(0.0, 0), (1.0, 1)]);
        let leaf = |c: Vec<u32>| DecisionTree {
            nodes: vec![Node::Leaf { counts: c }],
            n_classes: 2,
        };
        let m = BaggedTreesModel {
            classes: vec![3, 8],
            trees: vec![leaf(vec![1, 0]), leaf(vec![0, 1])],
            bootstrap_seed: 0,
        };
        let _ = (x, y);
        assert_eq!(m.predict(&[0.5]), 3);
    }

    #[test]
    fn bootstrap_streams_are_independent_of_order() {
        let a = bootstrap_indices(5, 3, 20);
        let _ = bootstrap_indices(5, 2, 20);
        assert_eq!(a, bootstrap_indices(5, 3, 20));
        assert_ne!(a, bootstrap_indices(5, 4, 20));
        assert!(a.iter().all(|&i| i < 20));
    }

    #[test]
    fn tree_serde_round_trip() {
        let (x, y) = line(&[(0.1, 0), (0.2, 1), (0.3, 0), (0.45, 1), (0.9, 1)]);
        let m = bagged_fit(&x, &y, 5, 2).unwrap();
        let text = serde_json::to_string(&m).unwrap();
        let back: BaggedTreesModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }
}
