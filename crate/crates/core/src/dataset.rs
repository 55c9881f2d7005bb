use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::linalg::Matrix;

/// Feature matrix with per-row provenance and every task's labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    /// `[n × 75]`, rows in manifest order.
    pub features: Matrix,
    pub sample_ids: Vec<String>,
    pub reference_liquid_ids: Vec<String>,
    pub test_liquid_ids: Vec<String>,
    /// task → sample_id → label
    pub tasks: BTreeMap<String, BTreeMap<String, String>>,
}

/// One task's view of a dataset: label indices into `label_names`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskData {
    pub task_name: String,
    pub features: Matrix,
    pub sample_ids: Vec<String>,
    pub labels: Vec<usize>,
    /// Sorted distinct labels.
    pub label_names: Vec<String>,
}

impl LabeledDataset {
    pub fn from_features(
        vectors: &[FeatureVector],
        sample_ids: Vec<String>,
        tasks: BTreeMap<String, BTreeMap<String, String>>,
    ) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::Validation("dataset has no recordings".into()));
        }
        if vectors.len() != sample_ids.len() {
            return Err(Error::Argument("one sample id per feature vector required".into()));
        }
        let rows: Vec<&[f64]> = vectors.iter().map(|v| v.values.as_slice()).collect();
        let ds = LabeledDataset {
            features: Matrix::from_rows(&rows)?,
            sample_ids,
            reference_liquid_ids: vectors.iter().map(|v| v.reference_liquid_id.clone()).collect(),
            test_liquid_ids: vectors.iter().map(|v| v.test_liquid_id.clone()).collect(),
            tasks,
        };
        ds.check_labels()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.keys().map(String::as_str).collect()
    }

    fn check_labels(&self) -> Result<()> {
        for (task, table) in &self.tasks {
            let missing: BTreeSet<&str> = self
                .sample_ids
                .iter()
                .filter(|s| !table.contains_key(*s))
                .map(String::as_str)
                .collect();
            if !missing.is_empty() {
                return Err(Error::Validation(format!(
                    "task '{task}' has no label for sample_id(s): {}",
                    missing.into_iter().collect::<Vec<_>>().join(", ")
                )));
            }
        }
        Ok(())
    }

    pub fn task(&self, name: &str) -> Result<TaskData> {
        let table = self.tasks.get(name).ok_or_else(|| {
            Error::Argument(format!(
                "unknown task '{name}' (available: {})",
                self.task_names().join(", ")
            ))
        })?;
        let raw: Vec<&str> = self
            .sample_ids
            .iter()
            .map(|s| {
                table.get(s).map(String::as_str).ok_or_else(|| {
                    Error::Validation(format!("task '{name}' has no label for sample_id {s}"))
                })
            })
            .collect::<Result<_>>()?;
        let label_names: Vec<String> = raw
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect();
        let labels = raw
            .iter()
            .map(|l| label_names.binary_search_by(|n| n.as_str().cmp(l)).expect("present"))
            .collect();
        Ok(TaskData {
            task_name: name.to_string(),
            features: self.features.clone(),
            sample_ids: self.sample_ids.clone(),
            labels,
            label_names,
        })
    }

    pub fn fingerprint(&self) -> String {
        matrix_digest(&self.features)
    }
}

impl TaskData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// SHA-256 over the shape and the little-endian bytes of every entry.
pub fn matrix_digest(m: &Matrix) -> String {
    let mut h = Sha256::new();
    h.update((m.nrows() as u64).to_le_bytes());
    h.update((m.ncols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}
