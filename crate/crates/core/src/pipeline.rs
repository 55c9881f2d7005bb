//! Standardizer → PCA → classifier, fitted together and applied together.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chemometrics::{fit_pca, fit_standardizer, PcaModel, Standardizer, DEFAULT_VARIANCE_TARGET};
use crate::classifiers::{fit_classifier, ClassifierModel, ModelKind};
use crate::dataset::{matrix_digest, TaskData};
use crate::error::{Error, Result};
use crate::features::{extract_features, FEATURE_SPEC_ID};
use crate::linalg::Matrix;
use crate::signal_sim::TransientRecording;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variance_target: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            variance_target: DEFAULT_VARIANCE_TARGET,
            seed: 0,
        }
    }
}

/// Mixes a base seed with a stream number (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The three fitted stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedStages {
    pub standardizer: Standardizer,
    pub pca: PcaModel,
    pub classifier: ClassifierModel,
}

/// Fits all stages on `x` (raw features) only.
pub fn fit_stages(
    x: &Matrix,
    labels: &[usize],
    kind: ModelKind,
    config: &PipelineConfig,
    classifier_seed: u64,
) -> Result<FittedStages> {
    let standardizer = fit_standardizer(x)?;
    let z = standardizer.apply(x)?;
    let pca = fit_pca(&z, config.variance_target)?;
    let scores = pca.project(&z)?;
    let classifier = fit_classifier(kind, &scores, labels, classifier_seed)?;
    Ok(FittedStages {
        standardizer,
        pca,
        classifier,
    })
}

impl FittedStages {
    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        self.pca.project_row(&self.standardizer.transform_row(features))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub dataset_hash: String,
    pub seed: u64,
    /// RFC 3339; empty when the caller did not stamp the pipeline.
    pub timestamp: String,
    pub n_training_rows: usize,
}

/// A deployable pipeline: feature definition, fitted stages and label map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedPipeline {
    pub feature_spec_id: String,
    pub task_name: String,
    pub model_kind: ModelKind,
    pub label_map: Vec<String>,
    pub standardizer: Standardizer,
    pub pca: PcaModel,
    pub classifier: ClassifierModel,
    pub training_fingerprint: TrainingFingerprint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: String,
    /// Per-class score keyed by label name.
    pub scores: BTreeMap<String, f64>,
}

pub fn fit_pipeline(task: &TaskData, kind: ModelKind, config: &PipelineConfig) -> Result<TrainedPipeline> {
    let stages = fit_stages(&task.features, &task.labels, kind, config, config.seed)?;
    Ok(TrainedPipeline {
        feature_spec_id: FEATURE_SPEC_ID.to_string(),
        task_name: task.task_name.clone(),
        model_kind: kind,
        label_map: task.label_names.clone(),
        standardizer: stages.standardizer,
        pca: stages.pca,
        classifier: stages.classifier,
        training_fingerprint: TrainingFingerprint {
            dataset_hash: matrix_digest(&task.features),
            seed: config.seed,
            timestamp: String::new(),
            n_training_rows: task.len(),
        },
    })
}

impl TrainedPipeline {
    pub fn stamped(mut self, timestamp: impl Into<String>) -> Self {
        self.training_fingerprint.timestamp = timestamp.into();
        self
    }

    /// Replaces the classifier, keeping the feature, standardizer and PCA stages.
    pub fn with_classifier(mut self, kind: ModelKind, classifier: ClassifierModel) -> Result<Self> {
        classifier.validate(self.pca.n_selected)?;
        if let Some(c) = classifier.classes().iter().find(|c| **c >= self.label_map.len()) {
            return Err(Error::Validation(format!("classifier label {c} is outside the label map")));
        }
        self.model_kind = kind;
        self.classifier = classifier;
        Ok(self)
    }

    /// Standardized PCA scores for one raw feature vector.
    pub fn project(&self, features: &[f64]) -> Vec<f64> {
        self.pca.project_row(&self.standardizer.transform_row(features))
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<Prediction> {
        if features.len() != self.standardizer.n_features() {
            return Err(Error::Argument(format!(
                "expected {} features, got {}",
                self.standardizer.n_features(),
                features.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("feature vector contains non-finite values".into()));
        }
        let scores = self.project(features);
        // the baseline draws from a stream tied to the input, so repeated
        // calls with the same recording agree
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            self.training_fingerprint.seed,
            input_stream(features),
        ));
        let label = self.classifier.predict(&scores, &mut rng);
        let per_class = self.classifier.scores(&scores);
        Ok(Prediction {
            label: self.label_map[label].clone(),
            scores: self
                .classifier
                .classes()
                .iter()
                .zip(per_class)
                .map(|(c, s)| (self.label_map[*c].clone(), s))
                .collect(),
        })
    }

    pub fn predict_recording(&self, rec: &TransientRecording) -> Result<Prediction> {
        let fv = extract_features(rec)?;
        self.predict_features(&fv.values)
    }

    /// Shape and label consistency between stages.
    pub fn validate(&self) -> Result<()> {
        let p = self.standardizer.n_features();
        if self.standardizer.stds.len() != p || self.standardizer.constant.len() != p {
            return Err(Error::Validation("standardizer vectors differ in length".into()));
        }
        if self.pca.n_features() != p
            || self.pca.axes.nrows() != p
            || self.pca.axes.ncols() != p
            || self.pca.n_selected == 0
            || self.pca.n_selected > p
        {
            return Err(Error::Validation("PCA stage does not match the standardizer".into()));
        }
        self.classifier.validate(self.pca.n_selected)?;
        if self.classifier.classes().iter().any(|c| *c >= self.label_map.len()) {
            return Err(Error::Validation("classifier label outside the label map".into()));
        }
        Ok(())
    }
}

fn input_stream(features: &[f64]) -> u64 {
    let mut h = Sha256::new();
    for v in features {
        h.update(v.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("8 bytes"))
}
