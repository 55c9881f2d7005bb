//! Software pipeline of a potentiometric electronic tongue: simulate or read
//! 15-channel transient recordings, extract 75 features, z-score and reduce
//! with PCA, classify with LDA / KNN / bagged trees / a weighted-random
//! baseline, cross-validate, and package trained pipelines as model bundles.

pub mod chemometrics;
pub mod classifiers;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod linalg;
pub mod pipeline;
pub mod pipeline_io;
pub mod scenarios;
pub mod signal_sim;

pub use dataset::{LabeledDataset, TaskData};
pub use error::{Error, Result};
pub use features::{extract_features, feature_name, FeatureVector, N_FEATURES};
pub use linalg::Matrix;
pub use pipeline::{fit_pipeline, PipelineConfig, Prediction, TrainedPipeline};
pub use signal_sim::{
    generate_dataset, simulate_transient, Acquisition, LiquidProfile, SensorArraySpec, TransientRecording,
    N_CHANNELS,
};
