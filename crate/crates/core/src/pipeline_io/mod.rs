//! Files on disk: recordings, dataset manifests, feature/score tables and
//! model bundles.

mod bundle;
mod export;
mod manifest;
mod recording;

pub use bundle::{
    bundle_from_str, bundle_to_string, load_bundle, save_bundle, verified_bundle, BUNDLE_EXTENSION, BUNDLE_FORMAT,
    BUNDLE_SCHEMA_VERSION,
};
pub use export::{write_feature_csv, write_scores_csv};
pub use manifest::{
    load_dataset, load_dataset_from, DatasetManifest, LabelTable, ManifestRecording, MANIFEST_SCHEMA_VERSION,
};
pub use recording::{read_recording, sidecar_path, write_recording, RecordingMeta};
