use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::recording::read_recording;
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::extract_features;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecording {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub sample_id: String,
    pub reference_liquid_id: String,
}

/// `sample_id → label` entries of one task, kept in file order with any
/// repeated keys so conflicting duplicates can be reported.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelTable(pub Vec<(String, String)>);

impl Serialize for LabelTable {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelTable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct Entries;
        impl<'de> Visitor<'de> for Entries {
            type Value = LabelTable;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of sample_id to label")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> std::result::Result<LabelTable, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, String>()? {
                    out.push((k, v));
                }
                Ok(LabelTable(out))
            }
        }
        deserializer.deserialize_map(Entries)
    }
}

impl FromIterator<(String, String)> for LabelTable {
    fn from_iter<I: IntoIterator<Item = (String, String)>>(iter: I) -> Self {
        LabelTable(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub recordings: Vec<ManifestRecording>,
    #[serde(default)]
    pub tasks: BTreeMap<String, LabelTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Resolved label maps; conflicting duplicate entries are a validation error.
    pub fn label_maps(&self) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
        let mut out = BTreeMap::new();
        for (task, table) in &self.tasks {
            let mut map: BTreeMap<String, String> = BTreeMap::new();
            let mut conflicts = Vec::new();
            for (sample, label) in &table.0 {
                match map.get(sample) {
                    Some(prev) if prev != label => {
                        conflicts.push(format!("{sample} ({prev} vs {label})"));
                    }
                    _ => {
                        map.insert(sample.clone(), label.clone());
                    }
                }
            }
            if !conflicts.is_empty() {
                return Err(Error::Validation(format!(
                    "task '{task}' has conflicting labels for sample_id(s): {}",
                    conflicts.join(", ")
                )));
            }
            out.insert(task.clone(), map);
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Validation(format!(
                "manifest schema version {} is not supported (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.recordings.is_empty() {
            return Err(Error::Validation("manifest lists no recordings".into()));
        }
        self.label_maps().map(|_| ())
    }
}

/// Reads a manifest file and builds the dataset from it.
pub fn load_dataset(manifest_path: &Path) -> Result<LabeledDataset> {
    let manifest = DatasetManifest::read(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    load_dataset_from(&manifest, base)
}

/// Extracts features for every listed recording. Rows follow manifest order.
pub fn load_dataset_from(manifest: &DatasetManifest, base_dir: &Path) -> Result<LabeledDataset> {
    manifest.validate()?;
    let tasks = manifest.label_maps()?;
    let vectors = manifest
        .recordings
        .par_iter()
        .map(|entry| {
            let path = base_dir.join(&entry.path);
            let rec = read_recording(&path)?;
            if rec.reference_liquid_id != entry.reference_liquid_id {
                return Err(Error::Validation(format!(
                    "{}: sidecar reference '{}' disagrees with manifest reference '{}'",
                    path.display(),
                    rec.reference_liquid_id,
                    entry.reference_liquid_id
                )));
            }
            extract_features(&rec).map_err(|e| match e {
                Error::Recording(m) => Error::Recording(format!("{}: {m}", path.display())),
                Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sample_ids = manifest.recordings.iter().map(|r| r.sample_id.clone()).collect();
    LabeledDataset::from_features(&vectors, sample_ids, tasks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_keys_are_kept_and_conflicts_reported() {
        let text = r#"{
            "schema_version": 1,
            "recordings": [{"path": "a.csv", "sample_id": "s1", "reference_liquid_id": "r"}],
            "tasks": {"kind": {"s1": "pear", "s1": "peach"}}
        }"#;
        let m: DatasetManifest = serde_json::from_str(text).unwrap();
        assert_eq!(m.tasks["kind"].0.len(), 2);
        let err = m.validate().unwrap_err();
        assert!(matches!(&err, Error::Validation(msg) if msg.contains("s1")));
    }

    #[test]
    fn identical_duplicates_are_fine() {
        let text = r#"{
            "schema_version": 1,
            "recordings": [{"path": "a.csv", "sample_id": "s1", "reference_liquid_id": "r"}],
            "tasks": {"kind": {"s1": "pear", "s1": "pear"}}
        }"#;
        let m: DatasetManifest = serde_json::from_str(text).unwrap();
        assert!(m.validate().is_ok());
    }

    #[test]
    fn empty_recording_list_rejected() {
        let m = DatasetManifest {
            schema_version: 1,
            recordings: vec![],
            tasks: BTreeMap::new(),
            notes: None,
        };
        assert!(matches!(m.validate(), Err(Error::Validation(_))));
    }

    #[test]
    fn missing_recording_names_path() {
        let m = DatasetManifest {
            schema_version: 1,
            recordings: vec![ManifestRecording {
                path: "missing/run.csv".into(),
                sample_id: "s".into(),
                reference_liquid_id: "r".into(),
            }],
            tasks: BTreeMap::new(),
            notes: None,
        };
        let err = load_dataset_from(&m, Path::new("/tmp/etongue-none")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("missing/run.json"));
    }
}
