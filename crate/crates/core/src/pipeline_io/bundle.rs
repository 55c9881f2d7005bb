//! Versioned, checksummed JSON model bundles (`.etb.json`).
//!
//! ```text
//! {
//!   "checksum": "sha256:<hex of the canonical payload>",
//!   "format": "etongue-model-bundle",
//!   "payload": { ...TrainedPipeline... },
//!   "schema_version": 1
//! }
//! ```
//!
//! Numeric arrays inside the payload are base64 little-endian `f64`, so
//! parameters survive a round-trip bit for bit. The canonical payload is its
//! compact JSON with keys sorted.

use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::TrainedPipeline;

pub const BUNDLE_FORMAT: &str = "etongue-model-bundle";
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;
pub const BUNDLE_EXTENSION: &str = "etb.json";

fn checksum(payload: &Value) -> String {
    let canonical = serde_json::to_string(payload).expect("Value serializes");
    format!("sha256:{}", hex::encode(Sha256::digest(canonical.as_bytes())))
}

/// Serializes a pipeline to its bundle document. Identical pipelines give
/// identical bytes.
pub fn bundle_to_string(pipeline: &TrainedPipeline) -> Result<String> {
    pipeline.validate()?;
    let payload = serde_json::to_value(pipeline).map_err(|e| Error::Validation(e.to_string()))?;
    let doc = json!({
        "format": BUNDLE_FORMAT,
        "schema_version": BUNDLE_SCHEMA_VERSION,
        "checksum": checksum(&payload),
        "payload": payload,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("Value serializes") + "\n")
}

/// Parses and verifies a bundle document: format tag, schema version,
/// checksum, then structural consistency of the pipeline.
pub fn bundle_from_str(text: &str) -> Result<TrainedPipeline> {
    verified_bundle(text).map(|(p, _)| p)
}

/// As [`bundle_from_str`], also returning the verified checksum string.
pub fn verified_bundle(text: &str) -> Result<(TrainedPipeline, String)> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| Error::Integrity(format!("bundle is not valid JSON: {e}")))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| Error::Integrity("bundle is not a JSON object".into()))?;
    if obj.get("format").and_then(Value::as_str) != Some(BUNDLE_FORMAT) {
        return Err(Error::Integrity(format!("missing or wrong format tag (expected '{BUNDLE_FORMAT}')")));
    }
    let version = obj
        .get("schema_version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Integrity("missing schema_version".into()))?;
    if version != u64::from(BUNDLE_SCHEMA_VERSION) {
        return Err(Error::Incompatible {
            found: u32::try_from(version).unwrap_or(u32::MAX),
            expected: BUNDLE_SCHEMA_VERSION,
        });
    }
    let payload = obj
        .get("payload")
        .ok_or_else(|| Error::Integrity("missing payload".into()))?;
    let stored = obj
        .get("checksum")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Integrity("missing checksum".into()))?;
    let actual = checksum(payload);
    if stored != actual {
        return Err(Error::Integrity(format!("checksum mismatch: stored {stored}, computed {actual}")));
    }
    let pipeline: TrainedPipeline = serde_json::from_value(payload.clone())
        .map_err(|e| Error::Integrity(format!("payload does not decode: {e}")))?;
    pipeline.validate()?;
    Ok((pipeline, actual))
}

pub fn save_bundle(pipeline: &TrainedPipeline, path: &Path) -> Result<()> {
    let text = bundle_to_string(pipeline)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<TrainedPipeline> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Integrity(format!("{} is not UTF-8", path.display())))?;
    bundle_from_str(&text)
}
