use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::signal_sim::{TransientRecording, N_CHANNELS};

/// JSON sidecar stored next to each recording CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub sample_rate_hz: f64,
    pub transition_index: usize,
    pub reference_liquid_id: String,
    pub test_liquid_id: String,
}

/// `run.csv` → `run.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn header() -> Vec<String> {
    std::iter::once("t_s".to_string())
        .chain((1..=N_CHANNELS).map(|c| format!("ch{c:02}")))
        .collect()
}

/// Writes `t_s,ch01,...,ch15` rows plus the sidecar. Values use Rust's
/// shortest round-trip formatting, so a re-read is bit-exact.
pub fn write_recording(rec: &TransientRecording, csv_path: &Path) -> Result<()> {
    rec.validate()?;
    let mut w = csv::Writer::from_path(csv_path)
        .map_err(|e| Error::io(csv_path, std::io::Error::other(e)))?;
    let io = |e: csv::Error| Error::io(csv_path, std::io::Error::other(e));
    w.write_record(header()).map_err(io)?;
    for (k, row) in rec.voltages_mv.rows().enumerate() {
        let mut fields = Vec::with_capacity(N_CHANNELS + 1);
        fields.push((k as f64 / rec.sample_rate_hz).to_string());
        fields.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&fields).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(csv_path, e))?;

    let meta = RecordingMeta {
        sample_rate_hz: rec.sample_rate_hz,
        transition_index: rec.transition_index,
        reference_liquid_id: rec.reference_liquid_id.clone(),
        test_liquid_id: rec.test_liquid_id.clone(),
    };
    let side = sidecar_path(csv_path);
    let text = serde_json::to_string_pretty(&meta).expect("plain struct serializes");
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_recording(csv_path: &Path) -> Result<TransientRecording> {
    let side = sidecar_path(csv_path);
    let meta_text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RecordingMeta = serde_json::from_str(&meta_text).map_err(|e| Error::parse(&side, e))?;

    let file = fs::File::open(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let got: Vec<String> = r
        .headers()
        .map_err(|e| Error::parse(csv_path, e))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if got != header() {
        return Err(Error::parse(
            csv_path,
            format!("expected header t_s,ch01..ch{N_CHANNELS}, got {}", got.join(",")),
        ));
    }
    let mut data = Vec::new();
    let mut n = 0;
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::parse(csv_path, e))?;
        for field in record.iter().skip(1) {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(csv_path, format!("row {}: '{field}' is not a number", line + 2))
            })?;
            data.push(v);
        }
        n += 1;
    }
    let rec = TransientRecording {
        sample_rate_hz: meta.sample_rate_hz,
        transition_index: meta.transition_index,
        voltages_mv: Matrix::from_row_major(n, N_CHANNELS, data)?,
        reference_liquid_id: meta.reference_liquid_id,
        test_liquid_id: meta.test_liquid_id,
    };
    rec.validate()?;
    Ok(rec)
}
