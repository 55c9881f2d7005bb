use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::feature_names;
use crate::linalg::Matrix;

fn csv_error(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e))
}

/// Feature matrix with `sample_id,test_liquid_id` followed by the 75 feature
/// columns.
pub fn write_feature_csv(ds: &LabeledDataset, path: &Path) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header = vec!["sample_id".to_string(), "test_liquid_id".to_string()];
    header.extend(feature_names());
    w.write_record(&header).map_err(&err)?;
    for (i, row) in ds.features.rows().enumerate() {
        let mut rec = vec![ds.sample_ids[i].clone(), ds.test_liquid_ids[i].clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// PCA scores as `pc1..pcm,sample_id,label`.
pub fn write_scores_csv(scores: &Matrix, sample_ids: &[String], labels: &[String], path: &Path) -> Result<()> {
    let err = csv_error(path);
    let mut w = csv::Writer::from_path(path).map_err(&err)?;
    let mut header: Vec<String> = (1..=scores.ncols()).map(|i| format!("pc{i}")).collect();
    header.push("sample_id".into());
    header.push("label".into());
    w.write_record(&header).map_err(&err)?;
    for (i, row) in scores.rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(sample_ids[i].clone());
        rec.push(labels[i].clone());
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
