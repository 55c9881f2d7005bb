use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::features::{FeatureVector, N_FEATURES};

/// Feature vectors of one analyte measured at several concentrations.
#[derive(Debug, Clone)]
pub struct AcidSeries {
    pub name: String,
    /// `(log10 molar concentration, features)` pairs; repeats allowed.
    pub points: Vec<(f64, FeatureVector)>,
}

/// Per-feature OLS slope against log10 concentration, one column per acid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub acids: Vec<String>,
    /// `[75][n_acids]`, feature units per decade.
    pub slopes: Vec<Vec<f64>>,
    /// `[75][n_acids]`, in [0, 1].
    pub r_squared: Vec<Vec<f64>>,
}

impl SensitivityReport {
    pub fn slope(&self, feature: usize, acid: usize) -> f64 {
        self.slopes[feature][acid]
    }

    pub fn r2(&self, feature: usize, acid: usize) -> f64 {
        self.r_squared[feature][acid]
    }
}

/// Ordinary least-squares `(slope, R²)`. A constant response has R² = 0.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r2 = if syy <= 0.0 {
        0.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    (slope, r2)
}

pub fn sensitivity_slopes(series: &[AcidSeries]) -> Result<SensitivityReport> {
    let mut slopes = vec![vec![0.0; series.len()]; N_FEATURES];
    let mut r_squared = vec![vec![0.0; series.len()]; N_FEATURES];

    for (a, acid) in series.iter().enumerate() {
        let mut distinct: Vec<f64> = acid.points.iter().map(|(c, _)| *c).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "acid '{}' has {} distinct concentrations, need at least 3",
                acid.name,
                distinct.len()
            )));
        }
        if let Some((c, _)) = acid.points.iter().find(|(c, _)| !c.is_finite()) {
            return Err(Error::Data(format!("acid '{}' has log concentration {c}", acid.name)));
        }
        let xs: Vec<f64> = acid.points.iter().map(|(c, _)| *c).collect();
        for f in 0..N_FEATURES {
            let ys: Vec<f64> = acid.points.iter().map(|(_, fv)| fv.values[f]).collect();
            let (s, r2) = ols(&xs, &ys);
            slopes[f][a] = s;
            r_squared[f][a] = r2;
        }
    }

    Ok(SensitivityReport {
        acids: series.iter().map(|s| s.name.clone()).collect(),
        slopes,
        r_squared,
    })
}

/// Groups dataset rows into one series per acid. `acid_task` names the acid
/// of each sample and `concentration_task` its molar concentration.
pub fn series_from_dataset(
    ds: &LabeledDataset,
    acid_task: &str,
    concentration_task: &str,
) -> Result<Vec<AcidSeries>> {
    let lookup = |task: &str| {
        ds.tasks
            .get(task)
            .ok_or_else(|| Error::Argument(format!("dataset has no task '{task}'")))
    };
    let acids = lookup(acid_task)?;
    let concentrations = lookup(concentration_task)?;
    let mut series: Vec<AcidSeries> = Vec::new();
    for (i, sample) in ds.sample_ids.iter().enumerate() {
        let acid = &acids[sample];
        let text = &concentrations[sample];
        let molar: f64 = text
            .parse()
            .map_err(|_| Error::Data(format!("sample {sample}: '{text}' is not a concentration")))?;
        if !(molar > 0.0) {
            return Err(Error::Data(format!("sample {sample}: concentration {molar} must be > 0")));
        }
        let fv = FeatureVector {
            values: ds.features.row(i).to_vec(),
            reference_liquid_id: ds.reference_liquid_ids[i].clone(),
            test_liquid_id: ds.test_liquid_ids[i].clone(),
        };
        match series.iter_mut().find(|s| &s.name == acid) {
            Some(s) => s.points.push((molar.log10(), fv)),
            None => series.push(AcidSeries {
                name: acid.clone(),
                points: vec![(molar.log10(), fv)],
            }),
        }
    }
    series.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(series)
}
