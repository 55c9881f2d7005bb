//! Cross-validation (random k-fold and leave-one-liquid-out), accuracy and
//! standard-error reporting, and the results table.
//!
//! Standard deviations of per-fold accuracies use the sample (n − 1)
//! convention; the standard error is that deviation over √(number of folds).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierModel, ModelKind};
use crate::dataset::TaskData;
use crate::error::{Error, Result};
use crate::pipeline::{derive_seed, fit_stages, PipelineConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FoldScheme {
    /// Unstratified shuffle split into `k` folds.
    RandomKFold { k: usize, seed: u64 },
    /// One fold per distinct sample id.
    LeaveOneLiquidOut,
}

impl FoldScheme {
    pub fn label(&self) -> String {
        match self {
            FoldScheme::RandomKFold { k, .. } => format!("random{k}"),
            FoldScheme::LeaveOneLiquidOut => "leave_one_liquid_out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// The liquid held out, for leave-one-liquid-out folds.
    pub held_out: Option<String>,
}

/// Splits rows into folds. Test sets are disjoint and cover every row.
pub fn make_folds(sample_ids: &[String], scheme: &FoldScheme) -> Result<Vec<Fold>> {
    let n = sample_ids.len();
    let complement = |test: &[usize]| -> Vec<usize> {
        let mut in_test = vec![false; n];
        test.iter().for_each(|&i| in_test[i] = true);
        (0..n).filter(|&i| !in_test[i]).collect()
    };
    match *scheme {
        FoldScheme::RandomKFold { k, seed } => {
            if k < 2 {
                return Err(Error::Argument(format!("k must be >= 2, got {k}")));
            }
            if n < k {
                return Err(Error::Argument(format!("{n} rows cannot fill {k} folds")));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let mut folds = Vec::with_capacity(k);
            let mut start = 0;
            for index in 0..k {
                let size = n / k + usize::from(index < n % k);
                let mut test = order[start..start + size].to_vec();
                test.sort_unstable();
                start += size;
                folds.push(Fold {
                    index,
                    train: complement(&test),
                    test,
                    held_out: None,
                });
            }
            Ok(folds)
        }
        FoldScheme::LeaveOneLiquidOut => {
            let mut liquids: Vec<&str> = Vec::new();
            for s in sample_ids {
                if !liquids.contains(&s.as_str()) {
                    liquids.push(s);
                }
            }
            if liquids.len() < 2 {
                return Err(Error::Argument(format!(
                    "leave-one-liquid-out needs >= 2 distinct sample ids, got {}",
                    liquids.len()
                )));
            }
            Ok(liquids
                .into_iter()
                .enumerate()
                .map(|(index, liquid)| {
                    let test: Vec<usize> = (0..n).filter(|&i| sample_ids[i] == liquid).collect();
                    Fold {
                        index,
                        train: complement(&test),
                        test,
                        held_out: Some(liquid.to_string()),
                    }
                })
                .collect())
        }
    }
}

/// Checks that no sample id appears on both sides of any fold. Returns the
/// offending `(fold, sample_id)` pairs.
pub fn audit_leakage(sample_ids: &[String], folds: &[Fold]) -> Vec<(usize, String)> {
    let mut leaks = Vec::new();
    for f in folds {
        let test_ids: std::collections::BTreeSet<&str> =
            f.test.iter().map(|&i| sample_ids[i].as_str()).collect();
        for &i in &f.train {
            if test_ids.contains(sample_ids[i].as_str()) {
                leaks.push((f.index, sample_ids[i].clone()));
            }
        }
    }
    leaks.sort();
    leaks.dedup();
    leaks
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

pub fn standard_error(values: &[f64]) -> f64 {
    sample_std(values) / (values.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub index: usize,
    pub held_out: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub n_components: usize,
    /// Baseline only: `Σ_c p_c·q_c` for this fold.
    pub expected_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub task_name: String,
    pub model_name: String,
    pub scheme: String,
    pub labels: Vec<String>,
    pub folds: Vec<FoldResult>,
    pub per_fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub standard_error: f64,
    /// `[true][predicted]`, pooled over evaluated folds.
    pub confusion_matrix: Vec<Vec<u32>>,
    pub skipped_folds: Vec<SkippedFold>,
    /// Baseline only: mean analytic expected accuracy over evaluated folds.
    pub expected_accuracy: Option<f64>,
}

impl CvReport {
    pub fn n_folds(&self) -> usize {
        self.per_fold_accuracy.len()
    }

    pub fn has_skipped_folds(&self) -> bool {
        !self.skipped_folds.is_empty()
    }

    pub fn n_tested(&self) -> u32 {
        self.confusion_matrix.iter().flatten().sum()
    }
}

enum FoldOutcome {
    Done(FoldResult, Vec<(usize, usize)>),
    Skipped(SkippedFold),
}

fn run_fold(task: &TaskData, fold: &Fold, kind: ModelKind, config: &PipelineConfig) -> Result<FoldOutcome> {
    let skip = |reason: String| {
        log::warn!("fold {} skipped: {reason}", fold.index);
        Ok(FoldOutcome::Skipped(SkippedFold {
            index: fold.index,
            reason,
        }))
    };
    if fold.train.is_empty() || fold.test.is_empty() {
        return skip("empty training or test set".into());
    }
    let y_train: Vec<usize> = fold.train.iter().map(|&i| task.labels[i]).collect();
    if kind.is_discriminative() {
        let mut classes = y_train.clone();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return skip(format!("training set holds a single class ({})", task.label_names[classes[0]]));
        }
    }

    let x_train = task.features.select_rows(&fold.train);
    let fold_seed = derive_seed(config.seed, fold.index as u64);
    let stages = match fit_stages(&x_train, &y_train, kind, config, fold_seed) {
        Ok(s) => s,
        Err(Error::InsufficientData(msg)) => return skip(msg),
        Err(e) => return Err(e),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(fold_seed, u64::MAX));
    let mut pairs = Vec::with_capacity(fold.test.len());
    for &i in &fold.test {
        let scores = stages.scores(task.features.row(i));
        let predicted = stages.classifier.predict(&scores, &mut rng);
        pairs.push((task.labels[i], predicted));
    }
    let n_correct = pairs.iter().filter(|(t, p)| t == p).count();
    let expected_accuracy = match &stages.classifier {
        ClassifierModel::Baseline(b) => {
            let y_test: Vec<usize> = fold.test.iter().map(|&i| task.labels[i]).collect();
            Some(b.expected_accuracy_on(&y_test))
        }
        _ => None,
    };
    Ok(FoldOutcome::Done(
        FoldResult {
            index: fold.index,
            held_out: fold.held_out.clone(),
            n_train: fold.train.len(),
            n_test: fold.test.len(),
            n_correct,
            accuracy: n_correct as f64 / fold.test.len() as f64,
            n_components: stages.pca.n_selected,
            expected_accuracy,
        },
        pairs,
    ))
}

/// Fits standardizer, PCA and classifier on each training fold and scores
/// the held-out fold. Folds run in parallel; the report does not depend on
/// scheduling.
pub fn cross_validate(
    task: &TaskData,
    scheme: &FoldScheme,
    kind: ModelKind,
    config: &PipelineConfig,
) -> Result<CvReport> {
    let folds = make_folds(&task.sample_ids, scheme)?;
    let outcomes: Vec<FoldOutcome> = folds
        .par_iter()
        .map(|f| run_fold(task, f, kind, config))
        .collect::<Result<_>>()?;

    let c = task.label_names.len();
    let mut confusion = vec![vec![0u32; c]; c];
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            FoldOutcome::Done(r, pairs) => {
                for (t, p) in pairs {
                    confusion[t][p] += 1;
                }
                results.push(r);
            }
            FoldOutcome::Skipped(s) => skipped.push(s),
        }
    }
    if results.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {} folds were skipped for model {kind} on task '{}'",
            skipped.len(),
            task.task_name
        )));
    }

    let per_fold_accuracy: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let expected: Vec<f64> = results.iter().filter_map(|r| r.expected_accuracy).collect();
    Ok(CvReport {
        task_name: task.task_name.clone(),
        model_name: kind.name().to_string(),
        scheme: scheme.label(),
        labels: task.label_names.clone(),
        mean_accuracy: mean(&per_fold_accuracy),
        standard_error: standard_error(&per_fold_accuracy),
        per_fold_accuracy,
        folds: results,
        confusion_matrix: confusion,
        skipped_folds: skipped,
        expected_accuracy: (!expected.is_empty()).then(|| mean(&expected)),
    })
}

/// Table columns, in order.
pub const TABLE_MODELS: [(&str, &str); 4] = [
    ("baseline", "Baseline"),
    ("lda", "LDA"),
    ("knn", "KNN"),
    ("bagged_trees", "Bag Trees"),
];

/// `mean±SE%` with one decimal.
pub fn format_cell(mean_accuracy: f64, standard_error: f64) -> String {
    format!("{:.1}±{:.1}%", mean_accuracy * 100.0, standard_error * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub task: String,
    /// One entry per [`TABLE_MODELS`] column.
    pub cells: Vec<Option<String>>,
    /// Column index of the most accurate non-baseline model.
    pub best: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<TableRow>,
}

/// Groups reports by task (first-appearance order) into a results table.
pub fn format_results_table(reports: &[CvReport]) -> Result<ResultsTable> {
    if reports.is_empty() {
        return Err(Error::Argument("no reports to tabulate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut by_task: BTreeMap<&str, Vec<&CvReport>> = BTreeMap::new();
    for r in reports {
        if r.per_fold_accuracy.is_empty() {
            return Err(Error::Argument(format!(
                "report for {} / {} has no fold accuracies",
                r.task_name, r.model_name
            )));
        }
        if !order.contains(&r.task_name.as_str()) {
            order.push(&r.task_name);
        }
        by_task.entry(&r.task_name).or_default().push(r);
    }

    let rows = order
        .into_iter()
        .map(|task| {
            let reps = &by_task[task];
            let mut cells = vec![None; TABLE_MODELS.len()];
            let mut best: Option<(usize, f64)> = None;
            for (col, (name, _)) in TABLE_MODELS.iter().enumerate() {
                if let Some(r) = reps.iter().find(|r| r.model_name == *name) {
                    cells[col] = Some(format_cell(r.mean_accuracy, r.standard_error));
                    if col > 0 && best.is_none_or(|(_, m)| r.mean_accuracy > m) {
                        best = Some((col, r.mean_accuracy));
                    }
                }
            }
            TableRow {
                task: task.to_string(),
                cells,
                best: best.map(|b| b.0),
            }
        })
        .collect();
    Ok(ResultsTable { rows })
}

impl ResultsTable {
    /// Markdown with the best model of each row in bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Data set |");
        for (_, title) in TABLE_MODELS {
            let _ = write!(out, " {title} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---|".repeat(TABLE_MODELS.len()));
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "| {} |", row.task);
            for (col, cell) in row.cells.iter().enumerate() {
                match cell {
                    Some(c) if row.best == Some(col) => {
                        let _ = write!(out, " **{c}** |");
                    }
                    Some(c) => {
                        let _ = write!(out, " {c} |");
                    }
                    None => out.push_str(" – |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["task"];
        header.extend(TABLE_MODELS.iter().map(|(n, _)| *n));
        header.push("best");
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.task.clone()];
            rec.extend(row.cells.iter().map(|c| c.clone().unwrap_or_default()));
            rec.push(row.best.map(|b| TABLE_MODELS[b].0.to_string()).unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}
