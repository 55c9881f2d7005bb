//! `etongue` command line: argument parsing, dispatch and exit codes.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use etongue_core::chemometrics::{fit_pca, fit_standardizer, sensitivity_slopes, series_from_dataset};
use etongue_core::classifiers::ModelKind;
use etongue_core::evaluation::{cross_validate, format_results_table, CvReport};
use etongue_core::features::{feature_index, FeatureKind, N_FEATURES};
use etongue_core::pipeline::derive_seed;
use etongue_core::pipeline_io::{
    bundle_to_string, load_bundle, load_dataset, read_recording, write_feature_csv, write_scores_csv,
};
use etongue_core::scenarios::{self, Scenario};
use etongue_core::{fit_pipeline, Acquisition, LabeledDataset, PipelineConfig, N_CHANNELS};
use serde_json::{json, Value};

use crate::config::{RunConfig, SchemeSpec};
use crate::service::{self, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "etongue", version, about = "Electronic-tongue signal processing and classification")]
pub struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// RunConfig JSON file; flags override its fields.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario and write recordings plus a manifest.
    Simulate(SimulateArgs),
    /// Extract the 75 transient features of every recording to CSV.
    Extract(ExtractArgs),
    /// Per-feature sensitivity slopes against log10 concentration.
    Sensitivity(SensitivityArgs),
    /// Standardize and fit PCA; report explained variance.
    Pca(PcaArgs),
    /// Fit a pipeline for one task and save it as a model bundle.
    Train(TrainArgs),
    /// Cross-validate models on tasks and print the results table.
    Evaluate(EvaluateArgs),
    /// Classify one recording with a bundle.
    Predict(PredictArgs),
    /// Run the HTTP inference service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioName {
    Acids,
    Juices,
    Wines,
    Aging,
    Separable,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub scenario: ScenarioName,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Recordings per test liquid.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Per-sample noise σ in mV.
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Separable scenario: number of classes.
    #[arg(long, default_value_t = 9)]
    pub classes: usize,
    /// Separable scenario: closest class distance in units of the noise σ.
    #[arg(long, default_value_t = 5.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 10.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 10.0)]
    pub transition: f64,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Feature CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Task whose labels name the acid of each sample.
    #[arg(long, default_value = "acid")]
    pub acid_task: String,
    /// Task whose labels give the molar concentration of each sample.
    #[arg(long, default_value = "concentration_m")]
    pub concentration_task: String,
    /// Writes the full 75-feature report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PcaArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub variance_target: Option<f64>,
    /// Labels the score rows with this task.
    #[arg(long)]
    pub task: Option<String>,
    /// Score CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variance_target: Option<f64>,
    /// Neighbours for KNN.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_trees: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub task: String,
    /// baseline | lda | knn | bagged_trees
    #[arg(long, default_value = "lda")]
    pub model: String,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Bundle path (`.etb.json`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training timestamp (RFC 3339) recorded in the bundle. Defaults to
    /// SOURCE_DATE_EPOCH when set, else the current time.
    #[arg(long)]
    pub timestamp: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Task to evaluate; repeat for several. Defaults to every task.
    #[arg(long)]
    pub task: Vec<String>,
    /// random<k> or loo.
    #[arg(long)]
    pub scheme: Option<SchemeSpec>,
    /// Comma-separated models; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    #[command(flatten)]
    pub model_args: ModelArgs,
    /// Directory for reports.json, table.md and table.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Recording CSV (with its JSON sidecar).
    #[arg(long)]
    pub recording: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Bundle to serve at start-up; without one the service answers 503
    /// until a bundle is PUT.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Overrides ETONGUE_BIND and the default 127.0.0.1:8080.
    #[arg(long)]
    pub bind: Option<String>,
}

/// An error that maps to the usage exit code.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Result of a subcommand: the JSON document and its human-readable form.
pub struct Output {
    pub json: Value,
    pub text: String,
}

/// Parses `argv` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(rendered.as_bytes())
            } else {
                stdout.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let body = if cli.json || matches!(cli.command, Command::Predict(_)) {
                serde_json::to_string_pretty(&out.json).expect("JSON value serializes") + "\n"
            } else {
                out.text
            };
            let _ = stdout.write_all(body.as_bytes());
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn execute(cli: &Cli) -> anyhow::Result<Output> {
    let config = match &cli.config {
        Some(p) => RunConfig::read(p).map_err(|e| usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    match &cli.command {
        Command::Simulate(a) => simulate(a, &config),
        Command::Extract(a) => extract(a, &config),
        Command::Sensitivity(a) => sensitivity(a, &config),
        Command::Pca(a) => pca(a, &config),
        Command::Train(a) => train(a, &config),
        Command::Evaluate(a) => evaluate(a, &config),
        Command::Predict(a) => predict(a, &config),
        Command::Serve(a) => serve(a, &config),
    }
}

fn required_path(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, name: &str) -> anyhow::Result<PathBuf> {
    flag.clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| usage(format!("--{name} is required (or set '{name}' in the config file)")))
}

fn required_seed(flag: Option<u64>, config: &RunConfig, why: &str) -> anyhow::Result<u64> {
    flag.or(config.seed)
        .ok_or_else(|| usage(format!("--seed is required: {why}")))
}

fn load(manifest: &Path) -> anyhow::Result<LabeledDataset> {
    load_dataset(manifest).with_context(|| format!("loading dataset from {}", manifest.display()))
}

/// Applies per-command model flags on top of the config.
fn merged(args: &ModelArgs, config: &RunConfig) -> anyhow::Result<RunConfig> {
    let mut c = config.clone();
    if let Some(v) = args.variance_target {
        c.variance_target = v;
    }
    if let Some(k) = args.k {
        c.k_for_knn = k;
    }
    if let Some(n) = args.n_trees {
        c.n_trees = n;
    }
    if let Some(s) = args.seed {
        c.seed = Some(s);
    }
    c.validate().map_err(|e| usage(e.to_string()))?;
    Ok(c)
}

fn scenario(a: &SimulateArgs, seed: u64) -> anyhow::Result<Scenario> {
    Ok(match a.scenario {
        ScenarioName::Acids => scenarios::acids(a.noise, seed),
        ScenarioName::Juices => scenarios::juices(a.noise, seed),
        ScenarioName::Wines => scenarios::wines(a.noise, seed),
        ScenarioName::Aging => scenarios::aging(a.noise, seed),
        ScenarioName::Separable => scenarios::separable_task(a.classes, a.separation, a.noise, seed)?,
    })
}

fn simulate(a: &SimulateArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let seed = required_seed(a.seed, config, "simulation draws noise")?;
    let out = required_path(&a.out, &config.out, "out")?;
    if a.repeats == 0 {
        return Err(usage("--repeats must be >= 1"));
    }
    if !(a.noise >= 0.0) {
        return Err(usage("--noise must be >= 0"));
    }
    let acq = Acquisition {
        duration_s: a.duration,
        sample_rate_hz: a.sample_rate,
        transition_s: a.transition,
    };
    let sc = scenario(a, seed)?;
    let manifest = sc.write_to(&out, a.repeats, &acq, derive_seed(seed, 1))?;
    let tasks: Vec<&String> = manifest.tasks.keys().collect();
    let json = json!({
        "scenario": sc.name,
        "out": out,
        "manifest": out.join("manifest.json"),
        "n_recordings": manifest.recordings.len(),
        "tasks": tasks,
        "seed": seed,
    });
    let text = format!(
        "wrote {} recordings of scenario '{}' to {} (tasks: {})\n",
        manifest.recordings.len(),
        sc.name,
        out.display(),
        tasks.iter().map(|t| t.as_str()).collect::<Vec<_>>().join(", ")
    );
    Ok(Output { json, text })
}

fn extract(a: &ExtractArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let manifest = required_path(&a.manifest, &config.manifest, "manifest")?;
    let out = required_path(&a.out, &config.out, "out")?;
    let ds = load(&manifest)?;
    write_feature_csv(&ds, &out)?;
    let json = json!({
        "n_recordings": ds.len(),
        "n_features": N_FEATURES,
        "out": out,
        "dataset_hash": ds.fingerprint(),
    });
    let text = format!("wrote {} × {N_FEATURES} features to {}\n", ds.len(), out.display());
    Ok(Output { json, text })
}

fn sensitivity(a: &SensitivityArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let manifest = required_path(&a.manifest, &config.manifest, "manifest")?;
    let ds = load(&manifest)?;
    let series = series_from_dataset(&ds, &a.acid_task, &a.concentration_task)?;
    let report = sensitivity_slopes(&series)?;
    if let Some(out) = &a.out {
        let text = serde_json::to_string_pretty(&report)? + "\n";
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    // the steady-state shift is the potentiometric response; show it per channel
    let f0: Vec<usize> = (0..N_CHANNELS)
        .map(|ch| feature_index(ch, FeatureKind::SteadyStateShift))
        .collect();
    let mut text = format!("steady-state shift slope, mV/decade (R²)\n{:<8}", "channel");
    for acid in &report.acids {
        text.push_str(&format!("{acid:>20}"));
    }
    text.push('\n');
    for (ch, &f) in f0.iter().enumerate() {
        text.push_str(&format!("ch{:02}    ", ch + 1));
        for a in 0..report.acids.len() {
            let cell = format!("{:+.3} ({:.4})", report.slope(f, a), report.r2(f, a));
            text.push_str(&format!("{cell:>20}"));
        }
        text.push('\n');
    }
    Ok(Output {
        json: serde_json::to_value(&report)?,
        text,
    })
}

fn pca(a: &PcaArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let manifest = required_path(&a.manifest, &config.manifest, "manifest")?;
    let target = a.variance_target.unwrap_or(config.variance_target);
    if !(target > 0.0 && target <= 1.0) {
        return Err(usage(format!("variance target must be in (0, 1], got {target}")));
    }
    let ds = load(&manifest)?;
    let z = fit_standardizer(&ds.features)?.apply(&ds.features)?;
    let model = fit_pca(&z, target)?;
    if let Some(out) = &a.out {
        let labels = match &a.task {
            Some(t) => {
                let task = ds.task(t)?;
                task.labels.iter().map(|&l| task.label_names[l].clone()).collect()
            }
            None => ds.test_liquid_ids.clone(),
        };
        write_scores_csv(&model.project(&z)?, &ds.sample_ids, &labels, out)?;
    }
    let m = model.n_selected;
    let json = json!({
        "n_recordings": ds.len(),
        "variance_target": target,
        "n_selected": m,
        "explained_variance_ratio": model.explained_variance_ratio,
        "cumulative_ratio": model.cumulative_ratio(m),
    });
    let mut text = format!(
        "{m} components explain {:.2}% of the variance (target {:.0}%)\n",
        100.0 * model.cumulative_ratio(m),
        100.0 * target
    );
    for (i, r) in model.selected_ratios().iter().enumerate() {
        text.push_str(&format!("  PC{}: {:.2}%\n", i + 1, 100.0 * r));
    }
    Ok(Output { json, text })
}

/// RFC 3339 training time: the flag, else SOURCE_DATE_EPOCH, else now.
pub fn resolve_timestamp(flag: Option<&str>) -> anyhow::Result<String> {
    if let Some(t) = flag {
        chrono::DateTime::parse_from_rfc3339(t).map_err(|e| usage(format!("--timestamp '{t}': {e}")))?;
        return Ok(t.to_string());
    }
    if let Ok(epoch) = std::env::var("SOURCE_DATE_EPOCH") {
        let secs: i64 = epoch
            .trim()
            .parse()
            .map_err(|_| usage(format!("SOURCE_DATE_EPOCH '{epoch}' is not an integer")))?;
        let t = chrono::DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| usage(format!("SOURCE_DATE_EPOCH {secs} is out of range")))?;
        return Ok(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
    }
    Ok(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

fn stochastic(kind: ModelKind) -> bool {
    matches!(kind, ModelKind::Baseline | ModelKind::BaggedTrees { .. })
}

fn train(a: &TrainArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let config = merged(&a.model_args, config)?;
    let manifest = required_path(&a.manifest, &config.manifest, "manifest")?;
    let out = required_path(&a.out, &config.out, "out")?;
    let kind = config.model(&a.model).map_err(|e| usage(e.to_string()))?;
    let seed = if stochastic(kind) {
        required_seed(config.seed, &config, &format!("{kind} training is randomized"))?
    } else {
        config.seed.unwrap_or(0)
    };
    let timestamp = resolve_timestamp(a.timestamp.as_deref())?;
    let ds = load(&manifest)?;
    let task = ds.task(&a.task).map_err(|e| usage(e.to_string()))?;
    let pipeline = fit_pipeline(
        &task,
        kind,
        &PipelineConfig {
            variance_target: config.variance_target,
            seed,
        },
    )?
    .stamped(timestamp);
    let text = bundle_to_string(&pipeline)?;
    std::fs::write(&out, &text).with_context(|| format!("writing {}", out.display()))?;
    let json = json!({
        "bundle": out,
        "task": pipeline.task_name,
        "model": kind.name(),
        "labels": pipeline.label_map,
        "n_components": pipeline.pca.n_selected,
        "training_fingerprint": pipeline.training_fingerprint,
    });
    let text = format!(
        "trained {} on task '{}' ({} rows, {} components, {} labels) → {}\n",
        kind.name(),
        pipeline.task_name,
        task.len(),
        pipeline.pca.n_selected,
        pipeline.label_map.len(),
        out.display()
    );
    Ok(Output { json, text })
}

fn evaluate(a: &EvaluateArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let mut config = merged(&a.model_args, config)?;
    if let Some(s) = a.scheme {
        config.scheme = s;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let manifest = required_path(&a.manifest, &config.manifest, "manifest")?;
    let seed = required_seed(config.seed, &config, "folds and the baseline are randomized")?;
    let models: Vec<ModelKind> = if a.models.is_empty() {
        config.models().to_vec()
    } else {
        a.models
            .iter()
            .map(|m| config.model(m).map_err(|e| usage(e.to_string())))
            .collect::<anyhow::Result<_>>()?
    };
    let ds = load(&manifest)?;
    let tasks: Vec<String> = if a.task.is_empty() {
        ds.task_names().into_iter().map(String::from).collect()
    } else {
        a.task.clone()
    };
    if tasks.is_empty() {
        return Err(anyhow!("the manifest declares no tasks"));
    }
    let scheme = config.fold_scheme(seed);
    let pipeline_config = PipelineConfig {
        variance_target: config.variance_target,
        seed,
    };
    let mut reports: Vec<CvReport> = Vec::new();
    for t in &tasks {
        let task = ds.task(t).map_err(|e| usage(e.to_string()))?;
        for &kind in &models {
            let report = cross_validate(&task, &scheme, kind, &pipeline_config)
                .with_context(|| format!("evaluating {kind} on task '{t}'"))?;
            reports.push(report);
        }
    }
    let table = format_results_table(&reports)?;
    let markdown = table.to_markdown();
    let csv = table.to_csv();
    if let Some(dir) = a.out.as_ref().or(config.out.as_ref()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let write = |name: &str, body: String| {
            let p = dir.join(name);
            std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
        };
        write("reports.json", serde_json::to_string_pretty(&reports)? + "\n")?;
        write("table.md", markdown.clone())?;
        write("table.csv", csv.clone())?;
    }

    let mut text = markdown.clone();
    text.push('\n');
    for r in &reports {
        text.push_str(&format!(
            "{} / {} [{}]: {} folds, mean {:.4}, SE {:.4}",
            r.task_name,
            r.model_name,
            r.scheme,
            r.n_folds(),
            r.mean_accuracy,
            r.standard_error
        ));
        if let Some(e) = r.expected_accuracy {
            text.push_str(&format!(", expected {e:.4}"));
        }
        if r.has_skipped_folds() {
            text.push_str(&format!(", {} fold(s) skipped", r.skipped_folds.len()));
        }
        text.push('\n');
    }
    let json = json!({
        "reports": reports,
        "table_markdown": markdown,
        "table_csv": csv,
    });
    Ok(Output { json, text })
}

fn predict(a: &PredictArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let bundle = required_path(&a.bundle, &config.bundle, "bundle")?;
    let pipeline = load_bundle(&bundle).with_context(|| format!("loading bundle {}", bundle.display()))?;
    let rec = read_recording(&a.recording)?;
    let prediction = pipeline.predict_recording(&rec)?;
    let json = serde_json::to_value(&prediction)?;
    Ok(Output {
        text: String::new(),
        json,
    })
}

fn serve(a: &ServeArgs, config: &RunConfig) -> anyhow::Result<Output> {
    let state = match a.bundle.as_ref().or(config.bundle.as_ref()) {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading bundle {}", p.display()))?;
            AppState::with_bundle(&text).with_context(|| format!("loading bundle {}", p.display()))?
        }
        None => AppState::new(),
    };
    let addr = service::bind_address(a.bind.as_deref());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(service::serve(Arc::new(state), &addr))?;
    Ok(Output {
        json: json!({ "stopped": true }),
        text: String::new(),
    })
}
