//! Fixtures shared by the CLI, service and acceptance tests.
#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::Arc;

use etongue_cli::service::{router, AppState};
use etongue_core::classifiers::ModelKind;
use etongue_core::features::extract_features;
use etongue_core::pipeline_io::bundle_to_string;
use etongue_core::scenarios::Scenario;
use etongue_core::{fit_pipeline, Acquisition, LabeledDataset, PipelineConfig, TrainedPipeline, TransientRecording};

pub const TIMESTAMP: &str = "2024-05-01T12:00:00Z";

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_etongue"));
    c.env_remove("SOURCE_DATE_EPOCH").env_remove("ETONGUE_BIND").env("RUST_LOG", "error");
    c
}

pub fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Dataset of `repeats` recordings per test liquid, built in memory.
pub fn dataset(sc: &Scenario, repeats: usize, seed: u64) -> LabeledDataset {
    let recs = sc.generate(repeats, true, &Acquisition::default(), seed).unwrap();
    let vectors: Vec<_> = recs.iter().map(|r| extract_features(r).unwrap()).collect();
    let ids = recs.iter().map(|r| r.test_liquid_id.clone()).collect();
    LabeledDataset::from_features(&vectors, ids, sc.label_maps()).unwrap()
}

pub fn train(sc: &Scenario, task: &str, kind: ModelKind, seed: u64) -> TrainedPipeline {
    let ds = dataset(sc, 4, seed);
    let config = PipelineConfig { seed, ..Default::default() };
    fit_pipeline(&ds.task(task).unwrap(), kind, &config).unwrap().stamped(TIMESTAMP)
}

pub fn bundle_text(p: &TrainedPipeline) -> String {
    bundle_to_string(p).unwrap()
}

/// One fresh recording per test liquid.
pub fn probes(sc: &Scenario, seed: u64) -> Vec<TransientRecording> {
    sc.generate(1, false, &Acquisition::default(), seed).unwrap()
}

/// Starts the service on an ephemeral port.
pub async fn start(state: Arc<AppState>) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    addr
}
