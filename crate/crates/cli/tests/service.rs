mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use etongue_cli::service::{AppState, ModelInfo, PredictResponse, RecordingPayload};
use etongue_core::classifiers::ModelKind;
use etongue_core::pipeline_io::{bundle_from_str, write_recording};
use etongue_core::scenarios::{juices, wines};
use etongue_core::{Matrix, TransientRecording};
use reqwest::StatusCode;
use tempfile::TempDir;

use common::*;

fn juice_bundle() -> String {
    bundle_text(&train(&juices(0.3, 11), "juice_type", ModelKind::Lda, 1))
}

fn wine_bundle() -> String {
    bundle_text(&train(&wines(0.3, 12), "wine", ModelKind::BaggedTrees { n_trees: 15 }, 2))
}

fn client() -> reqwest::Client {
    reqwest::Client::new()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn endpoints_report_503_until_a_bundle_is_put() {
    let addr = start(Arc::new(AppState::new())).await;
    let rec = &probes(&juices(0.3, 11), 5)[0];
    let c = client();
    let r = c.get(format!("http://{addr}/model")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);
    let r = c
        .post(format!("http://{addr}/predict"))
        .json(&RecordingPayload::from_recording(rec))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::SERVICE_UNAVAILABLE);

    let r = c.put(format!("http://{addr}/model")).body(juice_bundle()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let info: ModelInfo = r.json().await.unwrap();
    assert_eq!(info.task_name, "juice_type");
    assert_eq!(info.generation, 1);
    assert_eq!(info.training_fingerprint.timestamp, TIMESTAMP);
    let r = c
        .post(format!("http://{addr}/predict"))
        .json(&RecordingPayload::from_recording(rec))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn malformed_requests_are_400_and_incompatible_bundles_409() {
    let text = juice_bundle();
    let addr = start(Arc::new(AppState::with_bundle(&text).unwrap())).await;
    let c = client();
    let post = |body: String| {
        let c = c.clone();
        async move {
            c.post(format!("http://{addr}/predict"))
                .header("content-type", "application/json")
                .body(body)
                .send()
                .await
                .unwrap()
        }
    };

    assert_eq!(post("{not json".into()).await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(post("{}".into()).await.status(), StatusCode::BAD_REQUEST);

    let three = TransientRecording {
        sample_rate_hz: 10.0,
        transition_index: 1,
        voltages_mv: Matrix::zeros(3, 15),
        reference_liquid_id: String::new(),
        test_liquid_id: String::new(),
    };
    let r = post(serde_json::to_string(&RecordingPayload::from_recording(&three)).unwrap()).await;
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);
    let body: serde_json::Value = r.json().await.unwrap();
    assert!(body["error"].as_str().unwrap().contains("recording"), "{body}");

    let mut ragged = RecordingPayload::from_recording(&probes(&juices(0.3, 11), 1)[0]);
    ragged.voltages_mv[7].pop();
    assert_eq!(post(serde_json::to_string(&ragged).unwrap()).await.status(), StatusCode::BAD_REQUEST);

    let mut doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    doc["schema_version"] = 999.into();
    let r = c.put(format!("http://{addr}/model")).body(doc.to_string()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    let r = c.put(format!("http://{addr}/model")).body(text[..text.len() / 2].to_string()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::BAD_REQUEST);

    // the rejected uploads left the original bundle in place
    let info: ModelInfo = c.get(format!("http://{addr}/model")).send().await.unwrap().json().await.unwrap();
    assert_eq!(info.task_name, "juice_type");
    assert_eq!(info.generation, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn service_agrees_with_the_offline_cli() {
    let dir = TempDir::new().unwrap();
    let text = juice_bundle();
    let bundle = dir.path().join("juice.etb.json");
    std::fs::write(&bundle, &text).unwrap();
    let addr = start(Arc::new(AppState::with_bundle(&text).unwrap())).await;
    let c = client();
    for (i, rec) in probes(&juices(0.3, 11), 77).iter().enumerate() {
        let csv = dir.path().join(format!("probe{i}.csv"));
        write_recording(rec, &csv).unwrap();
        let out = run(
            &["predict", "--bundle", bundle.to_str().unwrap(), "--recording", csv.to_str().unwrap()],
            dir.path(),
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let offline: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();

        let online: PredictResponse = c
            .post(format!("http://{addr}/predict"))
            .json(&RecordingPayload::from_recording(rec))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(offline["label"].as_str().unwrap(), online.label);
        let offline_scores: BTreeMap<String, f64> = serde_json::from_value(offline["scores"].clone()).unwrap();
        assert_eq!(offline_scores.len(), online.scores.len());
        for (k, v) in &offline_scores {
            assert_eq!(v.to_bits(), online.scores[k].to_bits(), "score {k}");
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn putting_a_wine_bundle_reconfigures_a_juice_service() {
    let juice = juice_bundle();
    let wine = wine_bundle();
    let addr = start(Arc::new(AppState::with_bundle(&juice).unwrap())).await;
    let c = client();
    let wine_probes = probes(&wines(0.3, 12), 9);

    let before: PredictResponse = c
        .post(format!("http://{addr}/predict"))
        .json(&RecordingPayload::from_recording(&wine_probes[0]))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let juice_labels = bundle_from_str(&juice).unwrap().label_map;
    assert!(juice_labels.contains(&before.label));

    let r = c.put(format!("http://{addr}/model")).body(wine.clone()).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let info: ModelInfo = r.json().await.unwrap();
    let wine_pipeline = bundle_from_str(&wine).unwrap();
    assert_eq!(info.label_map, wine_pipeline.label_map);
    assert_eq!(info.model_kind, "bagged_trees");

    let mut correct = 0;
    for rec in &wine_probes {
        let p: PredictResponse = c
            .post(format!("http://{addr}/predict"))
            .json(&RecordingPayload::from_recording(rec))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert!(wine_pipeline.label_map.contains(&p.label));
        assert_eq!(p.scores.keys().cloned().collect::<Vec<_>>(), wine_pipeline.label_map);
        assert_eq!(p.model.generation, 2);
        correct += usize::from(p.label == rec.test_liquid_id);
    }
    assert!(correct * 10 >= wine_probes.len() * 8, "{correct}/{}", wine_probes.len());
}
