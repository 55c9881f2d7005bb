//! HTTP inference service.
//!
//! | route          | purpose                                       |
//! |----------------|-----------------------------------------------|
//! | `POST /predict`| recording JSON → label, scores, model identity |
//! | `GET /model`   | metadata of the served bundle                 |
//! | `PUT /model`   | replace the served bundle (bundle JSON body)  |
//!
//! The served bundle sits behind a lock as an `Arc`. A request clones the
//! `Arc` once and works on that snapshot, so a swap never mixes two bundles
//! within one response and in-flight requests finish on the bundle they
//! started with.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use etongue_core::features::FEATURE_SPEC_ID;
use etongue_core::pipeline::TrainingFingerprint;
use etongue_core::pipeline_io::{verified_bundle, BUNDLE_SCHEMA_VERSION};
use etongue_core::{Error, Matrix, TrainedPipeline, TransientRecording};
use serde::{Deserialize, Serialize};

/// Environment variable that overrides the default bind address.
pub const BIND_ENV: &str = "ETONGUE_BIND";
pub const DEFAULT_BIND: &str = "127.0.0.1:8080";

/// Large enough for long recordings and KNN bundles that carry their
/// training scores.
const BODY_LIMIT: usize = 64 * 1024 * 1024;

/// A bundle as served: the pipeline plus the checksum it was verified
/// against and a load counter.
#[derive(Debug)]
pub struct ServedModel {
    pub pipeline: TrainedPipeline,
    pub checksum: String,
    pub generation: u64,
}

/// Why a bundle was not installed.
#[derive(Debug)]
pub enum InstallError {
    Bundle(Error),
    /// The bundle expects features this build does not compute.
    FeatureSpec { found: String },
}

impl std::fmt::Display for InstallError {
    fn fmt(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
        match self {
            InstallError::Bundle(e) => e.fmt(f),
            InstallError::FeatureSpec { found } => write!(
                f,
                "bundle features '{found}' differ from this service's '{FEATURE_SPEC_ID}'"
            ),
        }
    }
}

impl std::error::Error for InstallError {}

impl InstallError {
    fn status(&self) -> StatusCode {
        match self {
            InstallError::Bundle(e) => status_for(e),
            InstallError::FeatureSpec { .. } => StatusCode::CONFLICT,
        }
    }
}

#[derive(Debug, Default)]
pub struct AppState {
    model: RwLock<Option<Arc<ServedModel>>>,
    loads: AtomicU64,
}

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// State serving the bundle document `text`.
    pub fn with_bundle(text: &str) -> Result<Self, InstallError> {
        let state = Self::new();
        state.install(text)?;
        Ok(state)
    }

    pub fn current(&self) -> Option<Arc<ServedModel>> {
        self.model.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Verifies a bundle document and makes it the served model.
    pub fn install(&self, text: &str) -> Result<Arc<ServedModel>, InstallError> {
        let (pipeline, checksum) = verified_bundle(text).map_err(InstallError::Bundle)?;
        if pipeline.feature_spec_id != FEATURE_SPEC_ID {
            return Err(InstallError::FeatureSpec {
                found: pipeline.feature_spec_id,
            });
        }
        let served = Arc::new(ServedModel {
            pipeline,
            checksum,
            generation: self.loads.fetch_add(1, Ordering::SeqCst) + 1,
        });
        *self.model.write().unwrap_or_else(|e| e.into_inner()) = Some(served.clone());
        log::info!(
            "serving {} model for task '{}' (generation {}, {})",
            served.pipeline.model_kind,
            served.pipeline.task_name,
            served.generation,
            served.checksum
        );
        Ok(served)
    }
}

/// Recording as posted to `/predict`: the sidecar fields plus the voltage
/// rows (`[n_samples][15]`, mV).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingPayload {
    pub sample_rate_hz: f64,
    pub transition_index: usize,
    pub voltages_mv: Vec<Vec<f64>>,
    #[serde(default)]
    pub reference_liquid_id: String,
    #[serde(default)]
    pub test_liquid_id: String,
}

impl RecordingPayload {
    pub fn from_recording(rec: &TransientRecording) -> Self {
        RecordingPayload {
            sample_rate_hz: rec.sample_rate_hz,
            transition_index: rec.transition_index,
            voltages_mv: rec.voltages_mv.rows().map(<[f64]>::to_vec).collect(),
            reference_liquid_id: rec.reference_liquid_id.clone(),
            test_liquid_id: rec.test_liquid_id.clone(),
        }
    }

    pub fn into_recording(self) -> Result<TransientRecording, Error> {
        if self.voltages_mv.is_empty() {
            return Err(Error::Recording("recording has no samples".into()));
        }
        Ok(TransientRecording {
            sample_rate_hz: self.sample_rate_hz,
            transition_index: self.transition_index,
            voltages_mv: Matrix::from_rows(&self.voltages_mv)
                .map_err(|e| Error::Recording(e.to_string()))?,
            reference_liquid_id: self.reference_liquid_id,
            test_liquid_id: self.test_liquid_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRef {
    pub checksum: String,
    pub generation: u64,
    pub task_name: String,
    pub model_kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub label: String,
    pub scores: BTreeMap<String, f64>,
    pub model: ModelRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub checksum: String,
    pub schema_version: u32,
    pub generation: u64,
    pub feature_spec_id: String,
    pub task_name: String,
    pub model_kind: String,
    pub label_map: Vec<String>,
    pub n_components: usize,
    pub training_fingerprint: TrainingFingerprint,
}

impl ModelInfo {
    fn of(m: &ServedModel) -> Self {
        let p = &m.pipeline;
        ModelInfo {
            checksum: m.checksum.clone(),
            schema_version: BUNDLE_SCHEMA_VERSION,
            generation: m.generation,
            feature_spec_id: p.feature_spec_id.clone(),
            task_name: p.task_name.clone(),
            model_kind: p.model_kind.name().to_string(),
            label_map: p.label_map.clone(),
            n_components: p.pca.n_selected,
            training_fingerprint: p.training_fingerprint.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

fn no_model() -> ApiError {
    ApiError(StatusCode::SERVICE_UNAVAILABLE, "no model bundle is loaded".into())
}

fn status_for(e: &Error) -> StatusCode {
    match e {
        Error::Incompatible { .. } => StatusCode::CONFLICT,
        Error::Recording(_)
        | Error::Data(_)
        | Error::Argument(_)
        | Error::Validation(_)
        | Error::Integrity(_)
        | Error::Parse { .. } => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn predict(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<PredictResponse>, ApiError> {
    let model = state.current().ok_or_else(no_model)?;
    let payload: RecordingPayload = serde_json::from_slice(&body)
        .map_err(|e| ApiError(StatusCode::BAD_REQUEST, format!("malformed recording: {e}")))?;
    let rec = payload
        .into_recording()
        .map_err(|e| ApiError(status_for(&e), e.to_string()))?;
    let prediction = model
        .pipeline
        .predict_recording(&rec)
        .map_err(|e| ApiError(status_for(&e), e.to_string()))?;
    Ok(Json(PredictResponse {
        label: prediction.label,
        scores: prediction.scores,
        model: ModelRef {
            checksum: model.checksum.clone(),
            generation: model.generation,
            task_name: model.pipeline.task_name.clone(),
            model_kind: model.pipeline.model_kind.name().to_string(),
        },
    }))
}

async fn get_model(State(state): State<Arc<AppState>>) -> Result<Json<ModelInfo>, ApiError> {
    let model = state.current().ok_or_else(no_model)?;
    Ok(Json(ModelInfo::of(&model)))
}

async fn put_model(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<ModelInfo>, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError(StatusCode::BAD_REQUEST, "bundle is not UTF-8".into()))?;
    // verification and decoding are CPU work; keep them off the async workers
    let text = text.to_owned();
    let installed = tokio::task::spawn_blocking(move || state.install(&text))
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    match installed {
        Ok(model) => Ok(Json(ModelInfo::of(&model))),
        Err(e) => Err(ApiError(e.status(), e.to_string())),
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/predict", post(predict))
        .route("/model", get(get_model).put(put_model))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state)
}

/// Bind address: the explicit flag, else `ETONGUE_BIND`, else the default.
pub fn bind_address(flag: Option<&str>) -> String {
    flag.map(str::to_owned)
        .or_else(|| std::env::var(BIND_ENV).ok().filter(|s| !s.is_empty()))
        .unwrap_or_else(|| DEFAULT_BIND.to_string())
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local: SocketAddr = listener.local_addr()?;
    log::info!("listening on http://{local}");
    eprintln!("listening on http://{local}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
