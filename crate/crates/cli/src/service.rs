//! HTTP facade over a loaded surrogate.
//!
//! | route              | body                              | reply                         |
//! |--------------------|-----------------------------------|-------------------------------|
//! | `GET /meta`        |                                   | dimension, names, domain, build summary |
//! | `GET /importance`  |                                   | global importance             |
//! | `GET /partition`   |                                   | leaf rectangles with R^2      |
//! | `POST /explain`    | `{"point": [...]}`                | local explanation             |
//! | `POST /whatif`     | `{"point": [...], "feature": j}`  | what-if curve and in-cell measurements |
//! | `POST /eval`       | `{"test_points": [[...]], ...}`   | evaluation report (needs a model) |
//!
//! Failures are `{"code": "...", "message": "..."}` with status 400 for bad
//! input, 404 for unknown routes, 409 when `/eval` has no model and 502
//! when the model fails.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gleams_core::blackbox::protocol::respond;
use gleams_core::blackbox::Model;
use gleams_core::eval::DEFAULT_GRID_SIZE;
use gleams_core::{
    evaluate_surrogate, explain_local, global_importance, whatif, BlackBox, BuildMeta, EvalConfig,
    EvalError, EvalReport, ExplainError, GlobalImportance, HyperRectangle, IntegrationMode,
    LocalExplanation, MeasurementSet, SurrogateTree, WhatIfCurve,
};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;

/// A loaded surrogate and an optional live model. The tree never changes
/// after construction; model calls are serialized.
pub struct SessionState {
    tree: SurrogateTree,
    model: Option<Mutex<BlackBox>>,
    /// Owning leaf index of every stored measurement point.
    measurement_leaves: Vec<usize>,
}

impl SessionState {
    pub fn new(tree: SurrogateTree, model: Option<BlackBox>) -> Self {
        let measurement_leaves = tree
            .measurements()
            .map(|m| {
                m.points
                    .iter()
                    .map(|p| tree.route_indexed(p).map(|(i, _)| i).unwrap_or(usize::MAX))
                    .collect()
            })
            .unwrap_or_default();
        Self {
            tree,
            model: model.map(Mutex::new),
            measurement_leaves,
        }
    }

    pub fn tree(&self) -> &SurrogateTree {
        &self.tree
    }

    /// Queries issued to the live model so far, if there is one.
    pub fn model_query_count(&self) -> Option<u64> {
        self.model
            .as_ref()
            .map(|m| m.lock().unwrap_or_else(|e| e.into_inner()).query_count())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.to_string(),
                message: message.into(),
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl From<ExplainError> for ApiError {
    fn from(e: ExplainError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => ApiError::new(StatusCode::BAD_GATEWAY, "adapter", m.to_string()),
            other => ApiError::bad_request(other.to_string()),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Shared = Arc<SessionState>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub d: usize,
    pub names: Option<Vec<String>>,
    pub domain: HyperRectangle,
    pub leaf_count: usize,
    pub build_meta: BuildMeta,
    pub build_timestamp: Option<String>,
    pub has_model: bool,
    pub has_measurements: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionLeaf {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub beta: Vec<f64>,
    /// `null` for leaves whose R^2 is undefined.
    pub r2: Option<f64>,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResponse {
    pub domain: HyperRectangle,
    pub leaves: Vec<PartitionLeaf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRequest {
    pub point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfRequest {
    pub point: Vec<f64>,
    pub feature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatIfResponse {
    #[serde(flatten)]
    pub curve: WhatIfCurve,
    /// Stored measurement points whose leaf is crossed by the curve.
    pub measurements: MeasurementSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub test_points: Vec<Vec<f64>>,
    #[serde(default = "default_mode")]
    pub integration_mode: IntegrationMode,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default)]
    pub true_features: Option<Vec<usize>>,
}

fn default_mode() -> IntegrationMode {
    IntegrationMode::Both
}

fn default_grid() -> usize {
    DEFAULT_GRID_SIZE
}

async fn meta(State(s): State<Shared>) -> Json<MetaResponse> {
    let t = &s.tree;
    Json(MetaResponse {
        d: t.dim(),
        names: t.names().map(<[String]>::to_vec),
        domain: t.domain().clone(),
        leaf_count: t.meta().leaf_count,
        build_meta: t.meta().clone(),
        build_timestamp: t.build_timestamp().map(str::to_string),
        has_model: s.model.is_some(),
        has_measurements: t.measurements().is_some(),
    })
}

async fn importance(State(s): State<Shared>) -> Json<GlobalImportance> {
    Json(global_importance(&s.tree))
}

async fn partition(State(s): State<Shared>) -> Json<PartitionResponse> {
    Json(PartitionResponse {
        domain: s.tree.domain().clone(),
        leaves: s
            .tree
            .leaves()
            .into_iter()
            .map(|l| PartitionLeaf {
                lower: l.rect.lower().to_vec(),
                upper: l.rect.upper().to_vec(),
                beta: l.model.beta.clone(),
                r2: l.model.r2.is_finite().then_some(l.model.r2),
                n: l.model.n,
            })
            .collect(),
    })
}

async fn explain(
    State(s): State<Shared>,
    body: Result<Json<PointRequest>, JsonRejection>,
) -> ApiResult<LocalExplanation> {
    let Json(req) = body?;
    Ok(Json(explain_local(&s.tree, &req.point)?))
}

async fn whatif_handler(
    State(s): State<Shared>,
    body: Result<Json<WhatIfRequest>, JsonRejection>,
) -> ApiResult<WhatIfResponse> {
    let Json(req) = body?;
    let curve = whatif(&s.tree, &req.point, req.feature)?;
    let mut crossed = BTreeSet::new();
    for seg in &curve.segments {
        let mut q = curve.anchor.clone();
        q[curve.feature] = 0.5 * (seg.x_start + seg.x_end);
        let (idx, _) = s.tree.route_indexed(&q).map_err(ExplainError::from)?;
        crossed.insert(idx);
    }
    let mut measurements = MeasurementSet {
        points: Vec::new(),
        values: Vec::new(),
    };
    if let Some(m) = s.tree.measurements() {
        for (i, leaf) in s.measurement_leaves.iter().enumerate() {
            if crossed.contains(leaf) {
                measurements.points.push(m.points[i].clone());
                measurements.values.push(m.values[i]);
            }
        }
    }
    Ok(Json(WhatIfResponse {
        curve,
        measurements,
    }))
}

async fn eval(
    State(s): State<Shared>,
    body: Result<Json<EvalRequest>, JsonRejection>,
) -> ApiResult<EvalReport> {
    let Json(req) = body?;
    if s.model.is_none() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "no_model",
            "POST /eval needs the service to be started with --model",
        ));
    }
    let report = tokio::task::spawn_blocking(move || {
        let model = s
            .model
            .as_ref()
            .expect("checked above")
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        let config = EvalConfig {
            integration_mode: req.integration_mode,
            grid_size: req.grid_size,
            true_features: req.true_features,
        };
        evaluate_surrogate(&s.tree, &model, &req.test_points, &config)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(report))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "unknown route")
}

/// The API routes without CORS or static files.
pub fn router(state: Shared) -> Router {
    Router::new()
        .route("/meta", get(meta))
        .route("/importance", get(importance))
        .route("/partition", get(partition))
        .route("/explain", post(explain))
        .route("/whatif", post(whatif_handler))
        .route("/eval", post(eval))
        .fallback(not_found)
        .with_state(state)
}

/// The full application: API, permissive CORS and an optional static UI
/// under `/ui`.
pub fn app(state: Shared, ui_dir: Option<&Path>) -> Router {
    let mut app = router(state);
    if let Some(dir) = ui_dir {
        app = app.nest_service("/ui", ServeDir::new(dir));
    }
    app.layer(CorsLayer::permissive())
}

/// `POST /predict` answering the line protocol for `model`.
pub fn predict_app(model: Arc<dyn Model>) -> Router {
    Router::new()
        .route(
            "/predict",
            post(|State(m): State<Arc<dyn Model>>, body: String| async move {
                let reply = tokio::task::spawn_blocking(move || respond(m.as_ref(), &body))
                    .await
                    .unwrap_or_else(|_| r#"{"id":null,"error":"internal"}"#.to_string());
                (
                    [(axum::http::header::CONTENT_TYPE, "application/json")],
                    reply,
                )
            }),
        )
        .with_state(model)
}
