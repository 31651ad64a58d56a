//! JSON HTTP API under `/api/v1`, backed by a shared read-only [`Engine`].

use std::collections::{BTreeSet, HashMap};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

use crate::engine::{ChangeRequest, ContributionQuery, ContributionView, Engine, DEFAULT_PAGE_SIZE};
use crate::error::Error;
use crate::model::RiskScore;

pub const DEFAULT_PORT: u16 = 8090;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Allowed browser origin. Any origin is allowed when unset.
    pub cors_origin: Option<String>,
    /// Built UI assets, served at `/` when the directory exists.
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
            detail: None,
        }
    }

    fn bad_query(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_QUERY", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::CaseNotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "CASE_NOT_FOUND", message),
            Error::FeatureDisabled(_) => ApiError::new(StatusCode::NOT_FOUND, "FEATURE_DISABLED", message),
            Error::LimitExceeded { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "TOO_MANY_CHANGES", message),
            Error::InvalidChange(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "INVALID_CHANGE", message),
            Error::InvalidInput(_) => ApiError::bad_query(message),
            other => ApiError {
                detail: Some(other.code().to_string()),
                ..ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;
type Params = Query<HashMap<String, String>>;

fn parse_param<T: FromStr>(params: &HashMap<String, String>, key: &str) -> Result<Option<T>, ApiError> {
    params
        .get(key)
        .filter(|v| !v.is_empty())
        .map(|v| {
            v.parse()
                .map_err(|_| ApiError::bad_query(format!("invalid value `{v}` for `{key}`")))
        })
        .transpose()
}

fn list_param(params: &HashMap<String, String>, key: &str) -> Vec<String> {
    params
        .get(key)
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect()
        })
        .unwrap_or_default()
}

async fn list_cases(State(engine): State<Arc<Engine>>, Query(p): Params) -> ApiResult<crate::engine::CaseListPayload> {
    let offset = parse_param(&p, "offset")?.unwrap_or(0);
    let limit = parse_param(&p, "limit")?.unwrap_or(DEFAULT_PAGE_SIZE);
    Ok(Json(engine.case_list(offset, limit)?))
}

async fn case_detail(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<crate::engine::CaseDetail> {
    Ok(Json(engine.case_detail(&id)?))
}

async fn contributions(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<crate::engine::ContributionsPayload> {
    engine.case(&id)?;
    let view = match p.get("view").map(String::as_str) {
        None | Some("") => ContributionView::Top,
        Some(v) => v.parse().map_err(|e: Error| ApiError::bad_query(e.to_string()))?,
    };
    let q = ContributionQuery {
        view,
        top_k: parse_param(&p, "top")?,
        query: p.get("query").cloned().unwrap_or_default(),
        categories: list_param(&p, "categories").into_iter().collect::<BTreeSet<_>>(),
    };
    Ok(Json(engine.contributions(&id, &q)?))
}

async fn whatif(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    body: Result<Json<ChangeRequest>, JsonRejection>,
) -> ApiResult<crate::whatif::WhatIfResult> {
    engine.case(&id)?;
    let Json(req) = body.map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text()))?;
    Ok(Json(engine.whatif(&id, &req.changes)?))
}

async fn flips(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult<crate::whatif::FlipTable> {
    Ok(Json(engine.flips(&id)?))
}

async fn model_info(State(engine): State<Arc<Engine>>) -> Json<crate::engine::ModelInfo> {
    Json(engine.model_info())
}

async fn importance(State(engine): State<Arc<Engine>>) -> Json<crate::explain::ImportanceReport> {
    Json(engine.importance().clone())
}

async fn distributions(
    State(engine): State<Arc<Engine>>,
    Path(score): Path<String>,
    Query(p): Params,
) -> ApiResult<crate::distributions::DistributionBundle> {
    let score = score
        .parse::<u8>()
        .ok()
        .and_then(|s| RiskScore::new(s).ok())
        .ok_or_else(|| {
            ApiError::new(
                StatusCode::BAD_REQUEST,
                "SCORE_OUT_OF_RANGE",
                format!("score must be an integer in {}..={}, got `{score}`", RiskScore::MIN, RiskScore::MAX),
            )
        })?;
    let only = list_param(&p, "factors");
    let only = (!only.is_empty()).then_some(only.as_slice());
    Ok(Json(engine.distributions(score, only)?))
}

async fn similar(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(p): Params,
) -> ApiResult<crate::neighbors::NeighborResult> {
    if !engine.review_mode() {
        return Err(Error::FeatureDisabled("similar cases (review mode is off)".into()).into());
    }
    engine.case(&id)?;
    Ok(Json(engine.similar(&id, parse_param(&p, "k")?)?))
}

async fn api_not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "NOT_FOUND", "no such endpoint")
}

fn cors(origin: Option<&str>) -> CorsLayer {
    let allow = match origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        Some(v) => AllowOrigin::exact(v),
        None => AllowOrigin::any(),
    };
    CorsLayer::new()
        .allow_origin(allow)
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([axum::http::header::CONTENT_TYPE])
}

pub fn router(engine: Arc<Engine>, config: &ServiceConfig) -> Router {
    let api = Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(case_detail))
        .route("/cases/{id}/contributions", get(contributions))
        .route("/cases/{id}/whatif", post(whatif))
        .route("/cases/{id}/flips", get(flips))
        .route("/cases/{id}/similar", get(similar))
        .route("/model", get(model_info))
        .route("/importance", get(importance))
        .route("/distributions/{score}", get(distributions))
        .fallback(api_not_found)
        .with_state(engine);
    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = config.static_dir.as_ref().filter(|d| d.is_dir()) {
        app = app.fallback_service(ServeDir::new(dir));
    }
    app.layer(cors(config.cors_origin.as_deref()))
}

/// Serves until Ctrl-C. Logs the bound address, which matters when the
/// requested port is 0.
pub async fn serve(engine: Arc<Engine>, addr: SocketAddr, config: ServiceConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tracing::info!(%local, "listening");
    println!("listening on http://{local}");
    axum::serve(listener, router(engine, &config))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
