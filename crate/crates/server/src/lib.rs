//! HTTP/JSON front end for fault-injection campaigns.
//!
//! Campaigns are server-side sessions: create one for a network, grow its
//! rounds with `inject`, `then_inject` and `inject_complete`, then run it
//! over a dataset. CPU-bound work runs on the blocking pool.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/health` | | `ok` |
//! | POST | `/v1/golden` | [`api::GoldenRequest`] | [`api::GoldenResponse`] |
//! | POST | `/v1/campaigns` | [`api::CreateCampaign`] | [`api::CampaignCreated`] |
//! | POST | `/v1/campaigns/{id}/inject` | `Fault` | [`api::RoundCount`] |
//! | POST | `/v1/campaigns/{id}/then_inject` | `[Fault]` | [`api::RoundCount`] |
//! | POST | `/v1/campaigns/{id}/inject_complete` | [`api::InjectComplete`] | [`api::RoundCount`] |
//! | POST | `/v1/campaigns/{id}/eject` | | [`api::RoundCount`] |
//! | GET | `/v1/campaigns/{id}/rounds` | | `Preparation` |
//! | POST | `/v1/campaigns/{id}/run` | [`api::RunRequest`] | `CampaignResults` |
//! | DELETE | `/v1/campaigns/{id}` | | 204 |

pub mod api;

use std::collections::HashMap;
use std::future::Future;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use snnfi_core::campaign::{golden_run, Preparation};
use snnfi_core::{Campaign, CampaignError, CampaignResults, Fault};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use uuid::Uuid;

use api::{
    CampaignCreated, CreateCampaign, ErrorBody, GoldenRequest, GoldenResponse, InjectComplete, RoundCount, RunRequest,
};

/// Request bodies carry whole datasets.
const BODY_LIMIT: usize = 512 * 1024 * 1024;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no campaign with id {0}")]
    NotFound(Uuid),
    #[error("{0}")]
    Invalid(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self {
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(ErrorBody { error: self.to_string() })).into_response()
    }
}

type Sessions = Arc<Mutex<HashMap<Uuid, Campaign>>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Sessions,
}

impl AppState {
    fn with_campaign<T>(&self, id: Uuid, f: impl FnOnce(&mut Campaign) -> T) -> Result<T, ApiError> {
        let mut sessions = self.sessions.lock().map_err(|_| ApiError::Internal("session lock poisoned".into()))?;
        sessions.get_mut(&id).map(f).ok_or(ApiError::NotFound(id))
    }
}

pub fn router() -> Router {
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/v1/golden", post(golden))
        .route("/v1/campaigns", post(create))
        .route("/v1/campaigns/{id}", axum::routing::delete(remove))
        .route("/v1/campaigns/{id}/inject", post(inject))
        .route("/v1/campaigns/{id}/then_inject", post(then_inject))
        .route("/v1/campaigns/{id}/inject_complete", post(inject_complete))
        .route("/v1/campaigns/{id}/eject", post(eject))
        .route("/v1/campaigns/{id}/rounds", get(rounds))
        .route("/v1/campaigns/{id}/run", post(run))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(AppState::default())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn golden(Json(req): Json<GoldenRequest>) -> Result<Json<GoldenResponse>, ApiError> {
    blocking(move || {
        req.network.validate().map_err(|e| ApiError::Invalid(e.to_string()))?;
        if req.dataset.is_empty() {
            return Err(CampaignError::EmptyDataset.into());
        }
        let cache = golden_run(&req.network, &req.dataset, req.parallel)?;
        Ok(Json(GoldenResponse {
            accuracy: cache.accuracy(),
            labels: req.dataset.iter().map(|s| s.label).collect(),
            layer_evaluations: (req.dataset.len() * req.network.len()) as u64,
            predictions: cache.predictions,
        }))
    })
    .await
}

async fn create(
    State(state): State<AppState>,
    Json(req): Json<CreateCampaign>,
) -> Result<(StatusCode, Json<CampaignCreated>), ApiError> {
    req.network.validate().map_err(|e| ApiError::Invalid(e.to_string()))?;
    req.options.validate()?;
    let id = Uuid::new_v4();
    let campaign = Campaign::new(Arc::new(req.network), req.options);
    state
        .sessions
        .lock()
        .map_err(|_| ApiError::Internal("session lock poisoned".into()))?
        .insert(id, campaign);
    tracing::info!(%id, "campaign created");
    Ok((StatusCode::CREATED, Json(CampaignCreated { id })))
}

async fn remove(State(state): State<AppState>, Path(id): Path<Uuid>) -> Result<StatusCode, ApiError> {
    let removed = state
        .sessions
        .lock()
        .map_err(|_| ApiError::Internal("session lock poisoned".into()))?
        .remove(&id);
    removed.map(|_| StatusCode::NO_CONTENT).ok_or(ApiError::NotFound(id))
}

fn count(c: &Campaign, before: usize) -> Json<RoundCount> {
    Json(RoundCount { rounds: c.rounds().len(), added: c.rounds().len().saturating_sub(before) })
}

async fn inject(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    Json(fault): Json<Fault>,
) -> Result<Json<RoundCount>, ApiError> {
    state.with_campaign(id, |c| {
        let before = c.rounds().len();
        c.inject(fault);
        count(c, before)
    })
}

async fn then_inject(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    Json(faults): Json<Vec<Fault>>,
) -> Result<Json<RoundCount>, ApiError> {
    state.with_campaign(id, |c| {
        let before = c.rounds().len();
        c.then_inject(faults);
        count(c, before)
    })
}

async fn inject_complete(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    Json(req): Json<InjectComplete>,
) -> Result<Json<RoundCount>, ApiError> {
    state.with_campaign(id, |c| {
        let added = c.inject_complete(req.model, req.layer);
        Json(RoundCount { rounds: c.rounds().len(), added })
    })
}

async fn eject(State(state): State<AppState>, Path(id): Path<Uuid>) -> Result<Json<RoundCount>, ApiError> {
    state.with_campaign(id, |c| {
        c.eject();
        Json(RoundCount { rounds: 0, added: 0 })
    })
}

async fn rounds(State(state): State<AppState>, Path(id): Path<Uuid>) -> Result<Json<Preparation>, ApiError> {
    let campaign = state.with_campaign(id, |c| c.clone())?;
    blocking(move || Ok(Json(campaign.prepare()))).await
}

async fn run(
    State(state): State<AppState>,
    Path(id): Path<Uuid>,
    Json(req): Json<RunRequest>,
) -> Result<Json<CampaignResults>, ApiError> {
    let campaign = state.with_campaign(id, |c| c.clone())?;
    tracing::info!(%id, rounds = campaign.rounds().len(), samples = req.dataset.len(), "running campaign");
    blocking(move || Ok(Json(campaign.run(&req.dataset)?))).await
}

/// Serves until `shutdown` resolves.
pub async fn serve(listener: TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
    axum::serve(listener, router()).with_graceful_shutdown(shutdown).await
}

/// Starts a server on an ephemeral loopback port; it lives as long as the runtime.
pub async fn spawn_ephemeral() -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(("127.0.0.1", 0)).await?;
    let addr = listener.local_addr()?;
    let handle = tokio::spawn(serve(listener, std::future::pending()));
    Ok((addr, handle))
}
