//! HTTP API over budgeting sessions.
//!
//! Mutating requests on one session are serialized by a per-session write
//! lock; distinct sessions proceed concurrently. With a store directory,
//! every change is written to disk before the response is sent, so a
//! finalized budget spend survives a crash.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use budgeter_core::budget::{BudgetWarning, ParamVerdict, StatisticId};
use budgeter_core::data::{load_codebook, load_csv, DataError};
use budgeter_core::session::{NewStatistic, ParamsRequest, ReleaseDocument, Session, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::RwLock;
use uuid::Uuid;

use crate::view::SessionView;
use crate::NoiseMode;

type Shared = Arc<RwLock<Session>>;

pub struct AppState {
    sessions: RwLock<HashMap<Uuid, Shared>>,
    store: Option<PathBuf>,
    noise: NoiseMode,
}

impl AppState {
    pub fn new(store: Option<PathBuf>, noise: NoiseMode) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            store,
            noise,
        }
    }

    /// Loads every `*.json` session document from the store directory.
    pub fn open(store: PathBuf, noise: NoiseMode) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&store)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&store)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let session = Session::load(&std::fs::read_to_string(&path)?)
                    .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                sessions.insert(session.id(), Arc::new(RwLock::new(session)));
            }
        }
        Ok(Self {
            sessions: RwLock::new(sessions),
            store: Some(store),
            noise,
        })
    }

    async fn get(&self, id: Uuid) -> Result<Shared, ApiError> {
        self.sessions
            .read()
            .await
            .get(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session {id}")))
    }

    async fn persist(&self, session: &Session) -> Result<(), ApiError> {
        let Some(dir) = &self.store else {
            return Ok(());
        };
        write_atomically(&dir.join(format!("{}.json", session.id())), &session.save())
            .await
            .map_err(|e| ApiError::internal(format!("could not persist session: {e}")))
    }
}

async fn write_atomically(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    tokio::fs::write(&tmp, contents).await?;
    tokio::fs::rename(&tmp, path).await
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(show_session))
        .route("/sessions/{id}/params", put(edit_params))
        .route("/sessions/{id}/confidence", put(set_confidence))
        .route("/sessions/{id}/reserve", put(set_reserve))
        .route("/sessions/{id}/statistics", post(add_statistic))
        .route(
            "/sessions/{id}/statistics/{sid}",
            axum::routing::delete(delete_statistic),
        )
        .route(
            "/sessions/{id}/statistics/{sid}/error-target",
            put(set_error_target),
        )
        .route("/sessions/{id}/statistics/{sid}/hold", put(set_hold))
        .route("/sessions/{id}/finalize", post(finalize))
        .route("/sessions/{id}/releases", get(releases))
        .with_state(state)
}

/// Error body: `{"code": ..., "message": ..., ...details}`.
#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: json!({ "code": code, "message": message.into() }),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }

    fn with(mut self, key: &str, value: serde_json::Value) -> Self {
        self.body[key] = value;
        self
    }
}

impl From<SessionError> for ApiError {
    fn from(err: SessionError) -> Self {
        let status = match &err {
            SessionError::UnknownStatistic(_) => StatusCode::NOT_FOUND,
            SessionError::Finalized | SessionError::AcknowledgementRequired(_) => {
                StatusCode::CONFLICT
            }
            SessionError::Data(DataError::Io { .. }) => StatusCode::BAD_REQUEST,
            SessionError::Schema(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut api = ApiError::new(status, err.code(), err.to_string());
        if let Some(verdict) = err.verdict() {
            api = api.with("verdict", json!(verdict));
        }
        if let SessionError::InfeasibleTarget {
            requested_epsilon,
            available_epsilon,
            best_error,
            ..
        } = &err
        {
            api = api
                .with("requested_epsilon", json!(requested_epsilon))
                .with("available_epsilon", json!(available_epsilon))
                .with("best_error", json!(best_error));
        }
        if let SessionError::InvalidMetadata { issues, .. } = &err {
            api = api.with("issues", json!(issues));
        }
        api
    }
}

impl From<DataError> for ApiError {
    fn from(err: DataError) -> Self {
        SessionError::Data(err).into()
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<(StatusCode, Json<T>), ApiError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateSessionBody {
    pub dataset: PathBuf,
    pub epsilon: f64,
    pub delta: f64,
    #[serde(default)]
    pub population_size: Option<u64>,
    #[serde(default)]
    pub acknowledge_warnings: bool,
    #[serde(default)]
    pub codebook: Option<PathBuf>,
}

/// Session state plus whatever the change produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeResponse {
    pub session: SessionView,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<ParamVerdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<BudgetWarning>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statistic_id: Option<StatisticId>,
}

impl ChangeResponse {
    fn of(session: &Session) -> Self {
        Self {
            session: SessionView::of(session),
            verdict: None,
            warnings: Vec::new(),
            statistic_id: None,
        }
    }
}

async fn create_session(
    State(state): State<Arc<AppState>>,
    Json(body): Json<CreateSessionBody>,
) -> ApiResult<ChangeResponse> {
    let handle = load_csv(&body.dataset)?;
    let (mut session, verdict) = Session::create(
        handle,
        ParamsRequest {
            epsilon: body.epsilon,
            delta: body.delta,
            population_size: body.population_size,
            acknowledge_warnings: body.acknowledge_warnings,
        },
    )?;
    if let Some(path) = &body.codebook {
        session.set_codebook(load_codebook(path)?)?;
    }
    state.persist(&session).await?;
    let response = ChangeResponse {
        verdict: Some(verdict),
        ..ChangeResponse::of(&session)
    };
    state
        .sessions
        .write()
        .await
        .insert(session.id(), Arc::new(RwLock::new(session)));
    Ok((StatusCode::CREATED, Json(response)))
}

async fn show_session(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
) -> ApiResult<SessionView> {
    let shared = state.get(id).await?;
    let session = shared.read().await;
    Ok((StatusCode::OK, Json(SessionView::of(&session))))
}

/// Applies `change` to a copy of the session; the live session is replaced
/// only once the change succeeded and was persisted.
async fn mutate<F>(state: &AppState, id: Uuid, change: F) -> Result<ChangeResponse, ApiError>
where
    F: FnOnce(&mut Session) -> Result<ChangeResponse, SessionError>,
{
    let shared = state.get(id).await?;
    let mut session = shared.write().await;
    let mut next = session.clone();
    let mut response = change(&mut next)?;
    state.persist(&next).await?;
    *session = next;
    response.session = SessionView::of(&session);
    Ok(response)
}

async fn edit_params(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
    Json(body): Json<ParamsRequest>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        let report = s.edit_params(body)?;
        Ok(ChangeResponse {
            verdict: report.verdict,
            warnings: report.warnings,
            ..ChangeResponse::of(s)
        })
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceBody {
    pub alpha: f64,
}

async fn set_confidence(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
    Json(body): Json<ConfidenceBody>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        s.set_confidence(body.alpha)?;
        Ok(ChangeResponse::of(s))
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReserveBody {
    pub fraction: f64,
}

async fn set_reserve(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
    Json(body): Json<ReserveBody>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        let report = s.set_reserve(body.fraction)?;
        Ok(ChangeResponse {
            warnings: report.warnings,
            ..ChangeResponse::of(s)
        })
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

async fn add_statistic(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
    Json(body): Json<NewStatistic>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        let sid = s.add_statistic(body)?;
        Ok(ChangeResponse {
            statistic_id: Some(sid),
            ..ChangeResponse::of(s)
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn delete_statistic(
    State(state): State<Arc<AppState>>,
    UrlPath((id, sid)): UrlPath<(Uuid, u64)>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        s.delete_statistic(StatisticId(sid))?;
        Ok(ChangeResponse::of(s))
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorTargetBody {
    pub error: f64,
}

async fn set_error_target(
    State(state): State<Arc<AppState>>,
    UrlPath((id, sid)): UrlPath<(Uuid, u64)>,
    Json(body): Json<ErrorTargetBody>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        s.set_error_target(StatisticId(sid), body.error)?;
        Ok(ChangeResponse::of(s))
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HoldBody {
    pub held: bool,
}

async fn set_hold(
    State(state): State<Arc<AppState>>,
    UrlPath((id, sid)): UrlPath<(Uuid, u64)>,
    Json(body): Json<HoldBody>,
) -> ApiResult<ChangeResponse> {
    let response = mutate(&state, id, |s| {
        s.set_hold(StatisticId(sid), body.held)?;
        Ok(ChangeResponse::of(s))
    })
    .await?;
    Ok((StatusCode::OK, Json(response)))
}

async fn finalize(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
) -> ApiResult<ReleaseDocument> {
    let mut rng = state.noise.source();
    let shared = state.get(id).await?;
    let mut session = shared.write().await;
    let mut next = session.clone();
    next.finalize(&mut rng)?;
    state.persist(&next).await?;
    *session = next;
    Ok((StatusCode::OK, Json(session.release_document())))
}

async fn releases(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<Uuid>,
) -> ApiResult<ReleaseDocument> {
    let shared = state.get(id).await?;
    let session = shared.read().await;
    if session.releases().is_empty() {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "NOT_FINALIZED",
            "session has not been finalized",
        ));
    }
    Ok((StatusCode::OK, Json(session.release_document())))
}
