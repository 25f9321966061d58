//! HTTP routes and batch commands behind the `prefdesign` binary.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use prefdesign::belief::Answer;
use prefdesign::experiments::{run_experiment, ExperimentConfig, ExperimentResults};
use prefdesign::session::{SessionConfig, SessionError, SessionManager};

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub struct ApiError(SessionError);

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        ApiError(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match self.0 {
            SessionError::BadRequest(_) => StatusCode::BAD_REQUEST,
            SessionError::NotFound(_) => StatusCode::NOT_FOUND,
            SessionError::Conflict(_) => StatusCode::CONFLICT,
            SessionError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let body = ErrorBody { code: self.0.code().to_string(), message: self.0.to_string() };
        (status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub choice: Choice,
    pub round: usize,
}

fn parse<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError(SessionError::BadRequest(format!("malformed request body: {e}"))))
}

/// Runs session work off the async executor; query generation can take seconds.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, SessionError> + Send + 'static) -> ApiResult<T> {
    match tokio::task::spawn_blocking(f).await {
        Ok(r) => r.map(Json).map_err(ApiError),
        Err(e) => Err(ApiError(SessionError::Internal(e.to_string()))),
    }
}

async fn create(State(m): State<Arc<SessionManager>>, body: Bytes) -> Result<Response, ApiError> {
    let config: SessionConfig =
        if body.iter().all(u8::is_ascii_whitespace) { SessionConfig::default() } else { parse(&body)? };
    let created = blocking(move || m.create_session(config)).await?;
    Ok((StatusCode::CREATED, created).into_response())
}

async fn query(State(m): State<Arc<SessionManager>>, UrlPath(id): UrlPath<String>) -> impl IntoResponse {
    blocking(move || m.get_query(&id)).await
}

async fn answer(State(m): State<Arc<SessionManager>>, UrlPath(id): UrlPath<String>, body: Bytes) -> impl IntoResponse {
    let req: AnswerRequest = parse(&body)?;
    let choice = match req.choice {
        Choice::A => Answer::A,
        Choice::B => Answer::B,
    };
    blocking(move || m.post_answer(&id, choice, req.round)).await
}

async fn history(State(m): State<Arc<SessionManager>>, UrlPath(id): UrlPath<String>) -> impl IntoResponse {
    blocking(move || m.get_history(&id)).await
}

async fn belief(State(m): State<Arc<SessionManager>>, UrlPath(id): UrlPath<String>) -> impl IntoResponse {
    blocking(move || m.get_belief(&id)).await
}

/// The session API, plus static assets from `static_dir` at every other path.
pub fn router(manager: Arc<SessionManager>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create))
        .route("/sessions/{id}/query", get(query))
        .route("/sessions/{id}/answer", post(answer))
        .route("/sessions/{id}/history", get(history))
        .route("/sessions/{id}/belief", get(belief))
        .with_state(manager);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

pub fn load_experiment(path: &Path) -> prefdesign::Result<ExperimentConfig> {
    ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
}

/// Runs the experiment in `config_path` and writes its outputs to `out`
/// (or to the config's `output` when `out` is `None`).
pub fn run_command(config_path: &Path, out: Option<PathBuf>) -> prefdesign::Result<(PathBuf, ExperimentResults)> {
    let config = load_experiment(config_path)?;
    let out = out.or_else(|| config.output.clone()).ok_or_else(|| {
        prefdesign::Error::InvalidArgument("no output directory: pass --out or set \"output\"".into())
    })?;
    let results = run_experiment(&config)?;
    results.write(&out)?;
    Ok((out, results))
}

/// Plain-text table of mean correlation per method and round.
pub fn format_summary(results: &ExperimentResults) -> String {
    let mut methods: Vec<_> = results.summary.prior.iter().map(|r| r.method).collect();
    methods.dedup();
    let rounds = results.summary.rounds.iter().map(|r| r.round).max().unwrap_or(0);
    let mut out = format!("{:<8}", "round");
    for m in &methods {
        out.push_str(&format!("{:>16}", m.name()));
    }
    out.push('\n');
    for round in 0..=rounds {
        out.push_str(&format!("{round:<8}"));
        for &m in &methods {
            let rows = if round == 0 { &results.summary.prior } else { &results.summary.rounds };
            match rows.iter().find(|r| r.method == m && r.round == round) {
                Some(r) => out.push_str(&format!("{:>9.3} ±{:<5.3}", r.mean, r.ci95)),
                None => out.push_str(&format!("{:>16}", "-")),
            }
        }
        out.push('\n');
    }
    out
}
