//! JSON-over-HTTP front end for game sessions and the advisor.

pub mod api;
pub mod config;
pub mod world;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::rejection::JsonRejection;
use axum::extract::{FromRequest, Path, Request, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use maasim_core::analysis::group_scores;
use maasim_core::moo::{run, AlgoConfig, SimProblem};
use maasim_core::simcore::{genome_from_str, genome_to_string, SessionState};
use maasim_core::Error;
use serde::de::DeserializeOwned;
use tower_http::cors::{Any, CorsLayer};

use api::*;
pub use config::ServiceConfig;
pub use world::World;

/// JSON Schema of every response body, keyed by definition name.
pub const API_SCHEMA: &str = include_str!("../api-schema.json");

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError { status, message: message.into() }
    }

    fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, what)
    }

    fn bad_request(msg: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, msg)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::NothingToUndo | Error::Infeasible => StatusCode::CONFLICT,
            e if e.is_input_error() => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// `Json` whose rejections (bad syntax, wrong types, unknown fields) all map
/// to 400.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) => Err(ApiError::bad_request(rejection_text(e))),
        }
    }
}

fn rejection_text(e: JsonRejection) -> String {
    e.body_text()
}

struct Session {
    created_at: u64,
    state: SessionState,
}

pub struct AppState {
    world: World,
    max_evaluations: usize,
    optimize_timeout: Duration,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
}

impl AppState {
    pub fn new(world: World, max_evaluations: usize, optimize_timeout: Duration) -> Arc<Self> {
        Arc::new(AppState { world, max_evaluations, optimize_timeout, sessions: RwLock::new(HashMap::new()) })
    }

    pub fn from_config(world: World, cfg: &ServiceConfig) -> Arc<Self> {
        AppState::new(world, cfg.max_evaluations, Duration::from_secs(cfg.optimize_timeout_secs))
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map poisoned").len()
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
    }

    fn state_view(&self, s: &SessionState) -> Result<StateView, ApiError> {
        let w = &self.world;
        let indicators = w
            .forest
            .feature_names
            .iter()
            .enumerate()
            .map(|(k, name)| IndicatorView {
                name: name.clone(),
                group: w.group_of(k),
                value: s.current[k],
                baseline: s.baseline[k],
            })
            .collect();
        Ok(StateView {
            neighbourhood_id: s.neighbourhood_id.clone(),
            score: s.score,
            class: w.forest.class_of(s.score),
            turns: s.turns,
            history: s.history.clone(),
            groups: group_scores(&s.current, &w.groups, &s.baseline)?,
            indicators,
        })
    }

    fn session_view(&self, id: &str, s: &Session) -> Result<SessionView, ApiError> {
        Ok(SessionView { session_id: id.to_string(), created_at: s.created_at, state: self.state_view(&s.state)? })
    }

    /// Runs `f` on the session under its lock and renders the result.
    fn mutate(
        &self,
        id: &str,
        f: impl FnOnce(&mut SessionState, &World) -> Result<(), ApiError>,
    ) -> ApiResult<SessionView> {
        let handle = self.session(id)?;
        let mut s = handle.lock().expect("session poisoned");
        let mut next = s.state.clone();
        f(&mut next, &self.world)?;
        let view = SessionView { session_id: id.to_string(), created_at: s.created_at, state: self.state_view(&next)? };
        s.state = next;
        Ok(Json(view))
    }
}

type Shared = Arc<AppState>;

async fn health() -> Json<Health> {
    Json(Health { status: "ok".into() })
}

async fn list_actions(State(app): State<Shared>) -> Json<Vec<ActionView>> {
    let names = &app.world.forest.feature_names;
    Json(
        app.world
            .catalog
            .actions
            .iter()
            .map(|a| ActionView {
                id: a.id.clone(),
                name: a.name.clone(),
                kind: a.kind,
                targets: a
                    .targets
                    .iter()
                    .map(|&(k, d)| TargetView { indicator: names[k].clone(), delta_fraction: d })
                    .collect(),
                cost_turns: a.cost_turns,
            })
            .collect(),
    )
}

async fn list_neighbourhoods(State(app): State<Shared>) -> ApiResult<Vec<NeighbourhoodView>> {
    let w = &app.world;
    let out = w
        .dataset
        .ids
        .iter()
        .zip(&w.dataset.records)
        .map(|(id, x)| {
            let score = w.forest.predict(x)?;
            Ok(NeighbourhoodView { id: id.clone(), score, class: w.forest.class_of(score) })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Json(out))
}

async fn create_session(
    State(app): State<Shared>,
    Body(req): Body<CreateSession>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let w = &app.world;
    if w.dataset.row_index(&req.neighbourhood_id).is_none() {
        return Err(ApiError::not_found(format!("unknown neighbourhood `{}`", req.neighbourhood_id)));
    }
    let state = SessionState::from_dataset(&w.dataset, &req.neighbourhood_id, &w.forest)?;
    let created_at = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let id = uuid::Uuid::new_v4().to_string();
    let session = Session { created_at, state };
    let view = app.session_view(&id, &session)?;
    app.sessions.write().expect("session map poisoned").insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(view)))
}

async fn get_session(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<SessionView> {
    let handle = app.session(&id)?;
    let s = handle.lock().expect("session poisoned");
    Ok(Json(app.session_view(&id, &s)?))
}

async fn play_action(State(app): State<Shared>, Path(id): Path<String>, Body(req): Body<PlayAction>) -> ApiResult<SessionView> {
    app.mutate(&id, |s, w| {
        let a = w.catalog.get(&req.action_id).ok_or_else(|| ApiError::bad_request(format!("unknown action `{}`", req.action_id)))?;
        Ok(s.apply(a, &w.forest)?)
    })
}

async fn apply_plan(State(app): State<Shared>, Path(id): Path<String>, Body(req): Body<ApplyPlan>) -> ApiResult<SessionView> {
    let genome = genome_from_str(&req.genome).map_err(|e| ApiError::bad_request(e.to_string()))?;
    app.mutate(&id, |s, w| {
        if genome.len() != w.catalog.len() {
            return Err(ApiError::bad_request(format!("genome needs {} bits, got {}", w.catalog.len(), genome.len())));
        }
        Ok(s.apply_plan(&genome, &w.catalog, &w.forest)?)
    })
}

async fn undo(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<SessionView> {
    app.mutate(&id, |s, w| Ok(s.undo(&w.forest)?))
}

async fn optimize(State(app): State<Shared>, Path(id): Path<String>, Body(req): Body<Optimize>) -> ApiResult<OptimizeResult> {
    if req.evaluations > app.max_evaluations {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("{} evaluations exceed the server cap of {}", req.evaluations, app.max_evaluations),
        ));
    }
    let cfg = AlgoConfig { evaluations: req.evaluations, seed: req.seed, ..Default::default() };
    cfg.validate()?;
    let base = app.session(&id)?.lock().expect("session poisoned").state.clone();
    let worker = app.clone();
    let task = tokio::task::spawn_blocking(move || {
        let w = &worker.world;
        let problem = SimProblem { base: &base, forest: &w.forest, catalog: &w.catalog };
        run(req.algorithm, &problem, &cfg)
    });
    let outcome = match tokio::time::timeout(app.optimize_timeout, task).await {
        Ok(Ok(r)) => r?,
        Ok(Err(e)) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
        Err(_) => return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "optimizer time budget exceeded")),
    };
    let catalog = &app.world.catalog;
    let solutions = outcome
        .front
        .members
        .iter()
        .map(|m| Solution {
            genome: genome_to_string(&m.genome),
            action_ids: catalog.actions.iter().zip(&m.genome).filter(|(_, &b)| b).map(|(a, _)| a.id.clone()).collect(),
            score: m.objectives.score,
            turns: m.objectives.turns,
        })
        .collect();
    Ok(Json(OptimizeResult { algorithm: req.algorithm, seed: req.seed, evaluations: outcome.evaluations, solutions }))
}

async fn fallback() -> ApiError {
    ApiError::not_found("no such route")
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/actions", get(list_actions))
        .route("/neighbourhoods", get(list_neighbourhoods))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(play_action))
        .route("/sessions/{id}/apply-plan", post(apply_plan))
        .route("/sessions/{id}/undo", post(undo))
        .route("/sessions/{id}/optimize", post(optimize))
        .fallback(fallback)
        .with_state(app)
}

fn cors(origin: &str) -> Result<CorsLayer, Error> {
    let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
    if origin == "*" {
        return Ok(layer.allow_origin(Any));
    }
    let v = HeaderValue::from_str(origin).map_err(|_| Error::Config(format!("bad CORS origin `{origin}`")))?;
    Ok(layer.allow_origin(v))
}

/// Router with CORS applied when configured.
pub fn app(world: World, cfg: &ServiceConfig) -> Result<Router, Error> {
    let r = router(AppState::from_config(world, cfg));
    Ok(match &cfg.cors_origin {
        Some(o) => r.layer(cors(o)?),
        None => r,
    })
}

/// Loads the world from the configured files and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), Error> {
    let world = World::load(&cfg)?;
    serve_world(world, cfg).await
}

pub async fn serve_world(world: World, cfg: ServiceConfig) -> Result<(), Error> {
    let router = app(world, &cfg)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|_| Error::Config(format!("bad listen address {}:{}", cfg.host, cfg.port)))?;
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| Error::Config(format!("bind {addr}: {e}")))?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Error::Config(format!("server error: {e}")))
}
