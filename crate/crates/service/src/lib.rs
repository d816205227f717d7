//! HTTP API for ecoforge: model CRUD, species lookup and derivation,
//! compilation and live simulation sessions with a paced frame stream.
//!
//! Every route lives under `/api/v1`. Errors are JSON bodies of the form
//! `{"code", "message", "subject"?, "report"?}`.

pub mod error;
mod session;
mod store;

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use ecoforge_core::canonical::to_canonical_string;
use ecoforge_core::compiler::{compile_for_engine, compile_model, emit_netlogo};
use ecoforge_core::engine::{Command, SimConfig};
use ecoforge_core::model::{parse_document, serialize_model, validate_model, ConceptualModel};
use ecoforge_core::ontology::{list_aliases, map_interaction, Sign};
use ecoforge_core::traits::{backend_from_env, derive_for_taxon, FixtureBackend, TraitBackend};
use futures_util::StreamExt;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use error::ApiError;
pub use session::{SessionInfo, StreamEvent, FRAME_BUFFER, MAX_FRAME_RATE};
pub use store::ModelStore;

use session::Session;

pub const PORT_ENV: &str = "ECOFORGE_PORT";
pub const DATA_DIR_ENV: &str = "ECOFORGE_DATA_DIR";
pub const CORS_ORIGIN_ENV: &str = "ECOFORGE_CORS_ORIGIN";
pub const WEBAPP_DIR_ENV: &str = "ECOFORGE_WEBAPP_DIR";
pub const DEFAULT_PORT: u16 = 8080;

pub struct ServiceConfig {
    /// Directory mirroring the model store; in-memory only when `None`.
    pub data_dir: Option<PathBuf>,
    pub backend: Arc<dyn TraitBackend>,
    /// Allowed browser origin; any origin when `None`.
    pub cors_origin: Option<String>,
    /// Built web UI served at `/`.
    pub webapp_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: None,
            backend: Arc::new(FixtureBackend::bundled()),
            cors_origin: None,
            webapp_dir: None,
        }
    }
}

impl ServiceConfig {
    pub fn from_env() -> Result<Self, ApiError> {
        let var = |name| std::env::var(name).ok().filter(|v: &String| !v.trim().is_empty());
        Ok(ServiceConfig {
            data_dir: var(DATA_DIR_ENV).map(PathBuf::from),
            backend: backend_from_env()?,
            cors_origin: var(CORS_ORIGIN_ENV),
            webapp_dir: var(WEBAPP_DIR_ENV).map(PathBuf::from),
        })
    }
}

/// Port from `ECOFORGE_PORT`, or 8080.
pub fn port_from_env() -> Result<u16, String> {
    match std::env::var(PORT_ENV) {
        Ok(p) => p.trim().parse().map_err(|_| format!("{PORT_ENV} must be a port number, got `{p}`")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

struct AppState {
    models: ModelStore,
    sessions: RwLock<BTreeMap<String, Arc<Session>>>,
    next_session: AtomicU64,
    backend: Arc<dyn TraitBackend>,
}

type Shared = State<Arc<AppState>>;

pub fn router(cfg: ServiceConfig) -> Result<Router, ApiError> {
    let models = match &cfg.data_dir {
        Some(dir) => ModelStore::open(dir)?,
        None => ModelStore::in_memory(),
    };
    let state = Arc::new(AppState {
        models,
        sessions: RwLock::new(BTreeMap::new()),
        next_session: AtomicU64::new(1),
        backend: cfg.backend,
    });
    let api = Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/models", get(list_models).post(create_model))
        .route("/models/{id}", get(get_model).put(put_model).delete(delete_model))
        .route("/models/{id}/validate", post(validate_stored))
        .route("/models/{id}/compile", post(compile_stored))
        .route("/validate", post(validate_body))
        .route("/species", get(search_species))
        .route("/species/{taxon}/parameters", get(species_parameters))
        .route("/interactions", get(|| async { Json(list_aliases()) }))
        .route("/interactions/{name}", get(interaction))
        .route("/simulations", get(list_sessions).post(create_session))
        .route("/simulations/{id}", get(get_session).delete(delete_session))
        .route("/simulations/{id}/command", post(session_command))
        .route("/simulations/{id}/frames", get(session_frames))
        .route("/simulations/{id}/series.csv", get(session_csv))
        .with_state(state);

    let cors = match cfg.cors_origin {
        Some(origin) => {
            let origin = HeaderValue::from_str(&origin).map_err(|_| ApiError::bad_request(format!("bad CORS origin `{origin}`")))?;
            CorsLayer::new().allow_origin(AllowOrigin::exact(origin))
        }
        None => CorsLayer::new().allow_origin(AllowOrigin::any()),
    }
    .allow_methods(tower_http::cors::Any)
    .allow_headers(tower_http::cors::Any);

    let mut app = Router::new().nest("/api/v1", api);
    if let Some(dir) = cfg.webapp_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok(app.layer(cors))
}

/// Serves `app` until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).await
}

fn json_body<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn canonical_json(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], bytes).into_response()
}

/// Parses leniently and rejects models with validation errors, so a
/// dangling endpoint is reported as `REL_ENDPOINT` rather than a parse error.
fn accept_model(body: &[u8]) -> Result<(ConceptualModel, serde_json::Value), ApiError> {
    let model = parse_document(body)?;
    let report = validate_model(&model);
    if !report.errors.is_empty() {
        return Err(ApiError::invalid(report).subject(&model.id));
    }
    let warnings = serde_json::to_value(&report.warnings).expect("issues serialize");
    Ok((model, warnings))
}

async fn list_models(State(s): Shared) -> Json<serde_json::Value> {
    let list: Vec<_> = s.models.list().into_iter().map(|(id, name)| json!({"id": id, "name": name})).collect();
    Json(json!(list))
}

async fn create_model(State(s): Shared, body: Bytes) -> Result<Response, ApiError> {
    let (model, warnings) = accept_model(&body)?;
    let id = model.id.clone();
    s.models.create(model)?;
    let location = format!("/api/v1/models/{id}");
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, location)],
        Json(json!({"id": id, "warnings": warnings})),
    )
        .into_response())
}

async fn get_model(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(canonical_json(serialize_model(&s.models.get(&id)?)))
}

async fn put_model(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Result<Json<serde_json::Value>, ApiError> {
    s.models.get(&id)?;
    let (model, warnings) = accept_model(&body)?;
    if model.id != id {
        return Err(ApiError::new(
            400,
            error::codes::MODEL_ID,
            format!("body id `{}` does not match `{id}`", model.id),
        )
        .subject(&id));
    }
    s.models.replace(model)?;
    Ok(Json(json!({"id": id, "warnings": warnings})))
}

async fn delete_model(State(s): Shared, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    s.models.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn validate_stored(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let report = validate_model(&s.models.get(&id)?);
    Ok(Json(report).into_response())
}

async fn validate_body(body: Bytes) -> Result<Response, ApiError> {
    let report = validate_model(&parse_document(&body)?);
    Ok(Json(report).into_response())
}

#[derive(Deserialize)]
struct CompileQuery {
    target: Option<String>,
}

async fn compile_stored(State(s): Shared, Path(id): Path<String>, Query(q): Query<CompileQuery>) -> Result<Response, ApiError> {
    let model = s.models.get(&id)?;
    let prog = compile_model(&model)?;
    let target = q.target.as_deref().unwrap_or("engine");
    Ok(match target {
        "netlogo" => ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], emit_netlogo(&prog)).into_response(),
        "engine" => canonical_json(to_canonical_string(&compile_for_engine(&prog)).expect("programs serialize").into_bytes()),
        "ir" => canonical_json(to_canonical_string(&prog).expect("programs serialize").into_bytes()),
        other => {
            return Err(ApiError::new(
                400,
                error::codes::UNKNOWN_TARGET,
                format!("target must be netlogo, engine or ir, got `{other}`"),
            ))
        }
    })
}

#[derive(Deserialize)]
struct SpeciesQuery {
    #[serde(default)]
    q: String,
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(500, error::codes::BACKEND_UNAVAILABLE, e.to_string()))?
}

async fn search_species(State(s): Shared, Query(q): Query<SpeciesQuery>) -> Result<Response, ApiError> {
    let backend = Arc::clone(&s.backend);
    let matches = blocking(move || Ok(backend.search_taxa(&q.q)?)).await?;
    Ok(Json(matches).into_response())
}

async fn species_parameters(State(s): Shared, Path(taxon): Path<String>) -> Result<Response, ApiError> {
    let backend = Arc::clone(&s.backend);
    let (properties, report) = blocking(move || Ok(derive_for_taxon(backend.as_ref(), &taxon)?)).await?;
    Ok(Json(json!({"taxon_id": report.taxon_id, "properties": properties, "report": report})).into_response())
}

#[derive(Deserialize)]
struct SignQuery {
    sign: Option<String>,
}

async fn interaction(Path(name): Path<String>, Query(q): Query<SignQuery>) -> Result<Response, ApiError> {
    let sign = q
        .sign
        .map(|s| s.parse::<Sign>())
        .transpose()
        .map_err(ApiError::bad_request)?;
    Ok(Json(map_interaction(&name, sign)?).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    model_id: String,
    seed: u64,
    max_ticks: u64,
    grid_width: Option<u32>,
    grid_height: Option<u32>,
    snapshot_every: Option<u64>,
}

async fn create_session(State(s): Shared, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = json_body(&body)?;
    let model = s.models.get(&req.model_id)?;
    let prog = compile_for_engine(&compile_model(&model)?);
    let defaults = SimConfig::default();
    let config = SimConfig {
        seed: req.seed,
        max_ticks: req.max_ticks,
        grid_width: req.grid_width.unwrap_or(defaults.grid_width),
        grid_height: req.grid_height.unwrap_or(defaults.grid_height),
        snapshot_every: req.snapshot_every.unwrap_or(defaults.snapshot_every),
    };
    config.check()?;
    let id = format!("s{}", s.next_session.fetch_add(1, Ordering::Relaxed));
    let session = Session::spawn(id.clone(), req.model_id, prog, config)?;
    let info = session.info();
    s.sessions.write().unwrap().insert(id.clone(), session);
    tracing::info!(session = %id, model = %info.model_id, "session created");
    Ok((
        StatusCode::CREATED,
        [(header::LOCATION, format!("/api/v1/simulations/{id}"))],
        Json(info),
    )
        .into_response())
}

fn session(s: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    s.sessions
        .read()
        .unwrap()
        .get(id)
        .cloned()
        .ok_or_else(|| ApiError::session_not_found(id))
}

async fn list_sessions(State(s): Shared) -> Json<Vec<SessionInfo>> {
    let sessions: Vec<_> = s.sessions.read().unwrap().values().cloned().collect();
    Json(sessions.iter().map(|s| s.info()).collect())
}

async fn get_session(State(s): Shared, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    Ok(Json(session(&s, &id)?.info()))
}

async fn delete_session(State(s): Shared, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let removed = s.sessions.write().unwrap().remove(&id);
    let session = removed.ok_or_else(|| ApiError::session_not_found(&id))?;
    session.close();
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandBody {
    command: Command,
}

async fn session_command(State(s): Shared, Path(id): Path<String>, body: Bytes) -> Result<Json<SessionInfo>, ApiError> {
    let CommandBody { command } = json_body(&body)?;
    Ok(Json(session(&s, &id)?.command(command).await?))
}

#[derive(Deserialize)]
struct FramesQuery {
    #[serde(default)]
    from: usize,
    rate: Option<f64>,
}

/// Server-sent events: `frame` (a SimFrame), `reset`, and a final `end`
/// carrying the status.
async fn session_frames(State(s): Shared, Path(id): Path<String>, Query(q): Query<FramesQuery>) -> Result<Response, ApiError> {
    let rate = q.rate.unwrap_or(MAX_FRAME_RATE);
    if rate.is_nan() || rate <= 0.0 {
        return Err(ApiError::bad_request("rate must be positive"));
    }
    let events = session(&s, &id)?.subscribe(q.from, rate).map(|event| {
        let e = match event {
            StreamEvent::Frame(frame) => Event::default().event("frame").json_data(frame),
            StreamEvent::Reset => Ok(Event::default().event("reset").data("{}")),
            StreamEvent::End { status, error } => Event::default()
                .event("end")
                .json_data(json!({"status": status, "error": error})),
        };
        Ok::<_, Infallible>(e.expect("events serialize"))
    });
    Ok(Sse::new(events).keep_alive(KeepAlive::default()).into_response())
}

async fn session_csv(State(s): Shared, Path(id): Path<String>) -> Result<Response, ApiError> {
    let series = session(&s, &id)?.series()?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], series.to_csv()).into_response())
}
