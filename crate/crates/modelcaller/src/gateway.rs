//! HTTP gateway over a [`Hub`].
//!
//! JSON in and out under `/v1`, API keys in `X-Api-Key` mapped to roles,
//! errors as `{"error": {"code", "message"}}`, anytime calls as server-sent
//! events.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::net::SocketAddr;
use std::path::{Path as FsPath, PathBuf};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use modelcaller_core::rbac::authorize;
use modelcaller_core::{Category, ConfigPatch, Method, Origin, Record, Role, Signature, CallerConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tokio::sync::{mpsc, oneshot};

use crate::callable::{CallableKind, CallableSpec};
use crate::caller::{CallOptions, CallPath, CallResult, CallerSpec, Hub, ROLE_ENSEMBLE};
use crate::datastore::{DatasetSelector, FeedbackAction};
use crate::ensemble::AnytimeEmission;
use crate::error::McError;
use crate::persist::LoadMode;
use crate::quality::{EvalSpec, TrainSpec};
use crate::transformation::PlanOptions;

pub const API_KEY_HEADER: &str = "x-api-key";

/// One configured API key. Give either the key itself or its SHA-256 hex
/// digest; only digests are kept in memory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiKey {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub role: Role,
}

impl ApiKey {
    pub fn plain(key: impl Into<String>, role: Role) -> Self {
        Self { key: Some(key.into()), sha256: None, role }
    }

    fn digest(&self) -> Result<String, String> {
        match (&self.key, &self.sha256) {
            (Some(k), None) => Ok(hash_key(k)),
            (None, Some(h)) if h.len() == 64 && h.chars().all(|c| c.is_ascii_hexdigit()) => Ok(h.to_ascii_lowercase()),
            (None, Some(h)) => Err(format!("`{h}` is not a SHA-256 hex digest")),
            _ => Err("each api key needs exactly one of `key` or `sha256`".into()),
        }
    }
}

pub fn hash_key(key: &str) -> String {
    hex::encode(Sha256::digest(key.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub bind: String,
    pub persistence_dir: Option<PathBuf>,
    pub api_keys: Vec<ApiKey>,
    /// Load past corrupt persisted data instead of refusing to start.
    pub skip_corrupt: bool,
    /// Period of the background plan stepper; off when absent.
    pub plan_step_interval_secs: Option<u64>,
    /// Run on a logical clock (reproducible timestamps).
    pub deterministic: bool,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            persistence_dir: None,
            api_keys: Vec::new(),
            skip_corrupt: false,
            plan_step_interval_secs: None,
            deterministic: false,
        }
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, McError> {
        let cfg: GatewayConfig = toml::from_str(text).map_err(|e| McError::Invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self, McError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<(), McError> {
        self.bind.parse::<SocketAddr>().map_err(|e| McError::Invalid(format!("bind `{}`: {e}", self.bind)))?;
        if self.api_keys.is_empty() {
            return Err(McError::Invalid("config needs at least one api key".into()));
        }
        self.keys()?;
        if self.plan_step_interval_secs == Some(0) {
            return Err(McError::Invalid("plan_step_interval_secs must be positive".into()));
        }
        Ok(())
    }

    fn keys(&self) -> Result<BTreeMap<String, Role>, McError> {
        self.api_keys.iter().map(|k| Ok((k.digest().map_err(McError::Invalid)?, k.role))).collect()
    }
}

/// Endpoint table: HTTP method, path and the role-table method it needs.
/// Registration needs the method matching the registered kind; the row
/// lists the model variant.
pub const ENDPOINTS: &[(&str, &str, Method)] = &[
    ("POST", "/v1/callers", Method::CreateCaller),
    ("GET", "/v1/callers", Method::Read),
    ("GET", "/v1/callers/{id}", Method::Read),
    ("PATCH", "/v1/callers/{id}/config", Method::UpdateConfig),
    ("DELETE", "/v1/callers/{id}/host", Method::RetireHost),
    ("POST", "/v1/callers/{id}/register", Method::RegisterModel),
    ("DELETE", "/v1/callers/{id}/registrations/{rid}", Method::Unregister),
    ("POST", "/v1/callers/{id}/call", Method::Call),
    ("POST", "/v1/callers/{id}/call/stream", Method::Call),
    ("POST", "/v1/callers/{id}/sensor", Method::Sensor),
    ("GET", "/v1/callers/{id}/reviews", Method::Read),
    ("POST", "/v1/reviews/{token}", Method::Review),
    ("GET", "/v1/collab", Method::Read),
    ("POST", "/v1/collab/{id}/answer", Method::CollabAnswer),
    ("POST", "/v1/callers/{id}/train", Method::Train),
    ("POST", "/v1/callers/{id}/eval", Method::Eval),
    ("GET", "/v1/callers/{id}/metrics", Method::Read),
    ("GET", "/v1/callers/{id}/drift", Method::Read),
    ("GET", "/v1/callers/{id}/dataset", Method::Read),
    ("POST", "/v1/callers/{id}/plan", Method::Plan),
    ("POST", "/v1/callers/{id}/plan/step", Method::Plan),
    ("GET", "/v1/callers/{id}/plan", Method::Read),
];

// ---- errors ---------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

#[derive(Debug)]
pub enum ApiError {
    Unauthenticated(String),
    Mc(McError),
}

impl From<McError> for ApiError {
    fn from(e: McError) -> Self {
        ApiError::Mc(e)
    }
}

impl From<modelcaller_core::Error> for ApiError {
    fn from(e: modelcaller_core::Error) -> Self {
        ApiError::Mc(e.into())
    }
}

pub fn status_of(e: &McError) -> StatusCode {
    match e {
        McError::UnknownCaller(_)
        | McError::UnknownRegistration(_)
        | McError::UnknownCallable(_)
        | McError::UnknownToken(_)
        | McError::UnknownRequest(_)
        | McError::UnknownFunction(_) => StatusCode::NOT_FOUND,
        McError::Unauthorized { .. } => StatusCode::FORBIDDEN,
        McError::DuplicateName(_) | McError::Cycle(_) | McError::Conflict(_) | McError::ExpiredToken(_) => {
            StatusCode::CONFLICT
        }
        McError::AllFailed(_) => StatusCode::BAD_GATEWAY,
        McError::SignatureMismatch(_)
        | McError::NoTargets(_)
        | McError::NotTrainable(_)
        | McError::EmptyDataset(_)
        | McError::Invalid(_)
        | McError::Core(_) => StatusCode::UNPROCESSABLE_ENTITY,
        McError::Io(_) | McError::Format(_) | McError::Version(_) | McError::CorruptLine { .. } => {
            StatusCode::INTERNAL_SERVER_ERROR
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code, message) = match self {
            ApiError::Unauthenticated(m) => (StatusCode::UNAUTHORIZED, "unauthenticated", m),
            ApiError::Mc(e) => (status_of(&e), e.code(), e.to_string()),
        };
        (status, Json(ErrorEnvelope { error: ErrorBody { code: code.into(), message } })).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

// ---- request bodies -------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCallerRequest {
    pub name: String,
    pub signature: Signature,
    #[serde(default)]
    pub config: CallerConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host: Option<CallableSpec>,
    #[serde(default)]
    pub host_attributes: Record,
    /// Context parameter -> provider name.
    #[serde(default)]
    pub context_providers: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub callable: CallableSpec,
    #[serde(default = "default_role")]
    pub role: String,
    #[serde(default)]
    pub attributes: Record,
}

fn default_role() -> String {
    ROLE_ENSEMBLE.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub registration: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallRequest {
    pub inputs: Record,
    /// Context arguments for direct-path calls.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<Record>,
    #[serde(default)]
    pub path: CallPath,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamRequest {
    pub inputs: Record,
    #[serde(default = "default_deadline")]
    pub deadline_ms: u64,
}

fn default_deadline() -> u64 {
    5_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRequest {
    pub inputs: Record,
    pub output: Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingReview {
    pub token: String,
    pub sample: crate::datastore::Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub output: Record,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanRequest {
    pub candidate: String,
    #[serde(flatten)]
    pub options: PlanOptions,
}

#[derive(Debug, Deserialize)]
struct ReviewQuery {
    state: Option<String>,
    limit: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct CollabQuery {
    state: Option<String>,
}

#[derive(Debug, Deserialize)]
struct DriftQuery {
    window: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct DatasetQuery {
    category: Option<String>,
    origin: Option<String>,
    since: Option<u64>,
    until: Option<u64>,
    limit: Option<usize>,
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    let bytes: &[u8] = if body.is_empty() { b"{}" } else { body };
    serde_json::from_slice(bytes).map_err(|e| McError::Invalid(format!("request body: {e}")).into())
}

// ---- app ------------------------------------------------------------------

#[derive(Clone)]
struct App {
    hub: Hub,
    keys: std::sync::Arc<BTreeMap<String, Role>>,
}

impl App {
    fn principal(&self, headers: &HeaderMap) -> ApiResult<Role> {
        let key = headers
            .get(API_KEY_HEADER)
            .and_then(|v| v.to_str().ok())
            .ok_or_else(|| ApiError::Unauthenticated("missing X-Api-Key header".into()))?;
        self.keys.get(&hash_key(key)).copied().ok_or_else(|| ApiError::Unauthenticated("unknown api key".into()))
    }
}

fn permit(role: Role, method: Method) -> ApiResult<()> {
    if authorize(role, method).is_allowed() {
        Ok(())
    } else {
        Err(McError::Unauthorized { role, method }.into())
    }
}

/// Authenticates, checks `method` when given, then runs `f` on the
/// blocking pool.
async fn run<T, F>(app: App, headers: HeaderMap, method: Option<Method>, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Hub, Role) -> ApiResult<T> + Send + 'static,
{
    let role = match app.principal(&headers) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    if let Some(m) = method {
        if let Err(e) = permit(role, m) {
            return e.into_response();
        }
    }
    let hub = app.hub.clone();
    match tokio::task::spawn_blocking(move || f(&hub, role)).await {
        Ok(Ok(v)) => Json(v).into_response(),
        Ok(Err(e)) => e.into_response(),
        Err(e) => ApiError::Mc(McError::Invalid(format!("handler failed: {e}"))).into_response(),
    }
}

pub fn router(hub: Hub, keys: BTreeMap<String, Role>) -> Router {
    let app = App { hub, keys: std::sync::Arc::new(keys) };
    Router::new()
        .route("/v1/health", get(|| async { Json(serde_json::json!({"status": "ok"})) }))
        .route("/v1/callers", post(create_caller).get(list_callers))
        .route("/v1/callers/{id}", get(show_caller))
        .route("/v1/callers/{id}/config", patch(update_config))
        .route("/v1/callers/{id}/host", delete(retire_host))
        .route("/v1/callers/{id}/register", post(register))
        .route("/v1/callers/{id}/registrations/{rid}", delete(unregister))
        .route("/v1/callers/{id}/call", post(call))
        .route("/v1/callers/{id}/call/stream", post(call_stream))
        .route("/v1/callers/{id}/sensor", post(sensor))
        .route("/v1/callers/{id}/reviews", get(reviews))
        .route("/v1/reviews/{token}", post(review))
        .route("/v1/collab", get(collab_list))
        .route("/v1/collab/{id}/answer", post(collab_answer))
        .route("/v1/callers/{id}/train", post(train))
        .route("/v1/callers/{id}/eval", post(eval))
        .route("/v1/callers/{id}/metrics", get(metrics))
        .route("/v1/callers/{id}/drift", get(drift))
        .route("/v1/callers/{id}/dataset", get(dataset))
        .route("/v1/callers/{id}/plan", post(plan_start).get(plan_show))
        .route("/v1/callers/{id}/plan/step", post(plan_step))
        .with_state(app)
}

async fn create_caller(State(app): State<App>, headers: HeaderMap, body: Bytes) -> Response {
    run(app, headers, Some(Method::CreateCaller), move |hub, role| {
        let req: CreateCallerRequest = parse(&body)?;
        if req.host.is_some() {
            permit(role, Method::RegisterHost)?;
        }
        let host = req.host.as_ref().map(|h| hub.build_callable(h, &req.signature)).transpose()?;
        let id = hub.create_caller(
            role,
            CallerSpec {
                name: req.name,
                signature: req.signature,
                config: req.config,
                host,
                host_attributes: req.host_attributes,
                context_providers: req.context_providers.into_iter().collect(),
            },
        )?;
        Ok(hub.view(role, &id)?)
    })
    .await
}

async fn list_callers(State(app): State<App>, headers: HeaderMap) -> Response {
    run(app, headers, Some(Method::Read), |hub, role| Ok(hub.list(role)?)).await
}

async fn show_caller(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| Ok(hub.view(role, &id)?)).await
}

async fn update_config(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::UpdateConfig), move |hub, role| {
        let patch: ConfigPatch = parse(&body)?;
        Ok(hub.update_config(role, &id, &patch)?)
    })
    .await
}

async fn retire_host(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    run(app, headers, Some(Method::RetireHost), move |hub, role| Ok(hub.retire_host(role, &id)?)).await
}

async fn register(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, None, move |hub, role| {
        let req: RegisterRequest = parse(&body)?;
        let kind = if req.callable.is_reference() {
            hub.callable(&req.callable.id)?.kind
        } else {
            req.callable.resolved_kind()?
        };
        permit(role, register_method(kind))?;
        let caller = hub.caller(&id)?;
        let callable = hub.build_callable(&req.callable, &caller.snapshot().signature)?;
        let registration = hub.register(role, &caller.id, callable, &req.role, req.attributes)?;
        Ok(RegisterResponse { registration })
    })
    .await
}

fn register_method(kind: CallableKind) -> Method {
    match kind {
        CallableKind::Model => Method::RegisterModel,
        CallableKind::Function => Method::RegisterFunction,
        CallableKind::External => Method::RegisterExternal,
        CallableKind::NestedCaller => Method::RegisterNested,
    }
}

async fn unregister(State(app): State<App>, headers: HeaderMap, Path((id, rid)): Path<(String, String)>) -> Response {
    run(app, headers, Some(Method::Unregister), move |hub, role| {
        hub.unregister(role, &id, &rid)?;
        Ok(serde_json::json!({"removed": rid}))
    })
    .await
}

async fn call(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Call), move |hub, role| {
        let req: CallRequest = parse(&body)?;
        let opts = CallOptions { context: req.context, path: req.path };
        Ok(hub.call(role, &id, req.inputs, opts)?)
    })
    .await
}

enum StreamItem {
    Emission(AnytimeEmission),
    Done(Box<CallResult>),
    Failed(McError),
}

async fn call_stream(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    let role = match app.principal(&headers).and_then(|r| permit(r, Method::Call).map(|_| r)) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let req: StreamRequest = match parse(&body) {
        Ok(r) => r,
        Err(e) => return e.into_response(),
    };
    let (tx, mut rx) = mpsc::unbounded_channel();
    let hub = app.hub.clone();
    tokio::task::spawn_blocking(move || {
        let emit = tx.clone();
        let res = hub.call_anytime(role, &id, req.inputs, Duration::from_millis(req.deadline_ms), |e| {
            let _ = emit.send(StreamItem::Emission(e.clone()));
        });
        let _ = tx.send(match res {
            Ok(out) => StreamItem::Done(Box::new(out.result)),
            Err(e) => StreamItem::Failed(e),
        });
    });
    // Failures before the first emission become ordinary error responses.
    let first = match rx.recv().await {
        Some(StreamItem::Failed(e)) => return ApiError::Mc(e).into_response(),
        Some(item) => item,
        None => return ApiError::Mc(McError::Invalid("anytime call ended without a result".into())).into_response(),
    };
    let events = futures::stream::unfold((Some(first), rx), |(pending, mut rx)| async move {
        let item = match pending {
            Some(i) => i,
            None => rx.recv().await?,
        };
        let event = match item {
            StreamItem::Emission(e) => Event::default().json_data(&e).expect("emission serializes"),
            StreamItem::Done(r) => Event::default().event("done").json_data(&*r).expect("result serializes"),
            StreamItem::Failed(e) => Event::default()
                .event("error")
                .json_data(ErrorBody { code: e.code().into(), message: e.to_string() })
                .expect("error serializes"),
        };
        Some((Ok::<_, Infallible>(event), (None, rx)))
    });
    Sse::new(events).into_response()
}

async fn sensor(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Sensor), move |hub, role| {
        let req: SensorRequest = parse(&body)?;
        Ok(hub.add_sensor_sample(role, &id, req.inputs, req.output)?)
    })
    .await
}

async fn reviews(
    State(app): State<App>,
    headers: HeaderMap,
    Path(id): Path<String>,
    Query(q): Query<ReviewQuery>,
) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| {
        if q.state.as_deref().is_some_and(|s| s != "pending") {
            return Err(McError::Invalid("only state=pending is supported".into()).into());
        }
        let items = hub.pending_reviews(role, &id, q.limit.unwrap_or(100))?;
        Ok(items.into_iter().map(|(token, sample)| PendingReview { token, sample }).collect::<Vec<_>>())
    })
    .await
}

async fn review(State(app): State<App>, headers: HeaderMap, Path(token): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Review), move |hub, role| {
        let action: FeedbackAction = parse(&body)?;
        Ok(hub.apply_feedback(role, &token, action)?)
    })
    .await
}

async fn collab_list(State(app): State<App>, headers: HeaderMap, Query(q): Query<CollabQuery>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| {
        let open_only = match q.state.as_deref() {
            None | Some("all") => false,
            Some("open") => true,
            Some(other) => return Err(McError::Invalid(format!("unknown state filter `{other}`")).into()),
        };
        Ok(hub.collab_requests(role, open_only)?)
    })
    .await
}

async fn collab_answer(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::CollabAnswer), move |hub, role| {
        let req: AnswerRequest = parse(&body)?;
        Ok(hub.collab_answer(role, &id, req.output)?)
    })
    .await
}

async fn train(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Train), move |hub, role| {
        let spec: TrainSpec = parse(&body)?;
        Ok(hub.train(role, &id, &spec)?)
    })
    .await
}

async fn eval(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Eval), move |hub, role| {
        let spec: EvalSpec = parse(&body)?;
        Ok(hub.evaluate(role, &id, &spec)?)
    })
    .await
}

async fn metrics(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| Ok(hub.metrics(role, &id)?)).await
}

async fn drift(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, Query(q): Query<DriftQuery>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| {
        let window = q.window.unwrap_or(crate::transformation::DEFAULT_DRIFT_WINDOW);
        Ok(hub.detect_drift(role, &id, window)?)
    })
    .await
}

/// Parses a comma-separated list of names.
fn name_list<T>(raw: Option<&str>, what: &str, parse: impl Fn(&str) -> Option<T>) -> ApiResult<Vec<T>> {
    raw.map_or(Ok(Vec::new()), |s| {
        s.split(',')
            .filter(|p| !p.is_empty())
            .map(|p| parse(p).ok_or_else(|| McError::Invalid(format!("unknown {what} `{p}`")).into()))
            .collect()
    })
}

fn parse_origin(s: &str) -> Option<Origin> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).ok()
}

async fn dataset(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, Query(q): Query<DatasetQuery>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| {
        let selector = DatasetSelector {
            categories: name_list(q.category.as_deref(), "category", Category::parse)?,
            origins: name_list(q.origin.as_deref(), "origin", parse_origin)?,
            since: q.since,
            until: q.until,
            limit: q.limit,
        };
        Ok(hub.dataset_view(role, &id, &selector)?)
    })
    .await
}

async fn plan_start(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>, body: Bytes) -> Response {
    run(app, headers, Some(Method::Plan), move |hub, role| {
        let req: PlanRequest = parse(&body)?;
        Ok(hub.plan_transformation(role, &id, &req.candidate, req.options)?)
    })
    .await
}

async fn plan_step(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    run(app, headers, Some(Method::Plan), move |hub, role| Ok(hub.step_transformation(role, &id)?)).await
}

async fn plan_show(State(app): State<App>, headers: HeaderMap, Path(id): Path<String>) -> Response {
    run(app, headers, Some(Method::Read), move |hub, role| Ok(hub.plan(role, &id)?)).await
}

// ---- service ----------------------------------------------------------------

/// A running gateway. Stopping it (or dropping it) shuts the server down
/// and persists every caller when a persistence directory is configured.
pub struct ServiceHandle {
    addr: SocketAddr,
    hub: Hub,
    persistence_dir: Option<PathBuf>,
    runtime: Option<tokio::runtime::Runtime>,
    shutdown: Option<oneshot::Sender<()>>,
    server: Option<tokio::task::JoinHandle<std::io::Result<()>>>,
}

impl ServiceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn hub(&self) -> &Hub {
        &self.hub
    }

    /// Blocks until Ctrl-C, then stops.
    pub fn run_until_ctrl_c(self) -> Result<usize, McError> {
        if let Some(rt) = &self.runtime {
            rt.block_on(async {
                let _ = tokio::signal::ctrl_c().await;
            });
        }
        self.stop()
    }

    /// Stops serving and persists; returns the number of callers written.
    pub fn stop(mut self) -> Result<usize, McError> {
        self.shutdown_inner()
    }

    fn shutdown_inner(&mut self) -> Result<usize, McError> {
        let Some(rt) = self.runtime.take() else { return Ok(0) };
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(server) = self.server.take() {
            let _ = rt.block_on(server);
        }
        rt.shutdown_timeout(Duration::from_secs(5));
        match &self.persistence_dir {
            Some(dir) => self.hub.persist_all(dir),
            None => Ok(0),
        }
    }
}

impl Drop for ServiceHandle {
    fn drop(&mut self) {
        if let Err(e) = self.shutdown_inner() {
            tracing::error!("persisting on shutdown failed: {e}");
        }
    }
}

/// Starts a gateway for `config` on a fresh hub.
pub fn start_service(config: &GatewayConfig) -> Result<ServiceHandle, McError> {
    let hub = if config.deterministic { Hub::deterministic() } else { Hub::default() };
    start_with_hub(config, hub)
}

/// Binds, restores persisted callers into `hub`, and serves in the
/// background.
pub fn start_with_hub(config: &GatewayConfig, hub: Hub) -> Result<ServiceHandle, McError> {
    config.validate()?;
    let keys = config.keys()?;
    let std_listener = std::net::TcpListener::bind(&config.bind)?;
    if let Some(dir) = &config.persistence_dir {
        let mode = if config.skip_corrupt { LoadMode::Skip } else { LoadMode::Strict };
        let report = hub.load_all(dir, mode)?;
        for w in &report.warnings {
            tracing::warn!("{w}");
        }
        tracing::info!(callers = report.callers.len(), samples = report.samples, "restored persisted state");
    }
    std_listener.set_nonblocking(true)?;
    let addr = std_listener.local_addr()?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    let (tx, rx) = oneshot::channel::<()>();
    let app = router(hub.clone(), keys);
    let server = runtime.spawn(async move {
        let listener = tokio::net::TcpListener::from_std(std_listener)?;
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    if let Some(secs) = config.plan_step_interval_secs {
        let hub = hub.clone();
        runtime.spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(secs));
            tick.tick().await;
            loop {
                tick.tick().await;
                let hub = hub.clone();
                let _ = tokio::task::spawn_blocking(move || {
                    for (id, res) in hub.step_all_plans() {
                        if let Err(e) = res {
                            tracing::warn!(caller = %id, "scheduled plan step failed: {e}");
                        }
                    }
                })
                .await;
            }
        });
    }
    tracing::info!(%addr, "gateway listening");
    Ok(ServiceHandle {
        addr,
        hub,
        persistence_dir: config.persistence_dir.clone(),
        runtime: Some(runtime),
        shutdown: Some(tx),
        server: Some(server),
    })
}
