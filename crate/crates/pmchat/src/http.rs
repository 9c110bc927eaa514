//! JSON HTTP API. Every error uses the envelope `{code, message, details}`.
//!
//! ```text
//! GET  /healthz
//! POST /logs                           multipart: file (CSV), metadata (JSON), mapping (JSON)
//! GET  /logs/{id}/kpis/structural
//! GET  /logs/{id}/kpis/temporal
//! GET  /logs/{id}/dfg                  ?format=dot for Graphviz
//! GET  /logs/{id}/variants
//! GET  /logs/{id}/performance
//! GET  /logs/{id}/conformance
//! GET  /logs/{id}/handover             ?format=dot for Graphviz
//! POST /logs/{id}/analyze              {"module": "..."}
//! POST /sessions                       {"log_id": "...", "style": "zero_shot" | "optimized"}
//! GET  /sessions/{id}/history
//! POST /sessions/{id}/analysis         {"module": "...", "task": "analytics" | ...}
//! POST /sessions/{id}/message          {"text": "..."}
//! POST /ratings                        one rating object or an array of them
//! GET  /ratings/distribution           ?group_by=overall|sector|gender|style&sector=&gender=&style=&module=
//! GET  /ratings/compare                same filters
//! ```
//!
//! KPI reads return the latest stored payload, or compute one without
//! storing it when the module has not been analyzed yet.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pmchat_core::discovery::DirectlyFollowsGraph;
use pmchat_core::evaluation::{GroupBy, RatingFilter};
use pmchat_core::orgmining::HandoverNetwork;
use pmchat_core::prompt::{AnalysisTask, PromptStyle};
use pmchat_core::{LogMetadata, Module};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::app::App;
use crate::error::{Error, Result};
use crate::ingest::ColumnMapping;
use crate::ratings::RatingInput;

type AppState = State<Arc<App>>;

const MAX_UPLOAD_BYTES: usize = 256 * 1024 * 1024;

impl IntoResponse for Error {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.envelope())).into_response()
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T> + Send + 'static) -> Result<T> {
    tokio::task::spawn_blocking(f).await.unwrap_or_else(|e| Err(Error::Internal(format!("worker failed: {e}"))))
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| Error::Invalid(format!("bad JSON body: {e}")))
}

fn parse_arg<T: std::str::FromStr>(what: &str, raw: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    raw.parse().map_err(|e: T::Err| Error::Invalid(format!("{what}: {e}")))
}

pub fn router(app: Arc<App>, api_token: Option<String>) -> Router {
    let protected = Router::new()
        .route("/logs", post(post_logs))
        .route("/logs/{id}/kpis/{kind}", get(get_kpi))
        .route("/logs/{id}/dfg", get(|s: AppState, p: Path<String>, q: Query<ViewQuery>| get_view(s, p, q, View::Dfg)))
        .route("/logs/{id}/variants", get(|s: AppState, p: Path<String>, q: Query<ViewQuery>| get_view(s, p, q, View::Variants)))
        .route("/logs/{id}/performance", get(|s: AppState, p: Path<String>, q: Query<ViewQuery>| get_view(s, p, q, View::Performance)))
        .route("/logs/{id}/conformance", get(|s: AppState, p: Path<String>, q: Query<ViewQuery>| get_view(s, p, q, View::Conformance)))
        .route("/logs/{id}/handover", get(|s: AppState, p: Path<String>, q: Query<ViewQuery>| get_view(s, p, q, View::Handover)))
        .route("/logs/{id}/analyze", post(post_analyze))
        .route("/sessions", post(post_sessions))
        .route("/sessions/{id}/history", get(get_history))
        .route("/sessions/{id}/analysis", post(post_analysis))
        .route("/sessions/{id}/message", post(post_message))
        .route("/ratings", post(post_ratings))
        .route("/ratings/distribution", get(get_distribution))
        .route("/ratings/compare", get(get_compare))
        .layer(middleware::from_fn_with_state(api_token.map(Arc::new), require_token));
    Router::new()
        .route("/healthz", get(healthz))
        .merge(protected)
        .fallback(|| async { Error::not_found("route", "unknown path") })
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES))
        .with_state(app)
}

async fn require_token(State(token): State<Option<Arc<String>>>, request: Request, next: Next) -> Response {
    if let Some(token) = token {
        let expected = format!("Bearer {token}");
        let given = request.headers().get(header::AUTHORIZATION).and_then(|v| v.to_str().ok());
        if given != Some(expected.as_str()) {
            let body = json!({ "code": "unauthorized", "message": "missing or wrong bearer token", "details": null });
            return (StatusCode::UNAUTHORIZED, Json(body)).into_response();
        }
    }
    next.run(request).await
}

/// Binds `addr` and serves until Ctrl-C.
pub async fn serve(app: Arc<App>, addr: SocketAddr, api_token: Option<String>) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Startup(format!("cannot listen on {addr}: {e}")))?;
    axum::serve(listener, router(app, api_token))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(Error::Io)
}

async fn healthz(State(app): State<Arc<App>>) -> Json<Value> {
    Json(json!({ "status": "ok", "provider": app.gateway.provider() }))
}

#[derive(Default, Deserialize)]
struct MetadataInput {
    #[serde(default)]
    sector: String,
    #[serde(default)]
    economic_activity: String,
    #[serde(default)]
    process_name: String,
    #[serde(default, alias = "org")]
    organization: String,
}

impl From<MetadataInput> for LogMetadata {
    fn from(m: MetadataInput) -> Self {
        LogMetadata {
            sector: m.sector,
            economic_activity: m.economic_activity,
            process_name: m.process_name,
            organization: m.organization,
        }
        .sanitized()
    }
}

async fn post_logs(State(app): State<Arc<App>>, mut form: Multipart) -> Result<Response> {
    let mut file = None;
    let mut metadata = MetadataInput::default();
    let mut mapping = ColumnMapping::default();
    let bad = |e: axum::extract::multipart::MultipartError| Error::Invalid(format!("bad multipart body: {e}"));
    while let Some(field) = form.next_field().await.map_err(bad)? {
        match field.name().unwrap_or("") {
            "file" => file = Some(field.bytes().await.map_err(bad)?),
            "metadata" => metadata = parse_body(&field.bytes().await.map_err(bad)?)?,
            "mapping" => mapping = parse_body(&field.bytes().await.map_err(bad)?)?,
            _ => {}
        }
    }
    let file = file.ok_or_else(|| Error::Invalid("multipart field \"file\" is required".into()))?;
    let summary = blocking(move || app.ingest(&file, &mapping, metadata.into())).await?;
    let status = if summary.newly_registered { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(summary)).into_response())
}

async fn get_kpi(State(app): State<Arc<App>>, Path((id, kind)): Path<(String, String)>) -> Result<Json<Value>> {
    if kind != "structural" && kind != "temporal" {
        return Err(Error::not_found("KPI group", kind));
    }
    let payload = blocking(move || app.module_payload(&id, Module::Dashboard)).await?;
    Ok(Json(payload[kind.as_str()].clone()))
}

#[derive(Clone, Copy)]
enum View {
    Dfg,
    Variants,
    Performance,
    Conformance,
    Handover,
}

#[derive(Default, Deserialize)]
struct ViewQuery {
    format: Option<String>,
}

async fn get_view(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<ViewQuery>,
    view: View,
) -> Result<Response> {
    let module = match view {
        View::Dfg | View::Variants => Module::Discovery,
        View::Performance => Module::Performance,
        View::Conformance => Module::Conformance,
        View::Handover => Module::Orgmining,
    };
    let payload = blocking(move || app.module_payload(&id, module)).await?;
    let value = match view {
        View::Dfg => payload["dfg"].clone(),
        View::Variants => payload["variants"].clone(),
        View::Handover => payload["handover"].clone(),
        View::Performance | View::Conformance => payload,
    };
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(value).into_response()),
        Some("dot") => {
            let dot = match view {
                View::Dfg => serde_json::from_value::<DirectlyFollowsGraph>(value)?.to_dot(),
                View::Handover => serde_json::from_value::<HandoverNetwork>(value)?.to_dot(),
                _ => return Err(Error::Invalid("format=dot is available for dfg and handover only".into())),
            };
            Ok(([(header::CONTENT_TYPE, HeaderValue::from_static("text/vnd.graphviz"))], dot).into_response())
        }
        Some(other) => Err(Error::Invalid(format!("unknown format {other:?}"))),
    }
}

#[derive(Deserialize)]
struct AnalyzeBody {
    module: String,
}

async fn post_analyze(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>> {
    let body: AnalyzeBody = parse_body(&body)?;
    let module: Module = parse_arg("module", &body.module)?;
    let outcome = blocking(move || app.analyze(&id, module)).await?;
    Ok(Json(serde_json::to_value(outcome)?))
}

#[derive(Deserialize)]
struct SessionBody {
    log_id: String,
    #[serde(default = "default_style")]
    style: String,
}

fn default_style() -> String {
    "optimized".into()
}

async fn post_sessions(State(app): State<Arc<App>>, body: Bytes) -> Result<Response> {
    let body: SessionBody = parse_body(&body)?;
    let style: PromptStyle = parse_arg("style", &body.style)?;
    let session = blocking(move || app.create_session(&body.log_id, style)).await?;
    Ok((StatusCode::CREATED, Json(session)).into_response())
}

async fn get_history(State(app): State<Arc<App>>, Path(id): Path<String>) -> Result<Json<Value>> {
    let (session, results) = blocking(move || Ok((app.session(&id)?, app.analysis_results(&id)?))).await?;
    let mut value = serde_json::to_value(session)?;
    value["results"] = serde_json::to_value(results)?;
    Ok(Json(value))
}

#[derive(Deserialize)]
struct AnalysisBody {
    module: String,
    #[serde(default = "default_task")]
    task: String,
}

fn default_task() -> String {
    "analytics".into()
}

async fn post_analysis(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>> {
    let body: AnalysisBody = parse_body(&body)?;
    let module: Module = parse_arg("module", &body.module)?;
    let task: AnalysisTask = parse_arg("task", &body.task)?;
    let result = blocking(move || app.run_analysis(&id, module, task)).await?;
    Ok(Json(serde_json::to_value(result)?))
}

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn post_message(State(app): State<Arc<App>>, Path(id): Path<String>, body: Bytes) -> Result<Json<Value>> {
    let body: MessageBody = parse_body(&body)?;
    let reply = blocking(move || app.follow_up(&id, &body.text)).await?;
    Ok(Json(serde_json::to_value(reply)?))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RatingsBody {
    Many(Vec<RatingInput>),
    One(Box<RatingInput>),
}

async fn post_ratings(State(app): State<Arc<App>>, body: Bytes) -> Result<Response> {
    let inputs = match parse_body::<RatingsBody>(&body)? {
        RatingsBody::Many(v) => v,
        RatingsBody::One(r) => vec![*r],
    };
    if inputs.is_empty() {
        return Err(Error::Invalid("no ratings in body".into()));
    }
    let ids = blocking(move || app.record_ratings(inputs)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "rating_ids": ids }))).into_response())
}

#[derive(Default, Deserialize)]
struct RatingQuery {
    group_by: Option<String>,
    sector: Option<String>,
    gender: Option<String>,
    style: Option<String>,
    module: Option<String>,
}

impl RatingQuery {
    fn filter(&self) -> Result<RatingFilter> {
        Ok(RatingFilter {
            sector: self.sector.clone(),
            gender: self.gender.clone(),
            style: self.style.as_deref().map(|s| parse_arg("style", s)).transpose()?,
            module: self.module.as_deref().map(|m| parse_arg("module", m)).transpose()?,
        })
    }
}

async fn get_distribution(State(app): State<Arc<App>>, Query(q): Query<RatingQuery>) -> Result<Json<Value>> {
    let filter = q.filter()?;
    let group_by: GroupBy = parse_arg("group_by", q.group_by.as_deref().unwrap_or("overall"))?;
    let report = blocking(move || app.rating_distribution(&filter, group_by)).await?;
    Ok(Json(serde_json::to_value(report)?))
}

async fn get_compare(State(app): State<Arc<App>>, Query(q): Query<RatingQuery>) -> Result<Json<Value>> {
    let filter = q.filter()?;
    let comparison = blocking(move || app.compare_styles(&filter)).await?;
    Ok(Json(serde_json::to_value(comparison)?))
}
