//! HTTP prediction service over immutable loaded artifacts.
//!
//! Posterior summaries are returned as decimal strings in shortest
//! round-trip form so clients can compare responses bit for bit.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rbnma::data::{CovariateKind, CovariateValue};
use rbnma::math::inv_logit;
use rbnma::prediction::{predict, risk_curve, validate_grid, PredictOptions};
use rbnma::risk::RiskModel;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::commands::PredictionModel;

#[derive(Clone, Default)]
pub struct AppState {
    model: Arc<OnceLock<Arc<Loaded>>>,
}

struct Loaded {
    model: PredictionModel,
    options: PredictOptions,
    grid: Vec<f64>,
}

impl AppState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn loaded(model: PredictionModel, options: PredictOptions, grid: Vec<f64>) -> Self {
        let state = Self::default();
        state.install(model, options, grid);
        state
    }

    /// Installs artifacts once; later calls are ignored.
    pub fn install(&self, model: PredictionModel, options: PredictOptions, grid: Vec<f64>) {
        let _ = self.model.set(Arc::new(Loaded { model, options, grid }));
    }

    pub fn is_ready(&self) -> bool {
        self.model.get().is_some()
    }

    fn get(&self) -> Result<Arc<Loaded>, ApiError> {
        self.model.get().cloned().ok_or(ApiError { status: StatusCode::SERVICE_UNAVAILABLE, error: "artifacts are not loaded".into(), fields: Vec::new() })
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/model/meta", get(meta))
        .route("/contexts", get(contexts))
        .route("/predict", post(predict_handler))
        .route("/curve", post(curve_handler))
        .with_state(state)
}

#[derive(Debug, Serialize)]
struct FieldError {
    field: String,
    message: String,
}

#[derive(Debug)]
struct ApiError {
    status: StatusCode,
    error: String,
    fields: Vec<FieldError>,
}

impl ApiError {
    fn field(status: StatusCode, field: &str, message: impl Into<String>) -> Self {
        let message = message.into();
        Self { status, error: format!("{field}: {message}"), fields: vec![FieldError { field: field.into(), message }] }
    }

    fn bad_request(field: &str, message: impl Into<String>) -> Self {
        Self::field(StatusCode::BAD_REQUEST, field, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.error, "fields": self.fields }))).into_response()
    }
}

fn dec(x: f64) -> String {
    format!("{x}")
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field inside backticks
        let field = msg.split('`').nth(1).unwrap_or("body").to_string();
        ApiError::bad_request(&field, msg)
    })
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "ready": state.is_ready() }))
}

async fn meta(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let l = state.get()?;
    let m = &l.model;
    Ok(Json(json!({
        "model_version": m.meta.model_version,
        "seed": m.meta.seed,
        "reference": m.meta.reference,
        "treatments": m.meta.treatments,
        "recalibration": m.meta.recalibration,
        "draws": m.meta.draws,
        "contexts": m.meta.contexts,
        "covariates": m.risk_model.specs(),
        "within_unidentified": m.effects.within_unidentified,
    })))
}

async fn contexts(State(state): State<AppState>) -> Result<Json<Value>, ApiError> {
    let l = state.get()?;
    let list: Vec<Value> = l
        .model
        .contexts
        .iter()
        .map(|c| {
            let a = &c.anchors;
            json!({
                "name": a.context,
                "a": dec(a.a),
                "gamma": dec(a.gamma),
                "mean_logit_risk": dec(a.mean_logit_risk),
                "provenance": a.provenance,
                "patients": c.population_logit_risks.len(),
            })
        })
        .collect();
    Ok(Json(json!({ "contexts": list })))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictRequest {
    covariates: BTreeMap<String, Value>,
    #[serde(default)]
    context: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurveRequest {
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    grid: Option<Vec<f64>>,
}

fn context<'a>(l: &'a Loaded, name: Option<&str>) -> Result<&'a crate::commands::ContextArtifact, ApiError> {
    l.model.context(name).map_err(|e| ApiError::bad_request("context", e.to_string()))
}

/// Checks the request covariates against the model's specs and converts
/// them. Shape problems are 400s; transform-domain problems surface later
/// as 422s.
fn covariates(l: &Loaded, raw: &BTreeMap<String, Value>) -> Result<BTreeMap<String, CovariateValue>, ApiError> {
    let specs = l.model.risk_model.specs();
    let mut out = BTreeMap::new();
    let mut fields = Vec::new();
    for name in raw.keys() {
        if !specs.iter().any(|s| &s.name == name) {
            fields.push(FieldError { field: format!("covariates.{name}"), message: "unknown covariate".into() });
        }
    }
    for spec in specs {
        let field = format!("covariates.{}", spec.name);
        match (raw.get(&spec.name), &spec.kind) {
            (None | Some(Value::Null), _) => {
                if spec.required && spec.impute.is_none() {
                    fields.push(FieldError { field, message: "missing".into() });
                }
            }
            (Some(Value::Number(n)), CovariateKind::Continuous | CovariateKind::Binary) => {
                out.insert(spec.name.clone(), CovariateValue::Number(n.as_f64().unwrap_or(f64::NAN)));
            }
            (Some(Value::String(s)), CovariateKind::Categorical { levels }) => {
                if levels.contains(s) {
                    out.insert(spec.name.clone(), CovariateValue::Level(s.clone()));
                } else {
                    fields.push(FieldError { field, message: format!("expected one of {levels:?}") });
                }
            }
            (Some(Value::Number(n)), CovariateKind::Categorical { levels }) if levels.contains(&n.to_string()) => {
                out.insert(spec.name.clone(), CovariateValue::Level(n.to_string()));
            }
            (Some(other), kind) => {
                let expected = if matches!(kind, CovariateKind::Categorical { .. }) { "a level string" } else { "a number" };
                fields.push(FieldError { field, message: format!("expected {expected}, got {other}") });
            }
        }
    }
    if fields.is_empty() {
        Ok(out)
    } else {
        let error = fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect::<Vec<_>>().join("; ");
        Err(ApiError { status: StatusCode::BAD_REQUEST, error, fields })
    }
}

fn core_error(e: rbnma::Error) -> ApiError {
    match e {
        rbnma::Error::DomainError { name, value } => ApiError::field(StatusCode::UNPROCESSABLE_ENTITY, &format!("covariates.{name}"), format!("value {value} is outside the transform's domain")),
        rbnma::Error::MissingCovariate(name) => ApiError::bad_request(&format!("covariates.{name}"), "missing"),
        rbnma::Error::InvalidCovariate { name, message } => ApiError::bad_request(&format!("covariates.{name}"), message),
        rbnma::Error::EmptyGrid | rbnma::Error::InvalidGrid(_) => ApiError::bad_request("grid", e.to_string()),
        other => ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, error: other.to_string(), fields: Vec::new() },
    }
}

async fn predict_handler(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let l = state.get()?;
    let req: PredictRequest = parse_body(&body)?;
    let ctx = context(&l, req.context.as_deref())?;
    let values = covariates(&l, &req.covariates)?;
    let x = l.model.risk_model.logit_risk(&values).map_err(core_error)?;
    let p = predict(&ctx.anchors, &l.model.effects, x, &l.options).map_err(core_error)?;
    let treatments: Vec<Value> = p
        .treatments
        .iter()
        .map(|t| json!({ "treatment": t.treatment, "mean": dec(t.summary.mean), "q2.5": dec(t.summary.q025), "q50": dec(t.summary.q50), "q97.5": dec(t.summary.q975) }))
        .collect();
    Ok(Json(json!({
        "context": ctx.anchors.context,
        "logit_baseline_risk": dec(x),
        "baseline_risk": dec(inv_logit(x)),
        "treatments": treatments,
        "assumed_no_gap": p.assumed_no_gap,
        "model_version": l.model.meta.model_version,
        "seed": l.model.meta.seed,
    })))
}

async fn curve_handler(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let l = state.get()?;
    let req: CurveRequest = if body.is_empty() { CurveRequest { context: None, grid: None } } else { parse_body(&body)? };
    let ctx = context(&l, req.context.as_deref())?;
    let grid = req.grid.unwrap_or_else(|| l.grid.clone());
    validate_grid(&grid).map_err(core_error)?;
    let c = risk_curve(&ctx.anchors, &l.model.effects, &grid, &ctx.population_logit_risks, &l.options).map_err(core_error)?;
    let observed = |r: f64| c.observed_range.is_some_and(|(lo, hi)| r >= lo && r <= hi);
    let mut rows = Vec::with_capacity(grid.len() * c.curves.len());
    for curve in &c.curves {
        for (k, r) in c.grid.iter().enumerate() {
            rows.push(json!({
                "risk": r,
                "treatment": curve.treatment,
                "p_mean": dec(curve.mean[k]),
                "p_lo": dec(curve.q025[k]),
                "p_hi": dec(curve.q975[k]),
                "in_observed_range": observed(*r),
            }));
        }
    }
    Ok(Json(json!({
        "context": c.context,
        "rows": rows,
        "observed_range": c.observed_range,
        "crossings": c.crossings,
        "model_version": l.model.meta.model_version,
        "seed": l.model.meta.seed,
    })))
}

/// Binds `port`, loads artifacts in the background and serves until the
/// process ends. Requests before loading finishes get 503.
pub async fn serve(port: u16, load: impl FnOnce() -> crate::error::CliResult<(PredictionModel, PredictOptions, Vec<f64>)> + Send + 'static) -> crate::error::CliResult<()> {
    let state = AppState::empty();
    let loader = state.clone();
    tokio::task::spawn_blocking(move || match load() {
        Ok((model, options, grid)) => {
            loader.install(model, options, grid);
            eprintln!("artifacts loaded");
        }
        Err(e) => eprintln!("artifact loading failed: {e}"),
    });
    let addr = std::net::SocketAddr::from(([0, 0, 0, 0], port));
    let listener = tokio::net::TcpListener::bind(addr).await.map_err(|e| crate::error::CliError::Usage(format!("cannot bind {addr}: {e}")))?;
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router(state)).await.map_err(|e| crate::error::CliError::Usage(e.to_string()))
}
