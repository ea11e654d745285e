use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use rbnma_cli::commands::PredictionModel;
use rbnma_cli::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture() -> AppState {
    let grid: Vec<f64> = (1..=99).map(|k| k as f64 / 100.0).collect();
    AppState::loaded(PredictionModel::null_fixture(), Default::default(), grid)
}

async fn call(state: AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, value, bytes)
}

fn centred_patient() -> Value {
    json!({ "covariates": { "age": 40.0, "duration": 0.0, "prior_relapse": 0, "edss_band": "low" }, "context": "trials" })
}

#[tokio::test]
async fn health_reports_readiness() {
    let (s, v, _) = call(AppState::empty(), "GET", "/health", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["ready"], false);
    let (_, v, _) = call(fixture(), "GET", "/health", None).await;
    assert_eq!(v["ready"], true);
}

#[tokio::test]
async fn unloaded_service_returns_503() {
    for (m, uri, body) in [("GET", "/model/meta", None), ("GET", "/contexts", None), ("POST", "/predict", Some(centred_patient())), ("POST", "/curve", Some(json!({})))] {
        let (s, _, _) = call(AppState::empty(), m, uri, body).await;
        assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
    }
}

#[tokio::test]
async fn meta_lists_covariates_and_treatments() {
    let (s, v, _) = call(fixture(), "GET", "/model/meta", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["treatments"], json!(["A", "B", "Placebo"]));
    assert_eq!(v["covariates"].as_array().unwrap().len(), 4);
    assert!(v["model_version"].as_str().unwrap().starts_with("rbnma-"));
}

#[tokio::test]
async fn null_model_gives_equal_probabilities() {
    let (s, v, _) = call(fixture(), "POST", "/predict", Some(centred_patient())).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let t = v["treatments"].as_array().unwrap();
    assert_eq!(t.len(), 3);
    assert!(t.iter().all(|x| x["mean"] == t[0]["mean"]));
    // every covariate at its centring constant: logit R = intercept = -1
    assert_eq!(v["logit_baseline_risk"], "-1");
    let p: f64 = t[0]["mean"].as_str().unwrap().parse().unwrap();
    assert_eq!(p, rbnma::math::inv_logit(-0.2 - 1.0));
}

#[tokio::test]
async fn repeated_and_concurrent_predictions_are_identical() {
    let state = fixture();
    let (_, _, first) = call(state.clone(), "POST", "/predict", Some(centred_patient())).await;
    let (_, _, second) = call(state.clone(), "POST", "/predict", Some(centred_patient())).await;
    assert_eq!(first, second);
    let handles: Vec<_> = (0..8).map(|_| tokio::spawn(call(state.clone(), "POST", "/predict", Some(centred_patient())))).collect();
    for h in handles {
        assert_eq!(h.await.unwrap().2, first);
    }
}

#[tokio::test]
async fn schema_violations_are_400_with_fields() {
    let cases = [
        (json!({ "covariates": { "age": 40.0, "duration": 1.0, "prior_relapse": 0 } }), "covariates.edss_band"),
        (json!({ "covariates": { "age": "old", "duration": 1.0, "prior_relapse": 0, "edss_band": "low" } }), "covariates.age"),
        (json!({ "covariates": { "age": 40.0, "duration": 1.0, "prior_relapse": 0, "edss_band": "extreme" } }), "covariates.edss_band"),
        (json!({ "covariates": { "age": 40.0, "duration": 1.0, "prior_relapse": 0, "edss_band": "low", "bmi": 22 } }), "covariates.bmi"),
        (json!({ "covariates": { "age": 40.0, "duration": 1.0, "prior_relapse": 0, "edss_band": "low" }, "context": "mars" }), "context"),
        (json!({ "covariate": {} }), "covariate"),
    ];
    for (body, field) in cases {
        let (s, v, _) = call(fixture(), "POST", "/predict", Some(body)).await;
        assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");
        assert!(v["fields"].as_array().unwrap().iter().any(|f| f["field"] == field), "{field}: {v}");
    }
}

#[tokio::test]
async fn transform_domain_errors_are_422() {
    let body = json!({ "covariates": { "age": 40.0, "duration": -3.0, "prior_relapse": 0, "edss_band": "low" } });
    let (s, v, _) = call(fixture(), "POST", "/predict", Some(body)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(v["fields"][0]["field"], "covariates.duration");
}

#[tokio::test]
async fn curve_has_one_row_per_grid_point_and_treatment() {
    let (s, v, _) = call(fixture(), "POST", "/curve", Some(json!({ "context": "trials" }))).await;
    assert_eq!(s, StatusCode::OK);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 99 * 3);
    for key in ["risk", "treatment", "p_mean", "p_lo", "p_hi", "in_observed_range"] {
        assert!(rows[0].get(key).is_some(), "{key}");
    }
    let (s, _, _) = call(fixture(), "POST", "/curve", Some(json!({ "grid": [0.2, 1.5] }))).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn contexts_differ_in_observed_range() {
    let (_, v, _) = call(fixture(), "GET", "/contexts", None).await;
    assert_eq!(v["contexts"].as_array().unwrap().len(), 2);
    let (_, a, _) = call(fixture(), "POST", "/curve", Some(json!({ "context": "trials" }))).await;
    let (_, b, _) = call(fixture(), "POST", "/curve", Some(json!({ "context": "cohort" }))).await;
    assert_ne!(a["observed_range"], b["observed_range"]);
}
