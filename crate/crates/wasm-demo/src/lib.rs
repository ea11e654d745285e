//! Browser bindings for three operations of the prediction engine:
//! treatment-specific probabilities for one patient, risk curves over a
//! baseline-risk grid, and the pseudo-IPD aggregation gap.
//!
//! Every export takes and returns JSON strings. The plain functions
//! (`*_json`) hold the logic so they can be tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rbnma::data::{CovariateSpec, Transform};
use rbnma::math::{inv_logit, logit};
use rbnma::nma::EffectDraws;
use rbnma::prediction::{predict, risk_curve, PredictOptions, PredictionAnchors};
use rbnma::pseudo_ipd::{generate_pseudo_ipd, mean_logit_risk, mean_risk, CovarianceModel, Moment};
use rbnma::risk::{LinearRiskModel, RiskModel};
use serde::{Deserialize, Serialize};
use serde_json::json;
use wasm_bindgen::prelude::*;

pub const REFERENCE: &str = "Placebo";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreatmentParams {
    pub name: String,
    /// Log odds ratio against the reference at logit risk 0.
    pub delta: f64,
    pub gamma_w: f64,
    pub gamma_b: f64,
}

/// Point parameters of a fitted model plus a posterior SD used to draw
/// effect samples, so the curves carry credible bands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemoModel {
    pub a: f64,
    pub gamma: f64,
    /// Mean baseline risk of the population (probability scale).
    pub mean_risk: f64,
    pub effect_sd: f64,
    pub draws: usize,
    pub seed: u64,
    pub treatments: Vec<TreatmentParams>,
}

impl Default for DemoModel {
    fn default() -> Self {
        let t = |name: &str, or: f64, g: f64| TreatmentParams { name: name.into(), delta: f64::ln(or), gamma_w: g, gamma_b: g };
        Self { a: 0.0, gamma: 1.0, mean_risk: 0.3, effect_sd: 0.1, draws: 400, seed: 7, treatments: vec![t("A", 0.5, -0.4), t("B", 0.7, -0.2)] }
    }
}

fn parse_model(text: &str) -> Result<DemoModel, String> {
    let m: DemoModel = serde_json::from_str(text).map_err(|e| format!("model: {e}"))?;
    if !(m.mean_risk > 0.0 && m.mean_risk < 1.0) {
        return Err("mean_risk must lie in (0, 1)".into());
    }
    if !(m.effect_sd >= 0.0 && m.effect_sd.is_finite()) {
        return Err("effect_sd must be a non-negative number".into());
    }
    if m.draws == 0 || m.draws > 20_000 {
        return Err("draws must lie in 1..=20000".into());
    }
    if m.treatments.iter().any(|t| t.name == REFERENCE) {
        return Err(format!("`{REFERENCE}` is the reference and cannot be listed"));
    }
    Ok(m)
}

fn check_risk(name: &str, r: f64) -> Result<(), String> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(format!("{name} must lie strictly between 0 and 1"))
    }
}

fn build(m: &DemoModel) -> (PredictionAnchors, EffectDraws) {
    let anchors = PredictionAnchors::point("demo", m.a, m.gamma, logit(m.mean_risk));
    let mut names: Vec<String> = m.treatments.iter().map(|t| t.name.clone()).collect();
    names.push(REFERENCE.into());
    let mut effects = EffectDraws::point(names, REFERENCE, Vec::new(), Vec::new(), Vec::new());
    effects.delta.clear();
    effects.gamma_w.clear();
    effects.gamma_b.clear();
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let mut z = move || -> f64 { StandardNormal.sample(&mut rng) };
    for _ in 0..m.draws {
        let mut delta: Vec<f64> = m.treatments.iter().map(|t| t.delta + m.effect_sd * z()).collect();
        let mut gw: Vec<f64> = m.treatments.iter().map(|t| t.gamma_w + 0.5 * m.effect_sd * z()).collect();
        // keep the requested gap gamma_b - gamma_w fixed within each draw
        let mut gb: Vec<f64> = m.treatments.iter().zip(&gw).map(|(t, w)| w + t.gamma_b - t.gamma_w).collect();
        delta.push(0.0);
        gw.push(0.0);
        gb.push(0.0);
        effects.delta.push(delta);
        effects.gamma_w.push(gw);
        effects.gamma_b.push(gb);
    }
    (anchors, effects)
}

/// Probabilities of every treatment for one patient with baseline risk
/// `baseline_risk`.
pub fn predict_point_json(model: &str, baseline_risk: f64) -> Result<String, String> {
    let m = parse_model(model)?;
    check_risk("baseline_risk", baseline_risk)?;
    let (anchors, effects) = build(&m);
    let p = predict(&anchors, &effects, logit(baseline_risk), &PredictOptions::default()).map_err(|e| e.to_string())?;
    let rows: Vec<_> = p.treatments.iter().map(|t| json!({ "treatment": t.treatment, "mean": t.summary.mean, "lo": t.summary.q025, "hi": t.summary.q975 })).collect();
    Ok(json!({ "logit_risk": p.logit_risk, "best": p.best(), "treatments": rows }).to_string())
}

/// Posterior-mean curves with 95% bands over `points` risks in (0, 1).
/// `observed_lo..observed_hi` marks the population's risk range.
pub fn risk_curves_json(model: &str, points: usize, observed_lo: f64, observed_hi: f64) -> Result<String, String> {
    let m = parse_model(model)?;
    if !(2..=500).contains(&points) {
        return Err("points must lie in 2..=500".into());
    }
    check_risk("observed_lo", observed_lo)?;
    check_risk("observed_hi", observed_hi)?;
    let (anchors, effects) = build(&m);
    let grid: Vec<f64> = (1..=points).map(|k| k as f64 / (points + 1) as f64).collect();
    let population = [logit(observed_lo.min(observed_hi)), logit(observed_lo.max(observed_hi))];
    let c = risk_curve(&anchors, &effects, &grid, &population, &PredictOptions::default()).map_err(|e| e.to_string())?;
    let curves: Vec<_> = c.curves.iter().map(|t| json!({ "treatment": t.treatment, "mean": t.mean, "lo": t.q025, "hi": t.q975 })).collect();
    let crossings: Vec<_> = c.crossings.iter().map(|x| json!({ "first": x.first, "second": x.second, "risk": x.baseline_risk })).collect();
    Ok(json!({ "grid": c.grid, "curves": curves, "observed_range": c.observed_range, "crossings": crossings }).to_string())
}

/// Mean risk of a study summarized by a single covariate's mean and SD,
/// computed from pseudo rows, next to the risk at the mean covariate.
pub fn aggregation_gap_json(intercept: f64, slope: f64, mean: f64, sd: f64, rows: usize, seed: u64) -> Result<String, String> {
    if ![intercept, slope, mean].iter().all(|v| v.is_finite()) || !(sd >= 0.0 && sd.is_finite()) {
        return Err("intercept, slope and mean must be finite and sd non-negative".into());
    }
    if !(1..=100_000).contains(&rows) {
        return Err("rows must lie in 1..=100000".into());
    }
    let specs = vec![CovariateSpec::continuous("x", Transform::Identity)];
    let model = LinearRiskModel::new(specs.clone(), intercept, vec![slope]).map_err(|e| e.to_string())?;
    let cov = CovarianceModel { specs, means: vec![mean], covariance: vec![vec![sd * sd]], n_records: 0, warnings: Vec::new() };
    let pseudo = generate_pseudo_ipd(&[Moment::Continuous { mean, sd: Some(sd) }], &cov, rows, seed).map_err(|e| e.to_string())?;
    let individual = mean_risk(&model, &pseudo);
    let at_mean = inv_logit(model.linear_predictor(&[mean]));
    Ok(json!({
        "mean_individual_risk": individual,
        "risk_at_mean_covariate": at_mean,
        "gap": individual - at_mean,
        "mean_logit_risk": mean_logit_risk(&model, &pseudo),
    })
    .to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Demo model (JSON) the page starts from.
#[wasm_bindgen]
pub fn default_model() -> String {
    serde_json::to_string_pretty(&DemoModel::default()).expect("model serializes")
}

#[wasm_bindgen]
pub fn predict_point(model: &str, baseline_risk: f64) -> Result<String, JsError> {
    js(predict_point_json(model, baseline_risk))
}

#[wasm_bindgen]
pub fn risk_curves(model: &str, points: usize, observed_lo: f64, observed_hi: f64) -> Result<String, JsError> {
    js(risk_curves_json(model, points, observed_lo, observed_hi))
}

#[wasm_bindgen]
pub fn aggregation_gap(intercept: f64, slope: f64, mean: f64, sd: f64, rows: usize, seed: u64) -> Result<String, JsError> {
    js(aggregation_gap_json(intercept, slope, mean, sd, rows, seed))
}
