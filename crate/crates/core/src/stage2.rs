//! Recalibration of the prognostic model for trial populations.
//!
//! All three methods share one likelihood: for record `i` of study `j`,
//! `logit R_ij = offset_i + sum_c beta_cj * column_c,i`, where `beta_cj` is
//! either common (`beta_cj = b_c`) or exchangeable
//! (`beta_cj = b_c + sd_c * z_cj`, `z_cj ~ N(0, 1)`).
//!
//! | method                 | offset           | columns                                   |
//! |------------------------|------------------|-------------------------------------------|
//! | intercept only         | `logit R*`       | `1`                                       |
//! | intercept and slope    | 0                | `1`, `logit R*`                           |
//! | selective re-estimation| 0                | `1`, parent score of kept terms, freed terms |

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{design_columns, design_matrix, CovariateSpec, IndividualRecord, TrialIpd};
use crate::error::{Error, Result, Warning};
use crate::evaluation::{calibration, CalibrationReport};
use crate::glm::fit_logistic;
use crate::math::{bernoulli_loglik, inv_logit, sd};
use crate::risk::{LinearRiskModel, RiskModel};
use crate::sampler::{diagnostics, sample_posterior, Diagnostics, LogLikelihood, ModelSpec, ParameterBlock, PosteriorDraws, Prior, SamplerConfig};
use crate::stage1::PrognosticModel;

/// Parent linear predictors are clamped to this range before use.
pub const OFFSET_CLAMP: f64 = 15.0;
/// Below this spread of `logit R*` the overall slope is not identified.
pub const WEAK_SLOPE_SD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    InterceptOnly,
    InterceptAndSlope,
    SelectiveReestimation,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::InterceptOnly, Method::InterceptAndSlope, Method::SelectiveReestimation];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::InterceptOnly => "intercept_only",
            Method::InterceptAndSlope => "intercept_and_slope",
            Method::SelectiveReestimation => "selective_reestimation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Pooling {
    #[default]
    Common,
    /// Normal hierarchy across studies. `fixed_sd` pins every
    /// between-study SD instead of estimating it.
    Exchangeable {
        #[serde(default)]
        fixed_sd: Option<f64>,
    },
    /// Separate coefficients per study. Accepted by the parser so that it
    /// can be rejected with a clear message: study-specific scores cannot be
    /// transported to a new population.
    Independent,
}

/// Which trial arms inform the recalibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ArmSelection {
    #[default]
    All,
    ReferenceOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecalibrationConfig {
    pub method: Method,
    pub pooling: Pooling,
    /// Covariate names whose coefficients are re-estimated (selective only).
    pub reestimate: Vec<String>,
    pub arms: ArmSelection,
    pub coefficient_prior_sd: f64,
    pub sd_prior: f64,
    pub sampler: SamplerConfig,
}

impl Default for RecalibrationConfig {
    fn default() -> Self {
        Self {
            method: Method::InterceptOnly,
            pooling: Pooling::Common,
            reestimate: Vec::new(),
            arms: ArmSelection::All,
            coefficient_prior_sd: 10.0,
            sd_prior: 1.0,
            sampler: SamplerConfig::default(),
        }
    }
}

/// Pooled value and, under exchangeable pooling, between-study SD of one
/// recalibration coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledCoefficient {
    pub name: String,
    pub mean: f64,
    pub sd_between: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecalibratedModel {
    pub method: Method,
    pub pooling: Pooling,
    /// `b0`, then `b_overall` when estimated, then the freed coefficients.
    pub coefficients: Vec<PooledCoefficient>,
    pub reestimated: Vec<String>,
    /// Overall slope actually used; 1 when not estimated.
    pub overall_slope: f64,
    pub parent: PrognosticModel,
    /// Risk score for new patients (study effects at their pooled means).
    pub effective: LinearRiskModel,
    pub warnings: Vec<Warning>,
    pub n_records: usize,
    pub n_studies: usize,
}

impl RiskModel for RecalibratedModel {
    fn specs(&self) -> &[CovariateSpec] {
        &self.effective.specs
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.effective.linear_predictor(x)
    }
}

impl RecalibratedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }

    /// Coefficient table: variable, parent coefficient, recalibrated coefficient.
    pub fn coefficient_table_tsv(&self) -> String {
        let parent = self.parent.linear_model().coefficient_table();
        let recal = self.effective.coefficient_table();
        let mut s = String::from("variable\tparent\trecalibrated\treestimated\n");
        let mask = std::iter::once(false).chain(freed_mask(&self.parent.specs, &self.reestimated));
        for (((label, b_parent), (_, b_new)), freed) in parent.iter().zip(&recal).zip(mask) {
            s.push_str(&format!("{label}\t{b_parent:?}\t{b_new:?}\t{freed}\n"));
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct RecalibrationFit {
    pub model: RecalibratedModel,
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    /// Component offsets of the pooled coefficients in the draws.
    pooled_index: Vec<usize>,
}

impl RecalibrationFit {
    /// Effective risk model for one posterior draw.
    pub fn model_for_draw(&self, draw: usize) -> LinearRiskModel {
        let row = self.draws.draw(draw);
        let b: Vec<f64> = self.pooled_index.iter().map(|&k| row[k]).collect();
        effective_model(&self.model.parent, self.model.method, &self.model.reestimated, &b, self.model.overall_slope_fixed())
    }
}

impl RecalibratedModel {
    fn overall_slope_fixed(&self) -> bool {
        self.method != Method::InterceptOnly && !self.coefficients.iter().any(|c| c.name == "b_overall")
    }
}

struct PooledLikelihood<'a> {
    columns: &'a [Vec<f64>],
    offset: &'a [f64],
    y: &'a [bool],
    study: &'a [usize],
    by_study: &'a [Vec<usize>],
    n_cols: usize,
    n_studies: usize,
    /// `(sd offset, z offset)` when exchangeable; a `None` sd offset means
    /// the SD is pinned at `fixed_sd`.
    random: Option<(Option<usize>, usize)>,
    fixed_sd: f64,
}

impl PooledLikelihood<'_> {
    #[inline]
    fn coef(&self, params: &[f64], c: usize, j: usize) -> f64 {
        match self.random {
            None => params[c],
            Some((sd, z)) => {
                let s = sd.map_or(self.fixed_sd, |o| params[o + c]);
                params[c] + s * params[z + c * self.n_studies + j]
            }
        }
    }

    #[inline]
    fn eta(&self, params: &[f64], i: usize) -> f64 {
        let j = self.study[i];
        let mut eta = self.offset[i];
        for c in 0..self.n_cols {
            eta += self.coef(params, c, j) * self.columns[i][c];
        }
        eta
    }

    /// Records touched by a component and the study-specific coefficient it
    /// moves.
    fn affected(&self, index: usize) -> (Option<usize>, usize) {
        if index < self.n_cols {
            return (None, index);
        }
        let (sd, z) = self.random.expect("component beyond pooled means implies exchangeable pooling");
        if let Some(o) = sd {
            if index < o + self.n_cols && index >= o {
                return (None, index - o);
            }
        }
        let k = index - z;
        (Some(k % self.n_studies), k / self.n_studies)
    }
}

impl LogLikelihood for PooledLikelihood<'_> {
    fn log_likelihood(&self, params: &[f64]) -> f64 {
        (0..self.y.len()).map(|i| bernoulli_loglik(self.y[i], self.eta(params, i))).sum()
    }

    fn log_likelihood_change(&self, params: &[f64], index: usize, proposal: f64) -> f64 {
        let (study, c) = self.affected(index);
        let step = proposal - params[index];
        let n_cols = self.n_cols;
        // change of the study-specific coefficient per unit step
        let slope = |j: usize| -> f64 {
            match self.random {
                None => 1.0,
                Some((sd, z)) => {
                    if index < n_cols {
                        1.0
                    } else if sd.is_some_and(|o| index >= o && index < o + n_cols) {
                        params[z + c * self.n_studies + j]
                    } else {
                        sd.map_or(self.fixed_sd, |o| params[o + c])
                    }
                }
            }
        };
        let term = |i: usize| {
            let eta = self.eta(params, i);
            let eta_new = eta + step * slope(self.study[i]) * self.columns[i][c];
            bernoulli_loglik(self.y[i], eta_new) - bernoulli_loglik(self.y[i], eta)
        };
        match study {
            Some(j) => self.by_study[j].iter().map(|&i| term(i)).sum(),
            None => (0..self.y.len()).map(term).sum(),
        }
    }
}

fn selected_records(trials: &[TrialIpd], arms: ArmSelection) -> (Vec<&IndividualRecord>, Vec<usize>) {
    let mut records = Vec::new();
    let mut study = Vec::new();
    for (j, t) in trials.iter().enumerate() {
        for r in &t.records {
            if arms == ArmSelection::All || r.treatment == t.reference_treatment {
                records.push(r);
                study.push(j);
            }
        }
    }
    (records, study)
}

/// Design-column mask of the freed covariates.
fn freed_mask(specs: &[CovariateSpec], subset: &[String]) -> Vec<bool> {
    design_columns(specs).iter().map(|c| subset.contains(&c.covariate)).collect()
}

fn effective_model(parent: &PrognosticModel, method: Method, subset: &[String], b: &[f64], slope_fixed: bool) -> LinearRiskModel {
    let specs = parent.specs.clone();
    match method {
        Method::InterceptOnly => LinearRiskModel { specs, intercept: parent.intercept + b[0], coefficients: parent.slopes.clone() },
        Method::InterceptAndSlope => {
            let slope = if slope_fixed { 1.0 } else { b[1] };
            LinearRiskModel {
                specs,
                intercept: b[0] + slope * parent.intercept,
                coefficients: parent.slopes.iter().map(|s| slope * s).collect(),
            }
        }
        Method::SelectiveReestimation => {
            let mask = freed_mask(&parent.specs, subset);
            let (slope, mut next) = if slope_fixed { (1.0, 1) } else { (b[1], 2) };
            let coefficients = parent
                .slopes
                .iter()
                .zip(&mask)
                .map(|(s, &freed)| {
                    if freed {
                        next += 1;
                        b[next - 1]
                    } else {
                        slope * s
                    }
                })
                .collect();
            LinearRiskModel { specs, intercept: b[0], coefficients }
        }
    }
}

fn validate_config(parent: &PrognosticModel, trials: &[TrialIpd], config: &RecalibrationConfig) -> Result<()> {
    if trials.is_empty() {
        return Err(Error::EmptyInput("no trials to recalibrate on".into()));
    }
    match config.pooling {
        Pooling::Independent => {
            return Err(Error::InvalidRecalibration(
                "independent per-study coefficients give study-specific risk scores that cannot be applied to new patients; use common or exchangeable pooling".into(),
            ))
        }
        Pooling::Exchangeable { fixed_sd } => {
            if trials.len() < 2 {
                return Err(Error::SingleStudyExchangeable);
            }
            if let Some(s) = fixed_sd {
                if !(s >= 0.0 && s.is_finite()) {
                    return Err(Error::InvalidRecalibration(format!("fixed_sd must be finite and nonnegative, got {s}")));
                }
            }
        }
        Pooling::Common => {}
    }
    for name in &config.reestimate {
        if !parent.specs.iter().any(|s| &s.name == name) {
            return Err(Error::SubsetUnknownCovariate(name.clone()));
        }
    }
    if !config.reestimate.is_empty() && config.method != Method::SelectiveReestimation {
        return Err(Error::InvalidRecalibration("a re-estimation subset is only valid with selective_reestimation".into()));
    }
    Ok(())
}

/// Fits one recalibration method on pooled trial IPD.
pub fn recalibrate(parent: &PrognosticModel, trials: &[TrialIpd], config: &RecalibrationConfig) -> Result<RecalibrationFit> {
    validate_config(parent, trials, config)?;
    let specs = &parent.specs;
    for t in trials {
        t.validate(specs)?;
    }
    let (records, study) = selected_records(trials, config.arms);
    let owned: Vec<IndividualRecord> = records.iter().map(|r| (*r).clone()).collect();
    let (x, y) = design_matrix(&owned, specs)?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClassOutcome);
    }
    let parent_lp: Vec<f64> = x.iter().map(|row| parent.linear_predictor(row).clamp(-OFFSET_CLAMP, OFFSET_CLAMP)).collect();

    let mut warnings = Vec::new();
    let mask = freed_mask(specs, &config.reestimate);
    // score of the non-freed terms, without the parent intercept
    let kept_score: Vec<f64> = x
        .iter()
        .map(|row| row.iter().zip(&parent.slopes).zip(&mask).filter(|(_, &f)| !f).map(|((v, b), _)| v * b).sum::<f64>().clamp(-OFFSET_CLAMP, OFFSET_CLAMP))
        .collect();
    let slope_regressor = match config.method {
        Method::InterceptOnly => None,
        Method::InterceptAndSlope => Some(&parent_lp),
        Method::SelectiveReestimation => Some(&kept_score),
    };
    let slope_fixed = match slope_regressor {
        Some(v) if sd(v) < WEAK_SLOPE_SD => {
            warnings.push(Warning::WeakIdentification {
                parameter: "b_overall".into(),
                detail: format!("SD of the slope regressor is {:e}; overall slope fixed at 1", sd(v)),
            });
            true
        }
        _ => false,
    };

    let mut names = vec!["b0".to_string()];
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = vec![vec![1.0]; n];
    let mut offset = vec![0.0; n];
    match config.method {
        Method::InterceptOnly => offset.copy_from_slice(&parent_lp),
        Method::InterceptAndSlope => {
            if slope_fixed {
                offset.copy_from_slice(&parent_lp);
            } else {
                names.push("b_overall".into());
                for (c, lp) in columns.iter_mut().zip(&parent_lp) {
                    c.push(*lp);
                }
            }
        }
        Method::SelectiveReestimation => {
            if slope_fixed {
                offset.copy_from_slice(&kept_score);
            } else {
                names.push("b_overall".into());
                for (c, s) in columns.iter_mut().zip(&kept_score) {
                    c.push(*s);
                }
            }
            let design = design_columns(specs);
            for (k, col) in design.iter().enumerate() {
                if mask[k] {
                    names.push(format!("b[{}]", col.name));
                    for (c, row) in columns.iter_mut().zip(&x) {
                        c.push(row[k]);
                    }
                }
            }
        }
    }
    let n_cols = names.len();
    let n_studies = trials.len();

    // Start at the maximum-likelihood solution when it exists.
    let init = fit_logistic(&columns, &y, Some(&offset)).ok().map(|f| f.coefficients);
    let mut spec = ModelSpec::new();
    for (c, name) in names.iter().enumerate() {
        let prior_mean = if name == "b_overall" { 1.0 } else { 0.0 };
        let mut block = ParameterBlock::scalar(name.clone(), Prior::normal(prior_mean, config.coefficient_prior_sd));
        if let Some(init) = &init {
            block = block.with_init(vec![init[c]]);
        }
        spec.push(block);
    }
    let (random, fixed_sd) = match config.pooling {
        Pooling::Exchangeable { fixed_sd } => {
            let sd_offset = match fixed_sd {
                None => Some(spec.push(ParameterBlock::new("sd_between", n_cols, Prior::HalfNormal { sd: config.sd_prior }))),
                Some(_) => None,
            };
            let z = spec.push(ParameterBlock::new("z", n_cols * n_studies, Prior::normal(0.0, 1.0)));
            (Some((sd_offset, z)), fixed_sd.unwrap_or(0.0))
        }
        _ => (None, 0.0),
    };

    let mut by_study = vec![Vec::new(); n_studies];
    for (i, &j) in study.iter().enumerate() {
        by_study[j].push(i);
    }
    let lik = PooledLikelihood { columns: &columns, offset: &offset, y: &y, study: &study, by_study: &by_study, n_cols, n_studies, random, fixed_sd };
    let draws = sample_posterior(&spec, &lik, &config.sampler)?;
    let means = draws.means();
    let diag = diagnostics(&draws)?;
    for p in diag.nonconvergent(crate::sampler::RHAT_LIMIT) {
        if !p.name.starts_with("z[") {
            warnings.push(Warning::NonConvergent { parameter: p.name.clone(), rhat: p.rhat });
        }
    }

    let coefficients: Vec<PooledCoefficient> = names
        .iter()
        .enumerate()
        .map(|(c, name)| PooledCoefficient {
            name: name.clone(),
            mean: means[c],
            sd_between: match random {
                Some((Some(o), _)) => Some(means[o + c]),
                Some((None, _)) => Some(fixed_sd),
                None => None,
            },
        })
        .collect();
    let b: Vec<f64> = means[..n_cols].to_vec();
    let effective = effective_model(parent, config.method, &config.reestimate, &b, slope_fixed);
    let overall_slope = match config.method {
        Method::InterceptOnly => 1.0,
        _ if slope_fixed => 1.0,
        _ => b[1],
    };
    Ok(RecalibrationFit {
        model: RecalibratedModel {
            method: config.method,
            pooling: config.pooling,
            coefficients,
            reestimated: config.reestimate.clone(),
            overall_slope,
            parent: parent.clone(),
            effective,
            warnings,
            n_records: n,
            n_studies,
        },
        draws,
        diagnostics: diag,
        pooled_index: (0..n_cols).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub auc: f64,
    pub calibration_slope: f64,
    pub calibration: CalibrationReport,
    pub model: RecalibratedModel,
}

/// Fits each method and ranks them by AUC on the pooled trial IPD, breaking
/// ties by the distance of the calibration slope from 1.
pub fn compare_recalibrations(parent: &PrognosticModel, trials: &[TrialIpd], methods: &[Method], config: &RecalibrationConfig) -> Result<Vec<MethodReport>> {
    let methods: BTreeSet<Method> = methods.iter().copied().collect();
    let mut reports = Vec::new();
    let all: Vec<IndividualRecord> = selected_records(trials, config.arms).0.into_iter().cloned().collect();
    let y: Vec<bool> = all.iter().map(IndividualRecord::event).collect();
    for method in methods {
        let mut cfg = config.clone();
        cfg.method = method;
        if method != Method::SelectiveReestimation {
            cfg.reestimate.clear();
        }
        let fit = recalibrate(parent, trials, &cfg)?;
        let preds: Vec<f64> = fit.model.record_logit_risks(&all)?.into_iter().map(inv_logit).collect();
        let report = calibration(&preds, &y)?;
        reports.push(MethodReport { method, auc: report.auc, calibration_slope: report.calibration_slope, calibration: report, model: fit.model });
    }
    reports.sort_by(|a, b| b.auc.total_cmp(&a.auc).then((a.calibration_slope - 1.0).abs().total_cmp(&(b.calibration_slope - 1.0).abs())));
    Ok(reports)
}

/// Comparison table: rank, method, AUC, calibration slope and intercept.
pub fn comparison_tsv(reports: &[MethodReport]) -> String {
    let mut s = String::from("rank\tmethod\tauc\tcalibration_slope\tcalibration_intercept\n");
    for (i, r) in reports.iter().enumerate() {
        s.push_str(&format!("{}\t{}\t{:?}\t{:?}\t{:?}\n", i + 1, r.method.as_str(), r.auc, r.calibration_slope, r.calibration.calibration_intercept));
    }
    s
}

/// Drift heuristic for choosing the re-estimation subset: for each
/// covariate, the univariate logistic slope is fitted on the cohort and on
/// the pooled trials; the `k` covariates with the largest absolute
/// difference (summed over their design columns) are returned.
pub fn suggest_reestimation_subset(cohort: &[IndividualRecord], trials: &[TrialIpd], specs: &[CovariateSpec], k: usize) -> Result<Vec<String>> {
    let trial_records: Vec<IndividualRecord> = trials.iter().flat_map(|t| t.records.iter().cloned()).collect();
    let mut drift: Vec<(f64, String)> = Vec::new();
    for spec in specs {
        let one = std::slice::from_ref(spec);
        let slopes = |records: &[IndividualRecord]| -> Result<Vec<f64>> {
            let (x, y) = design_matrix(records, one)?;
            let rows: Vec<Vec<f64>> = x.into_iter().map(|r| std::iter::once(1.0).chain(r).collect()).collect();
            Ok(fit_logistic(&rows, &y, None)?.coefficients[1..].to_vec())
        };
        let (a, b) = (slopes(cohort)?, slopes(&trial_records)?);
        let d: f64 = a.iter().zip(&b).map(|(u, v)| (u - v).abs()).sum();
        drift.push((d, spec.name.clone()));
    }
    drift.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(drift.into_iter().take(k).map(|(_, n)| n).collect())
}

/// Posterior-mean recalibrated logit risks of every record, by study id.
pub fn trial_logit_risks<M: RiskModel + ?Sized>(model: &M, trials: &[TrialIpd]) -> Result<BTreeMap<String, Vec<f64>>> {
    trials.iter().map(|t| Ok((t.study_id.clone(), model.record_logit_risks(&t.records)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateValue, Transform};
    use crate::stage1::{RandomEffectSds, RandomEffects};

    fn parent(intercept: f64, slope: f64) -> PrognosticModel {
        PrognosticModel {
            format_version: 1,
            specs: vec![CovariateSpec::continuous("x", Transform::Identity), CovariateSpec::continuous("w", Transform::Identity)],
            columns: vec!["x".into(), "w".into()],
            intercept,
            slopes: vec![slope, 0.5],
            random_effects: RandomEffects::None,
            random_effect_sds: RandomEffectSds { intercept: None, slopes: vec![] },
            n_records: 0,
            n_subjects: 0,
            seed: 0,
        }
    }

    fn trial(id: &str) -> TrialIpd {
        let records = (0..40)
            .map(|i| {
                let mut c = BTreeMap::new();
                c.insert("x".to_string(), CovariateValue::Number(i as f64 / 10.0));
                c.insert("w".to_string(), CovariateValue::Number(1.0));
                IndividualRecord { subject_id: format!("{id}-{i}"), cycle: 1, covariates: c, treatment: if i % 2 == 0 { "P" } else { "A" }.into(), outcome: (i % 3 == 0) as u8 }
            })
            .collect();
        TrialIpd { study_id: id.into(), reference_treatment: "P".into(), records }
    }

    #[test]
    fn config_errors() {
        let p = parent(-1.0, 1.0);
        let one = [trial("s1")];
        let cfg = RecalibrationConfig { pooling: Pooling::Exchangeable { fixed_sd: None }, ..Default::default() };
        assert_eq!(recalibrate(&p, &one, &cfg).unwrap_err(), Error::SingleStudyExchangeable);
        let cfg = RecalibrationConfig { method: Method::SelectiveReestimation, reestimate: vec!["edss".into()], ..Default::default() };
        assert_eq!(recalibrate(&p, &one, &cfg).unwrap_err(), Error::SubsetUnknownCovariate("edss".into()));
        let cfg = RecalibrationConfig { pooling: Pooling::Independent, ..Default::default() };
        assert!(matches!(recalibrate(&p, &one, &cfg).unwrap_err(), Error::InvalidRecalibration(_)));
    }

    #[test]
    fn effective_models_compose_parent_terms() {
        let p = parent(-1.0, 2.0);
        let m = effective_model(&p, Method::InterceptOnly, &[], &[0.3], false);
        assert_eq!((m.intercept, m.coefficients.clone()), (-0.7, vec![2.0, 0.5]));
        let m = effective_model(&p, Method::InterceptAndSlope, &[], &[0.3, 0.5], false);
        assert_eq!((m.intercept, m.coefficients.clone()), (-0.2, vec![1.0, 0.25]));
        let m = effective_model(&p, Method::SelectiveReestimation, &["w".to_string()], &[0.3, 0.5, -1.0], false);
        assert_eq!((m.intercept, m.coefficients.clone()), (0.3, vec![1.0, -1.0]));
    }

    #[test]
    fn zero_slope_parent_flags_weak_slope() {
        let mut p = parent(-1.0, 0.0);
        p.slopes = vec![0.0, 0.0];
        let cfg = RecalibrationConfig { method: Method::InterceptAndSlope, sampler: SamplerConfig { warmup: 300, iterations: 300, ..SamplerConfig::quick(1) }, ..Default::default() };
        let fit = recalibrate(&p, &[trial("a")], &cfg).unwrap();
        assert!(fit.model.warnings.iter().any(|w| matches!(w, Warning::WeakIdentification { parameter, .. } if parameter == "b_overall")));
        assert_eq!(fit.model.overall_slope, 1.0);
        assert_eq!(fit.model_for_draw(0).coefficients, vec![0.0, 0.0]);
    }
}
