//! Baseline-risk prognostic model on cohort data.
//!
//! `logit R* = b0 + u0_i + sum_k (b_k + u_k_i) x_ik` with subject-level
//! random effects `u ~ N(0, sd^2)` accounting for subjects that contribute
//! several cycles. Slopes get Laplace shrinkage priors. Random effects are
//! sampled non-centred (`u = sd * z`, `z ~ N(0, 1)`), which mixes far better
//! when each subject has only one to three binary outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{design_columns, design_matrix, validate_records, validate_specs, CovariateSpec, IndividualRecord};
use crate::error::{Error, Result};
use crate::evaluation::{auc, calibration_slope};
use crate::math::{bernoulli_loglik, inv_logit, mix_seed};
use crate::risk::{LinearRiskModel, RiskModel};
use crate::sampler::{diagnostics, sample_posterior, LogLikelihood, ModelSpec, ParameterBlock, PosteriorDraws, Prior, SamplerConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;
/// Posterior-mean slopes beyond this magnitude indicate separation.
pub const SEPARATION_LIMIT: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RandomEffects {
    None,
    #[default]
    InterceptOnly,
    InterceptAndSlopes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrognosticConfig {
    /// Scale of the Laplace prior on each slope.
    pub prior_scale: f64,
    /// Use `Normal(0, flat_prior_sd)` on slopes instead of Laplace shrinkage.
    pub flat_slopes: bool,
    pub flat_prior_sd: f64,
    pub intercept_prior_sd: f64,
    pub random_effects: RandomEffects,
    pub random_sd_prior: f64,
    pub sampler: SamplerConfig,
}

impl Default for PrognosticConfig {
    fn default() -> Self {
        Self {
            prior_scale: 1.0,
            flat_slopes: false,
            flat_prior_sd: 100.0,
            intercept_prior_sd: 10.0,
            random_effects: RandomEffects::InterceptOnly,
            random_sd_prior: 1.0,
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEffectSds {
    pub intercept: Option<f64>,
    pub slopes: Vec<f64>,
}

/// Posterior-mean point model. New subjects are predicted with their random
/// effects at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrognosticModel {
    pub format_version: u32,
    pub specs: Vec<CovariateSpec>,
    pub columns: Vec<String>,
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub random_effects: RandomEffects,
    pub random_effect_sds: RandomEffectSds,
    pub n_records: usize,
    pub n_subjects: usize,
    pub seed: u64,
}

impl PrognosticModel {
    pub fn linear_model(&self) -> LinearRiskModel {
        LinearRiskModel { specs: self.specs.clone(), intercept: self.intercept, coefficients: self.slopes.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: PrognosticModel = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Serialization(format!("unsupported model format version {}", m.format_version)));
        }
        validate_specs(&m.specs)?;
        if m.slopes.len() != design_columns(&m.specs).len() {
            return Err(Error::DimensionMismatch { expected: design_columns(&m.specs).len(), found: m.slopes.len() });
        }
        Ok(m)
    }
}

impl RiskModel for PrognosticModel {
    fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.slopes.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}

/// `R* = inv_logit(b0 + sum_k b_k x_k)` for a new subject.
pub fn predict_baseline_risk(model: &PrognosticModel, covariates: &BTreeMap<String, crate::data::CovariateValue>) -> Result<f64> {
    model.risk(covariates)
}

#[derive(Debug, Clone)]
pub struct PrognosticFit {
    pub model: PrognosticModel,
    pub draws: PosteriorDraws,
}

struct Layout {
    p: usize,
    n_subjects: usize,
    random: RandomEffects,
    sd_u0: usize,
    z_u0: usize,
    sd_uk: usize,
    z_uk: usize,
}

struct CohortLikelihood<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool],
    subject: Vec<usize>,
    by_subject: Vec<Vec<usize>>,
    layout: Layout,
}

impl CohortLikelihood<'_> {
    #[inline]
    fn eta(&self, params: &[f64], i: usize) -> f64 {
        let l = &self.layout;
        let s = self.subject[i];
        let x = &self.x[i];
        let mut eta = params[0];
        for k in 0..l.p {
            eta += params[1 + k] * x[k];
        }
        match l.random {
            RandomEffects::None => {}
            RandomEffects::InterceptOnly => eta += params[l.sd_u0] * params[l.z_u0 + s],
            RandomEffects::InterceptAndSlopes => {
                eta += params[l.sd_u0] * params[l.z_u0 + s];
                for k in 0..l.p {
                    eta += params[l.sd_uk + k] * params[l.z_uk + k * l.n_subjects + s] * x[k];
                }
            }
        }
        eta
    }

    /// Derivative of the linear predictor of record `i` with respect to
    /// component `index` (the model is linear in each component given the rest).
    #[inline]
    fn d_eta(&self, params: &[f64], i: usize, index: usize) -> f64 {
        let l = &self.layout;
        let s = self.subject[i];
        if index == 0 {
            1.0
        } else if index <= l.p {
            self.x[i][index - 1]
        } else if index == l.sd_u0 {
            params[l.z_u0 + s]
        } else if index < l.z_u0 + l.n_subjects && index >= l.z_u0 {
            params[l.sd_u0]
        } else if index >= l.sd_uk && index < l.sd_uk + l.p {
            let k = index - l.sd_uk;
            params[l.z_uk + k * l.n_subjects + s] * self.x[i][k]
        } else {
            let k = (index - l.z_uk) / l.n_subjects;
            params[l.sd_uk + k] * self.x[i][k]
        }
    }

    fn subject_of(&self, index: usize) -> Option<usize> {
        let l = &self.layout;
        if l.random != RandomEffects::None && index >= l.z_u0 && index < l.z_u0 + l.n_subjects {
            return Some(index - l.z_u0);
        }
        if l.random == RandomEffects::InterceptAndSlopes && index >= l.z_uk {
            return Some((index - l.z_uk) % l.n_subjects);
        }
        None
    }
}

impl LogLikelihood for CohortLikelihood<'_> {
    fn log_likelihood(&self, params: &[f64]) -> f64 {
        (0..self.y.len()).map(|i| bernoulli_loglik(self.y[i], self.eta(params, i))).sum()
    }

    fn log_likelihood_change(&self, params: &[f64], index: usize, proposal: f64) -> f64 {
        let step = proposal - params[index];
        let term = |i: usize| {
            let eta = self.eta(params, i);
            let eta_new = eta + step * self.d_eta(params, i, index);
            bernoulli_loglik(self.y[i], eta_new) - bernoulli_loglik(self.y[i], eta)
        };
        match self.subject_of(index) {
            Some(s) => self.by_subject[s].iter().map(|&i| term(i)).sum(),
            None => (0..self.y.len()).map(term).sum(),
        }
    }
}

fn subject_index(records: &[IndividualRecord]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
    for r in records {
        let next = ids.len();
        ids.entry(r.subject_id.as_str()).or_insert(next);
    }
    let subject: Vec<usize> = records.iter().map(|r| ids[r.subject_id.as_str()]).collect();
    let mut by_subject = vec![Vec::new(); ids.len()];
    for (i, &s) in subject.iter().enumerate() {
        by_subject[s].push(i);
    }
    (subject, by_subject)
}

/// Bayesian fit of the prognostic model. Returns the posterior-mean point
/// model together with the draws.
pub fn fit_prognostic(cohort: &[IndividualRecord], specs: &[CovariateSpec], config: &PrognosticConfig) -> Result<PrognosticFit> {
    validate_specs(specs)?;
    if !(config.prior_scale > 0.0) {
        return Err(Error::InvalidPrior { name: "slopes".into(), message: "prior_scale must be positive".into() });
    }
    validate_records(cohort, specs)?;
    let (x, y) = design_matrix(cohort, specs)?;
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClassOutcome);
    }
    let (subject, by_subject) = subject_index(cohort);
    let n_subjects = by_subject.len();
    if n_subjects < 2 {
        return Err(Error::EmptyInput("at least two subjects are required".into()));
    }
    let columns: Vec<String> = design_columns(specs).into_iter().map(|c| c.name).collect();
    let p = columns.len();

    let mut spec = ModelSpec::new();
    spec.push(ParameterBlock::scalar("intercept", Prior::normal(0.0, config.intercept_prior_sd)));
    if p > 0 {
        let slope_prior = if config.flat_slopes {
            Prior::normal(0.0, config.flat_prior_sd)
        } else {
            Prior::Laplace { location: 0.0, scale: config.prior_scale }
        };
        spec.push(ParameterBlock::new("slope", p, slope_prior));
    }
    let hyper = Prior::HalfNormal { sd: config.random_sd_prior };
    let (mut sd_u0, mut z_u0, mut sd_uk, mut z_uk) = (usize::MAX, usize::MAX, usize::MAX, usize::MAX);
    if config.random_effects != RandomEffects::None {
        sd_u0 = spec.push(ParameterBlock::scalar("sd_u0", hyper));
        z_u0 = spec.push(ParameterBlock::new("z_u0", n_subjects, Prior::normal(0.0, 1.0)));
    }
    if config.random_effects == RandomEffects::InterceptAndSlopes && p > 0 {
        sd_uk = spec.push(ParameterBlock::new("sd_uk", p, hyper));
        z_uk = spec.push(ParameterBlock::new("z_uk", p * n_subjects, Prior::normal(0.0, 1.0)));
    }
    let random = if p == 0 && config.random_effects == RandomEffects::InterceptAndSlopes {
        RandomEffects::InterceptOnly
    } else {
        config.random_effects
    };

    let lik = CohortLikelihood { x: &x, y: &y, subject, by_subject, layout: Layout { p, n_subjects, random, sd_u0, z_u0, sd_uk, z_uk } };
    let draws = sample_posterior(&spec, &lik, &config.sampler)?;
    let means = draws.means();

    let slopes: Vec<f64> = means[1..1 + p].to_vec();
    for (name, &b) in columns.iter().zip(&slopes) {
        if b.abs() > SEPARATION_LIMIT {
            return Err(Error::SeparationSuspected { parameter: name.clone(), value: b });
        }
    }
    let random_effect_sds = RandomEffectSds {
        intercept: (random != RandomEffects::None).then(|| means[sd_u0]),
        slopes: if random == RandomEffects::InterceptAndSlopes { means[sd_uk..sd_uk + p].to_vec() } else { Vec::new() },
    };

    Ok(PrognosticFit {
        model: PrognosticModel {
            format_version: MODEL_FORMAT_VERSION,
            specs: specs.to_vec(),
            columns,
            intercept: means[0],
            slopes,
            random_effects: random,
            random_effect_sds,
            n_records: cohort.len(),
            n_subjects,
            seed: config.sampler.seed,
        },
        draws,
    })
}

impl PrognosticFit {
    /// Convergence summary of the fixed effects and variance components.
    pub fn structural_diagnostics(&self) -> Result<crate::sampler::Diagnostics> {
        let mut d = diagnostics(&self.draws)?;
        d.parameters.retain(|p| !p.name.starts_with("z_"));
        Ok(d)
    }
}

/// Something that can refit a risk score on a resampled cohort.
pub trait PrognosticFitter: Sync {
    fn fit(&self, cohort: &[IndividualRecord], seed: u64) -> Result<LinearRiskModel>;
}

/// The Bayesian fitter used by default.
pub struct BayesianFitter {
    pub specs: Vec<CovariateSpec>,
    pub config: PrognosticConfig,
}

impl PrognosticFitter for BayesianFitter {
    fn fit(&self, cohort: &[IndividualRecord], seed: u64) -> Result<LinearRiskModel> {
        let mut config = self.config.clone();
        config.sampler.seed = seed;
        Ok(fit_prognostic(cohort, &self.specs, &config)?.model.linear_model())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub auc: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimismReport {
    pub apparent: Performance,
    pub optimism: Performance,
    pub corrected: Performance,
    pub replicates: usize,
    pub failed: usize,
}

/// Discrimination and calibration slope of `model` on `records`.
pub fn performance(model: &LinearRiskModel, records: &[IndividualRecord]) -> Result<Performance> {
    let preds: Vec<f64> = model.record_logit_risks(records)?.into_iter().map(inv_logit).collect();
    let y: Vec<bool> = records.iter().map(IndividualRecord::event).collect();
    Ok(Performance { auc: auc(&preds, &y)?, slope: calibration_slope(&preds, &y)? })
}

/// Resamples subjects with replacement, keeping every subject's cycles
/// together. Repeated subjects get distinct ids (`id#copy`).
pub fn resample_subjects(cohort: &[IndividualRecord], seed: u64) -> Vec<IndividualRecord> {
    use rand::{Rng, SeedableRng};
    let mut groups: BTreeMap<&str, Vec<&IndividualRecord>> = BTreeMap::new();
    for r in cohort {
        groups.entry(r.subject_id.as_str()).or_default().push(r);
    }
    let groups: Vec<Vec<&IndividualRecord>> = groups.into_values().collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cohort.len());
    for copy in 0..groups.len() {
        let g = &groups[rng.random_range(0..groups.len())];
        for r in g {
            let mut r = (*r).clone();
            r.subject_id = format!("{}#{copy}", r.subject_id);
            out.push(r);
        }
    }
    out
}

/// Harrell's bootstrap: optimism is the mean over replicates of
/// (performance on the bootstrap sample - performance on the original
/// sample) of the model refitted on the bootstrap sample.
pub fn bootstrap_optimism<F: PrognosticFitter + ?Sized>(cohort: &[IndividualRecord], fitter: &F, replicates: usize, seed: u64) -> Result<OptimismReport> {
    if replicates == 0 {
        return Err(Error::InvalidSamplerConfig("at least one bootstrap replicate is required".into()));
    }
    let original = fitter.fit(cohort, mix_seed(seed, u64::MAX))?;
    let apparent = performance(&original, cohort)?;

    let run = |b: usize| -> Result<(Performance, Performance)> {
        let boot = resample_subjects(cohort, mix_seed(seed, 2 * b as u64));
        let model = fitter.fit(&boot, mix_seed(seed, 2 * b as u64 + 1))?;
        Ok((performance(&model, &boot)?, performance(&model, cohort)?))
    };
    #[cfg(feature = "parallel")]
    let results: Vec<Result<(Performance, Performance)>> = {
        use rayon::prelude::*;
        (0..replicates).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<(Performance, Performance)>> = (0..replicates).map(run).collect();

    let ok: Vec<(Performance, Performance)> = results.into_iter().filter_map(Result::ok).collect();
    let failed = replicates - ok.len();
    if ok.is_empty() || failed as f64 > 0.2 * replicates as f64 {
        return Err(Error::BootstrapFailures { failed, total: replicates });
    }
    let n = ok.len() as f64;
    let optimism = Performance {
        auc: ok.iter().map(|(b, o)| b.auc - o.auc).sum::<f64>() / n,
        slope: ok.iter().map(|(b, o)| b.slope - o.slope).sum::<f64>() / n,
    };
    Ok(OptimismReport {
        apparent,
        corrected: Performance { auc: apparent.auc - optimism.auc, slope: apparent.slope - optimism.slope },
        optimism,
        replicates,
        failed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CovariateValue, Transform};

    fn rec(subject: usize, cycle: u32, x: f64, y: u8) -> IndividualRecord {
        let mut covariates = BTreeMap::new();
        covariates.insert("x".to_string(), CovariateValue::Number(x));
        IndividualRecord { subject_id: format!("s{subject}"), cycle, covariates, treatment: "none".into(), outcome: y }
    }

    #[test]
    fn single_class_outcome_rejected() {
        let cohort: Vec<_> = (0..10).map(|i| rec(i, 1, i as f64, 0)).collect();
        let specs = [CovariateSpec::continuous("x", Transform::Identity)];
        let err = fit_prognostic(&cohort, &specs, &PrognosticConfig::default()).unwrap_err();
        assert_eq!(err, Error::SingleClassOutcome);
    }

    #[test]
    fn prediction_at_centering_constants_is_intercept() {
        let specs = vec![CovariateSpec::continuous("age", Transform::Center { offset: 37.0 })];
        let model = PrognosticModel {
            format_version: 1,
            columns: vec!["age".into()],
            specs,
            intercept: -1.137,
            slopes: vec![-0.025],
            random_effects: RandomEffects::InterceptOnly,
            random_effect_sds: RandomEffectSds { intercept: Some(0.3), slopes: vec![] },
            n_records: 0,
            n_subjects: 0,
            seed: 0,
        };
        let mut cov = BTreeMap::new();
        cov.insert("age".to_string(), CovariateValue::Number(37.0));
        let r = predict_baseline_risk(&model, &cov).unwrap();
        assert_eq!(r, inv_logit(-1.137));
        assert!((r - 0.242_871_590_315_518).abs() < 1e-12);

        let back = PrognosticModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn resampling_keeps_cycles_together() {
        let cohort: Vec<_> = (0..20).flat_map(|s| (1..=(s % 3 + 1) as u32).map(move |c| rec(s, c, 0.0, (c % 2) as u8))).collect();
        let boot = resample_subjects(&cohort, 7);
        let mut per_subject: BTreeMap<&str, Vec<u32>> = BTreeMap::new();
        for r in &boot {
            per_subject.entry(r.subject_id.as_str()).or_default().push(r.cycle);
        }
        assert_eq!(per_subject.len(), 20);
        for (id, cycles) in per_subject {
            let orig: usize = id.split('#').next().unwrap()[1..].parse().unwrap();
            assert_eq!(cycles, (1..=(orig % 3 + 1) as u32).collect::<Vec<_>>());
        }
    }
}
