//! Generative fixtures with known truth for every stage.
//!
//! Covariates are drawn through a Gaussian copula: a latent standard normal
//! vector (optionally correlated) is mapped to each covariate's marginal.
//! Study-level covariate differences are expressed as shifts of the latent
//! means, so studies differ in mean baseline risk.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{design_columns, AdArm, CovariateKind, CovariateSpec, CovariateValue, IndividualRecord, Transform, TrialAd, TrialIpd};
use crate::error::{Error, Result};
use crate::math::{inv_logit, mix_seed, normal_cdf};
use crate::nma::{fit_nma, NmaAdStudy, NmaConfig, NmaIpdStudy, NmaPosterior};
use crate::pseudo_ipd::{ad_baseline_risks, PseudoIpdConfig};
use crate::risk::{LinearRiskModel, RiskModel};
use crate::sampler::Summary;
use crate::stage1::{fit_prognostic, PrognosticConfig};
use crate::stage2::{recalibrate, RecalibrationConfig};

/// Raw-scale marginal of one covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Marginal {
    /// Normal, optionally truncated from below by clamping.
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        lower: Option<f64>,
    },
    Bernoulli { p: f64 },
    /// Level probabilities in the order of the covariate's levels.
    Categorical { probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateGenerator {
    pub spec: CovariateSpec,
    pub marginal: Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage1Truth {
    pub intercept: f64,
    /// One coefficient per design column.
    pub slopes: Vec<f64>,
    pub sd_u0: f64,
}

/// Trial risk model: `logit R = intercept_shift + slope_scale * (cohort score)`
/// plus `coefficient_shifts` added to the named covariates' columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Truth {
    pub intercept_shift: f64,
    pub slope_scale: f64,
    #[serde(default)]
    pub coefficient_shifts: BTreeMap<String, f64>,
}

impl Default for Stage2Truth {
    fn default() -> Self {
        Self { intercept_shift: 0.0, slope_scale: 1.0, coefficient_shifts: BTreeMap::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage3Truth {
    pub reference: String,
    /// `delta_h` per non-reference treatment.
    pub delta: BTreeMap<String, f64>,
    pub gamma0: f64,
    pub gamma_w: BTreeMap<String, f64>,
    pub gamma_b: BTreeMap<String, f64>,
    /// `u_j` per study id; studies not listed use `u_default`.
    #[serde(default)]
    pub u: BTreeMap<String, f64>,
    pub u_default: f64,
    /// Between-study SD of the relative effects (0 for common effects).
    #[serde(default)]
    pub sd_d: f64,
}

impl Stage3Truth {
    fn get(map: &BTreeMap<String, f64>, t: &str) -> f64 {
        map.get(t).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorTruth {
    pub a: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub covariates: Vec<CovariateGenerator>,
    /// Latent correlation matrix; identity when absent.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
    pub stage1: Stage1Truth,
    #[serde(default)]
    pub stage2: Stage2Truth,
    pub stage3: Stage3Truth,
    pub anchors: AnchorTruth,
    pub seed: u64,
}

impl SimulationTruth {
    pub fn specs(&self) -> Vec<CovariateSpec> {
        self.covariates.iter().map(|c| c.spec.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let specs = self.specs();
        crate::data::validate_specs(&specs)?;
        let width = design_columns(&specs).len();
        if self.stage1.slopes.len() != width {
            return Err(Error::DimensionMismatch { expected: width, found: self.stage1.slopes.len() });
        }
        for g in &self.covariates {
            let ok = match (&g.marginal, &g.spec.kind) {
                (Marginal::Normal { sd, .. }, CovariateKind::Continuous) => *sd >= 0.0,
                (Marginal::Bernoulli { p }, CovariateKind::Binary) => (0.0..=1.0).contains(p),
                (Marginal::Categorical { probs }, CovariateKind::Categorical { levels }) => {
                    probs.len() == levels.len() && probs.iter().all(|&q| q >= 0.0) && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9
                }
                _ => false,
            };
            if !ok {
                return Err(Error::InvalidCovariate { name: g.spec.name.clone(), message: "marginal does not match the covariate kind".into() });
            }
        }
        if let Some(c) = &self.correlation {
            let p = self.covariates.len();
            if c.len() != p || c.iter().any(|r| r.len() != p) {
                return Err(Error::DimensionMismatch { expected: p, found: c.len() });
            }
            if DMatrix::from_fn(p, p, |a, b| c[a][b]).cholesky().is_none() {
                return Err(Error::InvalidCovariate { name: "correlation".into(), message: "not positive definite".into() });
            }
        }
        Ok(())
    }

    pub fn cohort_risk_model(&self) -> LinearRiskModel {
        LinearRiskModel { specs: self.specs(), intercept: self.stage1.intercept, coefficients: self.stage1.slopes.clone() }
    }

    /// Baseline-risk model that generates trial patients' risks.
    pub fn trial_risk_model(&self) -> LinearRiskModel {
        let specs = self.specs();
        let s2 = &self.stage2;
        let coefficients = design_columns(&specs)
            .iter()
            .zip(&self.stage1.slopes)
            .map(|(col, b)| s2.slope_scale * b + s2.coefficient_shifts.get(&col.covariate).copied().unwrap_or(0.0))
            .collect();
        LinearRiskModel { specs, intercept: s2.intercept_shift + s2.slope_scale * self.stage1.intercept, coefficients }
    }

    /// Small default: two continuous and one binary covariate, treatments
    /// `A`, `B` against `P`, truth `delta_A = ln 0.5`, `gamma0 = 1`,
    /// `gamma_w[A] = gamma_b[A] = -0.4`.
    pub fn basic() -> Self {
        let covariates = vec![
            CovariateGenerator { spec: CovariateSpec::continuous("age", Transform::Center { offset: 40.0 }), marginal: Marginal::Normal { mean: 40.0, sd: 10.0, lower: None } },
            CovariateGenerator { spec: CovariateSpec::continuous("severity", Transform::Identity), marginal: Marginal::Normal { mean: 0.0, sd: 1.0, lower: None } },
            CovariateGenerator { spec: CovariateSpec::binary("prior"), marginal: Marginal::Bernoulli { p: 0.4 } },
        ];
        let ln = |v: f64| v.ln();
        Self {
            covariates,
            correlation: Some(vec![vec![1.0, 0.3, 0.0], vec![0.3, 1.0, 0.2], vec![0.0, 0.2, 1.0]]),
            stage1: Stage1Truth { intercept: -1.0, slopes: vec![0.03, 0.8, 0.5], sd_u0: 0.5 },
            stage2: Stage2Truth::default(),
            stage3: Stage3Truth {
                reference: "P".into(),
                delta: [("A".to_string(), ln(0.5)), ("B".to_string(), ln(0.7))].into(),
                gamma0: 1.0,
                gamma_w: [("A".to_string(), -0.4), ("B".to_string(), -0.2)].into(),
                gamma_b: [("A".to_string(), -0.4), ("B".to_string(), -0.2)].into(),
                u: BTreeMap::new(),
                u_default: 0.0,
                sd_d: 0.0,
            },
            anchors: AnchorTruth { a: 0.0, gamma: 1.0 },
            seed: 20230101,
        }
    }

    /// Eight prognostic factors with magnitudes resembling a relapsing
    /// multiple-sclerosis population, four treatments.
    pub fn rrms_like() -> Self {
        let c = |name: &str, t: Transform, mean: f64, sd: f64, lower: Option<f64>| CovariateGenerator {
            spec: CovariateSpec::continuous(name, t),
            marginal: Marginal::Normal { mean, sd, lower },
        };
        let b = |name: &str, p: f64| CovariateGenerator { spec: CovariateSpec::binary(name), marginal: Marginal::Bernoulli { p } };
        let covariates = vec![
            c("age", Transform::Center { offset: 37.0 }, 37.0, 9.0, Some(18.0)),
            c("disease_duration", Transform::LogShift { shift: 10.0 }, 7.0, 6.0, Some(0.0)),
            c("edss", Transform::Center { offset: 2.4 }, 2.4, 1.2, Some(0.0)),
            b("gadolinium", 0.4),
            CovariateGenerator { spec: CovariateSpec::categorical("previous_relapses", &["0", "1", "2+"]), marginal: Marginal::Categorical { probs: vec![0.1, 0.6, 0.3] } },
            c("months_since_relapse", Transform::LogShift { shift: 10.0 }, 6.0, 4.0, Some(0.0)),
            b("treatment_naive", 0.6),
            b("female", 0.7),
        ];
        // intercept chosen so that the average cohort risk sits near 0.3
        let slopes = vec![-0.025, 0.237, 0.265, 0.217, -0.049, 0.093, -0.335, -0.244, 0.178];
        let ln = |v: f64| v.ln();
        Self {
            covariates,
            correlation: None,
            stage1: Stage1Truth { intercept: -0.65, slopes, sd_u0: 0.5 },
            stage2: Stage2Truth { intercept_shift: 0.2, slope_scale: 1.0, coefficient_shifts: [("edss".to_string(), 0.15)].into() },
            stage3: Stage3Truth {
                reference: "Placebo".into(),
                delta: [("DMF".to_string(), ln(0.55)), ("GA".to_string(), ln(0.7)), ("NTZ".to_string(), ln(0.35))].into(),
                gamma0: 1.0,
                gamma_w: [("DMF".to_string(), -0.2), ("GA".to_string(), -0.1), ("NTZ".to_string(), -0.3)].into(),
                gamma_b: [("DMF".to_string(), -0.2), ("GA".to_string(), -0.1), ("NTZ".to_string(), -0.3)].into(),
                u: BTreeMap::new(),
                u_default: 0.0,
                sd_d: 0.0,
            },
            anchors: AnchorTruth { a: 0.0, gamma: 1.0 },
            seed: 20230101,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Ipd,
    Ad,
}

/// One planned study of a simulated network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub id: String,
    pub kind: StudyKind,
    /// Arms; the first is the study reference.
    pub arms: Vec<String>,
    pub n_per_arm: usize,
    /// Shift of each covariate's latent mean (standard-normal units).
    #[serde(default)]
    pub latent_shift: Vec<f64>,
    /// AD design columns whose mean (and SD) are withheld.
    #[serde(default)]
    pub masked: Vec<String>,
}

impl StudyPlan {
    pub fn new(id: &str, kind: StudyKind, arms: &[&str], n_per_arm: usize) -> Self {
        Self { id: id.into(), kind, arms: arms.iter().map(|s| s.to_string()).collect(), n_per_arm, latent_shift: Vec::new(), masked: Vec::new() }
    }

    pub fn shifted(mut self, shift: Vec<f64>) -> Self {
        self.latent_shift = shift;
        self
    }

    pub fn masked(mut self, columns: &[&str]) -> Self {
        self.masked = columns.iter().map(|s| s.to_string()).collect();
        self
    }
}

/// The recovery network: three IPD and two AD studies, treatments `P`, `A`,
/// `B`, with study-level covariate shifts so mean risks differ.
pub fn basic_network(n_per_arm: usize) -> Vec<StudyPlan> {
    vec![
        StudyPlan::new("ipd1", StudyKind::Ipd, &["P", "A"], n_per_arm).shifted(vec![-0.4, -0.5, -0.3]),
        StudyPlan::new("ipd2", StudyKind::Ipd, &["P", "B"], n_per_arm).shifted(vec![0.0, 0.1, 0.0]),
        StudyPlan::new("ipd3", StudyKind::Ipd, &["P", "A", "B"], n_per_arm).shifted(vec![0.4, 0.5, 0.3]),
        StudyPlan::new("ad1", StudyKind::Ad, &["P", "A"], n_per_arm).shifted(vec![0.2, -0.3, 0.1]),
        StudyPlan::new("ad2", StudyKind::Ad, &["A", "B"], n_per_arm).shifted(vec![-0.2, 0.3, -0.1]),
    ]
}

/// RRMS-shaped layout: three IPD and two AD trials, four treatments, about
/// 4500 patients; the AD trials withhold three covariate means.
pub fn rrms_network() -> Vec<StudyPlan> {
    let masked = ["gadolinium", "months_since_relapse", "treatment_naive"];
    vec![
        StudyPlan::new("DEFINE", StudyKind::Ipd, &["Placebo", "DMF"], 600).shifted(vec![0.1, 0.0, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0]),
        StudyPlan::new("CONFIRM", StudyKind::Ipd, &["Placebo", "DMF", "GA"], 450).shifted(vec![0.0, 0.1, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0]),
        StudyPlan::new("AFFIRM", StudyKind::Ipd, &["Placebo", "NTZ"], 700).shifted(vec![-0.2, -0.1, -0.2, 0.0, 0.0, -0.1, 0.0, 0.0]),
        StudyPlan::new("Bornstein", StudyKind::Ad, &["Placebo", "GA"], 25).shifted(vec![-0.3, -0.2, 0.3, 0.0, 0.2, 0.0, 0.0, 0.0]).masked(&masked),
        StudyPlan::new("Johnson", StudyKind::Ad, &["Placebo", "GA"], 125).shifted(vec![0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0]).masked(&masked),
    ]
}

fn latent_factor(truth: &SimulationTruth) -> DMatrix<f64> {
    let p = truth.covariates.len();
    match &truth.correlation {
        Some(c) => DMatrix::from_fn(p, p, |a, b| c[a][b]).cholesky().expect("validated correlation").l(),
        None => DMatrix::identity(p, p),
    }
}

fn draw_covariates(truth: &SimulationTruth, factor: &DMatrix<f64>, shift: &[f64], rng: &mut ChaCha8Rng) -> BTreeMap<String, CovariateValue> {
    let p = truth.covariates.len();
    let z = factor * DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(rng));
    let mut out = BTreeMap::new();
    for (k, g) in truth.covariates.iter().enumerate() {
        let zk = z[k] + shift.get(k).copied().unwrap_or(0.0);
        let value = match &g.marginal {
            Marginal::Normal { mean, sd, lower } => {
                let v = mean + sd * zk;
                CovariateValue::Number(lower.map_or(v, |l| v.max(l)))
            }
            // P(z + s < q) with q the unshifted quantile: shifts move the proportion
            Marginal::Bernoulli { p } => CovariateValue::Number(if normal_cdf(zk) > 1.0 - p { 1.0 } else { 0.0 }),
            Marginal::Categorical { probs } => {
                let u = normal_cdf(zk);
                let mut cum = 0.0;
                let mut level = probs.len() - 1;
                for (l, q) in probs.iter().enumerate() {
                    cum += q;
                    if u < cum {
                        level = l;
                        break;
                    }
                }
                let CovariateKind::Categorical { levels } = &g.spec.kind else { unreachable!("validated") };
                CovariateValue::Level(levels[level].clone())
            }
        };
        out.insert(g.spec.name.clone(), value);
    }
    out
}

/// Cycles per subject drawn uniformly from `min..=max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRange {
    pub min: u32,
    pub max: u32,
}

/// Cohort data from the stage-1 truth: every cycle draws fresh covariates,
/// each subject keeps one random intercept.
pub fn simulate_cohort(truth: &SimulationTruth, n_subjects: usize, cycles: CycleRange, seed: u64) -> Result<Vec<IndividualRecord>> {
    truth.validate()?;
    if n_subjects == 0 || cycles.min == 0 || cycles.max < cycles.min {
        return Err(Error::EmptyInput("need at least one subject and one cycle".into()));
    }
    let model = truth.cohort_risk_model();
    let factor = latent_factor(truth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for s in 0..n_subjects {
        let u0: f64 = truth.stage1.sd_u0 * rng.sample::<f64, _>(StandardNormal);
        let n_cycles = rng.random_range(cycles.min..=cycles.max);
        for c in 1..=n_cycles {
            let covariates = draw_covariates(truth, &factor, &[], &mut rng);
            let lp = model.logit_risk(&covariates)? + u0;
            let y = rng.random::<f64>() < inv_logit(lp);
            records.push(IndividualRecord { subject_id: format!("c{s:06}"), cycle: c, covariates, treatment: "none".into(), outcome: y as u8 });
        }
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedNetwork {
    pub ipd: Vec<TrialIpd>,
    pub ad: Vec<TrialAd>,
    /// True logit baseline risks of every simulated patient, by study.
    pub true_logit_risk: BTreeMap<String, Vec<f64>>,
    /// Underlying patient data of the AD studies before aggregation.
    pub ad_sources: Vec<TrialIpd>,
}

impl SimulatedNetwork {
    pub fn true_mean_logit_risk(&self, study: &str) -> Option<f64> {
        self.true_logit_risk.get(study).map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Collapses patient data to arm counts and raw-scale covariate moments.
/// Masked design columns are reported as missing.
pub fn aggregate_to_ad(trial: &TrialIpd, specs: &[CovariateSpec], masked: &[String]) -> Result<TrialAd> {
    let mut arms: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in &trial.records {
        let e = arms.entry(r.treatment.as_str()).or_default();
        e.0 += r.outcome as u64;
        e.1 += 1;
    }
    let n = trial.records.len() as f64;
    let mut covariate_means = BTreeMap::new();
    let mut covariate_sds = BTreeMap::new();
    for spec in specs {
        match &spec.kind {
            CovariateKind::Continuous => {
                let raw: Vec<f64> = trial
                    .records
                    .iter()
                    .map(|r| match r.covariates.get(&spec.name) {
                        Some(CovariateValue::Number(v)) => Ok(*v),
                        _ => Err(Error::MissingCovariate(spec.name.clone())),
                    })
                    .collect::<Result<_>>()?;
                let hide = masked.contains(&spec.name);
                covariate_means.insert(spec.name.clone(), (!hide).then(|| raw.iter().sum::<f64>() / n));
                covariate_sds.insert(spec.name.clone(), (!hide).then(|| crate::math::sd(&raw)));
            }
            _ => {
                let one = std::slice::from_ref(spec);
                let cols = design_columns(one);
                let mut sums = vec![0.0; cols.len()];
                for r in &trial.records {
                    let x = r.transformed(one)?;
                    for (s, v) in sums.iter_mut().zip(x) {
                        *s += v;
                    }
                }
                for (col, s) in cols.iter().zip(sums) {
                    let hide = masked.contains(&col.name) || masked.contains(&spec.name);
                    covariate_means.insert(col.name.clone(), (!hide).then_some(s / n));
                }
            }
        }
    }
    Ok(TrialAd {
        study_id: trial.study_id.clone(),
        reference_treatment: trial.reference_treatment.clone(),
        arms: arms.into_iter().map(|(t, (e, n))| AdArm { treatment: t.to_string(), events: e, total: n }).collect(),
        covariate_means,
        covariate_sds,
    })
}

/// Trial data from the stage-2 and stage-3 truth. Outcomes follow the IPD
/// network equation with each study's own mean logit risk; AD studies are
/// simulated the same way and then aggregated.
pub fn simulate_network(truth: &SimulationTruth, plans: &[StudyPlan], seed: u64) -> Result<SimulatedNetwork> {
    truth.validate()?;
    let model = truth.trial_risk_model();
    let factor = latent_factor(truth);
    let specs = truth.specs();
    let s3 = &truth.stage3;
    let mut out = SimulatedNetwork { ipd: Vec::new(), ad: Vec::new(), true_logit_risk: BTreeMap::new(), ad_sources: Vec::new() };
    for (j, plan) in plans.iter().enumerate() {
        if plan.arms.len() < 2 || plan.n_per_arm == 0 {
            return Err(Error::SingleArmStudy(plan.id.clone()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, j as u64));
        let reference = &plan.arms[0];
        let mut patients = Vec::new();
        for arm in &plan.arms {
            for i in 0..plan.n_per_arm {
                let covariates = draw_covariates(truth, &factor, &plan.latent_shift, &mut rng);
                let x = model.logit_risk(&covariates)?;
                patients.push((format!("{}-{arm}-{i}", plan.id), arm.clone(), covariates, x));
            }
        }
        let xbar = patients.iter().map(|p| p.3).sum::<f64>() / patients.len() as f64;
        let u = s3.u.get(&plan.id).copied().unwrap_or(s3.u_default);
        // study-specific relative effects with the 0.5 multi-arm correlation
        let shared: f64 = rng.sample(StandardNormal);
        let mut dev = BTreeMap::new();
        for arm in &plan.arms[1..] {
            let own: f64 = rng.sample(StandardNormal);
            dev.insert(arm.clone(), s3.sd_d * (0.5f64.sqrt() * shared + 0.5f64.sqrt() * own));
        }
        let c = |map: &BTreeMap<String, f64>, h: &str| Stage3Truth::get(map, h) - Stage3Truth::get(map, reference);
        let mut records = Vec::with_capacity(patients.len());
        let mut risks = Vec::with_capacity(patients.len());
        for (id, arm, covariates, x) in patients {
            let eta = if &arm == reference {
                u + s3.gamma0 * x
            } else {
                let gw = c(&s3.gamma_w, &arm);
                u + c(&s3.delta, &arm) + dev[&arm] + (s3.gamma0 + gw) * x + (c(&s3.gamma_b, &arm) - gw) * xbar
            };
            let y = rng.random::<f64>() < inv_logit(eta);
            records.push(IndividualRecord { subject_id: id, cycle: 1, covariates, treatment: arm, outcome: y as u8 });
            risks.push(x);
        }
        let trial = TrialIpd { study_id: plan.id.clone(), reference_treatment: reference.clone(), records };
        out.true_logit_risk.insert(plan.id.clone(), risks);
        match plan.kind {
            StudyKind::Ipd => out.ipd.push(trial),
            StudyKind::Ad => {
                out.ad.push(aggregate_to_ad(&trial, &specs, &plan.masked)?);
                out.ad_sources.push(trial);
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Recovery

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryMode {
    /// Fit stage 1 on a simulated cohort and recalibrate on the trials.
    Full,
    /// Use the true trial risk model; aggregate studies still go through
    /// pseudo-IPD.
    #[default]
    KnownRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    pub replicates: usize,
    pub mode: RecoveryMode,
    pub seed: u64,
    pub cohort_subjects: usize,
    pub cohort_cycles: CycleRange,
    pub stage1: PrognosticConfig,
    pub stage2: RecalibrationConfig,
    pub pseudo_ipd: PseudoIpdConfig,
    pub nma: NmaConfig,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        let nma = NmaConfig { constrain_within_equals_between: true, center_risk: true, ..Default::default() };
        Self {
            replicates: 20,
            mode: RecoveryMode::KnownRisk,
            seed: 20230101,
            cohort_subjects: 2000,
            cohort_cycles: CycleRange { min: 1, max: 3 },
            stage1: PrognosticConfig::default(),
            stage2: RecalibrationConfig::default(),
            pseudo_ipd: PseudoIpdConfig::default(),
            nma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRecovery {
    pub parameter: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    /// Share of replicates whose 95% CrI contains the truth.
    pub coverage: f64,
    pub covered: usize,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub replicate: usize,
    pub seed: u64,
    pub estimates: BTreeMap<String, Summary>,
    pub max_rhat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub parameters: Vec<ParameterRecovery>,
    pub replicates: Vec<ReplicateEstimate>,
    pub failed: usize,
    pub requested: usize,
}

impl RecoveryReport {
    pub fn get(&self, parameter: &str) -> Option<&ParameterRecovery> {
        self.parameters.iter().find(|p| p.parameter == parameter)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("parameter\ttruth\tmean_estimate\tbias\trmse\tcoverage\tcovered\treplicates\n");
        for p in &self.parameters {
            s.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{}\t{}\n", p.parameter, p.truth, p.mean_estimate, p.bias, p.rmse, p.coverage, p.covered, p.replicates));
        }
        s
    }
}

/// True value of every structural network parameter under the fitted
/// parameterization.
pub fn structural_truth(truth: &SimulationTruth, posterior: &NmaPosterior) -> BTreeMap<String, f64> {
    let s3 = &truth.stage3;
    let mut out = BTreeMap::new();
    for name in &posterior.design.parameters {
        let value = if name == "gamma0" {
            Some(s3.gamma0)
        } else if let Some(t) = bracket(name, "delta") {
            Some(Stage3Truth::get(&s3.delta, t))
        } else if let Some(t) = bracket(name, "gamma_w") {
            Some(Stage3Truth::get(&s3.gamma_w, t))
        } else if let Some(t) = bracket(name, "gamma_b") {
            Some(Stage3Truth::get(&s3.gamma_b, t))
        } else if let Some(t) = bracket(name, "gamma") {
            // constrained family: meaningful when the truth has no gap
            Some(Stage3Truth::get(&s3.gamma_b, t))
        } else if name == "sd_d" {
            Some(s3.sd_d)
        } else {
            None
        };
        if let Some(v) = value {
            out.insert(name.clone(), v);
        }
    }
    out
}

fn bracket<'a>(name: &'a str, family: &str) -> Option<&'a str> {
    name.strip_prefix(family)?.strip_prefix('[')?.strip_suffix(']')
}

/// Runs the pipeline on one simulated network.
pub fn fit_pipeline(truth: &SimulationTruth, network: &SimulatedNetwork, config: &RecoveryConfig, seed: u64) -> Result<NmaPosterior> {
    let specs = truth.specs();
    let risk_model: LinearRiskModel = match config.mode {
        RecoveryMode::KnownRisk => truth.trial_risk_model(),
        RecoveryMode::Full => {
            let cohort = simulate_cohort(truth, config.cohort_subjects, config.cohort_cycles, mix_seed(seed, 1))?;
            let mut s1 = config.stage1.clone();
            s1.sampler.seed = mix_seed(seed, 2);
            let parent = fit_prognostic(&cohort, &specs, &s1)?.model;
            let mut s2 = config.stage2.clone();
            s2.sampler.seed = mix_seed(seed, 3);
            recalibrate(&parent, &network.ipd, &s2)?.model.effective
        }
    };
    let ipd: Vec<NmaIpdStudy> = network
        .ipd
        .iter()
        .map(|t| NmaIpdStudy::from_trial(t, &risk_model.record_logit_risks(&t.records)?))
        .collect::<Result<_>>()?;
    let ad = if network.ad.is_empty() {
        Vec::new()
    } else {
        let mut pcfg = config.pseudo_ipd.clone();
        pcfg.seed = mix_seed(seed, 4);
        pcfg.imputation.seed = mix_seed(seed, 5);
        let risks = ad_baseline_risks(&risk_model, &network.ipd, &network.ad, &pcfg)?;
        network.ad.iter().zip(&risks.summaries).map(|(t, s)| NmaAdStudy::from_trial(t, s.mean_logit_risk)).collect()
    };
    let mut ncfg = config.nma.clone();
    ncfg.sampler.seed = mix_seed(seed, 6);
    fit_nma(&ipd, &ad, &truth.stage3.reference, &ncfg)
}

/// Repeats simulate-and-fit on fresh seeds and aggregates bias, RMSE and
/// 95% CrI coverage of the structural network parameters. More than 20%
/// failed replicates abort the report.
pub fn recovery_report(truth: &SimulationTruth, plans: &[StudyPlan], config: &RecoveryConfig) -> Result<RecoveryReport> {
    if config.replicates == 0 {
        return Err(Error::EmptyInput("at least one replicate is required".into()));
    }
    let mut replicates = Vec::new();
    let mut truths: BTreeMap<String, f64> = BTreeMap::new();
    let mut failed = 0;
    for r in 0..config.replicates {
        let seed = mix_seed(config.seed, r as u64);
        let outcome = simulate_network(truth, plans, mix_seed(seed, 0)).and_then(|net| fit_pipeline(truth, &net, config, seed));
        match outcome {
            Ok(post) => {
                let t = structural_truth(truth, &post);
                let estimates: BTreeMap<String, Summary> = t.keys().filter_map(|name| post.diagnostics.get(name).map(|p| (name.clone(), p.summary))).collect();
                let max_rhat = post.diagnostics.parameters.iter().filter(|p| t.contains_key(&p.name)).map(|p| p.rhat).fold(f64::NEG_INFINITY, f64::max);
                truths.extend(t);
                replicates.push(ReplicateEstimate { replicate: r, seed, estimates, max_rhat });
            }
            Err(_) => failed += 1,
        }
    }
    if replicates.is_empty() || failed as f64 > 0.2 * config.replicates as f64 {
        return Err(Error::ReplicateFailures { failed, total: config.replicates });
    }
    let parameters = truths
        .iter()
        .map(|(name, &truth_value)| {
            let ests: Vec<&Summary> = replicates.iter().filter_map(|r| r.estimates.get(name)).collect();
            let n = ests.len() as f64;
            let mean_estimate = ests.iter().map(|s| s.mean).sum::<f64>() / n;
            let covered = ests.iter().filter(|s| s.covers(truth_value)).count();
            ParameterRecovery {
                parameter: name.clone(),
                truth: truth_value,
                mean_estimate,
                bias: mean_estimate - truth_value,
                rmse: (ests.iter().map(|s| (s.mean - truth_value).powi(2)).sum::<f64>() / n).sqrt(),
                coverage: covered as f64 / n,
                covered,
                replicates: ests.len(),
            }
        })
        .collect();
    Ok(RecoveryReport { parameters, replicates, failed, requested: config.replicates })
}
