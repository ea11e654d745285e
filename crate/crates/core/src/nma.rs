//! Network meta-regression with the logit baseline risk as prognostic factor
//! and effect modifier.
//!
//! IPD study `j`, patient `i` on arm `h` with study reference `r`:
//!
//! ```text
//! h == r:  u_j + g0_j * x_i
//! h != r:  u_j + d_jh + (g0_j + gW_jh) * x_i + (GB_h - gW_jh) * xbar_j
//! ```
//!
//! AD study `j`, arm `h`: `u_j` on the reference arm and
//! `u_j + d_jh + GB_h * xbar_j` otherwise. Contrasts follow the consistency
//! equations `D_h = delta_h - delta_r`, `GW_h = gamma_w_h - gamma_w_r`,
//! `GB_h = gamma_b_h - gamma_b_r`, with every global-reference parameter
//! fixed at 0. Random relative effects `d_jh ~ N(D_h, sd_d^2)` carry the
//! usual 0.5 correlation between arms of a multi-arm study.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{AdArm, TrialAd, TrialIpd};
use crate::error::{Error, Result, Warning};
use crate::math::{binomial_loglik, log1p_exp, logit};
use crate::sampler::{
    diagnostics, sample_posterior, summarize, Diagnostics, LogLikelihood, ModelSpec, ParameterBlock, PosteriorDraws, Prior, SamplerConfig, Summary,
    RHAT_LIMIT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EffectModel {
    #[default]
    Common,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PrognosticPooling {
    #[default]
    Common,
    Exchangeable,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmaPriors {
    /// SD of the normal priors on `u_j`.
    pub baseline_sd: f64,
    /// SD of the normal priors on `delta`, `gamma0`, `gamma_w`, `gamma_b`.
    pub effect_sd: f64,
    /// Scale of the half-normal priors on between-study SDs.
    pub heterogeneity_sd: f64,
}

impl Default for NmaPriors {
    fn default() -> Self {
        Self { baseline_sd: 10.0, effect_sd: 10.0, heterogeneity_sd: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmaConfig {
    pub relative_effects: EffectModel,
    pub within_modification: EffectModel,
    pub prognostic_coef: PrognosticPooling,
    /// One effect-modification family shared by the within and between terms.
    pub constrain_within_equals_between: bool,
    /// Sample with every logit risk shifted by its pooled mean. Draws are
    /// mapped back, so the reported parameters keep their uncentred meaning.
    pub center_risk: bool,
    pub priors: NmaPriors,
    pub sampler: SamplerConfig,
}

impl Default for NmaConfig {
    fn default() -> Self {
        Self {
            relative_effects: EffectModel::Common,
            within_modification: EffectModel::Common,
            prognostic_coef: PrognosticPooling::Common,
            constrain_within_equals_between: false,
            center_risk: false,
            priors: NmaPriors::default(),
            sampler: SamplerConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmaPatient {
    pub treatment: String,
    pub outcome: bool,
    pub logit_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmaIpdStudy {
    pub study_id: String,
    pub reference_treatment: String,
    pub patients: Vec<NmaPatient>,
}

impl NmaIpdStudy {
    /// Pairs a trial with per-record logit risks (same order as its records).
    pub fn from_trial(trial: &TrialIpd, logit_risks: &[f64]) -> Result<Self> {
        if logit_risks.len() != trial.records.len() {
            return Err(Error::MissingRisk(format!("study `{}`: {} risks for {} records", trial.study_id, logit_risks.len(), trial.records.len())));
        }
        Ok(Self {
            study_id: trial.study_id.clone(),
            reference_treatment: trial.reference_treatment.clone(),
            patients: trial
                .records
                .iter()
                .zip(logit_risks)
                .map(|(r, &x)| NmaPatient { treatment: r.treatment.clone(), outcome: r.event(), logit_risk: x })
                .collect(),
        })
    }

    pub fn mean_logit_risk(&self) -> f64 {
        self.patients.iter().map(|p| p.logit_risk).sum::<f64>() / self.patients.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmaAdStudy {
    pub study_id: String,
    pub reference_treatment: String,
    pub arms: Vec<AdArm>,
    pub mean_logit_risk: f64,
}

impl NmaAdStudy {
    pub fn from_trial(trial: &TrialAd, mean_logit_risk: f64) -> Self {
        Self { study_id: trial.study_id.clone(), reference_treatment: trial.reference_treatment.clone(), arms: trial.arms.clone(), mean_logit_risk }
    }
}

/// How the linear predictor of one arm depends on the parameters.
#[derive(Debug, Clone)]
enum UnitData {
    /// Patients' logit risks (already centred) and sufficient sums.
    Ipd { x: Vec<f64>, sum_y: f64, sum_yx: f64 },
    Ad { events: u64, total: u64 },
}

#[derive(Debug, Clone)]
struct Unit {
    study: usize,
    treatment: usize,
    reference: usize,
    /// Position among the study's non-reference arms.
    arm: Option<usize>,
    /// Index into the IPD non-reference arms (within-modification random effects).
    ipd_arm: Option<usize>,
    /// Index among IPD studies.
    ipd_study: Option<usize>,
    data: UnitData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum G0Layout {
    None,
    Common(usize),
    Exchangeable { mean: usize, sd: usize, z: usize },
    Independent(usize),
}

/// Component offsets of every parameter family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmaLayout {
    u: usize,
    delta: Vec<Option<usize>>,
    gamma_w: Vec<Option<usize>>,
    gamma_b: Vec<Option<usize>>,
    g0: G0Layout,
    /// `(sd, first z)`; one z per non-reference arm, numbered study by study.
    random_d: Option<(usize, usize)>,
    arm_offset: Vec<usize>,
    random_gw: Option<(usize, usize)>,
}

/// Design of the model: treatment order, the parameters present and the
/// columns each arm type receives.
#[derive(Debug, Clone, Serialize)]
pub struct NmaDesign {
    pub treatments: Vec<String>,
    pub reference: String,
    pub studies: Vec<String>,
    pub study_is_ipd: Vec<bool>,
    pub mean_logit_risk: Vec<f64>,
    pub parameters: Vec<String>,
    /// Treatments whose within-study modifier is estimable (they appear in an
    /// IPD study).
    pub within_treatments: Vec<String>,
    pub center: f64,
    layout: NmaLayout,
    #[serde(skip)]
    units: Vec<Unit>,
    #[serde(skip)]
    spec: ModelSpec,
    /// Cholesky factors of the multi-arm correlation per study.
    #[serde(skip)]
    arm_factors: Vec<DMatrix<f64>>,
    #[serde(skip)]
    affected: Vec<Vec<usize>>,
}

fn multi_arm_factor(m: usize) -> DMatrix<f64> {
    let corr = DMatrix::from_fn(m, m, |a, b| if a == b { 1.0 } else { 0.5 });
    corr.cholesky().expect("compound symmetry with rho = 0.5 is positive definite").l()
}

/// Builds the parameter layout and arm units. Treatments are ordered
/// lexicographically; `reference` is the global reference.
pub fn build_design(ipd: &[NmaIpdStudy], ad: &[NmaAdStudy], reference: &str, config: &NmaConfig) -> Result<NmaDesign> {
    if ipd.is_empty() && ad.is_empty() {
        return Err(Error::EmptyInput("no studies in the network".into()));
    }
    let mut treatments = BTreeSet::new();
    let mut seen_ids = BTreeSet::new();
    for s in ipd {
        if !seen_ids.insert(s.study_id.clone()) {
            return Err(Error::DuplicateStudyId(s.study_id.clone()));
        }
        let arms: BTreeSet<&str> = s.patients.iter().map(|p| p.treatment.as_str()).collect();
        if arms.len() < 2 {
            return Err(Error::SingleArmStudy(s.study_id.clone()));
        }
        if !arms.contains(s.reference_treatment.as_str()) {
            return Err(Error::InvalidStudy { study: s.study_id.clone(), message: format!("reference `{}` has no patients", s.reference_treatment) });
        }
        if let Some(p) = s.patients.iter().find(|p| !p.logit_risk.is_finite()) {
            return Err(Error::MissingRisk(format!("study `{}`: non-finite logit risk {} on arm `{}`", s.study_id, p.logit_risk, p.treatment)));
        }
        treatments.extend(arms.into_iter().map(String::from));
    }
    for s in ad {
        if !seen_ids.insert(s.study_id.clone()) {
            return Err(Error::DuplicateStudyId(s.study_id.clone()));
        }
        let arms: BTreeSet<&str> = s.arms.iter().map(|a| a.treatment.as_str()).collect();
        if arms.len() < 2 || arms.len() != s.arms.len() {
            return Err(Error::SingleArmStudy(s.study_id.clone()));
        }
        if !arms.contains(s.reference_treatment.as_str()) {
            return Err(Error::InvalidStudy { study: s.study_id.clone(), message: format!("reference `{}` has no arm", s.reference_treatment) });
        }
        if !s.mean_logit_risk.is_finite() {
            return Err(Error::MissingRisk(format!("study `{}`: mean logit risk {}", s.study_id, s.mean_logit_risk)));
        }
        for a in &s.arms {
            if a.total == 0 || a.events > a.total {
                return Err(Error::InvalidStudy { study: s.study_id.clone(), message: format!("arm `{}` has {} events out of {}", a.treatment, a.events, a.total) });
            }
        }
        treatments.extend(arms.into_iter().map(String::from));
    }
    let treatments: Vec<String> = treatments.into_iter().collect();
    let t_index = |t: &str| treatments.iter().position(|x| x == t);
    let reference_index = t_index(reference).ok_or_else(|| Error::UnknownReference(reference.to_string()))?;
    check_connected(ipd, ad, &treatments)?;

    let n_ipd = ipd.len();
    let n_studies = n_ipd + ad.len();
    if config.prognostic_coef == PrognosticPooling::Exchangeable && n_ipd < 2 {
        return Err(Error::InvalidNmaConfig("exchangeable prognostic coefficients need at least two IPD studies".into()));
    }
    if config.within_modification == EffectModel::Random && n_ipd < 2 {
        return Err(Error::InvalidNmaConfig("random within-study modification needs at least two IPD studies".into()));
    }
    if config.relative_effects == EffectModel::Random && n_studies < 2 {
        return Err(Error::InvalidNmaConfig("random relative effects need at least two studies".into()));
    }

    let center = if config.center_risk {
        let all: Vec<f64> = ipd.iter().flat_map(|s| s.patients.iter().map(|p| p.logit_risk)).chain(ad.iter().map(|s| s.mean_logit_risk)).collect();
        all.iter().sum::<f64>() / all.len() as f64
    } else {
        0.0
    };

    let mut studies = Vec::new();
    let mut study_is_ipd = Vec::new();
    let mut mean_logit_risk = Vec::new();
    let mut units = Vec::new();
    let mut arm_counts = Vec::new();
    let mut ipd_arm = 0;
    let mut within_set = BTreeSet::new();
    for (j, s) in ipd.iter().enumerate() {
        studies.push(s.study_id.clone());
        study_is_ipd.push(true);
        mean_logit_risk.push(s.mean_logit_risk() - center);
        let mut by_arm: BTreeMap<&str, (Vec<f64>, f64, f64)> = BTreeMap::new();
        for p in &s.patients {
            let e = by_arm.entry(p.treatment.as_str()).or_default();
            let x = p.logit_risk - center;
            e.0.push(x);
            if p.outcome {
                e.1 += 1.0;
                e.2 += x;
            }
        }
        let r = t_index(&s.reference_treatment).expect("treatment collected");
        let mut arm = 0;
        for (t, (x, sum_y, sum_yx)) in by_arm {
            let h = t_index(t).expect("treatment collected");
            within_set.insert(h);
            let is_ref = h == r;
            units.push(Unit {
                study: j,
                treatment: h,
                reference: r,
                arm: (!is_ref).then_some(arm),
                ipd_arm: (!is_ref).then_some(ipd_arm),
                ipd_study: Some(j),
                data: UnitData::Ipd { x, sum_y, sum_yx },
            });
            if !is_ref {
                arm += 1;
                ipd_arm += 1;
            }
        }
        arm_counts.push(arm);
    }
    for (a, s) in ad.iter().enumerate() {
        let j = n_ipd + a;
        studies.push(s.study_id.clone());
        study_is_ipd.push(false);
        mean_logit_risk.push(s.mean_logit_risk - center);
        let r = t_index(&s.reference_treatment).expect("treatment collected");
        let mut arms: Vec<&AdArm> = s.arms.iter().collect();
        arms.sort_by(|x, y| x.treatment.cmp(&y.treatment));
        let mut arm = 0;
        for a in arms {
            let h = t_index(&a.treatment).expect("treatment collected");
            let is_ref = h == r;
            units.push(Unit { study: j, treatment: h, reference: r, arm: (!is_ref).then_some(arm), ipd_arm: None, ipd_study: None, data: UnitData::Ad { events: a.events, total: a.total } });
            if !is_ref {
                arm += 1;
            }
        }
        arm_counts.push(arm);
    }

    // parameters
    let pr = &config.priors;
    let mut spec = ModelSpec::new();
    let u_init: Vec<f64> = (0..n_studies)
        .map(|j| {
            let (e, n) = units.iter().filter(|u| u.study == j && u.arm.is_none()).fold((0.0, 0.0), |acc, u| match &u.data {
                UnitData::Ipd { x, sum_y, .. } => (acc.0 + sum_y, acc.1 + x.len() as f64),
                UnitData::Ad { events, total } => (acc.0 + *events as f64, acc.1 + *total as f64),
            });
            logit((e + 0.5) / (n + 1.0))
        })
        .collect();
    let u = spec.push(ParameterBlock::new("u", n_studies, Prior::normal(0.0, pr.baseline_sd)).with_init(u_init));
    let effect = Prior::normal(0.0, pr.effect_sd);
    let delta: Vec<Option<usize>> = treatments
        .iter()
        .enumerate()
        .map(|(h, t)| (h != reference_index).then(|| spec.push(ParameterBlock::scalar(format!("delta[{t}]"), effect))))
        .collect();
    let g0 = if n_ipd == 0 {
        G0Layout::None
    } else {
        match config.prognostic_coef {
            PrognosticPooling::Common => G0Layout::Common(spec.push(ParameterBlock::scalar("gamma0", effect))),
            PrognosticPooling::Exchangeable => G0Layout::Exchangeable {
                mean: spec.push(ParameterBlock::scalar("gamma0", effect)),
                sd: spec.push(ParameterBlock::scalar("sd_gamma0", Prior::HalfNormal { sd: pr.heterogeneity_sd }).with_init(vec![0.2])),
                z: spec.push(ParameterBlock::new("z_gamma0", n_ipd, Prior::normal(0.0, 1.0))),
            },
            PrognosticPooling::Independent => {
                let first = spec.dim();
                for s in ipd {
                    spec.push(ParameterBlock::scalar(format!("g0[{}]", s.study_id), effect));
                }
                G0Layout::Independent(first)
            }
        }
    };
    // within modifiers exist for treatments seen in IPD studies; under the
    // constraint the single family covers every treatment
    let within_family: Vec<bool> = (0..treatments.len()).map(|h| h != reference_index && (config.constrain_within_equals_between || within_set.contains(&h))).collect();
    let gamma_w: Vec<Option<usize>> = treatments
        .iter()
        .enumerate()
        .map(|(h, t)| within_family[h].then(|| spec.push(ParameterBlock::scalar(if config.constrain_within_equals_between { format!("gamma[{t}]") } else { format!("gamma_w[{t}]") }, effect))))
        .collect();
    let gamma_b: Vec<Option<usize>> = if config.constrain_within_equals_between {
        gamma_w.clone()
    } else {
        treatments.iter().enumerate().map(|(h, t)| (h != reference_index).then(|| spec.push(ParameterBlock::scalar(format!("gamma_b[{t}]"), effect)))).collect()
    };
    let mut arm_offset = Vec::with_capacity(n_studies);
    let mut acc = 0;
    for &c in &arm_counts {
        arm_offset.push(acc);
        acc += c;
    }
    let random_d = (config.relative_effects == EffectModel::Random).then(|| {
        let sd = spec.push(ParameterBlock::scalar("sd_d", Prior::HalfNormal { sd: pr.heterogeneity_sd }).with_init(vec![0.2]));
        let z = spec.push(ParameterBlock::new("z_d", acc, Prior::normal(0.0, 1.0)));
        (sd, z)
    });
    let random_gw = (config.within_modification == EffectModel::Random).then(|| {
        let sd = spec.push(ParameterBlock::scalar("sd_gw", Prior::HalfNormal { sd: pr.heterogeneity_sd }).with_init(vec![0.2]));
        let z = spec.push(ParameterBlock::new("z_gw", ipd_arm, Prior::normal(0.0, 1.0)));
        (sd, z)
    });
    let layout = NmaLayout { u, delta, gamma_w, gamma_b, g0, random_d, arm_offset, random_gw };

    let arm_factors: Vec<DMatrix<f64>> = arm_counts.iter().map(|&m| if m > 0 { multi_arm_factor(m) } else { DMatrix::zeros(0, 0) }).collect();
    let affected = affected_units(&layout, &units, spec.dim(), &arm_factors);
    Ok(NmaDesign {
        within_treatments: within_set.iter().filter(|&&h| h != reference_index).map(|&h| treatments[h].clone()).collect(),
        reference: reference.to_string(),
        treatments,
        studies,
        study_is_ipd,
        mean_logit_risk,
        parameters: spec.component_names(),
        center,
        layout,
        units,
        spec,
        arm_factors,
        affected,
    })
}

fn check_connected(ipd: &[NmaIpdStudy], ad: &[NmaAdStudy], treatments: &[String]) -> Result<()> {
    let mut parent: Vec<usize> = (0..treatments.len()).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    let idx = |t: &str| treatments.iter().position(|x| x == t).expect("treatment collected");
    let study_arms = ipd
        .iter()
        .map(|s| s.patients.iter().map(|p| idx(&p.treatment)).collect::<BTreeSet<_>>())
        .chain(ad.iter().map(|s| s.arms.iter().map(|a| idx(&a.treatment)).collect()));
    for arms in study_arms {
        let arms: Vec<usize> = arms.into_iter().collect();
        for w in arms.windows(2) {
            let (a, b) = (find(&mut parent, w[0]), find(&mut parent, w[1]));
            parent[a] = b;
        }
    }
    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (h, t) in treatments.iter().enumerate() {
        let root = find(&mut parent, h);
        groups.entry(root).or_default().push(t.clone());
    }
    if groups.len() > 1 {
        let mut comps: Vec<Vec<String>> = groups.into_values().collect();
        comps.sort();
        return Err(Error::DisconnectedNetwork(comps));
    }
    Ok(())
}

fn affected_units(layout: &NmaLayout, units: &[Unit], dim: usize, factors: &[DMatrix<f64>]) -> Vec<Vec<usize>> {
    let mut affected = vec![Vec::new(); dim];
    for (k, unit) in units.iter().enumerate() {
        let mut deps: Vec<usize> = vec![layout.u + unit.study];
        let ipd = matches!(unit.data, UnitData::Ipd { .. });
        if ipd {
            match layout.g0 {
                G0Layout::None => {}
                G0Layout::Common(i) => deps.push(i),
                G0Layout::Exchangeable { mean, sd, z } => deps.extend([mean, sd, z + unit.ipd_study.expect("ipd unit")]),
                G0Layout::Independent(first) => deps.push(first + unit.ipd_study.expect("ipd unit")),
            }
        }
        if let Some(arm) = unit.arm {
            for t in [unit.treatment, unit.reference] {
                deps.extend(layout.delta[t]);
                deps.extend(layout.gamma_b[t]);
                if ipd {
                    deps.extend(layout.gamma_w[t]);
                }
            }
            if let Some((sd, z)) = layout.random_d {
                deps.push(sd);
                let f = &factors[unit.study];
                for a in 0..=arm {
                    if f[(arm, a)] != 0.0 {
                        deps.push(z + layout.arm_offset[unit.study] + a);
                    }
                }
            }
            if let (true, Some((sd, z))) = (ipd, layout.random_gw) {
                deps.extend([sd, z + unit.ipd_arm.expect("ipd non-reference arm")]);
            }
        }
        deps.sort_unstable();
        deps.dedup();
        for d in deps {
            affected[d].push(k);
        }
    }
    affected
}

impl NmaDesign {
    fn g0(&self, p: &[f64], ipd_study: usize) -> f64 {
        match self.layout.g0 {
            G0Layout::None => 0.0,
            G0Layout::Common(i) => p[i],
            G0Layout::Exchangeable { mean, sd, z } => p[mean] + p[sd] * p[z + ipd_study],
            G0Layout::Independent(first) => p[first + ipd_study],
        }
    }

    fn family(p: &[f64], index: &[Option<usize>], t: usize) -> f64 {
        index[t].map_or(0.0, |i| p[i])
    }

    /// Intercept and logit-risk slope of a unit's linear predictor.
    fn unit_coefficients(&self, p: &[f64], unit: &Unit) -> (f64, f64) {
        let l = &self.layout;
        let j = unit.study;
        let mut a = p[l.u + j];
        let mut b = unit.ipd_study.map_or(0.0, |s| self.g0(p, s));
        if let Some(arm) = unit.arm {
            let (h, r) = (unit.treatment, unit.reference);
            let mut d = Self::family(p, &l.delta, h) - Self::family(p, &l.delta, r);
            if let Some((sd, z)) = l.random_d {
                let f = &self.arm_factors[j];
                let dev: f64 = (0..=arm).map(|k| f[(arm, k)] * p[z + l.arm_offset[j] + k]).sum();
                d += p[sd] * dev;
            }
            let gb = Self::family(p, &l.gamma_b, h) - Self::family(p, &l.gamma_b, r);
            let xbar = self.mean_logit_risk[j];
            match unit.data {
                UnitData::Ipd { .. } => {
                    let mut gw = Self::family(p, &l.gamma_w, h) - Self::family(p, &l.gamma_w, r);
                    if let Some((sd, z)) = l.random_gw {
                        gw += p[sd] * p[z + unit.ipd_arm.expect("ipd non-reference arm")];
                    }
                    a += d + (gb - gw) * xbar;
                    b += gw;
                }
                UnitData::Ad { .. } => a += d + gb * xbar,
            }
        }
        (a, b)
    }

    fn unit_loglik(&self, p: &[f64], unit: &Unit) -> f64 {
        let (a, b) = self.unit_coefficients(p, unit);
        match &unit.data {
            UnitData::Ipd { x, sum_y, sum_yx } => a * sum_y + b * sum_yx - x.iter().map(|&xi| log1p_exp(a + b * xi)).sum::<f64>(),
            UnitData::Ad { events, total } => binomial_loglik(*events, *total, a),
        }
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }
}

impl LogLikelihood for NmaDesign {
    fn log_likelihood(&self, params: &[f64]) -> f64 {
        self.units.iter().map(|u| self.unit_loglik(params, u)).sum()
    }

    fn log_likelihood_change(&self, params: &[f64], index: usize, proposal: f64) -> f64 {
        let mut moved = params.to_vec();
        moved[index] = proposal;
        self.affected[index].iter().map(|&k| self.unit_loglik(&moved, &self.units[k]) - self.unit_loglik(params, &self.units[k])).sum()
    }
}

/// Posterior of the network model. Draws are on the uncentred scale.
#[derive(Debug, Clone)]
pub struct NmaPosterior {
    pub design: NmaDesign,
    pub config: NmaConfig,
    pub draws: PosteriorDraws,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<Warning>,
}

/// Parameters reported in convergence checks and summaries: everything but
/// the standardized random-effect deviations.
pub fn is_structural(name: &str) -> bool {
    !name.starts_with("z_") && !name.starts_with("u[")
}

/// Samples the network model.
pub fn fit_nma(ipd: &[NmaIpdStudy], ad: &[NmaAdStudy], reference: &str, config: &NmaConfig) -> Result<NmaPosterior> {
    let design = build_design(ipd, ad, reference, config)?;
    let mut draws = sample_posterior(&design.spec, &design, &config.sampler)?;
    if design.center != 0.0 {
        uncenter(&design, &mut draws);
    }
    let diagnostics = diagnostics(&draws)?;
    let warnings = diagnostics
        .nonconvergent(RHAT_LIMIT)
        .into_iter()
        .filter(|p| is_structural(&p.name))
        .map(|p| Warning::NonConvergent { parameter: p.name.clone(), rhat: p.rhat })
        .collect();
    Ok(NmaPosterior { design, config: config.clone(), draws, diagnostics, warnings })
}

/// Maps draws sampled with centred risks `x - c` back to the uncentred
/// parameterization: `delta_h -= gamma_b_h * c` and, for IPD studies,
/// `u_j -= g0_j * c`.
fn uncenter(design: &NmaDesign, draws: &mut PosteriorDraws) {
    let c = design.center;
    let l = &design.layout;
    let dim = draws.dim();
    let n_ipd = design.study_is_ipd.iter().filter(|&&b| b).count();
    for row in draws.values.chunks_mut(dim) {
        for h in 0..design.treatments.len() {
            if let (Some(d), Some(g)) = (l.delta[h], l.gamma_b[h]) {
                row[d] -= row[g] * c;
            }
        }
        for s in 0..n_ipd {
            let g0 = design.g0(row, s);
            row[l.u + s] -= g0 * c;
        }
    }
}

/// One row of the Table-2-style summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub parameter: String,
    pub summary: Summary,
    /// Exponentiated summary for log-odds-ratio parameters.
    pub odds_ratio: Option<Summary>,
    pub rhat: f64,
    pub ess_bulk: f64,
}

impl NmaPosterior {
    pub fn n_draws(&self) -> usize {
        self.draws.total_draws()
    }

    pub fn treatments(&self) -> &[String] {
        &self.design.treatments
    }

    pub fn treatment_index(&self, t: &str) -> Result<usize> {
        self.design.treatments.iter().position(|x| x == t).ok_or_else(|| Error::UnknownTreatment(t.to_string()))
    }

    fn value(&self, draw: usize, index: Option<usize>) -> f64 {
        index.map_or(0.0, |k| self.draws.draw(draw)[k])
    }

    pub fn delta(&self, draw: usize, t: usize) -> f64 {
        self.value(draw, self.design.layout.delta[t])
    }

    /// `None` when the treatment never appears in an IPD study (and the
    /// constraint is off), so its within-study modifier is not estimable.
    pub fn gamma_w(&self, draw: usize, t: usize) -> Option<f64> {
        if t == self.reference_index() {
            return Some(0.0);
        }
        self.design.layout.gamma_w[t].map(|k| self.draws.draw(draw)[k])
    }

    pub fn gamma_b(&self, draw: usize, t: usize) -> f64 {
        self.value(draw, self.design.layout.gamma_b[t])
    }

    pub fn reference_index(&self) -> usize {
        self.treatment_index(&self.design.reference).expect("reference in treatment list")
    }

    /// Draw-wise `D_ab = delta_b - delta_a`.
    pub fn contrast(&self, draw: usize, a: usize, b: usize) -> f64 {
        self.delta(draw, b) - self.delta(draw, a)
    }

    pub fn sd_d(&self, draw: usize) -> Option<f64> {
        self.design.layout.random_d.map(|(sd, _)| self.draws.draw(draw)[sd])
    }

    pub fn sd_gw(&self, draw: usize) -> Option<f64> {
        self.design.layout.random_gw.map(|(sd, _)| self.draws.draw(draw)[sd])
    }

    /// `gamma0` (or its exchangeable mean); `None` without IPD studies or
    /// with independent coefficients.
    pub fn gamma0(&self, draw: usize) -> Option<f64> {
        match self.design.layout.g0 {
            G0Layout::Common(i) | G0Layout::Exchangeable { mean: i, .. } => Some(self.draws.draw(draw)[i]),
            _ => None,
        }
    }

    pub fn has_nonconvergence(&self) -> bool {
        !self.warnings.is_empty()
    }

    /// Draw-wise `gamma_b - gamma_w` per non-reference treatment. Identically
    /// zero under the constraint.
    pub fn ecological_gap(&self) -> Vec<(String, Summary)> {
        let r = self.reference_index();
        (0..self.design.treatments.len())
            .filter(|&h| h != r)
            .filter_map(|h| {
                let gap: Option<Vec<f64>> = (0..self.n_draws()).map(|d| self.gamma_w(d, h).map(|w| self.gamma_b(d, h) - w)).collect();
                gap.map(|g| (self.design.treatments[h].clone(), summarize(&g)))
            })
            .collect()
    }

    /// Summary in Table-2 layout: relative effects and modifiers with 95%
    /// credible intervals, and odds ratios for the log-odds parameters.
    pub fn summary_table(&self) -> Vec<SummaryRow> {
        self.diagnostics
            .parameters
            .iter()
            .filter(|p| is_structural(&p.name))
            .map(|p| {
                let log_or = !p.name.starts_with("sd_");
                SummaryRow { parameter: p.name.clone(), summary: p.summary, odds_ratio: log_or.then(|| p.summary.exp()), rhat: p.rhat, ess_bulk: p.ess_bulk }
            })
            .collect()
    }

    pub fn summary_tsv(&self) -> String {
        let mut s = String::from("parameter\tmean\tsd\tq2.5\tq50\tq97.5\tor_mean\tor_q2.5\tor_q97.5\trhat\tess_bulk\n");
        for r in self.summary_table() {
            let m = &r.summary;
            let (om, ol, oh) = r.odds_ratio.map_or(("NA".into(), "NA".into(), "NA".into()), |o| (format!("{:.6}", o.mean), format!("{:.6}", o.q025), format!("{:.6}", o.q975)));
            s.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{om}\t{ol}\t{oh}\t{:.4}\t{:.1}\n",
                r.parameter, m.mean, m.sd, m.q025, m.q50, m.q975, r.rhat, r.ess_bulk
            ));
        }
        s
    }

    /// Per-draw effect parameters in a portable form for prediction.
    pub fn effect_draws(&self) -> EffectDraws {
        let n = self.n_draws();
        let t = self.design.treatments.len();
        let within_missing: Vec<bool> = (0..t).map(|h| self.gamma_w(0, h).is_none()).collect();
        EffectDraws {
            treatments: self.design.treatments.clone(),
            reference: self.design.reference.clone(),
            delta: (0..n).map(|d| (0..t).map(|h| self.delta(d, h)).collect()).collect(),
            gamma_w: (0..n).map(|d| (0..t).map(|h| self.gamma_w(d, h).unwrap_or(f64::NAN)).collect()).collect(),
            gamma_b: (0..n).map(|d| (0..t).map(|h| self.gamma_b(d, h)).collect()).collect(),
            sd_d: self.design.layout.random_d.map(|_| (0..n).map(|d| self.sd_d(d).expect("random effects present")).collect()),
            sd_gw: self.design.layout.random_gw.map(|_| (0..n).map(|d| self.sd_gw(d).expect("random effects present")).collect()),
            within_unidentified: (0..t).filter(|&h| within_missing[h]).map(|h| self.design.treatments[h].clone()).collect(),
        }
    }
}

/// Effect draws of the network model, one row per draw and one column per
/// treatment (reference columns are 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectDraws {
    pub treatments: Vec<String>,
    pub reference: String,
    pub delta: Vec<Vec<f64>>,
    pub gamma_w: Vec<Vec<f64>>,
    pub gamma_b: Vec<Vec<f64>>,
    pub sd_d: Option<Vec<f64>>,
    pub sd_gw: Option<Vec<f64>>,
    /// Treatments without IPD: their `gamma_w` columns are NaN.
    pub within_unidentified: Vec<String>,
}

impl EffectDraws {
    pub fn n_draws(&self) -> usize {
        self.delta.len()
    }

    pub fn treatment_index(&self, t: &str) -> Result<usize> {
        self.treatments.iter().position(|x| x == t).ok_or_else(|| Error::UnknownTreatment(t.to_string()))
    }

    /// Point-mass draws from fixed values, for oracle checks and null models.
    pub fn point(treatments: Vec<String>, reference: &str, delta: Vec<f64>, gamma_w: Vec<f64>, gamma_b: Vec<f64>) -> Self {
        Self { reference: reference.to_string(), treatments, delta: vec![delta], gamma_w: vec![gamma_w], gamma_b: vec![gamma_b], sd_d: None, sd_gw: None, within_unidentified: Vec::new() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ipd_study(id: &str, arms: &[&str], n: usize) -> NmaIpdStudy {
        let patients = arms
            .iter()
            .flat_map(|t| (0..n).map(move |i| NmaPatient { treatment: t.to_string(), outcome: i % 3 == 0, logit_risk: (i as f64 - (n - 1) as f64 / 2.0) / n as f64 }))
            .collect();
        NmaIpdStudy { study_id: id.into(), reference_treatment: arms[0].into(), patients }
    }

    fn ad_study(id: &str, arms: &[&str]) -> NmaAdStudy {
        NmaAdStudy {
            study_id: id.into(),
            reference_treatment: arms[0].into(),
            arms: arms.iter().map(|t| AdArm { treatment: t.to_string(), events: 30, total: 100 }).collect(),
            mean_logit_risk: -0.7,
        }
    }

    #[test]
    fn loop_has_two_free_parameters_per_family() {
        let ipd = [ipd_study("s1", &["A", "B"], 10), ipd_study("s2", &["B", "C"], 10), ipd_study("s3", &["A", "C"], 10)];
        let d = build_design(&ipd, &[], "A", &NmaConfig::default()).unwrap();
        let count = |prefix: &str| d.parameters.iter().filter(|p| p.starts_with(prefix)).count();
        assert_eq!((count("delta["), count("gamma_w["), count("gamma_b[")), (2, 2, 2));
    }

    #[test]
    fn ad_only_network_has_no_within_terms() {
        let d = build_design(&[], &[ad_study("a1", &["P", "X"]), ad_study("a2", &["P", "Y"])], "P", &NmaConfig::default()).unwrap();
        assert!(d.parameters.iter().all(|p| !p.starts_with("gamma_w") && p != "gamma0"));
        assert!(d.within_treatments.is_empty());
    }

    #[test]
    fn centred_single_study_has_no_between_contribution() {
        let s = ipd_study("s1", &["P", "A"], 11);
        assert!(s.mean_logit_risk().abs() < 1e-12);
        let d = build_design(&[s], &[], "P", &NmaConfig::default()).unwrap();
        let mut p = vec![0.0; d.dim()];
        let gb = d.parameters.iter().position(|n| n == "gamma_b[A]").unwrap();
        let base = d.log_likelihood(&p);
        p[gb] = 3.0;
        assert!((d.log_likelihood(&p) - base).abs() < 1e-9);
    }

    #[test]
    fn disconnected_and_invalid_inputs() {
        let err = build_design(&[], &[ad_study("a1", &["A", "B"]), ad_study("a2", &["C", "D"])], "A", &NmaConfig::default()).unwrap_err();
        assert!(matches!(err, Error::DisconnectedNetwork(c) if c.len() == 2));
        let mut s = ipd_study("s1", &["P", "A"], 5);
        s.patients[0].logit_risk = f64::NAN;
        assert!(matches!(build_design(&[s], &[], "P", &NmaConfig::default()), Err(Error::MissingRisk(_))));
        assert!(matches!(build_design(&[ipd_study("s", &["P"], 5)], &[], "P", &NmaConfig::default()), Err(Error::SingleArmStudy(_))));
    }

    #[test]
    fn local_updates_match_full_recomputation() {
        let ipd = [ipd_study("s1", &["A", "B", "C"], 8), ipd_study("s2", &["B", "C"], 8)];
        let ad = [ad_study("a1", &["A", "C"])];
        let cfg = NmaConfig {
            relative_effects: EffectModel::Random,
            within_modification: EffectModel::Random,
            prognostic_coef: PrognosticPooling::Exchangeable,
            ..Default::default()
        };
        let d = build_design(&ipd, &ad, "A", &cfg).unwrap();
        let p: Vec<f64> = (0..d.dim()).map(|k| 0.1 + 0.05 * (k as f64).sin().abs()).collect();
        for k in 0..d.dim() {
            let mut q = p.clone();
            q[k] += 0.37;
            let full = d.log_likelihood(&q) - d.log_likelihood(&p);
            let local = d.log_likelihood_change(&p, k, q[k]);
            assert!((full - local).abs() < 1e-9, "{}: {full} vs {local}", d.parameters[k]);
        }
    }
}
