//! Per-patient, per-treatment outcome probabilities for a population context.
//!
//! For treatment `h` and a patient with baseline logit risk `x`:
//!
//! ```text
//! logit p_h = a + delta_h + (gamma + gamma_w_h) x + (gamma_b_h - gamma_w_h) xbar
//! ```
//!
//! where `a`, `gamma` and `xbar` come from the context's anchors and the
//! remaining terms from the network posterior (zero for the reference).
//! Anchor draws are paired with network draws by index, cycling the shorter.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::IndividualRecord;
use crate::error::{Error, Result, Warning};
use crate::glm::fit_logistic;
use crate::math::{inv_logit, logit, mean, mix_seed};
use crate::nma::EffectDraws;
use crate::sampler::{sample_posterior, summarize, LogLikelihood, ModelSpec, ParameterBlock, Prior, SamplerConfig, Summary};

/// Below this SD of the logit risks the slope `gamma` is not estimated.
pub const CONSTANT_RISK_SD: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionAnchors {
    pub context: String,
    /// Posterior mean of the reference-treatment logit outcome probability.
    pub a: f64,
    pub gamma: f64,
    pub mean_logit_risk: f64,
    pub provenance: String,
    /// Joint draws of `(a, gamma)`; empty for point anchors.
    #[serde(default)]
    pub a_draws: Vec<f64>,
    #[serde(default)]
    pub gamma_draws: Vec<f64>,
    #[serde(default)]
    pub warnings: Vec<Warning>,
}

impl PredictionAnchors {
    pub fn point(context: &str, a: f64, gamma: f64, mean_logit_risk: f64) -> Self {
        Self { context: context.into(), a, gamma, mean_logit_risk, provenance: "fixed values".into(), a_draws: Vec::new(), gamma_draws: Vec::new(), warnings: Vec::new() }
    }

    pub fn n_draws(&self) -> usize {
        self.a_draws.len().max(1)
    }

    fn draw(&self, i: usize) -> (f64, f64) {
        if self.a_draws.is_empty() {
            (self.a, self.gamma)
        } else {
            let k = i % self.a_draws.len();
            (self.a_draws[k], self.gamma_draws[k])
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("a", self.a), ("gamma", self.gamma), ("mean_logit_risk", self.mean_logit_risk)] {
            if !value.is_finite() {
                return Err(Error::DomainError { name: format!("{}.{name}", self.context), value });
            }
        }
        if self.provenance.is_empty() {
            return Err(Error::EmptyInput(format!("provenance of context '{}'", self.context)));
        }
        if self.a_draws.len() != self.gamma_draws.len() {
            return Err(Error::DimensionMismatch { expected: self.a_draws.len(), found: self.gamma_draws.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorConfig {
    /// Treatment label of the untreated / reference records.
    pub reference: String,
    /// Estimate `gamma` from every record, with a separate intercept per
    /// treatment; `a` is still the reference intercept.
    pub gamma_from_all: bool,
    pub prior_sd: f64,
    pub sampler: SamplerConfig,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self { reference: "Placebo".into(), gamma_from_all: false, prior_sd: 10.0, sampler: SamplerConfig::quick(20230101) }
    }
}

struct AnchorLikelihood<'a> {
    x: &'a [f64],
    y: Vec<bool>,
    /// Group index per record; group 0 is the reference.
    group: Vec<usize>,
    /// Parameter index of `gamma`, if estimated.
    gamma: Option<usize>,
}

impl AnchorLikelihood<'_> {
    fn eta(&self, p: &[f64], i: usize) -> f64 {
        // layout: a, [gamma], intercept shifts of non-reference groups
        let mut eta = p[0] + self.gamma.map_or(0.0, |g| p[g] * self.x[i]);
        if self.group[i] > 0 {
            eta += p[self.gamma.map_or(0, |_| 1) + self.group[i]];
        }
        eta
    }
}

impl LogLikelihood for AnchorLikelihood<'_> {
    fn log_likelihood(&self, p: &[f64]) -> f64 {
        (0..self.y.len()).map(|i| crate::math::bernoulli_loglik(self.y[i], self.eta(p, i))).sum()
    }
}

/// Fits `logit P(y) = a + gamma * logit R` on the context's reference
/// records (or with group intercepts on all records when configured) and
/// takes `xbar` from `population_risks`.
pub fn estimate_anchors(context: &str, records: &[IndividualRecord], risks: &[f64], population_risks: &[f64], config: &AnchorConfig) -> Result<PredictionAnchors> {
    if records.is_empty() || population_risks.is_empty() {
        return Err(Error::EmptyInput(format!("context '{context}' has no records")));
    }
    if records.len() != risks.len() {
        return Err(Error::LengthMismatch(records.len(), risks.len()));
    }
    if let Some(r) = risks.iter().chain(population_risks).find(|r| !r.is_finite()) {
        return Err(Error::DomainError { name: "logit_risk".into(), value: *r });
    }
    let mut groups: Vec<String> = vec![config.reference.clone()];
    for r in records {
        if r.treatment != config.reference {
            if !config.gamma_from_all {
                return Err(Error::NonReferenceRecords(r.treatment.clone()));
            }
            if !groups.contains(&r.treatment) {
                groups.push(r.treatment.clone());
            }
        }
    }
    let group: Vec<usize> = records.iter().map(|r| groups.iter().position(|g| *g == r.treatment).expect("collected")).collect();
    let y: Vec<bool> = records.iter().map(|r| r.event()).collect();
    let reference_y: Vec<bool> = y.iter().zip(&group).filter(|(_, g)| **g == 0).map(|(y, _)| *y).collect();
    if reference_y.is_empty() {
        return Err(Error::NonReferenceRecords(format!("no '{}' records", config.reference)));
    }
    if reference_y.iter().all(|&v| v) || reference_y.iter().all(|&v| !v) {
        return Err(Error::SingleClassOutcome);
    }

    let mut warnings = Vec::new();
    let constant = crate::math::sd(risks) < CONSTANT_RISK_SD;
    if constant {
        warnings.push(Warning::WeakIdentification { parameter: "gamma".into(), detail: "baseline risk is constant; gamma fixed at 0".into() });
    }
    let n_shift = groups.len() - 1;
    let rows: Vec<Vec<f64>> = (0..records.len())
        .map(|i| {
            let mut row = vec![1.0];
            if !constant {
                row.push(risks[i]);
            }
            row.extend((1..groups.len()).map(|g| (group[i] == g) as u8 as f64));
            row
        })
        .collect();
    let init = fit_logistic(&rows, &y, None).map(|f| f.coefficients).ok();

    let mut spec = ModelSpec::new();
    let prior = Prior::normal(0.0, config.prior_sd);
    let with_init = |b: ParameterBlock, k: usize, len: usize| match &init {
        Some(c) => b.with_init(c[k..k + len].to_vec()),
        None => b,
    };
    spec.push(with_init(ParameterBlock::scalar("a", prior), 0, 1));
    let gamma = (!constant).then(|| spec.push(with_init(ParameterBlock::scalar("gamma", prior), 1, 1)));
    if n_shift > 0 {
        let off = 1 + gamma.is_some() as usize;
        spec.push(with_init(ParameterBlock::new("shift", n_shift, prior), off, n_shift));
    }
    let model = AnchorLikelihood { x: risks, y, group, gamma };
    let draws = sample_posterior(&spec, &model, &config.sampler)?;
    let a_draws = draws.column(0);
    let gamma_draws = gamma.map_or_else(|| vec![0.0; a_draws.len()], |g| draws.column(g));
    let provenance = if config.gamma_from_all {
        format!("{} records ({} treatment groups) for gamma, '{}' records for a; {} patients for mean logit risk", records.len(), groups.len(), config.reference, population_risks.len())
    } else {
        format!("{} '{}' records; {} patients for mean logit risk", records.len(), config.reference, population_risks.len())
    };
    Ok(PredictionAnchors {
        context: context.into(),
        a: mean(&a_draws),
        gamma: mean(&gamma_draws),
        mean_logit_risk: mean(population_risks),
        provenance,
        a_draws,
        gamma_draws,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictOptions {
    /// Add the normal predictive term of random-effects models.
    pub predictive_noise: bool,
    /// Evenly thin to at most this many joint draws.
    pub max_draws: Option<usize>,
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        Self { predictive_noise: true, max_draws: None, seed: 20230101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentProbability {
    pub treatment: String,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentPrediction {
    pub context: String,
    pub logit_risk: f64,
    pub treatments: Vec<TreatmentProbability>,
    /// Treatments without within-study information: `gamma_w` is taken
    /// equal to `gamma_b` for them.
    pub assumed_no_gap: Vec<String>,
    /// Draw-wise probabilities, one row per treatment.
    #[serde(skip)]
    pub draws: Vec<Vec<f64>>,
}

impl TreatmentPrediction {
    pub fn get(&self, treatment: &str) -> Option<&Summary> {
        self.treatments.iter().find(|t| t.treatment == treatment).map(|t| &t.summary)
    }

    /// Treatment with the lowest mean outcome probability.
    pub fn best(&self) -> &str {
        &self.treatments.iter().min_by(|a, b| a.summary.mean.total_cmp(&b.summary.mean)).expect("at least one treatment").treatment
    }
}

/// Joint draw schedule shared by all predictions of one context, so that
/// curves and strata use common random numbers.
struct Schedule<'a> {
    anchors: &'a PredictionAnchors,
    effects: &'a EffectDraws,
    /// Joint draw indices; anchor and effect draws cycle within them.
    pairs: Vec<usize>,
    /// Standard-normal predictive deviates, `[draw][treatment]`.
    noise: Option<Vec<Vec<f64>>>,
    gamma_w: Vec<Vec<f64>>,
}

impl<'a> Schedule<'a> {
    fn new(anchors: &'a PredictionAnchors, effects: &'a EffectDraws, options: &PredictOptions) -> Result<Self> {
        anchors.validate()?;
        if effects.n_draws() == 0 || effects.treatments.is_empty() {
            return Err(Error::DrawCountZero);
        }
        let width = effects.treatments.len();
        for rows in [&effects.delta, &effects.gamma_w, &effects.gamma_b] {
            if rows.len() != effects.n_draws() {
                return Err(Error::DimensionMismatch { expected: effects.n_draws(), found: rows.len() });
            }
            if let Some(row) = rows.iter().find(|r| r.len() != width) {
                return Err(Error::DimensionMismatch { expected: width, found: row.len() });
            }
        }
        let n_joint = anchors.n_draws().max(effects.n_draws());
        let pairs: Vec<usize> = match options.max_draws {
            Some(0) => return Err(Error::DrawCountZero),
            Some(m) if m < n_joint => (0..m).map(|k| k * n_joint / m).collect(),
            _ => (0..n_joint).collect(),
        };
        let random = effects.sd_d.is_some() || effects.sd_gw.is_some();
        let noise = (options.predictive_noise && random).then(|| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(options.seed, 7));
            pairs.iter().map(|_| effects.treatments.iter().map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
        });
        // fill unidentified within terms with the between terms
        let gamma_w = effects
            .gamma_w
            .iter()
            .zip(&effects.gamma_b)
            .map(|(w, b)| w.iter().zip(b).map(|(w, b)| if w.is_nan() { *b } else { *w }).collect())
            .collect();
        Ok(Self { anchors, effects, pairs, noise, gamma_w })
    }

    fn len(&self) -> usize {
        self.pairs.len()
    }

    /// Linear predictor of treatment `h` at joint draw `k`.
    fn eta(&self, k: usize, h: usize, x: f64) -> f64 {
        let i = self.pairs[k];
        let (a, gamma) = self.anchors.draw(i);
        let d = i % self.effects.n_draws();
        let xbar = self.anchors.mean_logit_risk;
        let gw = self.gamma_w[d][h];
        let gb = self.effects.gamma_b[d][h];
        let mut eta = a + self.effects.delta[d][h] + (gamma + gw) * x + (gb - gw) * xbar;
        if let Some(noise) = &self.noise {
            if self.effects.treatments[h] != self.effects.reference {
                let sd_d = self.effects.sd_d.as_ref().map_or(0.0, |s| s[d]);
                let sd_gw = self.effects.sd_gw.as_ref().map_or(0.0, |s| s[d]);
                eta += (sd_d * sd_d + sd_gw * sd_gw * (x - xbar).powi(2)).sqrt() * noise[k][h];
            }
        }
        eta
    }

    fn probabilities(&self, h: usize, x: f64) -> Vec<f64> {
        (0..self.len()).map(|k| inv_logit(self.eta(k, h, x))).collect()
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::DomainError { name: "logit_risk".into(), value: x })
    }
}

pub fn predict(anchors: &PredictionAnchors, effects: &EffectDraws, logit_risk: f64, options: &PredictOptions) -> Result<TreatmentPrediction> {
    check_x(logit_risk)?;
    let schedule = Schedule::new(anchors, effects, options)?;
    let draws: Vec<Vec<f64>> = (0..effects.treatments.len()).map(|h| schedule.probabilities(h, logit_risk)).collect();
    Ok(TreatmentPrediction {
        context: anchors.context.clone(),
        logit_risk,
        treatments: effects.treatments.iter().zip(&draws).map(|(t, d)| TreatmentProbability { treatment: t.clone(), summary: summarize(d) }).collect(),
        assumed_no_gap: effects.within_unidentified.clone(),
        draws,
    })
}

// ---------------------------------------------------------------------------
// Risk curves

/// 99 baseline risks from 0.01 to 0.99.
pub fn default_grid() -> Vec<f64> {
    (1..=99).map(|k| k as f64 / 100.0).collect()
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if let Some(r) = grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
        return Err(Error::InvalidGrid(format!("risk {r} is outside (0, 1)")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be strictly increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentCurve {
    pub treatment: String,
    pub mean: Vec<f64>,
    pub q025: Vec<f64>,
    pub q975: Vec<f64>,
}

/// Point where the posterior-mean curves of two treatments swap order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub first: String,
    pub second: String,
    /// Interpolated on the logit scale between the bracketing grid points.
    pub baseline_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskCurves {
    pub context: String,
    pub grid: Vec<f64>,
    pub curves: Vec<TreatmentCurve>,
    /// Range of baseline risks seen in the supplied population.
    pub observed_range: Option<(f64, f64)>,
    pub crossings: Vec<Crossing>,
    pub assumed_no_gap: Vec<String>,
}

impl RiskCurves {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("risk\ttreatment\tp_mean\tp_lo\tp_hi\tin_observed_range\n");
        for c in &self.curves {
            for (k, r) in self.grid.iter().enumerate() {
                let observed = self.observed_range.is_some_and(|(lo, hi)| *r >= lo && *r <= hi);
                s.push_str(&format!("{r:.4}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\n", c.treatment, c.mean[k], c.q025[k], c.q975[k], observed as u8));
            }
        }
        s
    }
}

/// Predictions over a grid of baseline risks (probability scale).
/// `population_risks` are logit risks used only for the range annotation.
pub fn risk_curve(anchors: &PredictionAnchors, effects: &EffectDraws, grid: &[f64], population_risks: &[f64], options: &PredictOptions) -> Result<RiskCurves> {
    validate_grid(grid)?;
    let schedule = Schedule::new(anchors, effects, options)?;
    let point = |r: &f64| -> Vec<Summary> { (0..effects.treatments.len()).map(|h| summarize(&schedule.probabilities(h, logit(*r)))).collect() };
    #[cfg(feature = "parallel")]
    let per_point: Vec<Vec<Summary>> = {
        use rayon::prelude::*;
        grid.par_iter().map(point).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_point: Vec<Vec<Summary>> = grid.iter().map(point).collect();

    let curves: Vec<TreatmentCurve> = effects
        .treatments
        .iter()
        .enumerate()
        .map(|(h, t)| TreatmentCurve {
            treatment: t.clone(),
            mean: per_point.iter().map(|p| p[h].mean).collect(),
            q025: per_point.iter().map(|p| p[h].q025).collect(),
            q975: per_point.iter().map(|p| p[h].q975).collect(),
        })
        .collect();

    let mut crossings = Vec::new();
    for a in 0..curves.len() {
        for b in a + 1..curves.len() {
            let diff: Vec<f64> = (0..grid.len()).map(|k| logit(curves[a].mean[k].clamp(1e-12, 1.0 - 1e-12)) - logit(curves[b].mean[k].clamp(1e-12, 1.0 - 1e-12))).collect();
            for k in 1..grid.len() {
                if diff[k - 1] != 0.0 && diff[k - 1].signum() != diff[k].signum() {
                    let (x0, x1) = (logit(grid[k - 1]), logit(grid[k]));
                    let x = x0 + (x1 - x0) * diff[k - 1] / (diff[k - 1] - diff[k]);
                    crossings.push(Crossing { first: curves[a].treatment.clone(), second: curves[b].treatment.clone(), baseline_risk: inv_logit(x) });
                }
            }
        }
    }
    let observed_range = (!population_risks.is_empty()).then(|| {
        let lo = population_risks.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = population_risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (inv_logit(lo), inv_logit(hi))
    });
    Ok(RiskCurves { context: anchors.context.clone(), grid: grid.to_vec(), curves, observed_range, crossings, assumed_no_gap: effects.within_unidentified.clone() })
}

// ---------------------------------------------------------------------------
// Strata

/// Baseline-risk interval `[lower, upper)`; an upper bound of 1 is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskStratum {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
}

impl RiskStratum {
    pub fn new(label: &str, lower: f64, upper: f64) -> Self {
        Self { label: label.into(), lower, upper }
    }

    pub fn contains(&self, risk: f64) -> bool {
        risk >= self.lower && (risk < self.upper || (self.upper >= 1.0 && risk <= 1.0))
    }
}

/// Below 30% and above 50% baseline risk.
pub fn default_strata() -> Vec<RiskStratum> {
    vec![RiskStratum::new("<30%", 0.0, 0.3), RiskStratum::new(">50%", 0.5, 1.0)]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEffect {
    pub treatment: String,
    /// Average outcome probability over the stratum's patients.
    pub risk: Summary,
    pub risk_difference: Summary,
    /// Odds of the averaged probability against the reference's.
    pub odds_ratio: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumSummary {
    pub label: String,
    pub lower: f64,
    pub upper: f64,
    pub patients: usize,
    pub share: f64,
    pub effects: Vec<StratumEffect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSummary {
    pub context: String,
    pub reference: String,
    pub strata: Vec<StratumSummary>,
    pub all_patients: StratumSummary,
    pub warnings: Vec<Warning>,
}

impl StrataSummary {
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("stratum\tpatients\tshare\ttreatment\trisk_difference\trd_q025\trd_q975\todds_ratio\tor_q025\tor_q975\n");
        for st in self.strata.iter().chain(std::iter::once(&self.all_patients)) {
            for e in &st.effects {
                let (rd, or) = (&e.risk_difference, &e.odds_ratio);
                s.push_str(&format!(
                    "{}\t{}\t{:.4}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
                    st.label, st.patients, st.share, e.treatment, rd.mean, rd.q025, rd.q975, or.mean, or.q025, or.q975
                ));
            }
        }
        s
    }
}

fn summarize_members(schedule: &Schedule, members: &[f64], reference: usize) -> Vec<StratumEffect> {
    let n_t = schedule.effects.treatments.len();
    // averaged probability per treatment and draw
    let avg: Vec<Vec<f64>> = (0..n_t)
        .map(|h| (0..schedule.len()).map(|k| members.iter().map(|&x| inv_logit(schedule.eta(k, h, x))).sum::<f64>() / members.len() as f64).collect())
        .collect();
    let odds = |p: f64| p / (1.0 - p);
    (0..n_t)
        .filter(|&h| h != reference)
        .map(|h| {
            let rd: Vec<f64> = avg[h].iter().zip(&avg[reference]).map(|(p, r)| p - r).collect();
            let or: Vec<f64> = avg[h].iter().zip(&avg[reference]).map(|(p, r)| odds(*p) / odds(*r)).collect();
            StratumEffect { treatment: schedule.effects.treatments[h].clone(), risk: summarize(&avg[h]), risk_difference: summarize(&rd), odds_ratio: summarize(&or) }
        })
        .collect()
}

/// Average risk difference and odds ratio against the reference within each
/// baseline-risk stratum of a population (`population_risks` on the logit
/// scale). Empty strata are reported with a warning.
pub fn strata_summary(anchors: &PredictionAnchors, effects: &EffectDraws, population_risks: &[f64], strata: &[RiskStratum], options: &PredictOptions) -> Result<StrataSummary> {
    if population_risks.is_empty() {
        return Err(Error::EmptyInput("population risks".into()));
    }
    for x in population_risks {
        check_x(*x)?;
    }
    for (i, s) in strata.iter().enumerate() {
        if !(0.0..=1.0).contains(&s.lower) || !(0.0..=1.0).contains(&s.upper) || s.lower >= s.upper {
            return Err(Error::InvalidGrid(format!("stratum '{}' is not an interval inside [0, 1]", s.label)));
        }
        if strata[..i].iter().any(|o| s.lower < o.upper && o.lower < s.upper) {
            return Err(Error::InvalidGrid(format!("stratum '{}' overlaps another stratum", s.label)));
        }
    }
    let schedule = Schedule::new(anchors, effects, options)?;
    let reference = effects.treatment_index(&effects.reference)?;
    let n = population_risks.len();
    let mut warnings = Vec::new();
    let mut out = Vec::new();
    for s in strata {
        let members: Vec<f64> = population_risks.iter().copied().filter(|x| s.contains(inv_logit(*x))).collect();
        let effects = if members.is_empty() {
            warnings.push(Warning::EmptyStratum { label: s.label.clone() });
            Vec::new()
        } else {
            summarize_members(&schedule, &members, reference)
        };
        out.push(StratumSummary { label: s.label.clone(), lower: s.lower, upper: s.upper, patients: members.len(), share: members.len() as f64 / n as f64, effects });
    }
    let all_patients = StratumSummary { label: "all".into(), lower: 0.0, upper: 1.0, patients: n, share: 1.0, effects: summarize_members(&schedule, population_risks, reference) };
    Ok(StrataSummary { context: anchors.context.clone(), reference: effects.reference.clone(), strata: out, all_patients, warnings })
}

/// Named anchors, as served to clients.
pub type Contexts = BTreeMap<String, PredictionAnchors>;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point_effects(delta: f64, gw: f64, gb: f64) -> EffectDraws {
        EffectDraws::point(vec!["A".into(), "P".into()], "P", vec![delta, 0.0], vec![gw, 0.0], vec![gb, 0.0])
    }

    #[test]
    fn arithmetic_oracle() {
        let anchors = PredictionAnchors::point("ctx", -0.5, 1.0, 0.0);
        let p = predict(&anchors, &point_effects(-0.9, -0.2, -0.2), 0.3, &PredictOptions::default()).unwrap();
        // -0.5 - 0.9 + 0.8 * 0.3 = -1.16
        assert!((p.get("A").unwrap().mean - 0.238_667_285_157_089_63).abs() < 1e-6);
        assert!((p.get("P").unwrap().mean - inv_logit(-0.5 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn between_term_vanishes_at_mean_risk() {
        let anchors = PredictionAnchors::point("ctx", -0.2, 0.8, 0.4);
        let a = predict(&anchors, &point_effects(-0.5, -0.3, -0.3), 0.4, &PredictOptions::default()).unwrap();
        assert!((a.get("A").unwrap().mean - inv_logit(-0.2 - 0.5 + 0.5 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn draw_counts_are_checked() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let mut e = point_effects(0.0, 0.0, 0.0);
        e.delta.clear();
        assert!(matches!(predict(&anchors, &e, 0.0, &PredictOptions::default()), Err(Error::DrawCountZero)));
    }

    #[test]
    fn anchor_draws_cycle_against_effect_draws() {
        let mut anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        anchors.a_draws = vec![0.0, 1.0, 2.0];
        anchors.gamma_draws = vec![1.0; 3];
        let p = predict(&anchors, &point_effects(0.0, 0.0, 0.0), 0.0, &PredictOptions::default()).unwrap();
        assert_eq!(p.draws[1], vec![0.5, inv_logit(1.0), inv_logit(2.0)]);
    }

    #[test]
    fn unidentified_within_term_falls_back_to_between() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let mut e = point_effects(0.0, f64::NAN, -0.5);
        e.within_unidentified = vec!["A".into()];
        let p = predict(&anchors, &e, 1.0, &PredictOptions::default()).unwrap();
        assert!((p.get("A").unwrap().mean - inv_logit(0.5)).abs() < 1e-12);
        assert_eq!(p.assumed_no_gap, vec!["A".to_string()]);
    }

    #[test]
    fn ragged_draws_are_rejected() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let mut e = point_effects(-0.5, 0.0, 0.0);
        e.delta.push(vec![-0.5, 0.0]);
        e.gamma_w.push(vec![0.0]);
        e.gamma_b.push(vec![0.0, 0.0]);
        let err = predict(&anchors, &e, 0.0, &PredictOptions::default()).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, found: 1 });
        e.gamma_w.pop();
        assert!(matches!(predict(&anchors, &e, 0.0, &PredictOptions::default()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn curves_cross_at_closed_form_point() {
        // logits: A = -1 + 0.5 x, B = -0.5 + 1.0 x (a=0, gamma=1, xbar=0) cross at x = -1
        let e = EffectDraws::point(vec!["A".into(), "B".into(), "P".into()], "P", vec![-1.0, -0.5, 0.0], vec![-0.5, 0.0, 0.0], vec![-0.5, 0.0, 0.0]);
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let c = risk_curve(&anchors, &e, &default_grid(), &[-2.0, 1.0], &PredictOptions::default()).unwrap();
        let x: Vec<_> = c.crossings.iter().filter(|c| c.first == "A" && c.second == "B").collect();
        assert_eq!(x.len(), 1);
        assert!((x[0].baseline_risk - inv_logit(-1.0)).abs() < 0.01);
        let (lo, hi) = c.observed_range.unwrap();
        assert!((lo - inv_logit(-2.0)).abs() < 1e-12 && (hi - inv_logit(1.0)).abs() < 1e-12);
        for curve in &c.curves {
            assert!(curve.mean.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn grid_errors() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let e = point_effects(0.0, 0.0, 0.0);
        let o = PredictOptions::default();
        assert!(matches!(risk_curve(&anchors, &e, &[], &[], &o), Err(Error::EmptyGrid)));
        assert!(matches!(risk_curve(&anchors, &e, &[0.0, 0.5], &[], &o), Err(Error::InvalidGrid(_))));
        assert_eq!(risk_curve(&anchors, &e, &[0.5], &[], &o).unwrap().curves[0].mean.len(), 1);
    }

    #[test]
    fn null_treatment_has_no_effect_in_any_stratum() {
        let anchors = PredictionAnchors::point("ctx", -0.3, 1.0, -0.5);
        let pop: Vec<f64> = (0..200).map(|i| -3.0 + 5.0 * i as f64 / 199.0).collect();
        let s = strata_summary(&anchors, &point_effects(0.0, 0.0, 0.0), &pop, &default_strata(), &PredictOptions::default()).unwrap();
        for st in s.strata.iter().chain([&s.all_patients]) {
            assert!(st.effects[0].risk_difference.mean.abs() < 1e-15);
            assert!((st.effects[0].odds_ratio.mean - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_stratum_equals_all_patients_column() {
        let anchors = PredictionAnchors::point("ctx", -0.3, 1.0, -0.5);
        let pop: Vec<f64> = (0..50).map(|i| -3.0 + 0.1 * i as f64).collect();
        let s = strata_summary(&anchors, &point_effects(-0.7, -0.2, -0.1), &pop, &[RiskStratum::new("all", 0.0, 1.0)], &PredictOptions::default()).unwrap();
        assert_eq!(s.strata[0].effects, s.all_patients.effects);
    }

    #[test]
    fn empty_stratum_is_a_warning() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let s = strata_summary(&anchors, &point_effects(-0.5, 0.0, 0.0), &[-3.0, -2.5], &default_strata(), &PredictOptions::default()).unwrap();
        assert_eq!(s.strata[1].patients, 0);
        assert!(matches!(&s.warnings[..], [Warning::EmptyStratum { label }] if label == ">50%"));
    }

    #[test]
    fn overlapping_strata_rejected() {
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let st = [RiskStratum::new("a", 0.0, 0.5), RiskStratum::new("b", 0.4, 1.0)];
        assert!(strata_summary(&anchors, &point_effects(0.0, 0.0, 0.0), &[0.0], &st, &PredictOptions::default()).is_err());
    }

    #[test]
    fn strong_modification_widens_high_risk_difference() {
        // gamma_w < 0 with a benefit: treatment helps more where risk is high
        let anchors = PredictionAnchors::point("ctx", 0.0, 1.0, 0.0);
        let pop: Vec<f64> = (0..400).map(|i| -3.0 + 6.0 * i as f64 / 399.0).collect();
        let s = strata_summary(&anchors, &point_effects(-0.5, -0.4, -0.4), &pop, &default_strata(), &PredictOptions::default()).unwrap();
        assert!(s.strata[1].effects[0].risk_difference.mean.abs() > s.strata[0].effects[0].risk_difference.mean.abs());
    }

    fn record(y: bool, t: &str) -> IndividualRecord {
        IndividualRecord { subject_id: "s".into(), cycle: 1, covariates: BTreeMap::new(), treatment: t.into(), outcome: y as u8 }
    }

    #[test]
    fn anchors_reject_non_reference_records() {
        let recs = vec![record(true, "P"), record(false, "A")];
        let cfg = AnchorConfig { reference: "P".into(), ..Default::default() };
        assert!(matches!(estimate_anchors("c", &recs, &[0.0, 1.0], &[0.0], &cfg), Err(Error::NonReferenceRecords(_))));
    }

    #[test]
    fn constant_risk_fixes_gamma_with_warning() {
        let recs: Vec<_> = (0..200).map(|i| record(i % 4 == 0, "P")).collect();
        let cfg = AnchorConfig { reference: "P".into(), sampler: SamplerConfig { warmup: 300, iterations: 300, ..SamplerConfig::quick(1) }, ..Default::default() };
        let a = estimate_anchors("c", &recs, &[0.2; 200], &[0.2], &cfg).unwrap();
        assert_eq!(a.gamma, 0.0);
        assert!((a.a - logit(0.25)).abs() < 0.3);
        assert!(matches!(&a.warnings[..], [Warning::WeakIdentification { parameter, .. }] if parameter == "gamma"));
    }

    proptest! {
        #[test]
        fn odds_ratio_identity(delta in -2.0..2.0f64, gw in -1.0..1.0f64, gb in -1.0..1.0f64, x in -3.0..3.0f64, xbar in -2.0..2.0f64, a in -2.0..2.0f64) {
            let anchors = PredictionAnchors::point("ctx", a, 0.9, xbar);
            let p = predict(&anchors, &point_effects(delta, gw, gb), x, &PredictOptions::default()).unwrap();
            let odds = |p: f64| p / (1.0 - p);
            let or = odds(p.draws[0][0]) / odds(p.draws[1][0]);
            let expected = (delta + gw * x + (gb - gw) * xbar).exp();
            prop_assert!((or / expected - 1.0).abs() < 1e-9);
        }

        #[test]
        fn ranking_invariant_to_shift_in_a(shift in -3.0..3.0f64, x in -3.0..3.0f64) {
            let e = EffectDraws::point(vec!["A".into(), "B".into(), "P".into()], "P", vec![-0.6, -0.3, 0.0], vec![-0.1, -0.3, 0.0], vec![-0.2, 0.1, 0.0]);
            let base = predict(&PredictionAnchors::point("c", -0.4, 1.0, 0.0), &e, x, &PredictOptions::default()).unwrap();
            let moved = predict(&PredictionAnchors::point("c", -0.4 + shift, 1.0, 0.0), &e, x, &PredictOptions::default()).unwrap();
            prop_assert_eq!(base.best(), moved.best());
        }

        #[test]
        fn monotone_in_risk_when_slope_positive(x0 in -3.0..3.0f64, dx in 0.01..2.0f64) {
            let anchors = PredictionAnchors::point("c", 0.0, 1.0, 0.0);
            let e = point_effects(-0.5, -0.4, -0.2);
            let lo = predict(&anchors, &e, x0, &PredictOptions::default()).unwrap();
            let hi = predict(&anchors, &e, x0 + dx, &PredictOptions::default()).unwrap();
            for h in 0..2 {
                prop_assert!(hi.draws[h][0] > lo.draws[h][0]);
            }
        }
    }
}
