//! Pseudo individual data for aggregate studies.
//!
//! Aggregate studies only report covariate means (and sometimes SDs). The
//! network model needs each such study's mean logit baseline risk, which is
//! not the risk model evaluated at the mean covariates. Patient rows are
//! drawn from a multivariate normal with the study's moments and the
//! correlation structure of the pooled IPD, and the risk model is averaged
//! over them.
//!
//! Everything here works on the transformed covariate scale. Binary and
//! categorical covariates enter the normal model through a latent variable
//! (categorical ones by their level index) and are cut back into levels by
//! rank, so a study's reported proportions are reproduced to within `1/n`.
//! Missing study means are filled in first by the chained conditional-normal
//! imputation in [`impute_table`].

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{design_columns, CovariateKind, CovariateSpec, IndividualRecord, TrialAd, TrialIpd};
use crate::error::{Error, Result, Warning};
use crate::math::{inv_logit, logit, mean, mix_seed, quantile};
use crate::risk::RiskModel;
use crate::sampler::{sample_posterior, LogLikelihood, ModelSpec, ParameterBlock, PosteriorDraws, Prior, SamplerConfig};

pub const DEFAULT_ROWS: usize = 1000;
/// Eigenvalues below `-PSD_TOLERANCE` are reported before clipping.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Reported proportions are kept this far from 0 and 1 before the logit.
const PROPORTION_FLOOR: f64 = 1e-4;
pub const OUTCOME_COLUMN: &str = "logit_event_rate";

/// Pooled-IPD covariance of the covariates, one dimension per covariate:
/// transformed value for continuous ones, 0/1 for binary ones and the level
/// index for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub specs: Vec<CovariateSpec>,
    pub means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub n_records: usize,
    pub warnings: Vec<Warning>,
}

impl CovarianceModel {
    pub fn dim(&self) -> usize {
        self.specs.len()
    }

    pub fn sds(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.covariance[k][k].max(0.0).sqrt()).collect()
    }

    /// Correlation matrix; dimensions without variance are uncorrelated.
    pub fn correlation(&self) -> DMatrix<f64> {
        let sd = self.sds();
        DMatrix::from_fn(self.dim(), self.dim(), |a, b| {
            if a == b {
                1.0
            } else if sd[a] > 0.0 && sd[b] > 0.0 {
                (self.covariance[a][b] / (sd[a] * sd[b])).clamp(-1.0, 1.0)
            } else {
                0.0
            }
        })
    }
}

/// Covariate-level code of one record (see [`CovarianceModel`]).
pub fn covariate_codes(record: &IndividualRecord, specs: &[CovariateSpec]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(specs.len());
    let mut buf = Vec::new();
    for s in specs {
        buf.clear();
        s.encode(record.covariates.get(&s.name), &mut buf)?;
        out.push(match s.kind {
            CovariateKind::Categorical { .. } => buf.iter().position(|&v| v == 1.0).map_or(0.0, |k| (k + 1) as f64),
            _ => buf[0],
        });
    }
    Ok(out)
}

/// Clips negative eigenvalues to zero. Returns the repaired matrix and the
/// smallest eigenvalue before clipping.
pub fn clip_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min >= 0.0 {
        return (sym, min);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let repaired = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    (repaired, min)
}

/// Lower factor `L` with `L L' = m` for a PSD matrix: Cholesky when it
/// exists, otherwise the eigen factor `V sqrt(Lambda)`.
pub fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    if let Some(c) = m.clone().cholesky() {
        return c.l();
    }
    let eig = SymmetricEigen::new(m.clone());
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&root)
}

/// Sample covariance (denominator `n - 1`) of the covariates over every IPD
/// record, repaired to be positive semidefinite.
pub fn estimate_covariance(trials: &[TrialIpd], specs: &[CovariateSpec]) -> Result<CovarianceModel> {
    crate::data::validate_specs(specs)?;
    let rows: Vec<Vec<f64>> = trials.iter().flat_map(|t| &t.records).map(|r| covariate_codes(r, specs)).collect::<Result<_>>()?;
    let (n, p) = (rows.len(), specs.len());
    if n <= p + 1 {
        return Err(Error::InsufficientRecords { records: n, columns: p });
    }
    let means: Vec<f64> = (0..p).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(p, p);
    for r in &rows {
        for a in 0..p {
            for b in a..p {
                cov[(a, b)] += (r[a] - means[a]) * (r[b] - means[b]);
            }
        }
    }
    for a in 0..p {
        for b in a..p {
            cov[(a, b)] /= (n - 1) as f64;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    let (cov, min) = clip_psd(&cov);
    let mut warnings = Vec::new();
    let max = SymmetricEigen::new(cov.clone()).eigenvalues.amax();
    if min < -PSD_TOLERANCE || (p > 1 && min <= PSD_TOLERANCE * max.max(1.0)) {
        warnings.push(Warning::RankDeficient { min_eigenvalue: min });
    }
    Ok(CovarianceModel {
        specs: specs.to_vec(),
        means,
        covariance: (0..p).map(|a| (0..p).map(|b| cov[(a, b)]).collect()).collect(),
        n_records: n,
        warnings,
    })
}

/// Per-covariate moments of one study on the transformed scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Moment {
    /// `sd: None` falls back to the pooled-IPD SD.
    Continuous { mean: f64, sd: Option<f64> },
    /// Proportion of every level, reference level first (binary: `[1-p, p]`).
    Levels { proportions: Vec<f64> },
}

impl Moment {
    pub fn binary(p: f64) -> Self {
        Moment::Levels { proportions: vec![1.0 - p, p] }
    }
}

/// Draws `n` design-encoded rows for one study. Continuous covariates are
/// `mean + sd * z`; the latent `z` vector has the pooled-IPD correlation.
/// Level covariates take the level whose cumulative proportion band the
/// rank of their latent value falls into.
pub fn generate_pseudo_ipd(moments: &[Moment], cov: &CovarianceModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let p = cov.dim();
    if moments.len() != p {
        return Err(Error::DimensionMismatch { expected: p, found: moments.len() });
    }
    if n == 0 {
        return Err(Error::EmptyInput("pseudo-IPD needs at least one row".into()));
    }
    for (m, s) in moments.iter().zip(&cov.specs) {
        let ok = match (m, &s.kind) {
            (Moment::Continuous { mean, sd }, CovariateKind::Continuous) => mean.is_finite() && sd.is_none_or(|v| v.is_finite() && v >= 0.0),
            (Moment::Levels { proportions }, CovariateKind::Binary) => proportions.len() == 2,
            (Moment::Levels { proportions }, CovariateKind::Categorical { levels }) => proportions.len() == levels.len(),
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidCovariate { name: s.name.clone(), message: format!("moment {m:?} does not match the covariate") });
        }
    }
    let (corr, _) = clip_psd(&cov.correlation());
    let factor = psd_factor(&corr);
    let pooled_sd = cov.sds();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent: Vec<DVector<f64>> = (0..n)
        .map(|_| {
            let z = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
            &factor * z
        })
        .collect();

    // covariate-level values, then dummy encoding
    let mut values = vec![vec![0.0; p]; n];
    for (k, m) in moments.iter().enumerate() {
        match m {
            Moment::Continuous { mean, sd } => {
                let s = sd.unwrap_or(pooled_sd[k]);
                for (row, z) in values.iter_mut().zip(&latent) {
                    row[k] = mean + s * z[k];
                }
            }
            Moment::Levels { proportions } => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| latent[a][k].total_cmp(&latent[b][k]));
                let total: f64 = proportions.iter().map(|q| q.max(0.0)).sum();
                let mut cum = 0.0;
                let mut start = 0;
                for (level, q) in proportions.iter().enumerate() {
                    cum += q.max(0.0) / total;
                    let end = if level + 1 == proportions.len() { n } else { ((cum * n as f64).round() as usize).min(n) };
                    for &i in &order[start..end.max(start)] {
                        values[i][k] = level as f64;
                    }
                    start = end.max(start);
                }
            }
        }
    }
    Ok(values.into_iter().map(|v| encode_codes(&v, &cov.specs)).collect())
}

fn encode_codes(codes: &[f64], specs: &[CovariateSpec]) -> Vec<f64> {
    let mut out = Vec::new();
    for (c, s) in codes.iter().zip(specs) {
        match &s.kind {
            CovariateKind::Categorical { levels } => {
                out.extend((1..levels.len()).map(|l| if l as f64 == *c { 1.0 } else { 0.0 }));
            }
            _ => out.push(*c),
        }
    }
    out
}

/// Arithmetic mean of `logit R_i` over design rows.
pub fn mean_logit_risk<M: RiskModel + ?Sized>(model: &M, rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| model.linear_predictor(r)).sum::<f64>() / rows.len() as f64
}

/// Mean of `R_i` over design rows (not `R` at the mean row).
pub fn mean_risk<M: RiskModel + ?Sized>(model: &M, rows: &[Vec<f64>]) -> f64 {
    rows.iter().map(|r| inv_logit(model.linear_predictor(r))).sum::<f64>() / rows.len() as f64
}

/// Delimited export of pseudo rows.
pub fn rows_to_csv(specs: &[CovariateSpec], rows: &[Vec<f64>]) -> String {
    let header: Vec<String> = design_columns(specs).into_iter().map(|c| c.name).collect();
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------------------
// Imputation of study-level means

/// Study-by-column table with gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationTable {
    pub studies: Vec<String>,
    pub columns: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputedTable {
    pub studies: Vec<String>,
    pub columns: Vec<String>,
    /// Observed values, or posterior means of the missing ones.
    pub values: Vec<Vec<f64>>,
    /// Posterior SDs of imputed cells; 0 for observed ones.
    pub sds: Vec<Vec<f64>>,
    pub imputed: Vec<Vec<bool>>,
    /// Posterior means of the chain coefficients on the standardized scale:
    /// `gamma[k][0]` intercept, `gamma[k][l + 1]` coefficient of column `l < k`.
    pub gamma: Vec<Vec<f64>>,
    /// Posterior means of the conditional precisions (standardized scale).
    pub precision: Vec<f64>,
}

struct ChainLikelihood {
    /// Standardized table with `NaN` at missing cells.
    table: Vec<Vec<f64>>,
    missing: Vec<(usize, usize)>,
    k: usize,
    gamma_offset: Vec<usize>,
    sd_offset: usize,
    missing_offset: usize,
}

impl LogLikelihood for ChainLikelihood {
    fn log_likelihood(&self, params: &[f64]) -> f64 {
        let mut filled = self.table.clone();
        for (m, &(j, c)) in self.missing.iter().enumerate() {
            filled[j][c] = params[self.missing_offset + m];
        }
        let mut total = 0.0;
        for row in &filled {
            for c in 0..self.k {
                let g = &params[self.gamma_offset[c]..];
                let mu = g[0] + (0..c).map(|l| g[l + 1] * row[l]).sum::<f64>();
                let sd = params[self.sd_offset + c];
                let r = (row[c] - mu) / sd;
                total += -0.5 * r * r - sd.ln();
            }
        }
        total
    }
}

/// Bayesian imputation of missing cells under the chained conditional
/// normal model: column `k` given columns `0..k` is normal with mean
/// `gamma_k0 + sum_l gamma_kl * column_l` and precision `tau_k`. Columns are
/// standardized with the observed mean and SD; the chain coefficients get
/// `N(0, 1)` priors and the conditional SDs `HalfNormal(1)` on that scale.
/// Complete tables are returned unchanged without sampling.
pub fn impute_table(table: &ImputationTable, config: &SamplerConfig) -> Result<ImputedTable> {
    let n = table.studies.len();
    let k = table.columns.len();
    if table.values.len() != n || table.values.iter().any(|r| r.len() != k) {
        return Err(Error::DimensionMismatch { expected: k, found: table.values.first().map_or(0, Vec::len) });
    }
    let mut centre = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for c in 0..k {
        let obs: Vec<f64> = table.values.iter().filter_map(|r| r[c]).collect();
        if obs.len() < 2 && obs.len() < n {
            return Err(Error::AllMissingCovariate(table.columns[c].clone()));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariate { name: table.columns[c].clone(), message: "non-finite study mean".into() });
        }
        centre[c] = mean(&obs);
        let s = crate::math::sd(&obs);
        scale[c] = if s > 0.0 { s } else { 1.0 };
    }
    let missing: Vec<(usize, usize)> = (0..n).flat_map(|j| (0..k).map(move |c| (j, c))).filter(|&(j, c)| table.values[j][c].is_none()).collect();
    let observed_values: Vec<Vec<f64>> = table.values.iter().map(|r| r.iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect();
    if missing.is_empty() {
        return Ok(ImputedTable {
            studies: table.studies.clone(),
            columns: table.columns.clone(),
            values: observed_values,
            sds: vec![vec![0.0; k]; n],
            imputed: vec![vec![false; k]; n],
            gamma: Vec::new(),
            precision: Vec::new(),
        });
    }

    let standardized: Vec<Vec<f64>> = observed_values.iter().map(|r| r.iter().enumerate().map(|(c, v)| (v - centre[c]) / scale[c]).collect()).collect();
    let mut spec = ModelSpec::new();
    let gamma_offset: Vec<usize> = (0..k).map(|c| spec.push(ParameterBlock::new(format!("gamma_{}", table.columns[c]), c + 1, Prior::normal(0.0, 1.0)))).collect();
    let sd_offset = spec.push(ParameterBlock::new("sd", k, Prior::HalfNormal { sd: 1.0 }).with_init(vec![1.0; k]));
    let missing_offset = spec.push(ParameterBlock::new("missing", missing.len(), Prior::Hierarchical).with_init(vec![0.0; missing.len()]));
    let lik = ChainLikelihood { table: standardized, missing: missing.clone(), k, gamma_offset: gamma_offset.clone(), sd_offset, missing_offset };
    let draws: PosteriorDraws = sample_posterior(&spec, &lik, config)?;
    let means = draws.means();

    let mut values = observed_values;
    let mut sds = vec![vec![0.0; k]; n];
    let mut imputed = vec![vec![false; k]; n];
    for (m, &(j, c)) in missing.iter().enumerate() {
        let col: Vec<f64> = draws.column(missing_offset + m).iter().map(|z| centre[c] + scale[c] * z).collect();
        values[j][c] = mean(&col);
        sds[j][c] = crate::math::sd(&col);
        imputed[j][c] = true;
    }
    Ok(ImputedTable {
        studies: table.studies.clone(),
        columns: table.columns.clone(),
        values,
        sds,
        imputed,
        gamma: (0..k).map(|c| means[gamma_offset[c]..gamma_offset[c] + c + 1].to_vec()).collect(),
        precision: (0..k).map(|c| 1.0 / (means[sd_offset + c] * means[sd_offset + c])).collect(),
    })
}

fn clamp_proportion(p: f64) -> f64 {
    p.clamp(PROPORTION_FLOOR, 1.0 - PROPORTION_FLOOR)
}

/// Study-level table over design columns plus the outcome column, in spec
/// order. Continuous columns hold transformed-scale means (aggregate means
/// moved with the delta method), binary and dummy columns the logit of the
/// proportion, and the outcome the logit of the overall event rate with a
/// 0.5 continuity correction. IPD studies come first, then AD studies.
pub fn study_means_table(ipd: &[TrialIpd], ad: &[TrialAd], specs: &[CovariateSpec]) -> Result<ImputationTable> {
    let cols = design_columns(specs);
    let mut studies = Vec::new();
    let mut values = Vec::new();
    for t in ipd {
        let rows: Vec<Vec<f64>> = t.records.iter().map(|r| r.transformed(specs)).collect::<Result<_>>()?;
        let n = rows.len() as f64;
        let mut row: Vec<Option<f64>> = cols
            .iter()
            .enumerate()
            .map(|(c, col)| {
                let m = rows.iter().map(|r| r[c]).sum::<f64>() / n;
                Some(if col.binary { logit((m * n + 0.5) / (n + 1.0)) } else { m })
            })
            .collect();
        let events = t.records.iter().filter(|r| r.event()).count() as f64;
        row.push(Some(logit((events + 0.5) / (n + 1.0))));
        studies.push(t.study_id.clone());
        values.push(row);
    }
    for t in ad {
        let mut row = Vec::with_capacity(cols.len() + 1);
        for col in &cols {
            let raw = t.covariate_means.get(&col.name).copied().flatten();
            let sd = t.covariate_sds.get(&col.name).copied().flatten();
            let spec = specs.iter().find(|s| s.name == col.covariate).expect("column from specs");
            row.push(match raw {
                None => None,
                Some(m) if col.binary => {
                    if !(0.0..=1.0).contains(&m) {
                        return Err(Error::InvalidStudy { study: t.study_id.clone(), message: format!("proportion for `{}` outside [0, 1]", col.name) });
                    }
                    Some(logit(clamp_proportion(m)))
                }
                Some(m) => Some(spec.transform.transform_moments(&col.name, m, sd)?.0),
            });
        }
        row.push(Some(logit((t.events() as f64 + 0.5) / (t.total() as f64 + 1.0))));
        studies.push(t.study_id.clone());
        values.push(row);
    }
    let mut columns: Vec<String> = cols.into_iter().map(|c| c.name).collect();
    columns.push(OUTCOME_COLUMN.to_string());
    Ok(ImputationTable { studies, columns, values })
}

/// Imputed study means for every study, on the scales of [`study_means_table`].
pub fn impute_study_means(ad: &[TrialAd], ipd: &[TrialIpd], specs: &[CovariateSpec], config: &SamplerConfig) -> Result<ImputedTable> {
    impute_table(&study_means_table(ipd, ad, specs)?, config)
}

/// Converts an AD study's (imputed) table row into per-covariate moments.
pub fn ad_moments(study: &TrialAd, specs: &[CovariateSpec], table: &ImputedTable) -> Result<Vec<Moment>> {
    let j = table.studies.iter().position(|s| s == &study.study_id).ok_or_else(|| Error::InvalidStudy {
        study: study.study_id.clone(),
        message: "missing from the study-means table".into(),
    })?;
    let row = &table.values[j];
    let col_index = |name: &str| table.columns.iter().position(|c| c == name).expect("design column in table");
    specs
        .iter()
        .map(|s| {
            Ok(match &s.kind {
                CovariateKind::Continuous => {
                    let sd_raw = study.covariate_sds.get(&s.name).copied().flatten();
                    let mean_raw = study.covariate_means.get(&s.name).copied().flatten();
                    let sd = match (mean_raw, sd_raw) {
                        (Some(m), Some(sdv)) => s.transform.transform_moments(&s.name, m, Some(sdv))?.1,
                        _ => None,
                    };
                    Moment::Continuous { mean: row[col_index(&s.name)], sd }
                }
                CovariateKind::Binary => Moment::binary(inv_logit(row[col_index(&s.name)])),
                CovariateKind::Categorical { levels } => {
                    let dummies: Vec<f64> = levels[1..].iter().map(|l| inv_logit(row[col_index(&format!("{}[{}]", s.name, l))])).collect();
                    let used: f64 = dummies.iter().sum();
                    let mut props = vec![(1.0 - used).max(0.0)];
                    props.extend(dummies);
                    let total: f64 = props.iter().sum();
                    Moment::Levels { proportions: props.into_iter().map(|q| q / total).collect() }
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PseudoIpdConfig {
    pub rows: usize,
    pub seed: u64,
    pub imputation: SamplerConfig,
}

impl Default for PseudoIpdConfig {
    fn default() -> Self {
        Self { rows: DEFAULT_ROWS, seed: 20230101, imputation: SamplerConfig::default() }
    }
}

/// Baseline-risk summary of an aggregate study computed from its pseudo rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdRiskSummary {
    pub study_id: String,
    pub mean_logit_risk: f64,
    pub mean_risk: f64,
    pub risk_q025: f64,
    pub risk_q975: f64,
    pub rows: usize,
    /// Design columns whose study mean was imputed.
    pub imputed: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct AdRiskResult {
    pub summaries: Vec<AdRiskSummary>,
    pub covariance: CovarianceModel,
    pub table: ImputedTable,
    pub rows: BTreeMap<String, Vec<Vec<f64>>>,
}

/// Mean logit baseline risk of every AD study: impute missing means, draw
/// pseudo rows, average `logit R_i`. Study `j` (in input order) uses seed
/// `mix_seed(seed, j)`.
pub fn ad_baseline_risks<M: RiskModel + ?Sized>(model: &M, ipd: &[TrialIpd], ad: &[TrialAd], config: &PseudoIpdConfig) -> Result<AdRiskResult> {
    let specs = model.specs();
    let covariance = estimate_covariance(ipd, specs)?;
    let table = impute_study_means(ad, ipd, specs, &config.imputation)?;
    let mut summaries = Vec::new();
    let mut all_rows = BTreeMap::new();
    for (j, study) in ad.iter().enumerate() {
        let moments = ad_moments(study, specs, &table)?;
        let rows = generate_pseudo_ipd(&moments, &covariance, config.rows, mix_seed(config.seed, j as u64))?;
        let risks: Vec<f64> = rows.iter().map(|r| inv_logit(model.linear_predictor(r))).collect();
        let row_index = table.studies.iter().position(|s| s == &study.study_id).expect("study in table");
        summaries.push(AdRiskSummary {
            study_id: study.study_id.clone(),
            mean_logit_risk: mean_logit_risk(model, &rows),
            mean_risk: mean(&risks),
            risk_q025: quantile(&risks, 0.025),
            risk_q975: quantile(&risks, 0.975),
            rows: rows.len(),
            imputed: table.columns.iter().zip(&table.imputed[row_index]).filter(|(_, &i)| i).map(|(c, _)| c.clone()).collect(),
        });
        all_rows.insert(study.study_id.clone(), rows);
    }
    Ok(AdRiskResult { summaries, covariance, table, rows: all_rows })
}
