//! Subcommand implementations. Each writes a deterministic artifact
//! directory under the configured artifact root.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rbnma::data::{CovariateValue, IndividualRecord, TrialAd, TrialIpd};
use rbnma::evaluation::{calibration, CalibrationReport};
use rbnma::math::{inv_logit, mix_seed};
use rbnma::nma::{fit_nma, EffectDraws, NmaAdStudy, NmaIpdStudy};
use rbnma::prediction::{estimate_anchors, predict, risk_curve, strata_summary, PredictionAnchors};
use rbnma::pseudo_ipd::ad_baseline_risks;
use rbnma::risk::{LinearRiskModel, RiskModel};
use rbnma::sampler::{Diagnostics, RHAT_LIMIT};
use rbnma::simulation::{recovery_report, simulate_cohort, simulate_network};
use rbnma::stage1::{bootstrap_optimism, fit_prognostic, BayesianFitter, PrognosticModel};
use rbnma::stage2::{compare_recalibrations, comparison_tsv, recalibrate, RecalibratedModel};
use rbnma::Warning;
use serde::{Deserialize, Serialize};

use crate::config::{seeds, ContextSource, ProjectConfig};
use crate::error::{CliError, CliResult, EXIT_CONVERGENCE, EXIT_OK};
use crate::io::{self, write_json, write_text};

/// Artifact file locations.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn dir(&self, stage: &str) -> PathBuf {
        self.root.join(stage)
    }

    pub fn stage1_model(&self) -> PathBuf {
        self.dir("stage1").join("model.json")
    }

    pub fn stage2_model(&self) -> PathBuf {
        self.dir("stage2").join("model.json")
    }

    pub fn effects(&self) -> PathBuf {
        self.dir("stage3").join("effects.json")
    }

    pub fn contexts(&self) -> PathBuf {
        self.dir("stage3").join("contexts.json")
    }

    pub fn meta(&self) -> PathBuf {
        self.dir("stage3").join("meta.json")
    }
}

/// Result of a subcommand.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub dir: PathBuf,
    pub warnings: Vec<Warning>,
}

impl Outcome {
    fn new(dir: PathBuf, warnings: Vec<Warning>) -> Self {
        Self { dir, warnings }
    }

    pub fn converged(&self) -> bool {
        !self.warnings.iter().any(|w| matches!(w, Warning::NonConvergent { .. }))
    }

    pub fn exit_code(&self) -> i32 {
        if self.converged() {
            EXIT_OK
        } else {
            EXIT_CONVERGENCE
        }
    }
}

/// A population context with everything needed to serve predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextArtifact {
    pub anchors: PredictionAnchors,
    /// Logit baseline risks of the context population.
    pub population_logit_risks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_version: String,
    pub seed: u64,
    pub reference: String,
    pub treatments: Vec<String>,
    pub recalibration: String,
    pub draws: usize,
    pub contexts: Vec<String>,
}

pub const MODEL_VERSION: &str = concat!("rbnma-", env!("CARGO_PKG_VERSION"), "/1");

fn missing(artifact: &str, path: &Path, producer: &str) -> CliError {
    CliError::MissingArtifact { artifact: artifact.into(), path: path.to_path_buf(), producer: producer.into() }
}

fn read_artifact(path: &Path, artifact: &str, producer: &str) -> CliResult<String> {
    if !path.exists() {
        return Err(missing(artifact, path, producer));
    }
    io::read_text(path)
}

pub fn load_stage1(layout: &Layout) -> CliResult<PrognosticModel> {
    Ok(PrognosticModel::from_json(&read_artifact(&layout.stage1_model(), "stage-1 model", "stage1 fit")?)?)
}

pub fn load_stage2(layout: &Layout) -> CliResult<RecalibratedModel> {
    Ok(RecalibratedModel::from_json(&read_artifact(&layout.stage2_model(), "stage-2 model", "stage2 recalibrate")?)?)
}

fn from_json<T: for<'de> Deserialize<'de>>(path: &Path, artifact: &str, producer: &str) -> CliResult<T> {
    let text = read_artifact(path, artifact, producer)?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse { path: path.to_path_buf(), line: e.line() as u64, message: e.to_string() })
}

pub fn load_effects(layout: &Layout) -> CliResult<EffectDraws> {
    from_json(&layout.effects(), "stage-3 effect draws", "stage3 fit")
}

pub fn load_contexts(layout: &Layout) -> CliResult<Vec<ContextArtifact>> {
    from_json(&layout.contexts(), "prediction contexts", "stage3 fit")
}

pub fn load_meta(layout: &Layout) -> CliResult<ModelMeta> {
    from_json(&layout.meta(), "model metadata", "stage3 fit")
}

fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> CliResult<&'a Path> {
    path.as_deref().ok_or_else(|| CliError::Config(format!("data.{key} is not set")))
}

pub fn load_cohort(cfg: &ProjectConfig) -> CliResult<Vec<IndividualRecord>> {
    Ok(io::read_ipd(require(&cfg.data.cohort, "cohort")?, &cfg.covariates)?.into_iter().map(|(_, r)| r).collect())
}

pub fn load_trials(cfg: &ProjectConfig) -> CliResult<Vec<TrialIpd>> {
    Ok(io::group_trials(io::read_ipd(require(&cfg.data.trials_ipd, "trials_ipd")?, &cfg.covariates)?, &cfg.stage3.reference))
}

pub fn load_ad(cfg: &ProjectConfig) -> CliResult<Vec<TrialAd>> {
    match &cfg.data.ad_arms {
        None => Ok(Vec::new()),
        Some(arms) => io::read_ad(arms, cfg.data.ad_covariates.as_deref(), &cfg.stage3.reference),
    }
}

fn start(cfg: &ProjectConfig, stage: &str) -> CliResult<PathBuf> {
    let dir = Layout::new(&cfg.artifacts).dir(stage);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    write_text(&dir.join("resolved_config.toml"), &cfg.to_toml())?;
    Ok(dir)
}

fn nonconvergence(diag: &Diagnostics) -> Vec<Warning> {
    diag.nonconvergent(RHAT_LIMIT).into_iter().map(|p| Warning::NonConvergent { parameter: p.name.clone(), rhat: p.rhat }).collect()
}

fn diagnostics_tsv(diag: &Diagnostics) -> String {
    let mut s = String::from("parameter\tmean\tsd\tq2.5\tq50\tq97.5\trhat\tess_bulk\n");
    for p in &diag.parameters {
        let m = &p.summary;
        s.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.4}\t{:.0}\n", p.name, m.mean, m.sd, m.q025, m.q50, m.q975, p.rhat, p.ess_bulk));
    }
    s
}

fn calibration_tsv(report: &CalibrationReport) -> String {
    let mut s = format!("# n={} auc={:.6} slope={:.6} intercept={:.6}\ncurve\tpredicted\tobserved\tcount\n", report.n, report.auc, report.calibration_slope, report.calibration_intercept);
    for b in &report.bins {
        s.push_str(&format!("decile\t{:.6}\t{:.6}\t{}\n", b.predicted, b.observed, b.count));
    }
    for p in &report.smoothed {
        s.push_str(&format!("smoothed\t{:.6}\t{:.6}\t\n", p.x, p.y));
    }
    s
}

fn finish(dir: PathBuf, warnings: Vec<Warning>) -> CliResult<Outcome> {
    write_json(&dir.join("warnings.json"), &warnings)?;
    Ok(Outcome::new(dir, warnings))
}

// ---------------------------------------------------------------------------

pub fn stage1_fit(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let specs = cfg.require_covariates()?;
    let cohort = load_cohort(cfg)?;
    let dir = start(cfg, "stage1")?;
    let fit = fit_prognostic(&cohort, specs, &cfg.stage1)?;
    let diag = fit.structural_diagnostics()?;
    write_text(&dir.join("model.json"), &fit.model.to_json())?;
    write_text(&dir.join("draws.tsv"), &fit.draws.to_columnar_string())?;
    write_text(&dir.join("coefficients.tsv"), &fit.model.linear_model().coefficient_table_tsv())?;
    write_text(&dir.join("diagnostics.tsv"), &diagnostics_tsv(&diag))?;
    finish(dir, nonconvergence(&diag))
}

pub fn stage1_validate(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let specs = cfg.require_covariates()?;
    let layout = Layout::new(&cfg.artifacts);
    let model = load_stage1(&layout)?;
    let cohort = load_cohort(cfg)?;
    let dir = start(cfg, "stage1_validation")?;
    let linear = model.linear_model();
    let risks: Vec<f64> = linear.record_logit_risks(&cohort)?.into_iter().map(inv_logit).collect();
    let outcomes: Vec<bool> = cohort.iter().map(|r| r.event()).collect();
    write_text(&dir.join("calibration.tsv"), &calibration_tsv(&calibration(&risks, &outcomes)?))?;
    let fitter = BayesianFitter { specs: specs.to_vec(), config: cfg.stage1.clone() };
    let report = bootstrap_optimism(&cohort, &fitter, cfg.validation.bootstrap_replicates, crate::config::stage_seed(cfg.seed, seeds::VALIDATION))?;
    write_json(&dir.join("optimism.json"), &report)?;
    write_text(
        &dir.join("optimism.tsv"),
        &format!(
            "metric\tapparent\toptimism\tcorrected\nauc\t{:.6}\t{:.6}\t{:.6}\ncalibration_slope\t{:.6}\t{:.6}\t{:.6}\n",
            report.apparent.auc, report.optimism.auc, report.corrected.auc, report.apparent.slope, report.optimism.slope, report.corrected.slope
        ),
    )?;
    finish(dir, Vec::new())
}

fn trial_calibration<M: RiskModel + ?Sized>(model: &M, trials: &[TrialIpd]) -> CliResult<CalibrationReport> {
    let mut p = Vec::new();
    let mut y = Vec::new();
    for t in trials {
        p.extend(model.record_logit_risks(&t.records)?.into_iter().map(inv_logit));
        y.extend(t.records.iter().map(|r| r.event()));
    }
    Ok(calibration(&p, &y)?)
}

pub fn stage2_recalibrate(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let layout = Layout::new(&cfg.artifacts);
    let parent = load_stage1(&layout)?;
    let trials = load_trials(cfg)?;
    let dir = start(cfg, "stage2")?;
    let fit = recalibrate(&parent, &trials, &cfg.stage2)?;
    write_text(&dir.join("model.json"), &fit.model.to_json())?;
    write_text(&dir.join("draws.tsv"), &fit.draws.to_columnar_string())?;
    write_text(&dir.join("coefficients.tsv"), &fit.model.coefficient_table_tsv())?;
    write_text(&dir.join("diagnostics.tsv"), &diagnostics_tsv(&fit.diagnostics))?;
    write_text(&dir.join("calibration.tsv"), &calibration_tsv(&trial_calibration(&fit.model, &trials)?))?;
    let mut warnings = fit.model.warnings.clone();
    warnings.extend(nonconvergence(&fit.diagnostics));
    warnings.dedup();
    finish(dir, warnings)
}

pub fn stage2_compare(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let layout = Layout::new(&cfg.artifacts);
    let parent = load_stage1(&layout)?;
    let trials = load_trials(cfg)?;
    let dir = start(cfg, "stage2_compare")?;
    let reports = compare_recalibrations(&parent, &trials, &cfg.comparison.methods, &cfg.stage2)?;
    write_text(&dir.join("comparison.tsv"), &comparison_tsv(&reports))?;
    let mut warnings = Vec::new();
    for r in &reports {
        write_text(&dir.join(format!("calibration_{}.tsv", r.method.as_str())), &calibration_tsv(&r.calibration))?;
        warnings.extend(r.model.warnings.iter().cloned());
    }
    finish(dir, warnings)
}

fn ad_risks_tsv(summaries: &[rbnma::pseudo_ipd::AdRiskSummary]) -> String {
    let mut s = String::from("study_id\tmean_logit_risk\tmean_risk\trisk_q2.5\trisk_q97.5\trows\timputed\n");
    for a in summaries {
        s.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\n", a.study_id, a.mean_logit_risk, a.mean_risk, a.risk_q025, a.risk_q975, a.rows, a.imputed.join(",")));
    }
    s
}

pub fn stage3_fit(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let layout = Layout::new(&cfg.artifacts);
    let model = load_stage2(&layout)?;
    let trials = load_trials(cfg)?;
    let ad = load_ad(cfg)?;
    let cohort = cfg.contexts.iter().any(|c| c.source == ContextSource::Cohort).then(|| load_cohort(cfg)).transpose()?;
    let dir = start(cfg, "stage3")?;

    let mut trial_risks = Vec::with_capacity(trials.len());
    for t in &trials {
        trial_risks.push(model.record_logit_risks(&t.records)?);
    }
    let ipd: Vec<NmaIpdStudy> = trials.iter().zip(&trial_risks).map(|(t, r)| NmaIpdStudy::from_trial(t, r)).collect::<rbnma::Result<_>>()?;
    let ad_studies = if ad.is_empty() {
        Vec::new()
    } else {
        let result = ad_baseline_risks(&model, &trials, &ad, &cfg.pseudo_ipd)?;
        write_text(&dir.join("ad_risks.tsv"), &ad_risks_tsv(&result.summaries))?;
        ad.iter().zip(&result.summaries).map(|(t, s)| NmaAdStudy::from_trial(t, s.mean_logit_risk)).collect()
    };
    let posterior = fit_nma(&ipd, &ad_studies, &cfg.stage3.reference, &cfg.stage3.model)?;
    write_text(&dir.join("summary.tsv"), &posterior.summary_tsv())?;
    write_text(&dir.join("draws.tsv"), &posterior.draws.to_columnar_string())?;
    let mut gap = String::from("treatment\tmean\tq2.5\tq97.5\n");
    for (t, s) in posterior.ecological_gap() {
        gap.push_str(&format!("{t}\t{:.6}\t{:.6}\t{:.6}\n", s.mean, s.q025, s.q975));
    }
    write_text(&dir.join("ecological_gap.tsv"), &gap)?;
    let effects = posterior.effect_draws();
    write_json(&layout.effects(), &effects)?;

    let mut warnings = posterior.warnings.clone();
    let mut contexts = Vec::new();
    for ctx in &cfg.contexts {
        let anchor_cfg = cfg.anchor_config(ctx);
        let (records, risks, population): (Vec<IndividualRecord>, Vec<f64>, Vec<f64>) = match ctx.source {
            ContextSource::Trials => {
                let mut records = Vec::new();
                let mut risks = Vec::new();
                for (t, r) in trials.iter().zip(&trial_risks) {
                    for (rec, x) in t.records.iter().zip(r) {
                        if ctx.gamma_from_all || rec.treatment == anchor_cfg.reference {
                            records.push(rec.clone());
                            risks.push(*x);
                        }
                    }
                }
                (records, risks, trial_risks.concat())
            }
            ContextSource::Cohort => {
                let all = cohort.as_ref().expect("loaded above");
                let population = model.record_logit_risks(all)?;
                let (records, risks) = all.iter().zip(&population).filter(|(r, _)| ctx.gamma_from_all || r.treatment == anchor_cfg.reference).map(|(r, x)| (r.clone(), *x)).unzip();
                (records, risks, population)
            }
        };
        let anchors = estimate_anchors(&ctx.name, &records, &risks, &population, &anchor_cfg)?;
        warnings.extend(anchors.warnings.iter().cloned());
        contexts.push(ContextArtifact { anchors, population_logit_risks: population });
    }
    write_json(&layout.contexts(), &contexts)?;
    let mut anchors = String::from("context\ta\tgamma\tmean_logit_risk\tprovenance\n");
    for c in &contexts {
        let a = &c.anchors;
        anchors.push_str(&format!("{}\t{:.6}\t{:.6}\t{:.6}\t{}\n", a.context, a.a, a.gamma, a.mean_logit_risk, a.provenance));
    }
    write_text(&dir.join("anchors.tsv"), &anchors)?;
    let meta = ModelMeta {
        model_version: MODEL_VERSION.into(),
        seed: cfg.seed,
        reference: effects.reference.clone(),
        treatments: effects.treatments.clone(),
        recalibration: model.method.as_str().into(),
        draws: effects.n_draws(),
        contexts: cfg.contexts.iter().map(|c| c.name.clone()).collect(),
    };
    write_json(&layout.meta(), &meta)?;
    finish(dir, warnings)
}

/// Everything prediction needs, loaded from the artifact directory.
#[derive(Debug, Clone)]
pub struct PredictionModel {
    /// Recalibrated baseline-risk model.
    pub risk_model: LinearRiskModel,
    pub effects: EffectDraws,
    pub contexts: Vec<ContextArtifact>,
    pub meta: ModelMeta,
}

impl PredictionModel {
    pub fn load(layout: &Layout) -> CliResult<Self> {
        Ok(Self { risk_model: load_stage2(layout)?.effective, effects: load_effects(layout)?, contexts: load_contexts(layout)?, meta: load_meta(layout)? })
    }

    /// Null-effect model: every treatment has the reference's outcome
    /// probability. Two contexts with different risk distributions.
    pub fn null_fixture() -> Self {
        use rbnma::data::{CovariateSpec, Transform};
        let specs = vec![
            CovariateSpec::continuous("age", Transform::Center { offset: 40.0 }),
            CovariateSpec::continuous("duration", Transform::LogShift { shift: 1.0 }),
            CovariateSpec::binary("prior_relapse"),
            CovariateSpec::categorical("edss_band", &["low", "mid", "high"]),
        ];
        let risk_model = LinearRiskModel { specs, intercept: -1.0, coefficients: vec![0.03, 0.2, 0.5, 0.3, 0.6] };
        let treatments: Vec<String> = ["A", "B", "Placebo"].iter().map(|s| s.to_string()).collect();
        let effects = EffectDraws::point(treatments.clone(), "Placebo", vec![0.0; 3], vec![0.0; 3], vec![0.0; 3]);
        let context = |name: &str, a: f64, risks: Vec<f64>| {
            let mean = risks.iter().sum::<f64>() / risks.len() as f64;
            ContextArtifact { anchors: PredictionAnchors::point(name, a, 1.0, mean), population_logit_risks: risks }
        };
        let contexts = vec![
            context("trials", -0.2, (0..200).map(|i| -2.0 + 2.5 * i as f64 / 199.0).collect()),
            context("cohort", -0.6, (0..200).map(|i| -3.0 + 2.0 * i as f64 / 199.0).collect()),
        ];
        let meta = ModelMeta {
            model_version: MODEL_VERSION.into(),
            seed: 0,
            reference: "Placebo".into(),
            treatments,
            recalibration: "fixture".into(),
            draws: 1,
            contexts: contexts.iter().map(|c| c.anchors.context.clone()).collect(),
        };
        Self { risk_model, effects, contexts, meta }
    }

    /// Named context, or the first one when `name` is `None`.
    pub fn context(&self, name: Option<&str>) -> CliResult<&ContextArtifact> {
        match name {
            None => self.contexts.first().ok_or_else(|| CliError::Usage("no contexts available".into())),
            Some(n) => self.contexts.iter().find(|c| c.anchors.context == n).ok_or_else(|| {
                let known: Vec<&str> = self.contexts.iter().map(|c| c.anchors.context.as_str()).collect();
                CliError::Usage(format!("unknown context '{n}'; available: {}", known.join(", ")))
            }),
        }
    }
}

pub enum PatientInput {
    File(PathBuf),
    Json(String),
}

pub fn predict_cmd(cfg: &ProjectConfig, context: Option<&str>, input: &PatientInput) -> CliResult<Outcome> {
    let layout = Layout::new(&cfg.artifacts);
    let model = PredictionModel::load(&layout)?;
    let ctx = model.context(context)?;
    let patients: Vec<(String, BTreeMap<String, CovariateValue>)> = match input {
        PatientInput::File(p) => io::read_patients(p, model.risk_model.specs())?,
        PatientInput::Json(text) => {
            let values: BTreeMap<String, CovariateValue> = serde_json::from_str(text).map_err(|e| CliError::Usage(format!("--covariates: {e}")))?;
            vec![("patient1".into(), values)]
        }
    };
    let dir = start(cfg, "predict")?;
    let mut s = String::from("patient_id\tbaseline_risk\ttreatment\tp_mean\tp_lo\tp_hi\n");
    let mut docs = Vec::new();
    for (id, covariates) in &patients {
        let x = model.risk_model.logit_risk(covariates)?;
        let p = predict(&ctx.anchors, &model.effects, x, &cfg.prediction.options)?;
        for t in &p.treatments {
            s.push_str(&format!("{id}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\n", inv_logit(x), t.treatment, t.summary.mean, t.summary.q025, t.summary.q975));
        }
        docs.push((id.clone(), p));
    }
    write_text(&dir.join("predictions.tsv"), &s)?;
    write_json(&dir.join("predictions.json"), &docs)?;
    finish(dir, Vec::new())
}

pub fn curve_cmd(cfg: &ProjectConfig, context: Option<&str>) -> CliResult<Outcome> {
    let model = PredictionModel::load(&Layout::new(&cfg.artifacts))?;
    let ctx = model.context(context)?;
    let dir = start(cfg, "curve")?;
    let curves = risk_curve(&ctx.anchors, &model.effects, &cfg.prediction.grid(), &ctx.population_logit_risks, &cfg.prediction.options)?;
    write_text(&dir.join("curve.tsv"), &curves.to_tsv())?;
    let mut crossings = String::from("first\tsecond\tbaseline_risk\n");
    for c in &curves.crossings {
        crossings.push_str(&format!("{}\t{}\t{:.6}\n", c.first, c.second, c.baseline_risk));
    }
    write_text(&dir.join("crossings.tsv"), &crossings)?;
    finish(dir, Vec::new())
}

pub fn strata_cmd(cfg: &ProjectConfig, context: Option<&str>) -> CliResult<Outcome> {
    let model = PredictionModel::load(&Layout::new(&cfg.artifacts))?;
    let ctx = model.context(context)?;
    let dir = start(cfg, "strata")?;
    let summary = strata_summary(&ctx.anchors, &model.effects, &ctx.population_logit_risks, &cfg.prediction.strata, &cfg.prediction.options)?;
    write_text(&dir.join("strata.tsv"), &summary.to_tsv())?;
    write_json(&dir.join("strata.json"), &summary)?;
    finish(dir, summary.warnings.clone())
}

/// Writes a simulated cohort, trial data and a ready-to-run config to `out`.
pub fn simulate_cmd(cfg: &ProjectConfig, out: &Path) -> CliResult<Outcome> {
    let truth = cfg.simulation.truth();
    let plans = cfg.simulation.studies();
    let specs = truth.specs();
    let seed = crate::config::stage_seed(cfg.seed, seeds::SIMULATION);
    let cohort = simulate_cohort(&truth, cfg.simulation.cohort_subjects, cfg.simulation.cohort_cycles, mix_seed(seed, 0))?;
    let network = simulate_network(&truth, &plans, mix_seed(seed, 1))?;
    let rows: Vec<_> = cohort.into_iter().map(|r| ("cohort".to_string(), r)).collect();
    io::write_ipd(&out.join("cohort.csv"), &rows, &specs)?;
    io::write_ipd(&out.join("trials_ipd.csv"), &io::trials_to_rows(&network.ipd), &specs)?;
    io::write_ad(&out.join("ad_arms.csv"), &out.join("ad_covariates.csv"), &network.ad)?;
    write_json(&out.join("truth.json"), &truth)?;

    let mut generated = cfg.clone();
    generated.covariates = specs;
    generated.artifacts = PathBuf::from("artifacts");
    generated.data.cohort = Some("cohort.csv".into());
    generated.data.trials_ipd = Some("trials_ipd.csv".into());
    generated.data.ad_arms = Some("ad_arms.csv".into());
    generated.data.ad_covariates = Some("ad_covariates.csv".into());
    generated.stage3.reference = truth.stage3.reference.clone();
    if generated.contexts.iter().all(|c| c.source != ContextSource::Cohort) {
        generated.contexts.push(crate::config::ContextSpec { name: "cohort".into(), source: ContextSource::Cohort, reference: Some("none".into()), gamma_from_all: false });
    }
    write_text(&out.join("config.toml"), &generated.to_toml())?;
    Ok(Outcome::new(out.to_path_buf(), Vec::new()))
}

pub fn recover_cmd(cfg: &ProjectConfig) -> CliResult<Outcome> {
    let truth = cfg.simulation.truth();
    let plans = cfg.simulation.studies();
    let dir = start(cfg, "recovery")?;
    let report = recovery_report(&truth, &plans, &cfg.recovery)?;
    write_text(&dir.join("recovery.tsv"), &report.to_tsv())?;
    write_json(&dir.join("recovery.json"), &report)?;
    let warnings = report
        .replicates
        .iter()
        .filter(|r| !(r.max_rhat <= RHAT_LIMIT))
        .map(|r| Warning::NonConvergent { parameter: format!("replicate {}", r.replicate), rhat: r.max_rhat })
        .collect();
    finish(dir, warnings)
}
