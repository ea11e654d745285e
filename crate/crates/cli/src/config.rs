//! Project configuration: one TOML document, unknown keys rejected.

use std::path::{Path, PathBuf};

use rbnma::data::CovariateSpec;
use rbnma::math::mix_seed;
use rbnma::nma::NmaConfig;
use rbnma::prediction::{default_strata, AnchorConfig, PredictOptions, RiskStratum};
use rbnma::pseudo_ipd::PseudoIpdConfig;
use rbnma::sampler::SamplerConfig;
use rbnma::simulation::{CycleRange, RecoveryConfig, SimulationTruth, StudyPlan};
use rbnma::stage1::PrognosticConfig;
use rbnma::stage2::{Method, RecalibrationConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectConfig {
    /// Master seed; every stage derives its own seed from it.
    pub seed: u64,
    pub artifacts: PathBuf,
    pub covariates: Vec<CovariateSpec>,
    pub data: DataPaths,
    pub stage1: PrognosticConfig,
    pub validation: ValidationOptions,
    pub stage2: RecalibrationConfig,
    pub comparison: ComparisonOptions,
    pub pseudo_ipd: PseudoIpdConfig,
    pub stage3: Stage3Options,
    pub prediction: PredictionOptions,
    pub contexts: Vec<ContextSpec>,
    pub simulation: SimulationOptions,
    pub recovery: RecoveryConfig,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            seed: 20230101,
            artifacts: PathBuf::from("artifacts"),
            covariates: Vec::new(),
            data: DataPaths::default(),
            stage1: PrognosticConfig::default(),
            validation: ValidationOptions::default(),
            stage2: RecalibrationConfig::default(),
            comparison: ComparisonOptions::default(),
            pseudo_ipd: PseudoIpdConfig::default(),
            stage3: Stage3Options::default(),
            prediction: PredictionOptions::default(),
            contexts: vec![ContextSpec::default()],
            simulation: SimulationOptions::default(),
            recovery: RecoveryConfig::default(),
        }
    }
}

/// Input files; relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub cohort: Option<PathBuf>,
    pub trials_ipd: Option<PathBuf>,
    pub ad_arms: Option<PathBuf>,
    pub ad_covariates: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationOptions {
    pub bootstrap_replicates: usize,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { bootstrap_replicates: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonOptions {
    pub methods: Vec<Method>,
}

impl Default for ComparisonOptions {
    fn default() -> Self {
        Self { methods: Method::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage3Options {
    pub reference: String,
    pub model: NmaConfig,
}

impl Default for Stage3Options {
    fn default() -> Self {
        Self { reference: "Placebo".into(), model: NmaConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictionOptions {
    pub strata: Vec<RiskStratum>,
    pub grid_points: usize,
    pub options: PredictOptions,
    pub anchor_prior_sd: f64,
    pub anchor_sampler: SamplerConfig,
}

impl Default for PredictionOptions {
    fn default() -> Self {
        Self { strata: default_strata(), grid_points: 99, options: PredictOptions::default(), anchor_prior_sd: 10.0, anchor_sampler: SamplerConfig::quick(0) }
    }
}

impl PredictionOptions {
    pub fn grid(&self) -> Vec<f64> {
        let n = self.grid_points.max(1);
        if n == 1 {
            return vec![0.5];
        }
        (0..n).map(|k| 0.01 + 0.98 * k as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ContextSource {
    /// Reference arms of the IPD trials.
    #[default]
    Trials,
    /// Untreated records of the cohort.
    Cohort,
}

/// A population in which predictions are anchored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextSpec {
    pub name: String,
    pub source: ContextSource,
    /// Treatment label of the records used for the anchors; defaults to
    /// the network reference.
    pub reference: Option<String>,
    pub gamma_from_all: bool,
}

impl Default for ContextSpec {
    fn default() -> Self {
        Self { name: "trials".into(), source: ContextSource::Trials, reference: None, gamma_from_all: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Rrms,
    Basic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    pub preset: Preset,
    /// Replaces the preset's truth when given.
    pub truth: Option<SimulationTruth>,
    /// Replaces the preset's study layout when given.
    pub studies: Option<Vec<StudyPlan>>,
    pub cohort_subjects: usize,
    pub cohort_cycles: CycleRange,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self { preset: Preset::Rrms, truth: None, studies: None, cohort_subjects: 1500, cohort_cycles: CycleRange { min: 1, max: 3 } }
    }
}

impl SimulationOptions {
    pub fn truth(&self) -> SimulationTruth {
        self.truth.clone().unwrap_or_else(|| match self.preset {
            Preset::Rrms => SimulationTruth::rrms_like(),
            Preset::Basic => SimulationTruth::basic(),
        })
    }

    pub fn studies(&self) -> Vec<StudyPlan> {
        self.studies.clone().unwrap_or_else(|| match self.preset {
            Preset::Rrms => rbnma::simulation::rrms_network(),
            Preset::Basic => rbnma::simulation::basic_network(1500),
        })
    }
}

/// Stage indices for seed derivation.
pub mod seeds {
    pub const STAGE1: u64 = 1;
    pub const VALIDATION: u64 = 2;
    pub const STAGE2: u64 = 3;
    pub const PSEUDO_IPD: u64 = 4;
    pub const IMPUTATION: u64 = 5;
    pub const STAGE3: u64 = 6;
    pub const ANCHORS: u64 = 7;
    pub const PREDICTION: u64 = 8;
    pub const SIMULATION: u64 = 9;
    pub const RECOVERY: u64 = 10;
}

/// Stage seed derived from the master seed. Kept within 63 bits because
/// TOML integers are signed.
pub fn stage_seed(master: u64, stage: u64) -> u64 {
    mix_seed(master, stage) >> 1
}

impl ProjectConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads a config file and resolves data paths against its directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(inner) = p {
                if inner.is_relative() {
                    *inner = base.join(&*inner);
                }
            }
        };
        resolve(&mut cfg.data.cohort);
        resolve(&mut cfg.data.trials_ipd);
        resolve(&mut cfg.data.ad_arms);
        resolve(&mut cfg.data.ad_covariates);
        if cfg.artifacts.is_relative() {
            cfg.artifacts = base.join(&cfg.artifacts);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Pushes the master seed into every stage and checks cross-field rules.
    pub fn resolve(mut self) -> CliResult<Self> {
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Config("seed must fit in 63 bits".into()));
        }
        let s = self.seed;
        self.stage1.sampler.seed = stage_seed(s, seeds::STAGE1);
        self.stage2.sampler.seed = stage_seed(s, seeds::STAGE2);
        self.pseudo_ipd.seed = stage_seed(s, seeds::PSEUDO_IPD);
        self.pseudo_ipd.imputation.seed = stage_seed(s, seeds::IMPUTATION);
        self.stage3.model.sampler.seed = stage_seed(s, seeds::STAGE3);
        self.prediction.anchor_sampler.seed = stage_seed(s, seeds::ANCHORS);
        self.prediction.options.seed = stage_seed(s, seeds::PREDICTION);
        self.recovery.seed = stage_seed(s, seeds::RECOVERY);
        if self.contexts.is_empty() {
            return Err(CliError::Config("at least one context is required".into()));
        }
        let mut names: Vec<&str> = self.contexts.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Config("context names must be unique".into()));
        }
        if self.stage3.reference.is_empty() {
            return Err(CliError::Config("stage3.reference must name a treatment".into()));
        }
        Ok(self)
    }

    pub fn anchor_config(&self, context: &ContextSpec) -> AnchorConfig {
        AnchorConfig {
            reference: context.reference.clone().unwrap_or_else(|| self.stage3.reference.clone()),
            gamma_from_all: context.gamma_from_all,
            prior_sd: self.prediction.anchor_prior_sd,
            sampler: self.prediction.anchor_sampler.clone(),
        }
    }

    pub fn require_covariates(&self) -> CliResult<&[CovariateSpec]> {
        if self.covariates.is_empty() {
            return Err(CliError::Config("no covariates declared".into()));
        }
        rbnma::data::validate_specs(&self.covariates)?;
        Ok(&self.covariates)
    }
}
