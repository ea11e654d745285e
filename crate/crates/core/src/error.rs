use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report. Variants are grouped by the stage
/// that raises them; the CLI maps them onto exit codes and error documents.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // data model
    #[error("covariate `{0}` is missing")]
    MissingCovariate(String),
    #[error("covariate `{name}`: value {value} is outside the transform domain")]
    DomainError { name: String, value: f64 },
    #[error("covariate `{name}`: {message}")]
    InvalidCovariate { name: String, message: String },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("invalid study `{study}`: {message}")]
    InvalidStudy { study: String, message: String },
    #[error("treatment network is disconnected: components {0:?}")]
    DisconnectedNetwork(Vec<Vec<String>>),
    #[error("reference treatment `{0}` does not occur in the network")]
    UnknownReference(String),
    #[error("duplicate study id `{0}`")]
    DuplicateStudyId(String),
    #[error("empty input: {0}")]
    EmptyInput(String),

    // sampler
    #[error("invalid sampler configuration: {0}")]
    InvalidSamplerConfig(String),
    #[error("invalid prior for `{name}`: {message}")]
    InvalidPrior { name: String, message: String },
    #[error("non-finite log density at {point:?}")]
    NonFiniteLogDensity { point: Vec<f64> },
    #[error("adaptation failed for `{parameter}`: acceptance rate {rate} after warmup")]
    AdaptationFailure { parameter: String, rate: f64 },
    #[error("insufficient draws: {0}")]
    InsufficientDraws(String),
    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    // stage 1
    #[error("outcome has a single class")]
    SingleClassOutcome,
    #[error("separation suspected: |posterior mean| of `{parameter}` is {value}")]
    SeparationSuspected { parameter: String, value: f64 },
    #[error("too many failed bootstrap replicates: {failed} of {total}")]
    BootstrapFailures { failed: usize, total: usize },

    // stage 2
    #[error("exchangeable pooling needs at least two studies")]
    SingleStudyExchangeable,
    #[error("re-estimation subset names unknown covariate `{0}`")]
    SubsetUnknownCovariate(String),
    #[error("invalid recalibration configuration: {0}")]
    InvalidRecalibration(String),

    // pseudo-IPD / imputation
    #[error("insufficient records: {records} records for {columns} covariate columns")]
    InsufficientRecords { records: usize, columns: usize },
    #[error("covariate `{0}` is not observed in at least two studies")]
    AllMissingCovariate(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    // stage 3
    #[error("study `{0}` has a record without a finite logit risk")]
    MissingRisk(String),
    #[error("study `{0}` has a single arm")]
    SingleArmStudy(String),
    #[error("invalid network meta-regression configuration: {0}")]
    InvalidNmaConfig(String),
    #[error("treatment `{0}` is not part of the fitted network")]
    UnknownTreatment(String),
    #[error("parameter `{0}` is not identified by the data")]
    Unidentified(String),

    // prediction
    #[error("anchor population contains records not on the reference treatment `{0}`")]
    NonReferenceRecords(String),
    #[error("no posterior draws available")]
    DrawCountZero,
    #[error("risk grid is empty")]
    EmptyGrid,
    #[error("invalid risk grid or strata: {0}")]
    InvalidGrid(String),

    // evaluation
    #[error("metric requires both outcome classes")]
    SingleClass,
    #[error("all predictions are equal")]
    DegeneratePredictions,
    #[error("length mismatch: {0} predictions, {1} outcomes")]
    LengthMismatch(usize, usize),

    // simulation / recovery
    #[error("too many failed replicates: {failed} of {total}")]
    ReplicateFailures { failed: usize, total: usize },
    #[error("serialization: {0}")]
    Serialization(String),
}

impl Error {
    /// Short machine-readable tag, used in error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingCovariate(_) => "MissingCovariate",
            Error::DomainError { .. } => "DomainError",
            Error::InvalidCovariate { .. } => "InvalidCovariate",
            Error::InvalidRecord(_) => "InvalidRecord",
            Error::InvalidStudy { .. } => "InvalidStudy",
            Error::DisconnectedNetwork(_) => "DisconnectedNetwork",
            Error::UnknownReference(_) => "UnknownReference",
            Error::DuplicateStudyId(_) => "DuplicateStudyId",
            Error::EmptyInput(_) => "EmptyInput",
            Error::InvalidSamplerConfig(_) => "InvalidSamplerConfig",
            Error::InvalidPrior { .. } => "InvalidPrior",
            Error::NonFiniteLogDensity { .. } => "NonFiniteLogDensity",
            Error::AdaptationFailure { .. } => "AdaptationFailure",
            Error::InsufficientDraws(_) => "InsufficientDraws",
            Error::UnknownParameter(_) => "UnknownParameter",
            Error::SingleClassOutcome => "SingleClassOutcome",
            Error::SeparationSuspected { .. } => "SeparationSuspected",
            Error::BootstrapFailures { .. } => "BootstrapFailures",
            Error::SingleStudyExchangeable => "SingleStudyExchangeable",
            Error::SubsetUnknownCovariate(_) => "SubsetUnknownCovariate",
            Error::InvalidRecalibration(_) => "InvalidRecalibration",
            Error::InsufficientRecords { .. } => "InsufficientRecords",
            Error::AllMissingCovariate(_) => "AllMissingCovariate",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::MissingRisk(_) => "MissingRisk",
            Error::SingleArmStudy(_) => "SingleArmStudy",
            Error::InvalidNmaConfig(_) => "InvalidNmaConfig",
            Error::UnknownTreatment(_) => "UnknownTreatment",
            Error::Unidentified(_) => "Unidentified",
            Error::NonReferenceRecords(_) => "NonReferenceRecords",
            Error::DrawCountZero => "DrawCountZero",
            Error::EmptyGrid => "EmptyGrid",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::SingleClass => "SingleClass",
            Error::DegeneratePredictions => "DegeneratePredictions",
            Error::LengthMismatch(..) => "LengthMismatch",
            Error::ReplicateFailures { .. } => "ReplicateFailures",
            Error::Serialization(_) => "Serialization",
        }
    }
}

/// Non-fatal conditions attached to fitted objects.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A regressor is (numerically) constant so its coefficient is driven by the prior.
    WeakIdentification { parameter: String, detail: String },
    /// Split R-hat above the convergence threshold.
    NonConvergent { parameter: String, rhat: f64 },
    /// Covariance matrix had negative eigenvalues that were clipped to zero.
    RankDeficient { min_eigenvalue: f64 },
    /// A stratum had no members.
    EmptyStratum { label: String },
}
