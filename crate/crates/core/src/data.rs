//! Domain types shared by every stage: covariate metadata, patient records,
//! trial containers and the treatment network.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateKind {
    Continuous,
    Binary,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// `ln(value + shift)`
    LogShift { shift: f64 },
    /// `value - offset`
    Center { offset: f64 },
}

impl Transform {
    pub fn apply(&self, name: &str, value: f64) -> Result<f64> {
        match *self {
            Transform::Identity => Ok(value),
            Transform::Center { offset } => Ok(value - offset),
            Transform::LogShift { shift } => {
                if value + shift > 0.0 {
                    Ok((value + shift).ln())
                } else {
                    Err(Error::DomainError { name: name.to_string(), value })
                }
            }
        }
    }

    /// Lower bound of the admissible raw values (exclusive), if any.
    pub fn domain_lower_bound(&self) -> Option<f64> {
        match *self {
            Transform::LogShift { shift } => Some(-shift),
            _ => None,
        }
    }

    /// Moves a raw-scale mean (and optional sd) onto the transformed scale.
    /// The log transform uses a second-order delta correction when the sd is known.
    pub fn transform_moments(&self, name: &str, mean: f64, sd: Option<f64>) -> Result<(f64, Option<f64>)> {
        match *self {
            Transform::Identity => Ok((mean, sd)),
            Transform::Center { offset } => Ok((mean - offset, sd)),
            Transform::LogShift { shift } => {
                let m = mean + shift;
                if m <= 0.0 {
                    return Err(Error::DomainError { name: name.to_string(), value: mean });
                }
                match sd {
                    Some(s) => Ok((m.ln() - s * s / (2.0 * m * m), Some(s / m))),
                    None => Ok((m.ln(), None)),
                }
            }
        }
    }
}

/// A covariate value as read from a data file: numbers for continuous and
/// binary covariates, level labels (or numeric codes) for categorical ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Number(f64),
    Level(String),
}

impl From<f64> for CovariateValue {
    fn from(v: f64) -> Self {
        CovariateValue::Number(v)
    }
}

impl From<&str> for CovariateValue {
    fn from(v: &str) -> Self {
        CovariateValue::Level(v.to_string())
    }
}

impl CovariateValue {
    /// Parses a text cell: numbers become `Number`, anything else a `Level`.
    pub fn parse(text: &str) -> Self {
        match text.trim().parse::<f64>() {
            Ok(v) => CovariateValue::Number(v),
            Err(_) => CovariateValue::Level(text.trim().to_string()),
        }
    }

    fn as_level(&self) -> String {
        match self {
            CovariateValue::Number(v) => format!("{v}"),
            CovariateValue::Level(s) => s.clone(),
        }
    }
}

impl std::fmt::Display for CovariateValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CovariateValue::Number(v) => write!(f, "{v}"),
            CovariateValue::Level(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    #[serde(default = "identity_transform")]
    pub transform: Transform,
    #[serde(default = "default_true")]
    pub required: bool,
    /// Constant used when the covariate is absent from a record. Only
    /// consulted when set explicitly; missing values are rejected otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impute: Option<CovariateValue>,
}

fn identity_transform() -> Transform {
    Transform::Identity
}

fn default_true() -> bool {
    true
}

impl CovariateSpec {
    pub fn continuous(name: &str, transform: Transform) -> Self {
        Self { name: name.into(), kind: CovariateKind::Continuous, transform, required: true, impute: None }
    }

    pub fn binary(name: &str) -> Self {
        Self { name: name.into(), kind: CovariateKind::Binary, transform: Transform::Identity, required: true, impute: None }
    }

    pub fn categorical(name: &str, levels: &[&str]) -> Self {
        Self {
            name: name.into(),
            kind: CovariateKind::Categorical { levels: levels.iter().map(|s| s.to_string()).collect() },
            transform: Transform::Identity,
            required: true,
            impute: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidCovariate { name: self.name.clone(), message: m.to_string() });
        if self.name.trim().is_empty() {
            return bad("empty name");
        }
        match (&self.kind, &self.transform) {
            (CovariateKind::Categorical { levels }, t) => {
                if levels.len() < 2 {
                    return bad("categorical covariates need at least two levels");
                }
                let distinct: BTreeSet<&String> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return bad("categorical levels must be distinct");
                }
                if !matches!(t, Transform::Identity) {
                    return bad("categorical covariates take no transform");
                }
            }
            (CovariateKind::Binary, t) if !matches!(t, Transform::Identity) => {
                return bad("binary covariates take no transform");
            }
            (_, Transform::LogShift { shift }) if !shift.is_finite() => return bad("non-finite shift"),
            (_, Transform::Center { offset }) if !offset.is_finite() => return bad("non-finite offset"),
            _ => {}
        }
        Ok(())
    }

    /// Number of design columns this covariate contributes.
    pub fn width(&self) -> usize {
        match &self.kind {
            CovariateKind::Categorical { levels } => levels.len() - 1,
            _ => 1,
        }
    }

    /// Appends this covariate's transformed columns to `out`.
    pub fn encode(&self, value: Option<&CovariateValue>, out: &mut Vec<f64>) -> Result<()> {
        let value = match value.or(self.impute.as_ref()) {
            Some(v) => v,
            None if self.required => return Err(Error::MissingCovariate(self.name.clone())),
            // optional covariates without a value sit at the reference (zero) column
            None => {
                out.extend(std::iter::repeat_n(0.0, self.width()));
                return Ok(());
            }
        };
        match &self.kind {
            CovariateKind::Continuous => {
                let x = number(&self.name, value)?;
                out.push(self.transform.apply(&self.name, x)?);
            }
            CovariateKind::Binary => {
                let x = number(&self.name, value)?;
                if x != 0.0 && x != 1.0 {
                    return Err(Error::DomainError { name: self.name.clone(), value: x });
                }
                out.push(x);
            }
            CovariateKind::Categorical { levels } => {
                let label = value.as_level();
                let idx = levels.iter().position(|l| *l == label).ok_or_else(|| Error::InvalidCovariate {
                    name: self.name.clone(),
                    message: format!("unknown level `{label}`"),
                })?;
                out.extend((1..levels.len()).map(|k| if k == idx { 1.0 } else { 0.0 }));
            }
        }
        Ok(())
    }
}

fn number(name: &str, value: &CovariateValue) -> Result<f64> {
    match value {
        CovariateValue::Number(v) if v.is_finite() => Ok(*v),
        CovariateValue::Number(v) => Err(Error::DomainError { name: name.to_string(), value: *v }),
        CovariateValue::Level(s) => Err(Error::InvalidCovariate {
            name: name.to_string(),
            message: format!("expected a number, found `{s}`"),
        }),
    }
}

/// One column of the transformed design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub covariate: String,
    pub binary: bool,
}

/// Column layout of the transformed design: continuous and binary covariates
/// map to one column, categorical ones to `levels - 1` dummy columns named
/// `name[level]`.
pub fn design_columns(specs: &[CovariateSpec]) -> Vec<DesignColumn> {
    let mut cols = Vec::new();
    for s in specs {
        match &s.kind {
            CovariateKind::Categorical { levels } => {
                for level in &levels[1..] {
                    cols.push(DesignColumn { name: format!("{}[{}]", s.name, level), covariate: s.name.clone(), binary: true });
                }
            }
            kind => cols.push(DesignColumn {
                name: s.name.clone(),
                covariate: s.name.clone(),
                binary: matches!(kind, CovariateKind::Binary),
            }),
        }
    }
    cols
}

pub fn validate_specs(specs: &[CovariateSpec]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in specs {
        s.validate()?;
        if !seen.insert(&s.name) {
            return Err(Error::InvalidCovariate { name: s.name.clone(), message: "declared twice".into() });
        }
    }
    Ok(())
}

/// Transformed covariate vector in spec order.
pub fn apply_transforms(covariates: &BTreeMap<String, CovariateValue>, specs: &[CovariateSpec]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(specs.iter().map(CovariateSpec::width).sum());
    for s in specs {
        s.encode(covariates.get(&s.name), &mut out)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub subject_id: String,
    pub cycle: u32,
    pub covariates: BTreeMap<String, CovariateValue>,
    pub treatment: String,
    pub outcome: u8,
}

impl IndividualRecord {
    pub fn event(&self) -> bool {
        self.outcome == 1
    }

    pub fn transformed(&self, specs: &[CovariateSpec]) -> Result<Vec<f64>> {
        apply_transforms(&self.covariates, specs)
    }

    pub fn validate(&self, specs: &[CovariateSpec]) -> Result<()> {
        if self.outcome > 1 {
            return Err(Error::InvalidRecord(format!(
                "subject `{}` cycle {}: outcome {} is not 0/1",
                self.subject_id, self.cycle, self.outcome
            )));
        }
        if self.cycle == 0 {
            return Err(Error::InvalidRecord(format!("subject `{}`: cycle index must be >= 1", self.subject_id)));
        }
        self.transformed(specs).map(|_| ())
    }
}

/// Checks per-record invariants plus cycle uniqueness within subjects.
pub fn validate_records(records: &[IndividualRecord], specs: &[CovariateSpec]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for r in records {
        r.validate(specs)?;
        if !seen.insert((r.subject_id.as_str(), r.cycle)) {
            return Err(Error::InvalidRecord(format!(
                "subject `{}` has cycle {} more than once",
                r.subject_id, r.cycle
            )));
        }
    }
    Ok(())
}

/// Builds the transformed design matrix (row-major) and outcome vector.
pub fn design_matrix(records: &[IndividualRecord], specs: &[CovariateSpec]) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let mut rows = Vec::with_capacity(records.len());
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        rows.push(r.transformed(specs)?);
        y.push(r.event());
    }
    Ok((rows, y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialIpd {
    pub study_id: String,
    pub reference_treatment: String,
    pub records: Vec<IndividualRecord>,
}

impl TrialIpd {
    pub fn treatments(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.records.iter().map(|r| &r.treatment).collect();
        set.into_iter().cloned().collect()
    }

    pub fn validate(&self, specs: &[CovariateSpec]) -> Result<()> {
        let treatments = self.treatments();
        if treatments.len() < 2 {
            return Err(Error::SingleArmStudy(self.study_id.clone()));
        }
        if !treatments.contains(&self.reference_treatment) {
            return Err(Error::InvalidStudy {
                study: self.study_id.clone(),
                message: format!("reference treatment `{}` has no records", self.reference_treatment),
            });
        }
        validate_records(&self.records, specs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdArm {
    pub treatment: String,
    pub events: u64,
    pub total: u64,
}

/// Aggregate trial: per-arm event counts plus study-level covariate moments
/// keyed by design column name, on the raw (untransformed) scale; binary
/// and dummy columns are proportions. `None` marks a value the publication
/// did not report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialAd {
    pub study_id: String,
    pub reference_treatment: String,
    pub arms: Vec<AdArm>,
    #[serde(default)]
    pub covariate_means: BTreeMap<String, Option<f64>>,
    #[serde(default)]
    pub covariate_sds: BTreeMap<String, Option<f64>>,
}

impl TrialAd {
    pub fn treatments(&self) -> Vec<String> {
        let mut t: Vec<String> = self.arms.iter().map(|a| a.treatment.clone()).collect();
        t.sort();
        t
    }

    pub fn total(&self) -> u64 {
        self.arms.iter().map(|a| a.total).sum()
    }

    pub fn events(&self) -> u64 {
        self.arms.iter().map(|a| a.events).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidStudy { study: self.study_id.clone(), message: m });
        if self.arms.len() < 2 {
            return Err(Error::SingleArmStudy(self.study_id.clone()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.arms {
            if a.total == 0 {
                return bad(format!("arm `{}` has no patients", a.treatment));
            }
            if a.events > a.total {
                return bad(format!("arm `{}` has more events than patients", a.treatment));
            }
            if !seen.insert(&a.treatment) {
                return bad(format!("treatment `{}` appears in two arms", a.treatment));
            }
        }
        if !seen.contains(&self.reference_treatment) {
            return bad(format!("reference treatment `{}` has no arm", self.reference_treatment));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyDesign {
    Ipd,
    Ad,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub id: String,
    pub design: StudyDesign,
    pub reference: String,
    pub arms: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentNetwork {
    /// Lexicographic order.
    pub treatments: Vec<String>,
    pub global_reference: String,
    /// Ordered by study id.
    pub studies: Vec<StudySummary>,
}

impl TreatmentNetwork {
    pub fn index_of(&self, treatment: &str) -> Option<usize> {
        self.treatments.iter().position(|t| t == treatment)
    }

    /// Treatments other than the global reference, in network order.
    pub fn non_reference(&self) -> impl Iterator<Item = &String> {
        self.treatments.iter().filter(move |t| **t != self.global_reference)
    }
}

/// Checks ids, references and connectivity of the comparison graph.
pub fn validate_network(ipd: &[TrialIpd], ad: &[TrialAd], global_reference: &str) -> Result<TreatmentNetwork> {
    if ipd.is_empty() && ad.is_empty() {
        return Err(Error::EmptyInput("no studies supplied".into()));
    }
    let mut studies = Vec::new();
    for t in ipd {
        let arms = t.treatments();
        if arms.len() < 2 {
            return Err(Error::SingleArmStudy(t.study_id.clone()));
        }
        if !arms.contains(&t.reference_treatment) {
            return Err(Error::InvalidStudy {
                study: t.study_id.clone(),
                message: format!("reference treatment `{}` has no records", t.reference_treatment),
            });
        }
        studies.push(StudySummary { id: t.study_id.clone(), design: StudyDesign::Ipd, reference: t.reference_treatment.clone(), arms });
    }
    for t in ad {
        t.validate()?;
        studies.push(StudySummary { id: t.study_id.clone(), design: StudyDesign::Ad, reference: t.reference_treatment.clone(), arms: t.treatments() });
    }
    studies.sort_by(|a, b| a.id.cmp(&b.id));
    for w in studies.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::DuplicateStudyId(w[0].id.clone()));
        }
    }

    let treatments: Vec<String> = studies.iter().flat_map(|s| s.arms.iter().cloned()).collect::<BTreeSet<_>>().into_iter().collect();
    if !treatments.iter().any(|t| t == global_reference) {
        return Err(Error::UnknownReference(global_reference.to_string()));
    }

    // union-find over treatments
    let idx = |t: &str| treatments.binary_search_by(|x| x.as_str().cmp(t)).expect("treatment indexed");
    let mut parent: Vec<usize> = (0..treatments.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for s in &studies {
        let first = idx(&s.arms[0]);
        for arm in &s.arms[1..] {
            let (a, b) = (find(&mut parent, first), find(&mut parent, idx(arm)));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut components: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, t) in treatments.iter().enumerate() {
        let root = find(&mut parent, i);
        components.entry(root).or_default().push(t.clone());
    }
    if components.len() > 1 {
        return Err(Error::DisconnectedNetwork(components.into_values().collect()));
    }

    Ok(TreatmentNetwork { treatments, global_reference: global_reference.to_string(), studies })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(subject: &str, treatment: &str, outcome: u8) -> IndividualRecord {
        IndividualRecord { subject_id: subject.into(), cycle: 1, covariates: BTreeMap::new(), treatment: treatment.into(), outcome }
    }

    fn ipd(id: &str, reference: &str, arms: &[&str]) -> TrialIpd {
        TrialIpd {
            study_id: id.into(),
            reference_treatment: reference.into(),
            records: arms.iter().enumerate().map(|(i, t)| rec(&format!("{id}-{i}"), t, (i % 2) as u8)).collect(),
        }
    }

    #[test]
    fn minimal_connected_network() {
        let net = validate_network(&[ipd("S1", "placebo", &["placebo", "A"])], &[], "placebo").unwrap();
        assert_eq!(net.treatments, vec!["A", "placebo"]);
        assert_eq!(net.studies.len(), 1);
    }

    #[test]
    fn disconnected_network_names_components() {
        let err = validate_network(&[ipd("S1", "placebo", &["placebo", "A"]), ipd("S2", "B", &["B", "C"])], &[], "placebo")
            .unwrap_err();
        assert_eq!(
            err,
            Error::DisconnectedNetwork(vec![vec!["A".into(), "placebo".into()], vec!["B".into(), "C".into()]])
        );
    }

    #[test]
    fn reference_and_duplicate_checks() {
        let s = ipd("S1", "placebo", &["placebo", "A"]);
        assert_eq!(validate_network(std::slice::from_ref(&s), &[], "Z").unwrap_err(), Error::UnknownReference("Z".into()));
        assert_eq!(validate_network(&[s.clone(), s], &[], "placebo").unwrap_err(), Error::DuplicateStudyId("S1".into()));
    }

    #[test]
    fn rrms_shaped_network_is_connected() {
        let ad = |id: &str| TrialAd {
            study_id: id.into(),
            reference_treatment: "placebo".into(),
            arms: vec![
                AdArm { treatment: "GA".into(), events: 11, total: 25 },
                AdArm { treatment: "placebo".into(), events: 19, total: 25 },
            ],
            covariate_means: BTreeMap::new(),
            covariate_sds: BTreeMap::new(),
        };
        let net = validate_network(
            &[
                ipd("AFFIRM", "placebo", &["placebo", "N"]),
                ipd("CONFIRM", "placebo", &["placebo", "DF", "GA"]),
                ipd("DEFINE", "placebo", &["placebo", "DF"]),
            ],
            &[ad("Bornstein"), ad("Johnson")],
            "placebo",
        )
        .unwrap();
        assert_eq!(net.treatments.len(), 4);
        assert_eq!(net.studies.len(), 5);
    }

    #[test]
    fn bridge_removal_disconnects_chain() {
        let chain = [ipd("S1", "A", &["A", "B"]), ipd("S2", "B", &["B", "C"]), ipd("S3", "C", &["C", "D"])];
        assert!(validate_network(&chain, &[], "A").is_ok());
        let without_bridge = [chain[0].clone(), chain[2].clone()];
        assert!(matches!(validate_network(&without_bridge, &[], "A"), Err(Error::DisconnectedNetwork(_))));
    }

    #[test]
    fn transforms_follow_declared_domains() {
        let age = CovariateSpec::continuous("age", Transform::Center { offset: 37.0 });
        let dur = CovariateSpec::continuous("duration", Transform::LogShift { shift: 10.0 });
        let specs = [age, dur];
        let mut cov = BTreeMap::new();
        cov.insert("age".to_string(), CovariateValue::Number(37.0));
        cov.insert("duration".to_string(), CovariateValue::Number(0.0));
        let v = apply_transforms(&cov, &specs).unwrap();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - std::f64::consts::LN_10).abs() < 1e-15);

        cov.insert("duration".to_string(), CovariateValue::Number(-10.0));
        assert!(matches!(apply_transforms(&cov, &specs), Err(Error::DomainError { .. })));
        cov.remove("age");
        assert_eq!(apply_transforms(&cov, &specs).unwrap_err(), Error::MissingCovariate("age".into()));
    }

    #[test]
    fn categorical_dummy_coding_against_first_level() {
        let spec = CovariateSpec::categorical("relapses", &["0", "1", "2+"]);
        let specs = [spec];
        let enc = |v: CovariateValue| {
            let mut m = BTreeMap::new();
            m.insert("relapses".to_string(), v);
            apply_transforms(&m, &specs).unwrap()
        };
        assert_eq!(enc(CovariateValue::Number(0.0)), vec![0.0, 0.0]);
        assert_eq!(enc(CovariateValue::Number(1.0)), vec![1.0, 0.0]);
        assert_eq!(enc("2+".into()), vec![0.0, 1.0]);
        let cols = design_columns(&specs);
        assert_eq!(cols[1].name, "relapses[2+]");
    }

    #[test]
    fn explicit_constant_imputation() {
        let mut spec = CovariateSpec::continuous("edss", Transform::Identity);
        spec.impute = Some(CovariateValue::Number(2.5));
        assert_eq!(apply_transforms(&BTreeMap::new(), &[spec]).unwrap(), vec![2.5]);
    }

    #[test]
    fn ad_arm_invariants() {
        let mut t = TrialAd {
            study_id: "X".into(),
            reference_treatment: "P".into(),
            arms: vec![AdArm { treatment: "P".into(), events: 3, total: 2 }, AdArm { treatment: "A".into(), events: 1, total: 2 }],
            covariate_means: BTreeMap::new(),
            covariate_sds: BTreeMap::new(),
        };
        assert!(t.validate().is_err());
        t.arms[0].events = 1;
        assert!(t.validate().is_ok());
        t.arms[1].treatment = "P".into();
        assert!(t.validate().is_err());
    }
}
