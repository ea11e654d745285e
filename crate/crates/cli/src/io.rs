//! Delimited-text formats.
//!
//! * IPD (cohort and trials): `study_id, subject_id, cycle, treatment,
//!   outcome, <covariates...>`; empty cells or `NA` mean missing.
//! * AD arms: `study_id, treatment, events, total`, one row per arm.
//! * AD covariates: `study_id, column, mean, sd`, one row per design column,
//!   `NA` for withheld values and an empty SD where none applies.
//!
//! Numbers are written in shortest round-trip form, so files read back
//! bit-identically.

use std::collections::BTreeMap;
use std::path::Path;

use rbnma::data::{AdArm, CovariateKind, CovariateSpec, CovariateValue, IndividualRecord, TrialAd, TrialIpd};

use crate::error::{CliError, CliResult};

const IPD_FIXED: [&str; 5] = ["study_id", "subject_id", "cycle", "treatment", "outcome"];

fn reader(path: &Path) -> CliResult<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| CliError::io(path, e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    csv::Writer::from_path(path).map_err(|e| CliError::io(path, e))
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

fn optional_number(path: &Path, line: u64, cell: &str) -> CliResult<Option<f64>> {
    if is_missing(cell) {
        return Ok(None);
    }
    cell.parse().map(Some).map_err(|_| parse_err(path, line, format!("'{cell}' is not a number")))
}

/// IPD rows with their study ids, in file order. Cells of categorical
/// covariates are kept as level strings; other cells parse as numbers when
/// they can.
pub fn read_ipd(path: &Path, specs: &[CovariateSpec]) -> CliResult<Vec<(String, IndividualRecord)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    for (k, name) in IPD_FIXED.iter().enumerate() {
        if headers.get(k) != Some(name) {
            return Err(parse_err(path, 1, format!("column {} must be '{name}'", k + 1)));
        }
    }
    let covariates: Vec<(String, bool)> = headers
        .iter()
        .skip(IPD_FIXED.len())
        .map(|h| (h.to_string(), specs.iter().any(|s| s.name == h && matches!(s.kind, CovariateKind::Categorical { .. }))))
        .collect();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::io(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let cycle = row[2].parse().map_err(|_| parse_err(path, line, format!("cycle '{}' is not a non-negative integer", &row[2])))?;
        let outcome = match &row[4] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_err(path, line, format!("outcome '{other}' must be 0 or 1"))),
        };
        let mut values = BTreeMap::new();
        for ((name, categorical), cell) in covariates.iter().zip(row.iter().skip(IPD_FIXED.len())) {
            if !is_missing(cell) {
                let value = if *categorical { CovariateValue::Level(cell.to_string()) } else { CovariateValue::parse(cell) };
                values.insert(name.clone(), value);
            }
        }
        out.push((row[0].to_string(), IndividualRecord { subject_id: row[1].to_string(), cycle, covariates: values, treatment: row[3].to_string(), outcome }));
    }
    if out.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }
    Ok(out)
}

pub fn write_ipd(path: &Path, rows: &[(String, IndividualRecord)], specs: &[CovariateSpec]) -> CliResult<()> {
    let mut w = writer(path)?;
    let mut header: Vec<&str> = IPD_FIXED.to_vec();
    header.extend(specs.iter().map(|s| s.name.as_str()));
    w.write_record(&header).map_err(|e| CliError::io(path, e))?;
    for (study, r) in rows {
        let mut cells = vec![study.clone(), r.subject_id.clone(), r.cycle.to_string(), r.treatment.clone(), r.outcome.to_string()];
        cells.extend(specs.iter().map(|s| r.covariates.get(&s.name).map_or_else(|| "NA".to_string(), |v| v.to_string())));
        w.write_record(&cells).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Groups IPD rows into trials. A study's reference is `preferred` when it
/// has that arm, else its first treatment in file order.
pub fn group_trials(rows: Vec<(String, IndividualRecord)>, preferred: &str) -> Vec<TrialIpd> {
    let mut order: Vec<String> = Vec::new();
    let mut by_study: BTreeMap<String, Vec<IndividualRecord>> = BTreeMap::new();
    for (study, r) in rows {
        if !by_study.contains_key(&study) {
            order.push(study.clone());
        }
        by_study.entry(study).or_default().push(r);
    }
    order
        .into_iter()
        .map(|id| {
            let records = by_study.remove(&id).expect("grouped");
            let reference = if records.iter().any(|r| r.treatment == preferred) { preferred.to_string() } else { records[0].treatment.clone() };
            TrialIpd { study_id: id, reference_treatment: reference, records }
        })
        .collect()
}

pub fn trials_to_rows(trials: &[TrialIpd]) -> Vec<(String, IndividualRecord)> {
    trials.iter().flat_map(|t| t.records.iter().map(|r| (t.study_id.clone(), r.clone()))).collect()
}

/// Reads both AD tables. Study order follows the arms file.
pub fn read_ad(arms_path: &Path, covariates_path: Option<&Path>, preferred: &str) -> CliResult<Vec<TrialAd>> {
    let mut rdr = reader(arms_path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(arms_path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["study_id", "treatment", "events", "total"] {
        return Err(parse_err(arms_path, 1, "header must be study_id,treatment,events,total"));
    }
    let mut studies: Vec<TrialAd> = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| CliError::io(arms_path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let count = |k: usize| row[k].parse::<u64>().map_err(|_| parse_err(arms_path, line, format!("'{}' is not a count", &row[k])));
        let arm = AdArm { treatment: row[1].to_string(), events: count(2)?, total: count(3)? };
        match studies.iter_mut().find(|s| s.study_id == row[0]) {
            Some(s) => s.arms.push(arm),
            None => studies.push(TrialAd {
                study_id: row[0].to_string(),
                reference_treatment: String::new(),
                arms: vec![arm],
                covariate_means: BTreeMap::new(),
                covariate_sds: BTreeMap::new(),
            }),
        }
    }
    for s in &mut studies {
        s.reference_treatment = if s.arms.iter().any(|a| a.treatment == preferred) { preferred.to_string() } else { s.arms[0].treatment.clone() };
    }
    if let Some(path) = covariates_path {
        let mut rdr = reader(path)?;
        let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["study_id", "column", "mean", "sd"] {
            return Err(parse_err(path, 1, "header must be study_id,column,mean,sd"));
        }
        for row in rdr.records() {
            let row = row.map_err(|e| CliError::io(path, e))?;
            let line = row.position().map_or(0, |p| p.line());
            let study = studies.iter_mut().find(|s| s.study_id == row[0]).ok_or_else(|| parse_err(path, line, format!("study '{}' has no arms", &row[0])))?;
            study.covariate_means.insert(row[1].to_string(), optional_number(path, line, &row[2])?);
            // an empty SD cell means "not applicable", `NA` means withheld
            if !row[3].is_empty() {
                study.covariate_sds.insert(row[1].to_string(), optional_number(path, line, &row[3])?);
            }
        }
    }
    Ok(studies)
}

pub fn write_ad(arms_path: &Path, covariates_path: &Path, studies: &[TrialAd]) -> CliResult<()> {
    let mut w = writer(arms_path)?;
    w.write_record(["study_id", "treatment", "events", "total"]).map_err(|e| CliError::io(arms_path, e))?;
    for s in studies {
        for a in &s.arms {
            w.write_record([s.study_id.as_str(), &a.treatment, &a.events.to_string(), &a.total.to_string()]).map_err(|e| CliError::io(arms_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(arms_path, e))?;
    let mut w = writer(covariates_path)?;
    w.write_record(["study_id", "column", "mean", "sd"]).map_err(|e| CliError::io(covariates_path, e))?;
    let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for s in studies {
        for (col, mean) in &s.covariate_means {
            let sd = s.covariate_sds.get(col).map_or_else(String::new, |v| cell(*v));
            w.write_record([s.study_id.as_str(), col, &cell(*mean), &sd]).map_err(|e| CliError::io(covariates_path, e))?;
        }
    }
    w.flush().map_err(|e| CliError::io(covariates_path, e))
}

/// Patient covariates for `predict`: one row per patient, an optional
/// `patient_id` column plus covariate columns.
pub fn read_patients(path: &Path, specs: &[CovariateSpec]) -> CliResult<Vec<(String, BTreeMap<String, CovariateValue>)>> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| CliError::io(path, e))?;
        let mut id = format!("patient{}", i + 1);
        let mut values = BTreeMap::new();
        for (name, cell) in headers.iter().zip(row.iter()) {
            if name == "patient_id" {
                id = cell.to_string();
            } else if !is_missing(cell) {
                let categorical = specs.iter().any(|s| s.name == name && matches!(s.kind, CovariateKind::Categorical { .. }));
                values.insert(name.to_string(), if categorical { CovariateValue::Level(cell.to_string()) } else { CovariateValue::parse(cell) });
            }
        }
        out.push((id, values));
    }
    Ok(out)
}

pub fn read_text(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("serializable") + "\n"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rbnma::simulation::{rrms_network, simulate_cohort, simulate_network, CycleRange, SimulationTruth};

    #[test]
    fn simulated_data_round_trips_bit_identically() {
        let dir = tempfile::tempdir().unwrap();
        let truth = SimulationTruth::rrms_like();
        let specs = truth.specs();
        let cohort = simulate_cohort(&truth, 30, CycleRange { min: 1, max: 2 }, 1).unwrap();
        let rows: Vec<_> = cohort.iter().map(|r| ("cohort".to_string(), r.clone())).collect();
        write_ipd(&dir.path().join("c.csv"), &rows, &specs).unwrap();
        assert_eq!(read_ipd(&dir.path().join("c.csv"), &specs).unwrap(), rows);

        let net = simulate_network(&truth, &rrms_network(), 2).unwrap();
        write_ipd(&dir.path().join("t.csv"), &trials_to_rows(&net.ipd), &specs).unwrap();
        let back = group_trials(read_ipd(&dir.path().join("t.csv"), &specs).unwrap(), "Placebo");
        assert_eq!(back, net.ipd);

        write_ad(&dir.path().join("a.csv"), &dir.path().join("m.csv"), &net.ad).unwrap();
        let ad = read_ad(&dir.path().join("a.csv"), Some(&dir.path().join("m.csv")), "Placebo").unwrap();
        assert_eq!(ad, net.ad);
    }

    #[test]
    fn bad_outcome_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        std::fs::write(&p, "study_id,subject_id,cycle,treatment,outcome,age\ns,1,1,P,0,30\ns,2,1,P,yes,31\n").unwrap();
        match read_ipd(&p, &[]) {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
