//! Linear logistic risk scores shared by the prognostic and recalibrated
//! models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{apply_transforms, design_columns, CovariateSpec, CovariateValue, IndividualRecord, Transform};
use crate::error::{Error, Result};
use crate::math::inv_logit;

/// Anything that maps a transformed covariate vector to a logit risk.
pub trait RiskModel {
    fn specs(&self) -> &[CovariateSpec];

    /// Linear predictor on the logit scale for a transformed covariate row.
    fn linear_predictor(&self, x: &[f64]) -> f64;

    fn logit_risk(&self, covariates: &BTreeMap<String, CovariateValue>) -> Result<f64> {
        let x = apply_transforms(covariates, self.specs())?;
        Ok(self.linear_predictor(&x))
    }

    fn risk(&self, covariates: &BTreeMap<String, CovariateValue>) -> Result<f64> {
        Ok(inv_logit(self.logit_risk(covariates)?))
    }

    fn record_logit_risks(&self, records: &[IndividualRecord]) -> Result<Vec<f64>> {
        records.iter().map(|r| self.logit_risk(&r.covariates)).collect()
    }
}

/// `logit R = intercept + sum_k coefficient_k * x_k` over the transformed design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRiskModel {
    pub specs: Vec<CovariateSpec>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearRiskModel {
    pub fn new(specs: Vec<CovariateSpec>, intercept: f64, coefficients: Vec<f64>) -> Result<Self> {
        let width = design_columns(&specs).len();
        if coefficients.len() != width {
            return Err(Error::DimensionMismatch { expected: width, found: coefficients.len() });
        }
        Ok(Self { specs, intercept, coefficients })
    }

    /// Coefficient table in the usual "Variables / Estimated regression
    /// coefficients" layout, with transforms spelled out in the labels.
    pub fn coefficient_table(&self) -> Vec<(String, f64)> {
        let mut rows = vec![("Intercept".to_string(), self.intercept)];
        for (col, &b) in design_columns(&self.specs).iter().zip(&self.coefficients) {
            let spec = self.specs.iter().find(|s| s.name == col.covariate).expect("column from specs");
            let label = match spec.transform {
                Transform::Identity => col.name.clone(),
                Transform::Center { offset } => format!("{}-{}", col.name, offset),
                Transform::LogShift { shift } => format!("log({}+{})", col.name, shift),
            };
            rows.push((label, b));
        }
        rows
    }

    pub fn coefficient_table_tsv(&self) -> String {
        let mut s = String::from("variable\tcoefficient\n");
        for (label, b) in self.coefficient_table() {
            s.push_str(&format!("{label}\t{b:?}\n"));
        }
        s
    }
}

impl RiskModel for LinearRiskModel {
    fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefficients.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }
}
