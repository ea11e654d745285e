//! Discrimination and calibration metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glm::fit_logistic;
use crate::math::{logit, midranks};

/// Inputs up to this size use the exact pairwise concordance count.
pub const PAIRWISE_AUC_LIMIT: usize = 10_000;
pub const PREDICTION_CLAMP: f64 = 1e-6;
pub const SMOOTHER_SPAN: f64 = 0.75;
pub const SMOOTHER_POINTS: usize = 50;

fn check_inputs(predictions: &[f64], outcomes: &[bool]) -> Result<(usize, usize)> {
    if predictions.len() != outcomes.len() {
        return Err(Error::LengthMismatch(predictions.len(), outcomes.len()));
    }
    let events = outcomes.iter().filter(|&&y| y).count();
    let non_events = outcomes.len() - events;
    if events == 0 || non_events == 0 {
        return Err(Error::SingleClass);
    }
    Ok((events, non_events))
}

/// Probability that a random event has a higher prediction than a random
/// non-event, ties counting one half. Exact pairwise for small inputs,
/// Mann-Whitney ranks otherwise; both give the same value.
pub fn auc(predictions: &[f64], outcomes: &[bool]) -> Result<f64> {
    if predictions.len() <= PAIRWISE_AUC_LIMIT {
        auc_pairwise(predictions, outcomes)
    } else {
        auc_rank(predictions, outcomes)
    }
}

pub fn auc_pairwise(predictions: &[f64], outcomes: &[bool]) -> Result<f64> {
    let (events, non_events) = check_inputs(predictions, outcomes)?;
    let pos: Vec<f64> = predictions.iter().zip(outcomes).filter(|(_, &y)| y).map(|(&p, _)| p).collect();
    let neg: Vec<f64> = predictions.iter().zip(outcomes).filter(|(_, &y)| !y).map(|(&p, _)| p).collect();
    // count in half-units so the sum stays an exact integer
    let mut twice: u64 = 0;
    for &p in &pos {
        for &q in &neg {
            twice += if p > q {
                2
            } else if p == q {
                1
            } else {
                0
            };
        }
    }
    Ok(twice as f64 / (2.0 * events as f64 * non_events as f64))
}

pub fn auc_rank(predictions: &[f64], outcomes: &[bool]) -> Result<f64> {
    let (events, non_events) = check_inputs(predictions, outcomes)?;
    let ranks = midranks(predictions);
    // rank sums are multiples of 1/2; double them to stay in integers
    let twice_rank_sum: u64 = ranks.iter().zip(outcomes).filter(|(_, &y)| y).map(|(r, _)| (2.0 * r) as u64).sum();
    let e = events as u64;
    let twice_u = twice_rank_sum - e * (e + 1);
    Ok(twice_u as f64 / (2.0 * events as f64 * non_events as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    /// Mean prediction within the bin.
    pub predicted: f64,
    pub observed: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub auc: f64,
    pub calibration_slope: f64,
    pub calibration_intercept: f64,
    pub bins: Vec<CalibrationBin>,
    pub smoothed: Vec<CurvePoint>,
}

/// Calibration slope: coefficient of logit(prediction) in a logistic
/// regression of the outcome on it.
pub fn calibration_slope(predictions: &[f64], outcomes: &[bool]) -> Result<f64> {
    check_inputs(predictions, outcomes)?;
    let lp = clamped_logits(predictions);
    if lp.iter().all(|&v| v == lp[0]) {
        return Err(Error::DegeneratePredictions);
    }
    let rows: Vec<Vec<f64>> = lp.iter().map(|&v| vec![1.0, v]).collect();
    Ok(fit_logistic(&rows, outcomes, None)?.coefficients[1])
}

/// Calibration-in-the-large: intercept with logit(prediction) as offset.
pub fn calibration_intercept(predictions: &[f64], outcomes: &[bool]) -> Result<f64> {
    check_inputs(predictions, outcomes)?;
    let lp = clamped_logits(predictions);
    let rows = vec![vec![1.0]; lp.len()];
    Ok(fit_logistic(&rows, outcomes, Some(&lp))?.coefficients[0])
}

fn clamped_logits(predictions: &[f64]) -> Vec<f64> {
    predictions.iter().map(|&p| logit(p.clamp(PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP))).collect()
}

pub fn calibration(predictions: &[f64], outcomes: &[bool]) -> Result<CalibrationReport> {
    check_inputs(predictions, outcomes)?;
    if predictions.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::InvalidGrid("predictions must lie in (0, 1)".into()));
    }
    let y: Vec<f64> = outcomes.iter().map(|&o| if o { 1.0 } else { 0.0 }).collect();
    Ok(CalibrationReport {
        n: predictions.len(),
        auc: auc(predictions, outcomes)?,
        calibration_slope: calibration_slope(predictions, outcomes)?,
        calibration_intercept: calibration_intercept(predictions, outcomes)?,
        bins: decile_bins(predictions, &y),
        smoothed: local_linear_smooth(predictions, &y, SMOOTHER_SPAN, SMOOTHER_POINTS),
    })
}

/// Up to ten equal-count bins over the sorted predictions.
pub fn decile_bins(predictions: &[f64], y: &[f64]) -> Vec<CalibrationBin> {
    let n = predictions.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| predictions[a].total_cmp(&predictions[b]));
    let n_bins = n.min(10);
    (0..n_bins)
        .map(|b| {
            let members = &order[b * n / n_bins..(b + 1) * n / n_bins];
            let count = members.len() as f64;
            CalibrationBin {
                predicted: members.iter().map(|&i| predictions[i]).sum::<f64>() / count,
                observed: members.iter().map(|&i| y[i]).sum::<f64>() / count,
                count: members.len(),
            }
        })
        .collect()
}

/// Local linear regression with tricube weights over the nearest
/// `ceil(span * n)` points, evaluated on an even grid spanning the data.
pub fn local_linear_smooth(x: &[f64], y: &[f64], span: f64, points: usize) -> Vec<CurvePoint> {
    let n = x.len();
    if n == 0 || points == 0 {
        return Vec::new();
    }
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = ((span * n as f64).ceil() as usize).clamp(2.min(n), n);
    let mut dist = vec![0.0; n];
    (0..points)
        .map(|g| {
            let x0 = if points == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * g as f64 / (points - 1) as f64 };
            for (d, xi) in dist.iter_mut().zip(x) {
                *d = (xi - x0).abs();
            }
            let mut sorted = dist.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            let h = sorted[k - 1].max(f64::MIN_POSITIVE) * (1.0 + 1e-10);
            let (mut sw, mut swx, mut swy, mut swxx, mut swxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let u = dist[i] / h;
                if u >= 1.0 {
                    continue;
                }
                let w = (1.0 - u * u * u).powi(3);
                let dx = x[i] - x0;
                sw += w;
                swx += w * dx;
                swy += w * y[i];
                swxx += w * dx * dx;
                swxy += w * dx * y[i];
            }
            let det = sw * swxx - swx * swx;
            let yhat = if det.abs() > 1e-12 * sw * sw.max(1.0) { (swxx * swy - swx * swxy) / det } else { swy / sw };
            CurvePoint { x: x0, y: yhat }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn auc_worked_examples() {
        assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, true, false, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.2, 0.2], &[false, true]).unwrap(), 0.5);
        assert_eq!(auc_rank(&[0.2, 0.2], &[false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.5, 0.6], &[true, true]).unwrap_err(), Error::SingleClass);
    }

    #[test]
    fn bins_cover_all_predictions() {
        let p: Vec<f64> = (1..=95).map(|i| i as f64 / 100.0).collect();
        let y: Vec<f64> = p.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
        let bins = decile_bins(&p, &y);
        assert_eq!(bins.len(), 10);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 95);
    }

    #[test]
    fn smoother_reproduces_lines() {
        let x: Vec<f64> = (0..200).map(|i| i as f64 / 200.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.2 + 0.5 * v).collect();
        for pt in local_linear_smooth(&x, &y, 0.75, 50) {
            assert!((pt.y - (0.2 + 0.5 * pt.x)).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_predictions_rejected() {
        assert_eq!(calibration_slope(&[0.3, 0.3, 0.3], &[true, false, true]).unwrap_err(), Error::DegeneratePredictions);
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        prop::collection::vec((0u8..12, any::<bool>()), 2..60)
            .prop_map(|v| (v.iter().map(|p| (f64::from(p.0) + 0.5) / 13.0).collect(), v.iter().map(|p| p.1).collect()))
    }

    proptest! {
        #[test]
        fn auc_estimators_agree((p, y) in scored()) {
            prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
            let a = auc(&p, &y).unwrap();
            prop_assert!((a - auc_pairwise(&p, &y).unwrap()).abs() < 1e-12);
            prop_assert!((a - auc_rank(&p, &y).unwrap()).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&a));
        }

        #[test]
        fn auc_depends_only_on_order((p, y) in scored()) {
            prop_assume!(y.iter().any(|&b| b) && y.iter().any(|&b| !b));
            let a = auc(&p, &y).unwrap();
            let logits: Vec<f64> = p.iter().map(|&v| crate::math::logit(v)).collect();
            prop_assert_eq!(a, auc(&logits, &y).unwrap());
            let flipped: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
            prop_assert!((auc(&flipped, &y).unwrap() - (1.0 - a)).abs() < 1e-12);
        }
    }
}
