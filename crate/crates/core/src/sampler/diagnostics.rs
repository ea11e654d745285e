use serde::{Deserialize, Serialize};

use super::PosteriorDraws;
use crate::error::{Error, Result};
use crate::math::{mean, normal_quantile, quantile_sorted};

/// Split R-hat above this value flags a parameter as not converged.
pub const RHAT_LIMIT: f64 = 1.05;

/// Posterior summary in "mean (95% CrI)" form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
}

impl Summary {
    /// Odds-ratio scale: exponentiates mean and quantiles. The sd is left on
    /// the log scale.
    pub fn exp(&self) -> Summary {
        Summary { mean: self.mean.exp(), sd: self.sd, q025: self.q025.exp(), q50: self.q50.exp(), q975: self.q975.exp() }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.q025 <= value && value <= self.q975
    }
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let m = mean(values);
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        mean: m,
        sd,
        q025: quantile_sorted(&sorted, 0.025),
        q50: quantile_sorted(&sorted, 0.5),
        q975: quantile_sorted(&sorted, 0.975),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub summary: Summary,
    pub rhat: f64,
    pub ess_bulk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub parameters: Vec<ParameterSummary>,
}

impl Diagnostics {
    pub fn get(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Parameters whose R-hat exceeds `threshold` (infinite or NaN included).
    pub fn nonconvergent(&self, threshold: f64) -> Vec<&ParameterSummary> {
        self.parameters.iter().filter(|p| !(p.rhat <= threshold)).collect()
    }

    pub fn max_rhat(&self) -> f64 {
        self.parameters.iter().map(|p| p.rhat).fold(f64::NEG_INFINITY, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    }
}

/// Rank-normalized split R-hat, bulk ESS and summaries for every component.
pub fn diagnostics(draws: &PosteriorDraws) -> Result<Diagnostics> {
    if draws.chains < 2 {
        return Err(Error::InsufficientDraws("at least two chains are required".into()));
    }
    if draws.iterations < 10 {
        return Err(Error::InsufficientDraws(format!("{} iterations per chain, at least 10 required", draws.iterations)));
    }
    let parameters = (0..draws.dim())
        .map(|k| {
            let chains = draws.chain_columns(k);
            ParameterSummary {
                name: draws.names[k].clone(),
                summary: summarize(&draws.column(k)),
                rhat: split_rhat(&chains),
                ess_bulk: ess_bulk(&chains),
            }
        })
        .collect();
    Ok(Diagnostics { parameters })
}

fn split(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = chains.iter().map(Vec::len).min().unwrap_or(0);
    let half = n / 2;
    let mut out = Vec::with_capacity(chains.len() * 2);
    for c in chains {
        out.push(c[..half].to_vec());
        out.push(c[n - half..n].to_vec());
    }
    out
}

fn rank_normalize(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = chains.iter().flatten().copied().collect();
    let ranks = crate::math::midranks(&pooled);
    let s = pooled.len() as f64;
    let mut out = Vec::with_capacity(chains.len());
    let mut offset = 0;
    for c in chains {
        out.push(ranks[offset..offset + c.len()].iter().map(|r| normal_quantile((r - 0.375) / (s + 0.25))).collect());
        offset += c.len();
    }
    out
}

fn basic_rhat(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let within: f64 = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| {
            if c.iter().all(|&x| x == c[0]) {
                0.0
            } else {
                c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0)
            }
        })
        .sum::<f64>()
        / m;
    let grand = mean(&means);
    let between = n * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0);
    if within == 0.0 {
        return if between == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    (var_plus / within).sqrt()
}

/// Rank-normalized split R-hat: the maximum of the bulk and folded-tail
/// versions. Chains with zero within-chain variance but different levels
/// give `+inf`.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    if halves.is_empty() || halves[0].len() < 2 {
        return f64::NAN;
    }
    let bulk = basic_rhat(&rank_normalize(&halves));
    let pooled: Vec<f64> = halves.iter().flatten().copied().collect();
    let median = crate::math::quantile(&pooled, 0.5);
    let folded: Vec<Vec<f64>> = halves.iter().map(|c| c.iter().map(|x| (x - median).abs()).collect()).collect();
    let tail = basic_rhat(&rank_normalize(&folded));
    bulk.max(tail)
}

fn autocovariance(x: &[f64], lag: usize, mu: f64) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mu) * (x[i + lag] - mu)).sum::<f64>() / n as f64
}

/// Multi-chain effective sample size with Geyer's initial monotone sequence.
fn ess(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    if n < 4 {
        return f64::NAN;
    }
    let means: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, 0, mu)).collect();
    let nf = n as f64;
    let within = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let grand = mean(&means);
    let between_over_n = if m > 1 { means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m - 1) as f64 } else { 0.0 };
    let var_plus = within * (nf - 1.0) / nf + between_over_n;
    if var_plus == 0.0 {
        return (m * n) as f64;
    }
    let rho = |lag: usize| -> f64 {
        let mean_acov = chains.iter().zip(&means).map(|(c, &mu)| autocovariance(c, lag, mu)).sum::<f64>() / m as f64;
        1.0 - (within - mean_acov) / var_plus
    };

    let mut tau = -1.0;
    let mut prev_pair = f64::INFINITY;
    let mut t = 0;
    while t + 1 < n {
        let mut pair = rho(t) + rho(t + 1);
        if pair < 0.0 {
            break;
        }
        if pair > prev_pair {
            pair = prev_pair;
        }
        tau += 2.0 * pair;
        prev_pair = pair;
        t += 2;
    }
    let total = (m * n) as f64;
    let tau = tau.max(1.0 / total.log10());
    total / tau
}

/// Bulk ESS: ESS of the rank-normalized split chains.
pub fn ess_bulk(chains: &[Vec<f64>]) -> f64 {
    let halves = split(chains);
    if halves.is_empty() || halves[0].len() < 4 {
        return f64::NAN;
    }
    ess(&rank_normalize(&halves))
}
