//! Adaptive component-wise random-walk Metropolis-within-Gibbs.
//!
//! Every stage expresses its posterior as a [`ModelSpec`] (named parameter
//! blocks with separable priors) plus a [`LogLikelihood`]. Components are
//! updated one at a time; during warmup each component's proposal scale is
//! tuned by a Robbins-Monro recursion towards an acceptance rate of 0.44,
//! then frozen. Chains get independent generators derived from
//! `(seed, chain index)`, so draws are identical regardless of how many
//! threads run them.

mod diagnostics;
mod draws;

pub use diagnostics::{diagnostics, ess_bulk, split_rhat, summarize, Diagnostics, ParameterSummary, Summary, RHAT_LIMIT};
pub use draws::PosteriorDraws;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::mix_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Laplace { location: f64, scale: f64 },
    /// Positive parameter; sampled as `ln(x)` with the Jacobian added.
    HalfNormal { sd: f64 },
    /// No separable prior: the density of this component is supplied by the
    /// likelihood term (random effects, imputed values).
    Hierarchical,
}

impl Prior {
    pub fn normal(mean: f64, sd: f64) -> Self {
        Prior::Normal { mean, sd }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            Prior::Laplace { location, scale } => location.is_finite() && scale.is_finite() && scale > 0.0,
            Prior::HalfNormal { sd } => sd.is_finite() && sd > 0.0,
            Prior::Hierarchical => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidPrior { name: name.to_string(), message: format!("{self:?}: scale must be positive and finite") })
        }
    }

    /// Log density up to a constant, on the natural scale.
    pub fn log_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                -0.5 * z * z
            }
            Prior::Laplace { location, scale } => -(x - location).abs() / scale,
            Prior::HalfNormal { sd } => {
                if x > 0.0 {
                    let z = x / sd;
                    -0.5 * z * z
                } else {
                    f64::NEG_INFINITY
                }
            }
            Prior::Hierarchical => 0.0,
        }
    }

    fn log_scale(&self) -> bool {
        matches!(self, Prior::HalfNormal { .. })
    }

    fn default_init(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::Laplace { location, .. } => location,
            Prior::HalfNormal { sd } => 0.5 * sd,
            Prior::Hierarchical => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterBlock {
    pub name: String,
    pub dim: usize,
    pub prior: Prior,
    /// Starting values on the natural scale (one per component).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<Vec<f64>>,
}

impl ParameterBlock {
    pub fn new(name: impl Into<String>, dim: usize, prior: Prior) -> Self {
        Self { name: name.into(), dim, prior, init: None }
    }

    pub fn scalar(name: impl Into<String>, prior: Prior) -> Self {
        Self::new(name, 1, prior)
    }

    pub fn with_init(mut self, init: Vec<f64>) -> Self {
        self.init = Some(init);
        self
    }
}

/// Parameter layout of a model. Components are flattened block by block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub parameters: Vec<ParameterBlock>,
}

impl ModelSpec {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a block and returns the index of its first component.
    pub fn push(&mut self, block: ParameterBlock) -> usize {
        let offset = self.dim();
        self.parameters.push(block);
        offset
    }

    pub fn dim(&self) -> usize {
        self.parameters.iter().map(|b| b.dim).sum()
    }

    /// Flattened component names: `name` for scalars, `name[i]` otherwise.
    pub fn component_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim());
        for b in &self.parameters {
            if b.dim == 1 {
                names.push(b.name.clone());
            } else {
                names.extend((0..b.dim).map(|i| format!("{}[{}]", b.name, i)));
            }
        }
        names
    }

    fn component_priors(&self) -> Vec<Prior> {
        self.parameters.iter().flat_map(|b| std::iter::repeat_n(b.prior, b.dim)).collect()
    }

    fn initial_point(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.dim());
        for b in &self.parameters {
            match &b.init {
                Some(v) if v.len() != b.dim => {
                    return Err(Error::InvalidSamplerConfig(format!("init of `{}` has length {}, expected {}", b.name, v.len(), b.dim)))
                }
                Some(v) => out.extend_from_slice(v),
                None => out.extend(std::iter::repeat_n(b.prior.default_init(), b.dim)),
            }
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidSamplerConfig("model has no parameters".into()));
        }
        for b in &self.parameters {
            b.prior.validate(&b.name)?;
        }
        Ok(())
    }
}

/// Log-likelihood (plus any non-separable prior terms) of a model, evaluated
/// on natural-scale parameter vectors laid out as in the [`ModelSpec`].
pub trait LogLikelihood: Sync {
    fn log_likelihood(&self, params: &[f64]) -> f64;

    /// Change in log-likelihood when component `index` moves from
    /// `params[index]` to `proposal`. Models override this to touch only the
    /// terms that involve the component.
    fn log_likelihood_change(&self, params: &[f64], index: usize, proposal: f64) -> f64 {
        let mut moved = params.to_vec();
        moved[index] = proposal;
        self.log_likelihood(&moved) - self.log_likelihood(params)
    }
}

/// Closure adapter for quick models (tests, one-off checks).
pub struct FnLikelihood<F>(pub F);

impl<F: Fn(&[f64]) -> f64 + Sync> LogLikelihood for FnLikelihood<F> {
    fn log_likelihood(&self, params: &[f64]) -> f64 {
        (self.0)(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub seed: u64,
    pub target_acceptance: f64,
    pub initial_step: f64,
    /// Half-width of the uniform jitter added to starting values per chain.
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { chains: 4, warmup: 5000, iterations: 10000, seed: 20230101, target_acceptance: 0.44, initial_step: 0.5, init_jitter: 0.3 }
    }
}

impl SamplerConfig {
    pub fn quick(seed: u64) -> Self {
        Self { chains: 4, warmup: 1000, iterations: 2000, seed, ..Self::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::InvalidSamplerConfig("at least two chains are required".into()));
        }
        if self.iterations < 1 {
            return Err(Error::InvalidSamplerConfig("iterations must be at least 1".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidSamplerConfig("target acceptance must lie in (0, 1)".into()));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::InvalidSamplerConfig("initial step must be positive".into()));
        }
        if !(self.init_jitter >= 0.0 && self.init_jitter.is_finite()) {
            return Err(Error::InvalidSamplerConfig("init jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// Runs `config.chains` independent chains and merges them by chain index.
pub fn sample_posterior<L: LogLikelihood + ?Sized>(spec: &ModelSpec, model: &L, config: &SamplerConfig) -> Result<PosteriorDraws> {
    config.validate()?;
    spec.validate()?;
    let priors = spec.component_priors();
    let init = spec.initial_point()?;

    let run = |chain: usize| run_chain(&priors, &init, model, config, chain);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<ChainOutput>> = {
        use rayon::prelude::*;
        (0..config.chains).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<ChainOutput>> = (0..config.chains).map(run).collect();

    let names = spec.component_names();
    let dim = names.len();
    let mut values = Vec::with_capacity(config.chains * config.iterations * dim);
    let mut acceptance = Vec::with_capacity(config.chains);
    let mut steps = Vec::with_capacity(config.chains);
    for r in results {
        let out = r?;
        values.extend(out.values);
        acceptance.push(out.acceptance);
        steps.push(out.steps);
    }

    if config.warmup > 0 && config.iterations >= 100 {
        for rates in &acceptance {
            for (k, &rate) in rates.iter().enumerate() {
                if rate == 0.0 || rate == 1.0 {
                    return Err(Error::AdaptationFailure { parameter: names[k].clone(), rate });
                }
            }
        }
    }

    Ok(PosteriorDraws {
        names,
        blocks: spec.parameters.iter().map(|b| (b.name.clone(), b.dim)).collect(),
        chains: config.chains,
        iterations: config.iterations,
        values,
        seed: config.seed,
        warmup: config.warmup,
        acceptance,
        step_sizes: steps,
    })
}

struct ChainOutput {
    values: Vec<f64>,
    acceptance: Vec<f64>,
    steps: Vec<f64>,
}

fn run_chain<L: LogLikelihood + ?Sized>(
    priors: &[Prior],
    init: &[f64],
    model: &L,
    config: &SamplerConfig,
    chain: usize,
) -> Result<ChainOutput> {
    let dim = priors.len();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, chain as u64));

    // unconstrained state and its natural-scale image
    let mut z: Vec<f64> = init
        .iter()
        .zip(priors)
        .map(|(&x, p)| if p.log_scale() { x.max(1e-12).ln() } else { x })
        .collect();
    for zk in z.iter_mut() {
        *zk += config.init_jitter * (2.0 * rng.random::<f64>() - 1.0);
    }
    let mut theta: Vec<f64> = z.iter().zip(priors).map(|(&v, p)| if p.log_scale() { v.exp() } else { v }).collect();

    let start = model.log_likelihood(&theta) + theta.iter().zip(priors).map(|(&x, p)| p.log_density(x)).sum::<f64>();
    if !start.is_finite() {
        return Err(Error::NonFiniteLogDensity { point: theta });
    }

    let mut log_step = vec![config.initial_step.ln(); dim];
    let mut accepted = vec![0usize; dim];
    let mut values = Vec::with_capacity(config.iterations * dim);
    let total = config.warmup + config.iterations;

    for iter in 0..total {
        let warm = iter < config.warmup;
        let gain = if warm { 2.0 * ((iter + 1) as f64).powf(-0.6) } else { 0.0 };
        for k in 0..dim {
            let prior = &priors[k];
            let eps: f64 = rng.sample(StandardNormal);
            let z_new = z[k] + log_step[k].exp() * eps;
            let (x_old, x_new) = (theta[k], if prior.log_scale() { z_new.exp() } else { z_new });
            let mut delta = model.log_likelihood_change(&theta, k, x_new) + prior.log_density(x_new) - prior.log_density(x_old);
            if prior.log_scale() {
                delta += z_new - z[k];
            }
            if delta.is_nan() || delta == f64::INFINITY {
                let mut point = theta.clone();
                point[k] = x_new;
                return Err(Error::NonFiniteLogDensity { point });
            }
            let accept_prob = if delta >= 0.0 { 1.0 } else { delta.exp() };
            let u: f64 = rng.random();
            if u < accept_prob {
                z[k] = z_new;
                theta[k] = x_new;
                if !warm {
                    accepted[k] += 1;
                }
            }
            if warm {
                log_step[k] = (log_step[k] + gain * (accept_prob - config.target_acceptance)).clamp(-30.0, 10.0);
            }
        }
        if !warm {
            values.extend_from_slice(&theta);
        }
    }

    Ok(ChainOutput {
        values,
        acceptance: accepted.iter().map(|&a| a as f64 / config.iterations as f64).collect(),
        steps: log_step.iter().map(|s| s.exp()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_iterations_rejected() {
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::scalar("x", Prior::normal(0.0, 1.0)));
        let cfg = SamplerConfig { iterations: 0, ..SamplerConfig::quick(1) };
        assert!(matches!(sample_posterior(&spec, &FnLikelihood(|_: &[f64]| 0.0), &cfg), Err(Error::InvalidSamplerConfig(_))));
        let cfg = SamplerConfig { chains: 1, ..SamplerConfig::quick(1) };
        assert!(sample_posterior(&spec, &FnLikelihood(|_: &[f64]| 0.0), &cfg).is_err());
    }

    #[test]
    fn invalid_prior_scale_rejected() {
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::scalar("x", Prior::Laplace { location: 0.0, scale: 0.0 }));
        assert!(matches!(
            sample_posterior(&spec, &FnLikelihood(|_: &[f64]| 0.0), &SamplerConfig::quick(1)),
            Err(Error::InvalidPrior { .. })
        ));
    }

    #[test]
    fn non_finite_start_reported_with_point() {
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::scalar("x", Prior::normal(0.0, 1.0)));
        let err = sample_posterior(&spec, &FnLikelihood(|_: &[f64]| f64::NAN), &SamplerConfig::quick(1)).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLogDensity { point } if point.len() == 1));
    }

    #[test]
    fn unidentified_component_fails_adaptation() {
        // a likelihood that rejects every move pins acceptance at zero
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::scalar("x", Prior::normal(0.0, 1.0)));
        let model = FnLikelihood(|p: &[f64]| if p[0] == p[0].round() { 0.0 } else { f64::NEG_INFINITY });
        let mut spec2 = spec.clone();
        spec2.parameters[0].init = Some(vec![0.0]);
        let cfg = SamplerConfig { init_jitter: 0.0, warmup: 200, iterations: 200, ..SamplerConfig::quick(3) };
        assert!(matches!(sample_posterior(&spec2, &model, &cfg), Err(Error::AdaptationFailure { .. })));
    }

    #[test]
    fn seed_determinism() {
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::new("x", 2, Prior::normal(0.0, 1.0)));
        let m = FnLikelihood(|p: &[f64]| -0.5 * (p[0] - p[1]).powi(2));
        let cfg = SamplerConfig { warmup: 100, iterations: 200, ..SamplerConfig::quick(42) };
        let a = sample_posterior(&spec, &m, &cfg).unwrap();
        let b = sample_posterior(&spec, &m, &cfg).unwrap();
        assert_eq!(a, b);
        let c = sample_posterior(&spec, &m, &cfg.clone().with_seed(43)).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn half_normal_stays_positive() {
        let mut spec = ModelSpec::new();
        spec.push(ParameterBlock::scalar("s", Prior::HalfNormal { sd: 1.0 }));
        let d = sample_posterior(&spec, &FnLikelihood(|_: &[f64]| 0.0), &SamplerConfig { warmup: 500, iterations: 4000, ..SamplerConfig::quick(9) })
            .unwrap();
        let col = d.column(0);
        assert!(col.iter().all(|&x| x > 0.0));
        // E|Z| = sqrt(2/pi)
        let m = crate::math::mean(&col);
        assert!((m - (2.0 / std::f64::consts::PI).sqrt()).abs() < 0.06, "{m}");
    }
}
