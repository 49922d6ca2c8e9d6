//! Reference posteriors: a large-sample NPE fit, the KLD against it, and a
//! random-walk Metropolis sampler for NLE posteriors.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{LevelData, Task};
use crate::mdn::{ConditionalEstimator, Mdn};
use crate::rng::SeedKey;
use crate::simulators::{generate_level_batch, Coupling, Prior, Simulator};
use crate::train::{init_for_data, train, TrainConfig, TrainingLog};

/// Sample count of the full-size reference posterior.
pub const FULL_REFERENCE_N: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceConfig {
    pub n: usize,
    pub hidden_layers: Vec<usize>,
    pub n_components: usize,
    pub train: TrainConfig,
}

impl ReferenceConfig {
    pub fn is_scaled_down(&self) -> bool {
        self.n < FULL_REFERENCE_N
    }
}

/// NPE trained on `n` top-fidelity simulations with the plain MC loss.
pub fn reference_npe(
    sim: &dyn Simulator,
    task: &Task,
    config: &ReferenceConfig,
    key: &SeedKey,
) -> Result<(Mdn, TrainingLog)> {
    let top = sim.ladder().top();
    let batch = generate_level_batch(sim, top, config.n, &key.derive(0), Coupling::SeedMatched, false)?;
    let levels = vec![LevelData::from_batch(task, &batch)?];
    let mut est = init_for_data(&levels, config.hidden_layers.clone(), config.n_components, &key.derive(1))?;
    let log = train(&mut est, &levels, &config.train, None)?;
    Ok((est, log))
}

/// `(1/n) Σ [ln q_ref(θ_s|x) - ln q_target(θ_s|x)]` with `θ_s ~ q_ref(·|x)`.
/// A non-finite target density at any draw gives `+∞`.
pub fn kld_to_reference(
    target: &dyn ConditionalEstimator,
    reference: &dyn ConditionalEstimator,
    condition: &[f64],
    n_draws: usize,
    key: &SeedKey,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(Error::invalid("n_draws must be positive"));
    }
    let draws = reference.sample(condition, n_draws, key)?;
    let cond = Array2::from_shape_fn((n_draws, condition.len()), |(_, j)| condition[j]);
    let lr = reference.logpdf_batch(cond.view(), draws.view())?;
    let lt = target.logpdf_batch(cond.view(), draws.view())?;
    let mut sum = 0.0;
    for (a, b) in lr.iter().zip(&lt) {
        if !b.is_finite() {
            return Ok(f64::INFINITY);
        }
        sum += a - b;
    }
    Ok(sum / n_draws as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwmConfig {
    pub n_chains: usize,
    /// Kept draws per chain, after thinning.
    pub n_draws: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Initial proposal sd as a fraction of the prior scale per dimension.
    pub initial_step: f64,
}

impl Default for RwmConfig {
    fn default() -> Self {
        RwmConfig { n_chains: 4, n_draws: 500, burn_in: 1000, thin: 5, initial_step: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McmcOutput {
    /// `(n_chains · n_draws) × p`, chains stacked in order.
    pub samples: Array2<f64>,
    pub acceptance: Vec<f64>,
    pub step: Vec<f64>,
}

const ADAPT_WINDOW: usize = 50;
const MAX_START_TRIES: usize = 1000;

fn prior_scale(prior: &Prior) -> Vec<f64> {
    match prior {
        Prior::Uniform(b) => b.lower().iter().zip(b.upper()).map(|(l, u)| u - l).collect(),
        Prior::Gaussian { std, .. } => std.clone(),
    }
}

/// Random-walk Metropolis on `ln π(θ) + log_lik(θ)`. Chain `c` uses
/// `key.derive(c)`; the step is tuned during burn-in towards acceptance
/// in `[0.2, 0.5]` and frozen afterwards.
pub fn rwm_sample<F>(log_lik: F, prior: &Prior, config: &RwmConfig, key: &SeedKey) -> Result<McmcOutput>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if config.n_chains == 0 || config.n_draws == 0 || config.thin == 0 || !(config.initial_step > 0.0) {
        return Err(Error::invalid("RWM needs positive chains, draws, thinning and step"));
    }
    let p = prior.dim();
    let scale = prior_scale(prior);
    let target = |theta: &[f64]| -> Result<f64> {
        let lp = prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return Ok(lp);
        }
        Ok(lp + log_lik(theta)?)
    };
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| {
            let ck = key.derive(c as u64);
            let mut stream = ck.derive(1).stream();
            let mut theta = Vec::new();
            let mut lt = f64::NEG_INFINITY;
            for t in 0..MAX_START_TRIES {
                theta = prior.sample(&ck.derive(0).derive(t as u64)).0;
                lt = target(&theta)?;
                if lt.is_finite() {
                    break;
                }
            }
            if !lt.is_finite() {
                return Err(Error::Sampler(format!("chain {c}: no prior draw with finite target density")));
            }
            let mut step = config.initial_step;
            let mut window_acc = 0usize;
            let mut kept = Vec::with_capacity(config.n_draws * p);
            let mut accepted = 0usize;
            let total = config.burn_in + config.n_draws * config.thin;
            let mut prop = vec![0.0; p];
            for it in 0..total {
                for j in 0..p {
                    prop[j] = theta[j] + step * scale[j] * stream.next_normal();
                }
                let log_u = stream.next_uniform().ln();
                let lp = target(&prop)?;
                let ok = lp.is_finite() && log_u < lp - lt;
                if ok {
                    theta.copy_from_slice(&prop);
                    lt = lp;
                }
                if it < config.burn_in {
                    window_acc += ok as usize;
                    if (it + 1) % ADAPT_WINDOW == 0 {
                        let rate = window_acc as f64 / ADAPT_WINDOW as f64;
                        if rate < 0.2 {
                            step *= 0.7;
                        } else if rate > 0.5 {
                            step *= 1.3;
                        }
                        window_acc = 0;
                    }
                } else {
                    accepted += ok as usize;
                    if (it - config.burn_in + 1).is_multiple_of(config.thin) {
                        kept.extend_from_slice(&theta);
                    }
                }
            }
            let rate = accepted as f64 / (config.n_draws * config.thin) as f64;
            if accepted == 0 {
                return Err(Error::Sampler(format!("chain {c} rejected every proposal after adaptation")));
            }
            Ok((kept, rate, step))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut flat = Vec::with_capacity(config.n_chains * config.n_draws * p);
    let (mut acceptance, mut steps) = (Vec::new(), Vec::new());
    for (k, a, s) in chains {
        flat.extend(k);
        acceptance.push(a);
        steps.push(s);
    }
    let samples = Array2::from_shape_vec((config.n_chains * config.n_draws, p), flat)
        .map_err(|e| Error::invalid(e.to_string()))?;
    Ok(McmcOutput { samples, acceptance, step: steps })
}

/// `Σ_j ln q(x_j | θ)` for an NLE estimator over the rows of `data`.
pub fn nle_log_likelihood(est: &dyn ConditionalEstimator, theta: &[f64], data: ArrayView2<f64>) -> Result<f64> {
    let cond = Array2::from_shape_fn((data.nrows(), theta.len()), |(_, j)| theta[j]);
    Ok(est.logpdf_batch(cond.view(), data)?.iter().sum())
}

/// Posterior draws of `π(θ) Π_j q(x_j|θ)` for an NLE estimator.
pub fn nle_posterior_sample(
    est: &dyn ConditionalEstimator,
    prior: &Prior,
    data: ArrayView2<f64>,
    config: &RwmConfig,
    key: &SeedKey,
) -> Result<McmcOutput> {
    if data.ncols() != est.target_dim() || prior.dim() != est.condition_dim() {
        return Err(Error::invalid("estimator does not match the prior and data dimensions"));
    }
    rwm_sample(|t| nle_log_likelihood(est, t, data), prior, config, key)
}
