//! Multi-fidelity simulators `(θ, u) ↦ x`, their priors and cost ladders.
//!
//! Every simulator is a pure function of the parameter vector and a
//! [`NoiseBlock`]. A level-`l` sample draws a noise block of the level-`l`
//! width; the level `l - 1` generator reads only the leading columns of that
//! same block, which is the seed-matching contract.

mod gk;
mod lingauss;
mod ou;
mod summary;
mod toggle;

use std::ops::Deref;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{sample_noise, NoiseBlock, NoiseKind, SeedKey};
use crate::special::norm_ppf;

pub use gk::{gk_exact_logpdf, gk_quantile, gk_simulate, GAndK, GkDensity, GK_U_CLAMP};
pub use lingauss::{GaussianPosterior, LinearGaussian};
pub use ou::{ou_simulate, OrnsteinUhlenbeck, OU_STEPS};
pub use summary::{summarize, SummaryScheme};
pub use toggle::{toggle_noise_dim, toggle_simulate, ToggleSwitch, TOGGLE_LEVEL_STEPS};

/// Two-level fidelity selector for simulators with a low/high pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fidelity {
    Low,
    High,
}

impl Fidelity {
    pub fn from_level(level: usize) -> Result<Self> {
        match level {
            0 => Ok(Fidelity::Low),
            1 => Ok(Fidelity::High),
            _ => Err(Error::invalid(format!("two-level simulator has no level {level}"))),
        }
    }
}

/// Simulator parameter θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl Deref for ParamVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

/// Product of independent uniforms on `[lower_i, upper_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PriorBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid("prior box bounds must be non-empty and equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
            return Err(Error::invalid("prior box needs finite lower < upper in every dimension"));
        }
        Ok(PriorBox { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta.iter().zip(self.lower.iter().zip(&self.upper)).all(|(t, (l, u))| *t >= *l && *t <= *u)
    }

    /// Log-density: `-Σ ln(width)` inside the box, `-∞` outside.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if self.contains(theta) {
            -self.lower.iter().zip(&self.upper).map(|(l, u)| (u - l).ln()).sum::<f64>()
        } else {
            f64::NEG_INFINITY
        }
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }
}

/// Prior over θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Uniform(PriorBox),
    /// Independent normals, used by the linear-Gaussian calibration model.
    Gaussian {
        mean: Vec<f64>,
        std: Vec<f64>,
    },
}

impl Prior {
    pub fn dim(&self) -> usize {
        match self {
            Prior::Uniform(b) => b.dim(),
            Prior::Gaussian { mean, .. } => mean.len(),
        }
    }

    /// Draw θ by inverse CDF from the uniforms of `key`.
    pub fn sample(&self, key: &SeedKey) -> ParamVector {
        let v = match self {
            Prior::Uniform(b) => (0..b.dim())
                .map(|j| {
                    let u = key.uniform(j as u64);
                    b.lower[j] + u * (b.upper[j] - b.lower[j])
                })
                .collect(),
            Prior::Gaussian { mean, std } => {
                (0..mean.len()).map(|j| mean[j] + std[j] * norm_ppf(key.uniform(j as u64))).collect()
            }
        };
        ParamVector(v)
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            Prior::Uniform(b) => b.log_density(theta),
            Prior::Gaussian { mean, std } => theta
                .iter()
                .zip(mean.iter().zip(std))
                .map(|(t, (m, s))| crate::special::norm_logpdf((t - m) / s) - s.ln())
                .sum(),
        }
    }

    pub fn as_box(&self) -> Option<&PriorBox> {
        match self {
            Prior::Uniform(b) => Some(b),
            Prior::Gaussian { .. } => None,
        }
    }
}

/// One rung of a fidelity ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLevel {
    pub name: String,
    pub noise_dim: usize,
    pub cost: f64,
}

/// Generators `G^0 .. G^L` ordered by cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityLadder {
    levels: Vec<FidelityLevel>,
}

impl FidelityLadder {
    pub fn new(levels: Vec<FidelityLevel>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::invalid("fidelity ladder needs at least one level"));
        }
        for w in levels.windows(2) {
            if !(w[0].cost < w[1].cost) {
                return Err(Error::invalid("fidelity costs must be strictly increasing"));
            }
            if w[0].noise_dim > w[1].noise_dim {
                return Err(Error::invalid("noise dimensions must be non-decreasing"));
            }
        }
        if levels.iter().any(|l| l.noise_dim == 0 || !(l.cost > 0.0)) {
            return Err(Error::invalid("levels need positive noise dimension and cost"));
        }
        Ok(FidelityLadder { levels })
    }

    pub fn levels(&self) -> &[FidelityLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// Index of the top level `L`.
    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn costs(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.cost).collect()
    }

    pub fn noise_dim(&self, level: usize) -> usize {
        self.levels[level].noise_dim
    }
}

/// A multi-fidelity simulator.
pub trait Simulator: Send + Sync {
    fn name(&self) -> &str;
    fn prior(&self) -> &Prior;
    fn ladder(&self) -> &FidelityLadder;
    fn noise_kind(&self) -> NoiseKind;
    /// Number of i.i.d. observations `m` per simulated dataset.
    fn observations(&self) -> usize;
    /// Dimension of a single observation.
    fn data_dim(&self) -> usize;
    /// Run generator `G^level` on `(θ, u)`, one output row per noise row.
    /// Only the first `noise_dim(level)` columns of `noise` are read.
    fn simulate(&self, level: usize, theta: &[f64], noise: &NoiseBlock) -> Result<Array2<f64>>;

    fn param_dim(&self) -> usize {
        self.prior().dim()
    }
}

/// One `(θ, u)` draw pushed through `G^l` and, for `l ≥ 1`, `G^{l-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledLevelSample {
    pub theta: ParamVector,
    pub noise: NoiseBlock,
    pub x_hi: Array2<f64>,
    pub x_lo: Option<Array2<f64>>,
}

/// The `n_l` samples drawn at level `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelBatch {
    pub level: usize,
    pub samples: Vec<CoupledLevelSample>,
}

impl LevelBatch {
    pub fn n(&self) -> usize {
        self.samples.len()
    }
}

/// How the lower generator of a level pair gets its noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Same `(θ, u)` for both generators.
    SeedMatched,
    /// Same θ, independent `u` for the lower generator. Only useful as an ablation.
    Independent,
}

/// Key layout of a single sample: `key/i/0` draws θ, `key/i/1` the noise,
/// `key/i/2` the decoupled noise of the [`Coupling::Independent`] ablation.
pub fn simulate_sample(
    sim: &dyn Simulator,
    level: usize,
    key: &SeedKey,
    coupling: Coupling,
    with_lower: bool,
) -> Result<CoupledLevelSample> {
    let theta = sim.prior().sample(&key.derive(0));
    let m = sim.observations();
    let d = sim.ladder().noise_dim(level);
    let noise = sample_noise(&key.derive(1), m, d, sim.noise_kind())?;
    let x_hi = sim.simulate(level, &theta, &noise)?;
    let x_lo = if with_lower && level > 0 {
        let lo_noise = match coupling {
            Coupling::SeedMatched => noise.clone(),
            Coupling::Independent => sample_noise(&key.derive(2), m, d, sim.noise_kind())?,
        };
        Some(sim.simulate(level - 1, &theta, &lo_noise)?)
    } else {
        None
    };
    Ok(CoupledLevelSample { theta, noise, x_hi, x_lo })
}

/// Generate `n` samples at `level`, sample `i` from `key.derive(i)`.
/// Level-0 batches, and single-level MC batches (`with_lower = false`), carry no `x_lo`.
pub fn generate_level_batch(
    sim: &dyn Simulator,
    level: usize,
    n: usize,
    key: &SeedKey,
    coupling: Coupling,
    with_lower: bool,
) -> Result<LevelBatch> {
    if level >= sim.ladder().len() {
        return Err(Error::invalid(format!("{} has no level {level}", sim.name())));
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| simulate_sample(sim, level, &key.derive(i as u64), coupling, with_lower))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelBatch { level, samples })
}

/// Batches for an MLMC run: level `l` uses `n[l]` samples from `key.derive(l)`.
pub fn generate_mlmc_batches(sim: &dyn Simulator, n: &[usize], key: &SeedKey) -> Result<Vec<LevelBatch>> {
    if n.len() != sim.ladder().len() {
        return Err(Error::invalid(format!(
            "{} has {} levels but {} counts were given",
            sim.name(),
            sim.ladder().len(),
            n.len()
        )));
    }
    n.iter()
        .enumerate()
        .map(|(l, &nl)| generate_level_batch(sim, l, nl, &key.derive(l as u64), Coupling::SeedMatched, true))
        .collect()
}
