//! Ornstein–Uhlenbeck process: an Euler recursion (high fidelity) and its
//! stationary Gaussian marginal (low fidelity), driven by the same normals.

use ndarray::Array2;

use super::{Fidelity, FidelityLadder, FidelityLevel, Prior, PriorBox, Simulator};
use crate::error::{Error, Result};
use crate::rng::{NoiseBlock, NoiseKind};

pub const OU_STEPS: usize = 100;
pub const OU_DT: f64 = 0.1;
pub const OU_X0: f64 = 2.0;

/// Simulate one series of length [`OU_STEPS`] from one row of standard normals.
///
/// High fidelity: `x_{t+1} = x_t + γ(μ - x_t) + σ u_t √Δt` starting at `x_0 = 2`
/// (with `drift_dt` the drift is multiplied by `Δt`, the textbook
/// Euler–Maruyama step). Low fidelity: `x_t = μ + u_t σ / √(2γ)`.
pub fn ou_simulate(theta: &[f64], noise: &[f64], fidelity: Fidelity, drift_dt: bool) -> Result<Vec<f64>> {
    if theta.len() != 3 {
        return Err(Error::invalid("OU takes (γ, μ, σ)"));
    }
    let (gamma, mu, sigma) = (theta[0], theta[1], theta[2]);
    if !(gamma > 0.0) {
        return Err(Error::invalid(format!("OU needs γ > 0, got {gamma}")));
    }
    if noise.len() < OU_STEPS {
        return Err(Error::invalid(format!("OU needs {OU_STEPS} noise values, got {}", noise.len())));
    }
    let u = &noise[..OU_STEPS];
    Ok(match fidelity {
        Fidelity::High => {
            let drift_scale = if drift_dt { OU_DT } else { 1.0 };
            let diffusion = sigma * OU_DT.sqrt();
            let mut x = OU_X0;
            u.iter()
                .map(|ut| {
                    x += gamma * (mu - x) * drift_scale + diffusion * ut;
                    x
                })
                .collect()
        }
        Fidelity::Low => {
            let sd = sigma / (2.0 * gamma).sqrt();
            u.iter().map(|ut| mu + ut * sd).collect()
        }
    })
}

#[derive(Debug, Clone)]
pub struct OrnsteinUhlenbeck {
    prior: Prior,
    ladder: FidelityLadder,
    drift_dt: bool,
}

impl OrnsteinUhlenbeck {
    pub fn new(drift_dt: bool, costs: [f64; 2]) -> Result<Self> {
        let prior = Prior::Uniform(PriorBox::new(vec![0.1, 0.1, 0.1], vec![1.0, 3.0, 0.6])?);
        let ladder = FidelityLadder::new(vec![
            FidelityLevel { name: "stationary".into(), noise_dim: OU_STEPS, cost: costs[0] },
            FidelityLevel { name: "euler".into(), noise_dim: OU_STEPS, cost: costs[1] },
        ])?;
        Ok(OrnsteinUhlenbeck { prior, ladder, drift_dt })
    }
}

impl Default for OrnsteinUhlenbeck {
    fn default() -> Self {
        Self::new(false, [1.0, 100.0]).expect("static configuration")
    }
}

impl Simulator for OrnsteinUhlenbeck {
    fn name(&self) -> &str {
        "ornstein-uhlenbeck"
    }
    fn prior(&self) -> &Prior {
        &self.prior
    }
    fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }
    fn noise_kind(&self) -> NoiseKind {
        NoiseKind::StdNormal
    }
    fn observations(&self) -> usize {
        1
    }
    fn data_dim(&self) -> usize {
        OU_STEPS
    }
    fn simulate(&self, level: usize, theta: &[f64], noise: &NoiseBlock) -> Result<Array2<f64>> {
        let fidelity = Fidelity::from_level(level)?;
        let mut out = Array2::zeros((noise.rows(), OU_STEPS));
        for (i, row) in noise.values.rows().into_iter().enumerate() {
            let row = row.to_vec();
            let x = ou_simulate(theta, &row, fidelity, self.drift_dt)?;
            out.row_mut(i).assign(&ndarray::Array1::from(x));
        }
        Ok(out)
    }
}
