//! Linear-Gaussian model `x = θ + ε` with a conjugate Gaussian prior, used
//! to calibrate the pipeline against a closed-form posterior.

use ndarray::{Array2, ArrayView2};

use super::{FidelityLadder, FidelityLevel, Prior, Simulator};
use crate::error::{Error, Result};
use crate::rng::{NoiseBlock, NoiseKind};
use crate::special::norm_logpdf;

#[derive(Debug, Clone)]
pub struct LinearGaussian {
    prior: Prior,
    ladder: FidelityLadder,
    noise_sd: f64,
    prior_sd: f64,
    observations: usize,
}

/// Diagonal Gaussian posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mean: Vec<f64>,
    pub var: f64,
}

impl GaussianPosterior {
    pub fn logpdf(&self, theta: &[f64]) -> f64 {
        let sd = self.var.sqrt();
        theta.iter().zip(&self.mean).map(|(t, m)| norm_logpdf((t - m) / sd) - sd.ln()).sum()
    }
}

impl LinearGaussian {
    pub fn new(dim: usize, noise_sd: f64, observations: usize) -> Result<Self> {
        if !(noise_sd > 0.0) {
            return Err(Error::invalid(format!("noise sd must be positive, got {noise_sd}")));
        }
        if dim == 0 || observations == 0 {
            return Err(Error::invalid("linear-Gaussian model needs dim >= 1 and m >= 1"));
        }
        let prior_sd = 1.0;
        Ok(LinearGaussian {
            prior: Prior::Gaussian { mean: vec![0.0; dim], std: vec![prior_sd; dim] },
            ladder: FidelityLadder::new(vec![FidelityLevel { name: "exact".into(), noise_dim: dim, cost: 1.0 }])?,
            noise_sd,
            prior_sd,
            observations,
        })
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// Conjugate posterior of θ given an `m × d` dataset.
    pub fn posterior(&self, data: ArrayView2<f64>) -> GaussianPosterior {
        let m = data.nrows() as f64;
        let prec = 1.0 / self.prior_sd.powi(2) + m / self.noise_sd.powi(2);
        let mean = data.columns().into_iter().map(|c| (c.sum() / self.noise_sd.powi(2)) / prec).collect();
        GaussianPosterior { mean, var: 1.0 / prec }
    }
}

impl Simulator for LinearGaussian {
    fn name(&self) -> &str {
        "linear-gaussian"
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
        self.observations
    }
    fn data_dim(&self) -> usize {
        self.prior.dim()
    }
    fn simulate(&self, level: usize, theta: &[f64], noise: &NoiseBlock) -> Result<Array2<f64>> {
        if level != 0 {
            return Err(Error::invalid("linear-Gaussian model has a single level"));
        }
        let d = theta.len();
        if noise.dim() < d {
            return Err(Error::invalid("noise block narrower than θ"));
        }
        Ok(Array2::from_shape_fn((noise.rows(), d), |(i, j)| theta[j] + self.noise_sd * noise.values[[i, j]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn conjugate_updates() {
        let sim = LinearGaussian::new(1, 1.0, 1).unwrap();
        let p = sim.posterior(array![[2.0]].view());
        assert!((p.mean[0] - 1.0).abs() < 1e-15 && (p.var - 0.5).abs() < 1e-15);
        assert_eq!(sim.posterior(array![[0.0]].view()).mean[0], 0.0);
        let p4 = sim.posterior(array![[0.5], [1.5], [1.0], [1.0]].view());
        assert!((p4.mean[0] - 0.8).abs() < 1e-15 && (p4.var - 0.2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_noise_sd() {
        assert!(LinearGaussian::new(2, 0.0, 1).is_err());
        assert!(LinearGaussian::new(2, -1.0, 1).is_err());
    }
}
