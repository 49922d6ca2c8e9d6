//! Toggle-switch gene-circuit model with the step count as fidelity knob.

use ndarray::Array2;

use super::{FidelityLadder, FidelityLevel, Prior, PriorBox, Simulator};
use crate::error::{Error, Result};
use crate::rng::{NoiseBlock, NoiseKind};
use crate::special::truncnorm_pos_ppf;

/// Step counts `(T_0, T_1, T_2)` of the three-level ladder.
pub const TOGGLE_LEVEL_STEPS: [usize; 3] = [50, 80, 300];

const INITIAL_STATE: f64 = 10.0;
const STEP_SD: f64 = 0.5;

/// Noise columns used by a run of `steps` steps.
pub fn toggle_noise_dim(steps: usize) -> usize {
    2 * steps + 1
}

/// Run the two-species recursion for `steps` steps and draw the observation.
///
/// Column layout of `noise` (uniforms): column 0 drives the final
/// observation, columns `1 + 2t` and `2 + 2t` drive the `u` and `v` updates
/// of step `t`. A shorter run therefore reads a prefix of a longer run's
/// columns, observation noise included. Every truncated-normal draw is an
/// inverse-CDF transform of its column.
pub fn toggle_simulate(theta: &[f64], noise: &[f64], steps: usize) -> Result<f64> {
    if steps < 1 {
        return Err(Error::invalid("toggle switch needs at least one step"));
    }
    if theta.len() != 7 {
        return Err(Error::invalid("toggle switch takes 7 parameters"));
    }
    if noise.len() < toggle_noise_dim(steps) {
        return Err(Error::invalid(format!(
            "toggle switch with T={steps} needs {} noise columns, got {}",
            toggle_noise_dim(steps),
            noise.len()
        )));
    }
    let [a1, a2, b1, b2, mu, sigma, gamma] = [theta[0], theta[1], theta[2], theta[3], theta[4], theta[5], theta[6]];
    let (mut u, mut v) = (INITIAL_STATE, INITIAL_STATE);
    for t in 0..steps {
        let loc_u = u + a1 / (1.0 + v.powf(b1)) - (1.0 + 0.03 * u);
        let loc_v = v + a2 / (1.0 + u.powf(b2)) - (1.0 + 0.03 * v);
        u = truncnorm_pos_ppf(noise[1 + 2 * t], loc_u, STEP_SD);
        v = truncnorm_pos_ppf(noise[2 + 2 * t], loc_v, STEP_SD);
    }
    Ok(truncnorm_pos_ppf(noise[0], mu + u, mu * sigma / u.powf(gamma)))
}

#[derive(Debug, Clone)]
pub struct ToggleSwitch {
    prior: Prior,
    ladder: FidelityLadder,
    steps: Vec<usize>,
}

impl ToggleSwitch {
    /// Ladder over the given step counts, unit cost per step.
    pub fn new(steps: &[usize]) -> Result<Self> {
        let prior = Prior::Uniform(PriorBox::new(
            vec![0.01, 0.01, 0.01, 0.01, 250.0, 0.01, 0.01],
            vec![50.0, 50.0, 5.0, 5.0, 450.0, 0.5, 0.4],
        )?);
        let ladder = FidelityLadder::new(
            steps
                .iter()
                .map(|&t| FidelityLevel { name: format!("T={t}"), noise_dim: toggle_noise_dim(t), cost: t as f64 })
                .collect(),
        )?;
        Ok(ToggleSwitch { prior, ladder, steps: steps.to_vec() })
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }
}

impl Default for ToggleSwitch {
    fn default() -> Self {
        Self::new(&TOGGLE_LEVEL_STEPS).expect("static configuration")
    }
}

impl Simulator for ToggleSwitch {
    fn name(&self) -> &str {
        "toggle-switch"
    }
    fn prior(&self) -> &Prior {
        &self.prior
    }
    fn ladder(&self) -> &FidelityLadder {
        &self.ladder
    }
    fn noise_kind(&self) -> NoiseKind {
        NoiseKind::Uniform01
    }
    fn observations(&self) -> usize {
        1
    }
    fn data_dim(&self) -> usize {
        1
    }
    fn simulate(&self, level: usize, theta: &[f64], noise: &NoiseBlock) -> Result<Array2<f64>> {
        let steps =
            *self.steps.get(level).ok_or_else(|| Error::invalid(format!("toggle switch has no level {level}")))?;
        let mut out = Array2::zeros((noise.rows(), 1));
        for (i, row) in noise.values.rows().into_iter().enumerate() {
            let row = row.as_slice().map(|s| s.to_vec()).unwrap_or_else(|| row.to_vec());
            out[[i, 0]] = toggle_simulate(theta, &row, steps)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_noise, SeedKey};
    use ndarray::s;

    #[test]
    fn location_update_without_activation() {
        // α1 = 0: loc = u - (1 + 0.03 u) = 8.7 at u = 10
        let u: f64 = 10.0;
        let loc = u + 0.0 / (1.0 + 10f64.powf(1.0)) - (1.0 + 0.03 * u);
        assert!((loc - 8.7).abs() < 1e-12);
        // a median draw of TN₊(8.7, 0.5) is essentially 8.7 since the truncation is 17 sd away
        assert!((truncnorm_pos_ppf(0.5, 8.7, STEP_SD) - 8.7).abs() < 1e-12);
    }

    #[test]
    fn coupled_levels_share_noise_prefix() {
        let sim = ToggleSwitch::default();
        let key = SeedKey::new(4);
        let wide = sample_noise(&key, 1, sim.ladder().noise_dim(1), NoiseKind::Uniform01).unwrap();
        let narrow = sample_noise(&key, 1, sim.ladder().noise_dim(0), NoiseKind::Uniform01).unwrap();
        assert_eq!(narrow.dim(), 101);
        assert_eq!(narrow.values, wide.values.slice(s![.., 0..101]));
        let theta = sim.prior().sample(&key.derive(9));
        let a = sim.simulate(0, &theta, &wide).unwrap();
        let b = sim.simulate(0, &theta, &narrow).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn outputs_positive_and_deterministic() {
        let sim = ToggleSwitch::default();
        let key = SeedKey::new(12);
        for i in 0..200 {
            let k = key.derive(i);
            let theta = sim.prior().sample(&k.derive(0));
            let noise = sample_noise(&k.derive(1), 1, sim.ladder().noise_dim(2), NoiseKind::Uniform01).unwrap();
            for level in 0..3 {
                let x = sim.simulate(level, &theta, &noise).unwrap();
                assert!(x[[0, 0]] > 0.0 && x[[0, 0]].is_finite());
                assert_eq!(x, sim.simulate(level, &theta, &noise).unwrap());
            }
        }
    }

    #[test]
    fn rejects_zero_steps() {
        assert!(toggle_simulate(&[1.0; 7], &[0.5; 3], 0).is_err());
    }
}
