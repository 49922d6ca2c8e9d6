//! Full-batch Adam with the multilevel gradient adjustment (rescaling of the
//! negative components, then projection of conflicting gradients).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{mc_loss, mlmc_loss, LevelData, LossReport};
use crate::mdn::{ConditionalEstimator, Mdn, MdnConfig, Standardizer};
use crate::rng::SeedKey;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-4;
pub const DEFAULT_WEIGHT_DECAY: f64 = 1e-5;
pub const RESCALE_EPS: f64 = 1e-8;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m1: Vec<f64>,
    pub m2: Vec<f64>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState { m1: vec![0.0; n_params], m2: vec![0.0; n_params], step: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    /// One bias-corrected Adam update of `phi`. `weight_decay · φ` is added to
    /// the gradient before the moments are updated.
    pub fn step(&mut self, phi: &mut [f64], grad: &[f64], weight_decay: f64) -> Result<()> {
        if grad.len() != phi.len() || phi.len() != self.m1.len() {
            return Err(Error::invalid("gradient, parameters and optimiser state differ in length"));
        }
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::invalid(format!("non-finite gradient at coordinate {i}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for i in 0..phi.len() {
            let g = grad[i] + weight_decay * phi[i];
            self.m1[i] = self.beta1 * self.m1[i] + (1.0 - self.beta1) * g;
            self.m2[i] = self.beta2 * self.m2[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m1[i] / c1;
            let vhat = self.m2[i] / c2;
            phi[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Output of [`adjust_gradients`] with the intermediate quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedGradient {
    pub grad: Vec<f64>,
    /// `∇h_0`, projected if the branch fired.
    pub h0: Vec<f64>,
    /// `∇h_c` after rescaling, projected if the branch fired.
    pub correction: Vec<f64>,
    pub conflict: bool,
}

/// Combine `∇h_0`, `∇f̄^{l,+}` (`l = 1..L`) and `∇f̄^{l-1,-}` into one update direction.
///
/// Each `g_minus[l-1]` is rescaled to the norm of `g_plus[l]`, the rescaled
/// pairs are summed into `g_c`, and if `g_h0 · g_c < 0` each of the two is
/// projected onto the normal plane of the other.
pub fn adjust_gradients(g_h0: &[f64], g_plus: &[Vec<f64>], g_minus: &[Vec<f64>], eps: f64) -> Result<AdjustedGradient> {
    let n = g_h0.len();
    if g_plus.len() != g_minus.len() {
        return Err(Error::invalid("need one negative component per positive correction component"));
    }
    if g_plus.iter().chain(g_minus).any(|g| g.len() != n) {
        return Err(Error::invalid("gradient components differ in length"));
    }
    let mut g_c = vec![0.0; n];
    for (gp, gm) in g_plus.iter().zip(g_minus) {
        let scale = norm(gp) / (norm(gm) + eps);
        for i in 0..n {
            g_c[i] += gp[i] + scale * gm[i];
        }
    }
    let cross = dot(g_h0, &g_c);
    if cross < 0.0 {
        let (nc, nh) = (dot(&g_c, &g_c), dot(g_h0, g_h0));
        let h0: Vec<f64> = g_h0.iter().zip(&g_c).map(|(h, c)| h - cross / nc * c).collect();
        let correction: Vec<f64> = g_c.iter().zip(g_h0).map(|(c, h)| c - cross / nh * h).collect();
        let grad = h0.iter().zip(&correction).map(|(a, b)| a + b).collect();
        Ok(AdjustedGradient { grad, h0, correction, conflict: true })
    } else {
        let grad = g_h0.iter().zip(&g_c).map(|(a, b)| a + b).collect();
        Ok(AdjustedGradient { grad, h0: g_h0.to_vec(), correction: g_c, conflict: false })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub adjust_gradients: bool,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            learning_rate: DEFAULT_LEARNING_RATE,
            adjust_gradients: true,
            weight_decay: DEFAULT_WEIGHT_DECAY,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossReport,
    pub grad_norm: f64,
    pub grad_norm_h0: f64,
    pub grad_norm_correction: f64,
    pub conflict: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss.total)
    }

    /// Largest `|x_{e} - x_{e-1}|` over the last `fraction` of epochs for a
    /// per-epoch series selected by `pick`.
    pub fn late_max_jump(&self, fraction: f64, pick: impl Fn(&EpochRecord) -> f64) -> f64 {
        let n = self.records.len();
        let start = n.saturating_sub(((n as f64 * fraction).ceil() as usize).max(2));
        self.records[start..].windows(2).map(|w| (pick(&w[1]) - pick(&w[0])).abs()).fold(0.0, f64::max)
    }
}

/// Standardiser fitted on every high-fidelity pair of the training data.
pub fn fit_standardizer(levels: &[LevelData]) -> Result<Standardizer> {
    let conds: Vec<_> = levels.iter().map(|d| d.hi.conditions.view()).collect();
    let targs: Vec<_> = levels.iter().map(|d| d.hi.targets.view()).collect();
    let c = ndarray::concatenate(ndarray::Axis(0), &conds).map_err(|e| Error::invalid(e.to_string()))?;
    let t = ndarray::concatenate(ndarray::Axis(0), &targs).map_err(|e| Error::invalid(e.to_string()))?;
    Standardizer::fit(c.view(), t.view())
}

/// Fresh MDN sized for `levels`, with a standardiser fitted on them.
pub fn init_for_data(
    levels: &[LevelData],
    hidden_layers: Vec<usize>,
    n_components: usize,
    key: &SeedKey,
) -> Result<Mdn> {
    let first = levels.first().ok_or_else(|| Error::invalid("no training data"))?;
    let cfg = MdnConfig {
        condition_dim: first.hi.conditions.ncols(),
        target_dim: first.hi.targets.ncols(),
        hidden_layers,
        n_components,
        activation: Default::default(),
    };
    Mdn::init(cfg, fit_standardizer(levels)?, key)
}

/// Run `epochs` full-batch steps on `levels`. One level trains on the Monte
/// Carlo loss; more levels train on the multilevel loss, with the gradient
/// adjustment if enabled. Each epoch record is also written to `sink` as a
/// JSON line.
pub fn train(
    est: &mut dyn ConditionalEstimator,
    levels: &[LevelData],
    config: &TrainConfig,
    mut sink: Option<&mut dyn Write>,
) -> Result<TrainingLog> {
    config.validate()?;
    if levels.is_empty() {
        return Err(Error::invalid("no training data"));
    }
    let mut adam = AdamState::new(est.params().len(), config.learning_rate);
    let mut log = TrainingLog::default();
    for epoch in 0..config.epochs {
        let mut report =
            if levels.len() == 1 { mc_loss(est, &levels[0], true)? } else { mlmc_loss(est, levels, true)? };
        if !report.total.is_finite() {
            return Err(Error::Diverged { epoch, reason: format!("loss is {}", report.total) });
        }
        let (grad, gh0, gc, conflict) = if config.adjust_gradients && levels.len() > 1 {
            let adj = adjust_gradients(&report.grad_plus[0], &report.grad_plus[1..], &report.grad_minus, RESCALE_EPS)?;
            let (a, b) = (norm(&adj.h0), norm(&adj.correction));
            (adj.grad, a, b, adj.conflict)
        } else {
            let g = report.total_grad();
            let gh0 = norm(&report.grad_plus[0]);
            let gc = norm(&g.iter().zip(&report.grad_plus[0]).map(|(a, b)| a - b).collect::<Vec<_>>());
            (g, gh0, gc, false)
        };
        let mut phi = est.params().values.clone();
        adam.step(&mut phi, &grad, config.weight_decay)
            .map_err(|e| Error::Diverged { epoch, reason: e.to_string() })?;
        est.set_values(phi)?;
        // the log keeps loss values only
        report.grad_plus = Vec::new();
        report.grad_minus = Vec::new();
        let record = EpochRecord {
            epoch,
            grad_norm: norm(&grad),
            grad_norm_h0: gh0,
            grad_norm_correction: gc,
            conflict,
            loss: report,
        };
        if let Some(w) = sink.as_deref_mut() {
            serde_json::to_writer(&mut *w, &record)?;
            w.write_all(b"\n")?;
        }
        log.records.push(record);
    }
    Ok(log)
}
