//! Conditional Gaussian mixture density network `q_φ(target | condition)`.
//!
//! A tanh MLP maps the standardised condition to a mixture head laid out as
//! `K` logits, then `K·D` means, then `K·D` raw scales with
//! `σ = softplus(raw) + 1e-4`. Covariances are diagonal. Gradients are
//! hand-written reverse mode over whole batches.

use std::fs;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedKey;
use crate::special::{logsumexp, norm_ppf, sigmoid, softplus, LN_SQRT_2PI};

pub const SIGMA_FLOOR: f64 = 1e-4;

/// Raw-scale bias giving `softplus(raw) = 1`.
const UNIT_SCALE_RAW: f64 = 0.541_324_854_612_918_1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MdnConfig {
    pub condition_dim: usize,
    pub target_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub n_components: usize,
    #[serde(default)]
    pub activation: Activation,
}

impl MdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.condition_dim == 0 || self.target_dim == 0 {
            return Err(Error::invalid("estimator dimensions must be at least 1"));
        }
        if self.n_components == 0 {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::invalid("hidden layers must have at least one unit"));
        }
        Ok(())
    }

    fn head_width(&self) -> usize {
        self.n_components * (1 + 2 * self.target_dim)
    }

    /// Tensor layout of φ: `hidden{i}.weight`, `hidden{i}.bias`, ..., `head.weight`, `head.bias`.
    /// Weights are row-major `out × in`.
    pub fn layout(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut offset = 0;
        let mut fan_in = self.condition_dim;
        let mut push = |name: String, shape: Vec<usize>, offset: &mut usize| {
            let len: usize = shape.iter().product();
            specs.push(TensorSpec { name, shape, offset: *offset });
            *offset += len;
        };
        for (i, &h) in self.hidden_layers.iter().enumerate() {
            push(format!("hidden{i}.weight"), vec![h, fan_in], &mut offset);
            push(format!("hidden{i}.bias"), vec![h], &mut offset);
            fan_in = h;
        }
        push("head.weight".into(), vec![self.head_width(), fan_in], &mut offset);
        push("head.bias".into(), vec![self.head_width()], &mut offset);
        specs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Flat parameter vector φ with its tensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorParams {
    pub values: Vec<f64>,
    pub layout: Vec<TensorSpec>,
}

impl EstimatorParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut next = 0;
        for t in &self.layout {
            if t.offset != next {
                return Err(Error::invalid(format!("tensor {} does not start at offset {next}", t.name)));
            }
            next += t.len();
        }
        if next != self.values.len() {
            return Err(Error::invalid(format!("layout covers {next} values but φ has {}", self.values.len())));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("φ contains non-finite values"));
        }
        Ok(())
    }

    fn spec(&self, name: &str) -> &TensorSpec {
        self.layout.iter().find(|t| t.name == name).expect("tensor present in layout")
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let t = self.layout.iter().find(|t| t.name == name)?;
        Some(&self.values[t.offset..t.offset + t.len()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let t = self.layout.iter().find(|t| t.name == name)?.clone();
        Some(&mut self.values[t.offset..t.offset + t.len()])
    }

    fn matrix(&self, name: &str) -> ArrayView2<'_, f64> {
        let t = self.spec(name);
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &self.values[t.offset..t.offset + t.len()])
            .expect("layout shape")
    }

    fn vector(&self, name: &str) -> &[f64] {
        let t = self.spec(name);
        &self.values[t.offset..t.offset + t.len()]
    }
}

/// Log-densities of a batch and the gradient of their mean in φ.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityBatch {
    pub values: Vec<f64>,
    pub grad_phi: Vec<f64>,
}

impl LogDensityBatch {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Fixed affine standardisation of conditions and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub condition_mean: Vec<f64>,
    pub condition_std: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
}

fn column_moments(data: ArrayView2<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = data.nrows() as f64;
    let mean = data.mean_axis(Axis(0)).expect("non-empty").to_vec();
    let std = data
        .columns()
        .into_iter()
        .zip(&mean)
        .map(|(c, m)| {
            let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            if s > 1e-12 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

impl Standardizer {
    pub fn identity(condition_dim: usize, target_dim: usize) -> Self {
        Standardizer {
            condition_mean: vec![0.0; condition_dim],
            condition_std: vec![1.0; condition_dim],
            target_mean: vec![0.0; target_dim],
            target_std: vec![1.0; target_dim],
        }
    }

    /// Column means and standard deviations of the training data. Constant
    /// columns keep unit scale.
    pub fn fit(conditions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Self> {
        if conditions.nrows() == 0 || targets.nrows() == 0 {
            return Err(Error::invalid("cannot fit a standardiser on an empty batch"));
        }
        let (condition_mean, condition_std) = column_moments(conditions);
        let (target_mean, target_std) = column_moments(targets);
        Ok(Standardizer { condition_mean, condition_std, target_mean, target_std })
    }

    fn log_jacobian(&self) -> f64 {
        self.target_std.iter().map(|s| s.ln()).sum()
    }
}

fn standardize(data: ArrayView2<f64>, mean: &[f64], std: &[f64]) -> Array2<f64> {
    let mut out = data.to_owned();
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j]) / std[j];
        }
    }
    out
}

/// Mixture parameters for one condition, in target units.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponents {
    pub weights: Vec<f64>,
    /// `K × D` means.
    pub means: Array2<f64>,
    /// `K × D` standard deviations.
    pub stds: Array2<f64>,
}

/// Interface shared by conditional density estimators.
pub trait ConditionalEstimator: Send + Sync {
    fn condition_dim(&self) -> usize;
    fn target_dim(&self) -> usize;
    fn params(&self) -> &EstimatorParams;
    fn set_values(&mut self, values: Vec<f64>) -> Result<()>;
    /// `log q_φ(target | condition)` for each row pair.
    fn logpdf_batch(&self, conditions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Vec<f64>>;
    /// Log-densities plus the gradient of their batch mean in φ.
    fn logpdf_grad(&self, conditions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<LogDensityBatch>;
    /// `n` ancestral draws, deterministic in `key`.
    fn sample(&self, condition: &[f64], n: usize, key: &SeedKey) -> Result<Array2<f64>>;

    fn logpdf(&self, condition: &[f64], target: &[f64]) -> Result<f64> {
        let c = ArrayView2::from_shape((1, condition.len()), condition).map_err(|e| Error::invalid(e.to_string()))?;
        let t = ArrayView2::from_shape((1, target.len()), target).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(self.logpdf_batch(c, t)?[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mdn {
    config: MdnConfig,
    standardizer: Standardizer,
    params: EstimatorParams,
}

struct Forward {
    /// Layer inputs: `acts[0]` is the standardised condition, `acts[i]` the
    /// output of hidden layer `i - 1`.
    acts: Vec<Array2<f64>>,
    head: Array2<f64>,
}

impl Mdn {
    /// Glorot-uniform weights, zero biases, zero logit rows and unit initial scales.
    pub fn init(config: MdnConfig, standardizer: Standardizer, key: &SeedKey) -> Result<Self> {
        config.validate()?;
        if standardizer.condition_mean.len() != config.condition_dim
            || standardizer.target_mean.len() != config.target_dim
        {
            return Err(Error::invalid("standardiser dimensions do not match the estimator"));
        }
        let layout = config.layout();
        let total = layout.last().map(|t| t.offset + t.len()).unwrap_or(0);
        let mut values = vec![0.0; total];
        for (li, t) in layout.iter().enumerate().filter(|(_, t)| t.shape.len() == 2) {
            let (fan_out, fan_in) = (t.shape[0], t.shape[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let k = key.derive(li as u64);
            for i in 0..t.len() {
                values[t.offset + i] = limit * (2.0 * k.uniform(i as u64) - 1.0);
            }
        }
        let mut params = EstimatorParams { values, layout };
        let kk = config.n_components;
        let kd = kk * config.target_dim;
        let fan_in = config.hidden_layers.last().copied().unwrap_or(config.condition_dim);
        let w = params.tensor_mut("head.weight").expect("head");
        w[..kk * fan_in].fill(0.0);
        let b = params.tensor_mut("head.bias").expect("head");
        b[kk + kd..].fill(UNIT_SCALE_RAW);
        Ok(Mdn { config, standardizer, params })
    }

    pub fn from_parts(config: MdnConfig, standardizer: Standardizer, params: EstimatorParams) -> Result<Self> {
        config.validate()?;
        if params.layout != config.layout() {
            return Err(Error::invalid("parameter layout does not match the config"));
        }
        params.validate()?;
        Ok(Mdn { config, standardizer, params })
    }

    pub fn config(&self) -> &MdnConfig {
        &self.config
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn params_mut(&mut self) -> &mut EstimatorParams {
        &mut self.params
    }

    fn check_batch(&self, conditions: ArrayView2<f64>, targets: Option<ArrayView2<f64>>) -> Result<()> {
        if conditions.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if conditions.ncols() != self.config.condition_dim {
            return Err(Error::invalid(format!(
                "condition has {} columns, estimator expects {}",
                conditions.ncols(),
                self.config.condition_dim
            )));
        }
        if conditions.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite condition"));
        }
        if let Some(t) = targets {
            if t.nrows() != conditions.nrows() || t.ncols() != self.config.target_dim {
                return Err(Error::invalid(format!(
                    "target batch is {}x{}, expected {}x{}",
                    t.nrows(),
                    t.ncols(),
                    conditions.nrows(),
                    self.config.target_dim
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("non-finite target"));
            }
        }
        Ok(())
    }

    fn forward(&self, conditions: ArrayView2<f64>) -> Forward {
        let s = &self.standardizer;
        let mut acts = vec![standardize(conditions, &s.condition_mean, &s.condition_std)];
        for i in 0..self.config.hidden_layers.len() {
            let w = self.params.matrix(&format!("hidden{i}.weight"));
            let b = self.params.vector(&format!("hidden{i}.bias"));
            let mut a = acts[i].dot(&w.t());
            for mut row in a.rows_mut() {
                for (v, bj) in row.iter_mut().zip(b) {
                    *v = (*v + bj).tanh();
                }
            }
            acts.push(a);
        }
        let w = self.params.matrix("head.weight");
        let b = self.params.vector("head.bias");
        let mut head = acts.last().expect("input layer").dot(&w.t());
        for mut row in head.rows_mut() {
            for (v, bj) in row.iter_mut().zip(b) {
                *v += bj;
            }
        }
        Forward { acts, head }
    }

    /// Mixture weights, means and standard deviations for one condition.
    pub fn components(&self, condition: &[f64]) -> Result<MixtureComponents> {
        let c = ArrayView2::from_shape((1, condition.len()), condition).map_err(|e| Error::invalid(e.to_string()))?;
        self.check_batch(c, None)?;
        let head = self.forward(c).head;
        let (k, d) = (self.config.n_components, self.config.target_dim);
        let row = head.row(0);
        let logits: Vec<f64> = row.slice(s![..k]).to_vec();
        let lse = logsumexp(&logits);
        let s = &self.standardizer;
        Ok(MixtureComponents {
            weights: logits.iter().map(|l| (l - lse).exp()).collect(),
            means: Array2::from_shape_fn((k, d), |(c, j)| s.target_mean[j] + s.target_std[j] * row[k + c * d + j]),
            stds: Array2::from_shape_fn((k, d), |(c, j)| {
                s.target_std[j] * (softplus(row[k + k * d + c * d + j]) + SIGMA_FLOOR)
            }),
        })
    }

    /// Per-row log-density and, if `grad` is set, `∂ log q / ∂ head` for each row.
    fn head_logpdf(&self, head: &Array2<f64>, y: &Array2<f64>, mut grad: Option<&mut Array2<f64>>) -> Vec<f64> {
        let (k, d) = (self.config.n_components, self.config.target_dim);
        let (mu0, raw0) = (k, k + k * d);
        let log_jac = self.standardizer.log_jacobian();
        let mut out = Vec::with_capacity(head.nrows());
        let mut comp = vec![0.0; k];
        let mut logw = vec![0.0; k];
        let mut logits = vec![0.0; k];
        for (n, h) in head.rows().into_iter().enumerate() {
            for c in 0..k {
                logits[c] = h[c];
            }
            let lse_logits = logsumexp(&logits);
            for c in 0..k {
                logw[c] = h[c] - lse_logits;
                let mut lp = logw[c];
                for j in 0..d {
                    let sigma = softplus(h[raw0 + c * d + j]) + SIGMA_FLOOR;
                    let z = (y[[n, j]] - h[mu0 + c * d + j]) / sigma;
                    lp += -0.5 * z * z - sigma.ln() - LN_SQRT_2PI;
                }
                comp[c] = lp;
            }
            let total = logsumexp(&comp);
            out.push(total - log_jac);
            if let Some(g) = grad.as_deref_mut() {
                for c in 0..k {
                    let r = (comp[c] - total).exp();
                    g[[n, c]] = r - logw[c].exp();
                    for j in 0..d {
                        let raw = h[raw0 + c * d + j];
                        let sigma = softplus(raw) + SIGMA_FLOOR;
                        let diff = y[[n, j]] - h[mu0 + c * d + j];
                        g[[n, mu0 + c * d + j]] = r * diff / (sigma * sigma);
                        let dsigma = r * (diff * diff / (sigma * sigma * sigma) - 1.0 / sigma);
                        g[[n, raw0 + c * d + j]] = dsigma * sigmoid(raw);
                    }
                }
            }
        }
        out
    }

    fn standardized_targets(&self, targets: ArrayView2<f64>) -> Array2<f64> {
        standardize(targets, &self.standardizer.target_mean, &self.standardizer.target_std)
    }

    /// Write `<path>.json` (config, standardiser, layout) and `<path>.bin`
    /// (little-endian f64 φ).
    pub fn save(&self, path: &Path) -> Result<()> {
        let header = CheckpointHeader {
            format: CHECKPOINT_FORMAT.into(),
            config: self.config.clone(),
            standardizer: self.standardizer.clone(),
            layout: self.params.layout.clone(),
            n_values: self.params.len(),
        };
        fs::write(path.with_extension("json"), serde_json::to_vec_pretty(&header)?)?;
        let bytes: Vec<u8> = self.params.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(path.with_extension("bin"), bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: CheckpointHeader = serde_json::from_slice(&fs::read(path.with_extension("json"))?)?;
        if header.format != CHECKPOINT_FORMAT {
            return Err(Error::invalid(format!("unknown checkpoint format {}", header.format)));
        }
        let bytes = fs::read(path.with_extension("bin"))?;
        if bytes.len() != 8 * header.n_values {
            return Err(Error::invalid(format!(
                "checkpoint blob has {} bytes, header promises {} values",
                bytes.len(),
                header.n_values
            )));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        Mdn::from_parts(header.config, header.standardizer, EstimatorParams { values, layout: header.layout })
    }
}

const CHECKPOINT_FORMAT: &str = "mlsbi-mdn-v1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    config: MdnConfig,
    standardizer: Standardizer,
    layout: Vec<TensorSpec>,
    n_values: usize,
}

impl ConditionalEstimator for Mdn {
    fn condition_dim(&self) -> usize {
        self.config.condition_dim
    }

    fn target_dim(&self) -> usize {
        self.config.target_dim
    }

    fn params(&self) -> &EstimatorParams {
        &self.params
    }

    fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(Error::invalid(format!("expected {} parameters, got {}", self.params.len(), values.len())));
        }
        self.params.values = values;
        Ok(())
    }

    fn logpdf_batch(&self, conditions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<Vec<f64>> {
        self.check_batch(conditions, Some(targets))?;
        let fwd = self.forward(conditions);
        Ok(self.head_logpdf(&fwd.head, &self.standardized_targets(targets), None))
    }

    fn logpdf_grad(&self, conditions: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<LogDensityBatch> {
        self.check_batch(conditions, Some(targets))?;
        let fwd = self.forward(conditions);
        let n = conditions.nrows();
        let mut delta = Array2::zeros(fwd.head.raw_dim());
        let values = self.head_logpdf(&fwd.head, &self.standardized_targets(targets), Some(&mut delta));
        delta /= n as f64;

        let mut grad = vec![0.0; self.params.len()];
        let mut write = |name: &str, g: &[f64]| {
            let t = self.params.spec(name);
            grad[t.offset..t.offset + t.len()].copy_from_slice(g);
        };
        let layers = self.config.hidden_layers.len();
        let mut names = vec![("head.weight".to_string(), "head.bias".to_string())];
        names.extend((0..layers).rev().map(|i| (format!("hidden{i}.weight"), format!("hidden{i}.bias"))));
        for (step, (wname, bname)) in names.iter().enumerate() {
            let input = &fwd.acts[layers - step];
            let gw = delta.t().dot(input);
            let gb = delta.sum_axis(Axis(0));
            write(wname, gw.as_standard_layout().as_slice().expect("standard layout"));
            write(bname, gb.as_slice().expect("contiguous"));
            if step == layers {
                break;
            }
            let mut back = delta.dot(&self.params.matrix(wname));
            back.zip_mut_with(input, |g, a| *g *= 1.0 - a * a);
            delta = back;
        }
        Ok(LogDensityBatch { values, grad_phi: grad })
    }

    fn sample(&self, condition: &[f64], n: usize, key: &SeedKey) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::invalid("sample count must be at least 1"));
        }
        let mix = self.components(condition)?;
        let d = self.config.target_dim;
        let mut out = Array2::zeros((n, d));
        for i in 0..n {
            let u = key.uniform_at(i as u64, 0);
            let mut acc = 0.0;
            let mut c = mix.weights.len() - 1;
            for (idx, w) in mix.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    c = idx;
                    break;
                }
            }
            for j in 0..d {
                let z = norm_ppf(key.uniform_at(i as u64, 1 + j as u64));
                out[[i, j]] = mix.means[[c, j]] + mix.stds[[c, j]] * z;
            }
        }
        Ok(out)
    }
}
