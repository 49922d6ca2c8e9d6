//! Monte Carlo and multilevel Monte Carlo training objectives.
//!
//! The per-sample term is `f = -Σ_j log q(x_j | θ)` for likelihood
//! estimation and `f = -log q(θ | s(x_{1:m}))` for posterior estimation.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::ConditionalEstimator;
use crate::simulators::{summarize, LevelBatch, SummaryScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Nle,
    Npe,
}

/// What is being estimated and, for posteriors, how datasets are summarised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub kind: TaskKind,
    pub summary: SummaryScheme,
}

impl Task {
    pub fn nle() -> Self {
        Task { kind: TaskKind::Nle, summary: SummaryScheme::Identity }
    }

    pub fn npe(summary: SummaryScheme) -> Self {
        Task { kind: TaskKind::Npe, summary }
    }

    /// Estimator `(condition_dim, target_dim)` for a simulator with `m`
    /// observations of dimension `d` and a `p`-dimensional θ.
    pub fn estimator_dims(&self, p: usize, m: usize, d: usize) -> (usize, usize) {
        match self.kind {
            TaskKind::Nle => (p, d),
            TaskKind::Npe => (self.summary.output_dim(m, d), p),
        }
    }

    /// Estimator rows for `n` datasets. NLE gives one row per observation.
    pub fn pairs(&self, thetas: &[&[f64]], datasets: &[ArrayView2<f64>]) -> Result<TrainingPairs> {
        if thetas.is_empty() || thetas.len() != datasets.len() {
            return Err(Error::invalid("need one dataset per θ and at least one sample"));
        }
        let p = thetas[0].len();
        match self.kind {
            TaskKind::Nle => {
                let (m, d) = datasets[0].dim();
                let mut conditions = Array2::zeros((thetas.len() * m, p));
                let mut targets = Array2::zeros((thetas.len() * m, d));
                for (i, (th, x)) in thetas.iter().zip(datasets).enumerate() {
                    if x.dim() != (m, d) {
                        return Err(Error::invalid("datasets in a batch must share their shape"));
                    }
                    for j in 0..m {
                        conditions.row_mut(i * m + j).assign(&ndarray::aview1(th));
                        targets.row_mut(i * m + j).assign(&x.row(j));
                    }
                }
                Ok(TrainingPairs { conditions, targets, rows_per_sample: m })
            }
            TaskKind::Npe => {
                let summaries = datasets.iter().map(|x| summarize(*x, self.summary)).collect::<Result<Vec<_>>>()?;
                let s = summaries[0].len();
                let conditions = Array2::from_shape_fn((thetas.len(), s), |(i, j)| summaries[i][j]);
                let targets = Array2::from_shape_fn((thetas.len(), p), |(i, j)| thetas[i][j]);
                Ok(TrainingPairs { conditions, targets, rows_per_sample: 1 })
            }
        }
    }
}

/// Estimator inputs for a set of samples; sample `i` owns rows
/// `i·rows_per_sample .. (i+1)·rows_per_sample`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPairs {
    pub conditions: Array2<f64>,
    pub targets: Array2<f64>,
    pub rows_per_sample: usize,
}

impl TrainingPairs {
    pub fn n_samples(&self) -> usize {
        self.conditions.nrows() / self.rows_per_sample
    }

    /// Per-sample `f` values and, optionally, `∇ mean f`.
    pub fn evaluate(&self, est: &dyn ConditionalEstimator, with_grad: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let (rows, grad) = if with_grad {
            let b = est.logpdf_grad(self.conditions.view(), self.targets.view())?;
            let scale = -(self.rows_per_sample as f64);
            (b.values, Some(b.grad_phi.into_iter().map(|g| scale * g).collect()))
        } else {
            (est.logpdf_batch(self.conditions.view(), self.targets.view())?, None)
        };
        let f = rows.chunks(self.rows_per_sample).map(|c| -c.iter().sum::<f64>()).collect();
        Ok((f, grad))
    }
}

/// One level's training data: `hi` from `G^l`, `lo` from `G^{l-1}` on the same `(θ, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelData {
    pub level: usize,
    pub hi: TrainingPairs,
    pub lo: Option<TrainingPairs>,
}

impl LevelData {
    pub fn from_batch(task: &Task, batch: &LevelBatch) -> Result<Self> {
        if batch.samples.is_empty() {
            return Err(Error::invalid(format!("level {} batch is empty", batch.level)));
        }
        let thetas: Vec<&[f64]> = batch.samples.iter().map(|s| &s.theta[..]).collect();
        let hi: Vec<ArrayView2<f64>> = batch.samples.iter().map(|s| s.x_hi.view()).collect();
        let lo = if batch.samples.iter().all(|s| s.x_lo.is_some()) {
            let views: Vec<ArrayView2<f64>> =
                batch.samples.iter().map(|s| s.x_lo.as_ref().expect("checked").view()).collect();
            Some(task.pairs(&thetas, &views)?)
        } else if batch.samples.iter().any(|s| s.x_lo.is_some()) {
            return Err(Error::invalid(format!("level {} batch mixes samples with and without x_lo", batch.level)));
        } else {
            None
        };
        Ok(LevelData { level: batch.level, hi: task.pairs(&thetas, &hi)?, lo })
    }

    pub fn n(&self) -> usize {
        self.hi.n_samples()
    }
}

/// Loss value with its per-level decomposition and per-component gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    /// `h_0 .. h_L`.
    pub h: Vec<f64>,
    /// `f̄^{l,+}` for `l = 0..L`; `f̄^{0,+} = h_0`.
    pub f_plus: Vec<f64>,
    /// `f̄^{l,-}` for `l = 0..L-1`, the negated mean of `f^l` on the level-`l+1` batch.
    pub f_minus: Vec<f64>,
    #[serde(skip)]
    pub grad_plus: Vec<Vec<f64>>,
    #[serde(skip)]
    pub grad_minus: Vec<Vec<f64>>,
}

impl LossReport {
    pub fn levels(&self) -> usize {
        self.h.len()
    }

    pub fn has_grads(&self) -> bool {
        !self.grad_plus.is_empty()
    }

    /// Unadjusted gradient of `total`.
    pub fn total_grad(&self) -> Vec<f64> {
        let mut g = self.grad_plus[0].clone();
        for v in self.grad_plus[1..].iter().chain(&self.grad_minus) {
            for (a, b) in g.iter_mut().zip(v) {
                *a += b;
            }
        }
        g
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Plain Monte Carlo objective on a single batch.
pub fn mc_loss(est: &dyn ConditionalEstimator, data: &LevelData, with_grad: bool) -> Result<LossReport> {
    if data.n() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let (f, g) = data.hi.evaluate(est, with_grad)?;
    let h0 = mean(&f);
    Ok(LossReport {
        total: h0,
        h: vec![h0],
        f_plus: vec![h0],
        f_minus: vec![],
        grad_plus: g.into_iter().collect(),
        grad_minus: vec![],
    })
}

/// Multilevel objective over levels `0..=L`, `levels[l]` holding the level-`l` data.
pub fn mlmc_loss(est: &dyn ConditionalEstimator, levels: &[LevelData], with_grad: bool) -> Result<LossReport> {
    if levels.is_empty() {
        return Err(Error::invalid("no levels given"));
    }
    for (l, d) in levels.iter().enumerate() {
        if d.level != l {
            return Err(Error::invalid(format!("level {l} missing: found level {} in its slot", d.level)));
        }
        if l > 0 && d.lo.is_none() {
            return Err(Error::invalid(format!("level {l} batch lacks coupled x_lo")));
        }
        if d.n() == 0 {
            return Err(Error::invalid(format!("level {l} batch is empty")));
        }
    }
    let mut report = mc_loss(est, &levels[0], with_grad)?;
    for d in &levels[1..] {
        let (fp, gp) = d.hi.evaluate(est, with_grad)?;
        let (fm, gm) = d.lo.as_ref().expect("checked").evaluate(est, with_grad)?;
        let plus = mean(&fp);
        let minus = -mean(&fm);
        // h_l = mean(f^l - f^{l-1}) on the shared samples
        let h = fp.iter().zip(&fm).map(|(a, b)| a - b).sum::<f64>() / fp.len() as f64;
        report.h.push(h);
        report.f_plus.push(plus);
        report.f_minus.push(minus);
        if let (Some(gp), Some(gm)) = (gp, gm) {
            report.grad_plus.push(gp);
            report.grad_minus.push(gm.into_iter().map(|g| -g).collect());
        }
    }
    report.total = report.h.iter().sum();
    Ok(report)
}

/// Pilot variance of the level-`l` term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelVariance {
    /// Sample variance of the per-sample terms.
    pub per_sample: f64,
    /// `per_sample / n_l`, the variance of `h_l`.
    pub of_mean: f64,
}

/// Sample variance of `f^0` (level 0) or `f^l - f^{l-1}` (level `l ≥ 1`).
pub fn level_variance(est: &dyn ConditionalEstimator, data: &LevelData) -> Result<LevelVariance> {
    let n = data.n();
    if n < 2 {
        return Err(Error::invalid("level variance needs at least two pilot samples"));
    }
    let (fp, _) = data.hi.evaluate(est, false)?;
    let terms: Vec<f64> = match (&data.lo, data.level) {
        (_, 0) => fp,
        (Some(lo), _) => {
            let (fm, _) = lo.evaluate(est, false)?;
            fp.iter().zip(&fm).map(|(a, b)| a - b).collect()
        }
        (None, l) => return Err(Error::invalid(format!("level {l} pilot lacks coupled x_lo"))),
    };
    let m = mean(&terms);
    let per_sample = terms.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    Ok(LevelVariance { per_sample, of_mean: per_sample / n as f64 })
}
