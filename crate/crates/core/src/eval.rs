//! Evaluation metrics for fitted estimators.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::ConditionalEstimator;
use crate::rng::SeedKey;
use crate::special::logsumexp;

/// Equidistant points `lo..=hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub lo: f64,
    pub hi: f64,
    pub n_points: usize,
}

impl EvalGrid {
    pub fn new(lo: f64, hi: f64, n_points: usize) -> Result<Self> {
        if !(lo < hi) || n_points < 2 {
            return Err(Error::invalid("grid needs lo < hi and at least two points"));
        }
        Ok(EvalGrid { lo, hi, n_points })
    }

    /// The 2000-point grid on `[-30, 30]` used for the g-and-k likelihoods.
    pub fn gk_default() -> Self {
        EvalGrid { lo: -30.0, hi: 30.0, n_points: 2000 }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_points - 1) as f64
    }

    pub fn points(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.n_points).map(|i| self.lo + i as f64 * h).collect()
    }
}

/// `∫ p ln(p/q)` on the grid after renormalising both densities to unit
/// Riemann mass. Returns `+∞` when `q` vanishes where `p` does not.
pub fn grid_kld(p_log: &[f64], q_log: &[f64], grid: &EvalGrid) -> Result<f64> {
    if p_log.len() != grid.n_points || q_log.len() != grid.n_points {
        return Err(Error::invalid("log-densities must have one value per grid point"));
    }
    if p_log.iter().chain(q_log).any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::invalid("log-densities must be finite or -inf"));
    }
    let lp_norm = logsumexp(p_log);
    let lq_norm = logsumexp(q_log);
    if lp_norm == f64::NEG_INFINITY {
        return Err(Error::invalid("reference density vanishes on the whole grid"));
    }
    if lq_norm == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let mut kl = 0.0;
    for (lp, lq) in p_log.iter().zip(q_log) {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        if *lq == f64::NEG_INFINITY {
            return Ok(f64::INFINITY);
        }
        let (a, b) = (lp - lp_norm, lq - lq_norm);
        // the grid spacing cancels inside the ratio and against the weights
        kl += a.exp() * (a - b);
    }
    Ok(kl.max(0.0))
}

/// `Σ_i (p_i - q_i)²` over the grid points, on raw density values.
pub fn grid_ise(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::invalid("densities must share the grid"));
    }
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Negative log posterior density of the true parameter.
pub fn nlpd(posterior_logpdf_at_truth: f64) -> f64 {
    -posterior_logpdf_at_truth
}

/// Five-number-style summary over finite values; non-finite ones are counted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustSummary {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub mean: f64,
    pub n_finite: usize,
    pub n_excluded: usize,
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn robust_summary(values: &[f64]) -> Result<RobustSummary> {
    let mut finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::invalid("no finite values to summarise"));
    }
    finite.sort_by(f64::total_cmp);
    Ok(RobustSummary {
        median: quantile_sorted(&finite, 0.5),
        q1: quantile_sorted(&finite, 0.25),
        q3: quantile_sorted(&finite, 0.75),
        mean: finite.iter().sum::<f64>() / finite.len() as f64,
        n_finite: finite.len(),
        n_excluded: values.len() - finite.len(),
    })
}

/// `0, 0.01, ..., 1`.
pub fn credibility_levels() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Sample-based HPD membership of the truth at each credibility `c`: the
/// truth is covered when its log-density is at least that of the `⌈c·N⌉`-th
/// highest-density draw. Credibility 0 never covers, credibility 1 always does.
pub fn hpd_membership(sample_logpdfs: &[f64], truth_logpdf: f64, credibilities: &[f64]) -> Result<Vec<bool>> {
    let n = sample_logpdfs.len();
    if n < 10 {
        return Err(Error::invalid("HPD coverage needs at least 10 posterior draws"));
    }
    let mut sorted = sample_logpdfs.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(credibilities
        .iter()
        .map(|&c| {
            if c >= 1.0 {
                return true;
            }
            let k = (c * n as f64 - 1e-9).ceil() as usize;
            k >= 1 && truth_logpdf >= sorted[k - 1]
        })
        .collect())
}

/// HPD membership of `theta_true` under `q(· | condition)` from `n_draws` draws.
pub fn posterior_coverage(
    est: &dyn ConditionalEstimator,
    condition: &[f64],
    theta_true: &[f64],
    n_draws: usize,
    key: &SeedKey,
    credibilities: &[f64],
) -> Result<Vec<bool>> {
    let draws = est.sample(condition, n_draws, key)?;
    let cond = ndarray::Array2::from_shape_fn((n_draws, condition.len()), |(_, j)| condition[j]);
    let lps = est.logpdf_batch(cond.view(), draws.view())?;
    hpd_membership(&lps, est.logpdf(condition, theta_true)?, credibilities)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageCurve {
    pub levels: Vec<f64>,
    pub empirical: Vec<f64>,
}

impl CoverageCurve {
    /// Average per-dataset membership vectors.
    pub fn from_memberships(levels: Vec<f64>, memberships: &[Vec<bool>]) -> Result<Self> {
        if memberships.is_empty() || memberships.iter().any(|m| m.len() != levels.len()) {
            return Err(Error::invalid("need at least one membership vector per credibility grid"));
        }
        let n = memberships.len() as f64;
        let empirical = (0..levels.len()).map(|i| memberships.iter().filter(|m| m[i]).count() as f64 / n).collect();
        Ok(CoverageCurve { levels, empirical })
    }
}

/// Median pairwise Euclidean distance is computed on at most this many
/// pooled points, taken at even strides.
pub const MEDIAN_HEURISTIC_POINTS: usize = 2000;

fn sq_dist(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Median-heuristic bandwidth of the pooled sample.
pub fn median_bandwidth(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    let pooled = ndarray::concatenate(Axis(0), &[a, b]).map_err(|e| Error::invalid(e.to_string()))?;
    let n = pooled.nrows();
    let stride = n.div_ceil(MEDIAN_HEURISTIC_POINTS).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let mut d = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            d.push(sq_dist(pooled.row(i), pooled.row(j)));
        }
    }
    if d.is_empty() {
        return Err(Error::invalid("median heuristic needs at least two points"));
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    let h = m.sqrt();
    Ok(if h > 0.0 { h } else { 1.0 })
}

/// Squared MMD, biased V-statistic with a Gaussian kernel
/// `exp(-‖x-y‖² / (2h²))` and median-heuristic bandwidth `h`.
pub fn mmd(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::invalid("MMD needs two non-empty samples"));
    }
    if a.ncols() != b.ncols() {
        return Err(Error::invalid("MMD samples differ in dimension"));
    }
    let h = median_bandwidth(a, b)?;
    mmd_with_bandwidth(a, b, h)
}

pub fn mmd_with_bandwidth(a: ArrayView2<f64>, b: ArrayView2<f64>, h: f64) -> Result<f64> {
    let gamma = 1.0 / (2.0 * h * h);
    let mean_kernel = |x: ArrayView2<f64>, y: ArrayView2<f64>| {
        let mut s = 0.0;
        for r in x.rows() {
            for q in y.rows() {
                s += (-gamma * sq_dist(r, q)).exp();
            }
        }
        s / (x.nrows() * y.nrows()) as f64
    };
    let v = mean_kernel(a, a) + mean_kernel(b, b) - 2.0 * mean_kernel(a, b);
    Ok(v.max(0.0))
}

/// Per-dimension recovery of true parameters by posterior medians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Pearson correlation; `None` when either column is constant.
    pub r: Option<f64>,
    /// `1 - SS_res / SS_tot`; `None` when the truths are constant.
    pub r2: Option<f64>,
}

pub fn recovery_stats(truths: ArrayView2<f64>, medians: ArrayView2<f64>) -> Result<Vec<Recovery>> {
    if truths.dim() != medians.dim() || truths.nrows() < 2 {
        return Err(Error::invalid("recovery needs matching matrices with at least two rows"));
    }
    let n = truths.nrows() as f64;
    Ok(truths
        .columns()
        .into_iter()
        .zip(medians.columns())
        .map(|(t, m)| {
            let (mt, mm) = (t.sum() / n, m.sum() / n);
            let stt: f64 = t.iter().map(|v| (v - mt).powi(2)).sum();
            let smm: f64 = m.iter().map(|v| (v - mm).powi(2)).sum();
            let stm: f64 = t.iter().zip(m).map(|(a, b)| (a - mt) * (b - mm)).sum();
            let ss_res: f64 = t.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum();
            Recovery {
                r: (stt > 0.0 && smm > 0.0).then(|| stm / (stt * smm).sqrt()),
                r2: (stt > 0.0).then(|| 1.0 - ss_res / stt),
            }
        })
        .collect())
}

/// Column-wise medians of a sample matrix.
pub fn column_medians(samples: ArrayView2<f64>) -> Vec<f64> {
    samples
        .columns()
        .into_iter()
        .map(|c| {
            let mut v = c.to_vec();
            v.sort_by(f64::total_cmp);
            quantile_sorted(&v, 0.5)
        })
        .collect()
}
