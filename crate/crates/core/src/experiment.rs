//! Experiment runs: simulate training data, train one estimator per
//! replicate, evaluate on a shared held-out test set.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{cost_of, mc_cost, CostModel};
use crate::config::{ExperimentConfig, Metric};
use crate::dataset;
use crate::error::{Error, Result};
use crate::eval::{
    column_medians, credibility_levels, grid_ise, grid_kld, hpd_membership, mmd, nlpd, recovery_stats, robust_summary,
    CoverageCurve, RobustSummary,
};
use crate::loss::{LevelData, TaskKind};
use crate::mdn::{ConditionalEstimator, Mdn};
use crate::reference::{kld_to_reference, reference_npe};
use crate::rng::{sample_noise, SeedKey};
use crate::simulators::{
    generate_level_batch, generate_mlmc_batches, simulate_sample, summarize, Coupling, GkDensity, LevelBatch,
    LinearGaussian, Simulator,
};
use crate::train::{init_for_data, train, TrainingLog};

/// One set of per-level counts trained under a config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub label: String,
    /// Ladder levels trained on.
    pub levels: Vec<usize>,
    pub n_per_level: Vec<usize>,
    /// Simulation cost of the training data.
    pub cost: f64,
}

fn label(n: &[usize]) -> String {
    n.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-")
}

/// The variants of a config: one, or one per sweep value. Budget-matched
/// single-level runs get `n = floor(C / c_level)` with `C` the MLMC cost.
pub fn variants(cfg: &ExperimentConfig) -> Result<Vec<Variant>> {
    let costs = CostModel::new(cfg.resolved_costs())?;
    match cfg.single_level() {
        None => {
            let sets = match &cfg.sweep {
                Some(s) => s
                    .values
                    .iter()
                    .map(|&v| {
                        let mut n = cfg.n_per_level.clone();
                        n[s.level] = v;
                        n
                    })
                    .collect(),
                None => vec![cfg.n_per_level.clone()],
            };
            sets.into_iter()
                .map(|n| {
                    Ok(Variant {
                        label: label(&n),
                        levels: (0..n.len()).collect(),
                        cost: cost_of(&n, &costs)?,
                        n_per_level: n,
                    })
                })
                .collect()
        }
        Some(k) => {
            let n = match &cfg.match_budget_of {
                Some(m) => (cost_of(m, &costs)? / costs.unit_costs()[k]).floor() as usize,
                None => cfg.n_per_level[0],
            };
            if n == 0 {
                return Err(Error::Config("match_budget_of: budget buys no samples at this level".into()));
            }
            Ok(vec![Variant { label: label(&[n]), levels: vec![k], n_per_level: vec![n], cost: mc_cost(n, k, &costs) }])
        }
    }
}

fn replicate_key(cfg: &ExperimentConfig, replicate: usize) -> Result<SeedKey> {
    Ok(SeedKey::new(cfg.seed_u64()?).derive(replicate as u64))
}

/// Training batches of one replicate. Level `l` draws from the same key in
/// every variant, so single-level and multilevel runs share low-level data.
pub fn simulate_variant(
    cfg: &ExperimentConfig,
    sim: &dyn Simulator,
    v: &Variant,
    replicate: usize,
) -> Result<Vec<LevelBatch>> {
    let key = replicate_key(cfg, replicate)?.derive(0);
    if v.levels.len() == 1 {
        let k = v.levels[0];
        Ok(vec![generate_level_batch(sim, k, v.n_per_level[0], &key.derive(k as u64), Coupling::SeedMatched, false)?])
    } else {
        generate_mlmc_batches(sim, &v.n_per_level, &key)
    }
}

pub fn train_replicate(cfg: &ExperimentConfig, batches: &[LevelBatch], replicate: usize) -> Result<(Mdn, TrainingLog)> {
    let task = cfg.experiment.task();
    let levels = batches.iter().map(|b| LevelData::from_batch(&task, b)).collect::<Result<Vec<_>>>()?;
    let (hidden, k) = cfg.resolved_estimator();
    let mut est = init_for_data(&levels, hidden, k, &replicate_key(cfg, replicate)?.derive(1))?;
    let log = train(&mut est, &levels, &cfg.train_config(), None)?;
    Ok((est, log))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestItem {
    pub theta: Vec<f64>,
    /// Estimator condition: the summary for NPE, θ for NLE.
    pub condition: Vec<f64>,
    pub data: Array2<f64>,
}

/// Held-out test set drawn from `eval.seed`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TestSet {
    pub items: Vec<TestItem>,
    /// Exact log-likelihood on the grid, per item (g-and-k NLE).
    pub exact_grid: Vec<Vec<f64>>,
    /// Top-fidelity draws per item, for MMD.
    pub simulator_draws: Vec<Array2<f64>>,
}

pub fn build_test_set(cfg: &ExperimentConfig, sim: &dyn Simulator) -> Result<TestSet> {
    let key = SeedKey::new(cfg.eval.seed);
    let task = cfg.experiment.task();
    let top = sim.ladder().top();
    let metrics = cfg.resolved_metrics();
    let items = (0..cfg.eval.n_test)
        .into_par_iter()
        .map(|i| {
            let s = simulate_sample(sim, top, &key.derive(0).derive(i as u64), Coupling::SeedMatched, false)?;
            let condition = match task.kind {
                TaskKind::Npe => summarize(s.x_hi.view(), task.summary)?,
                TaskKind::Nle => s.theta.0.clone(),
            };
            Ok(TestItem { theta: s.theta.0, condition, data: s.x_hi })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut test = TestSet { items, ..Default::default() };
    if metrics.iter().any(|m| matches!(m, Metric::Kld | Metric::Ise)) {
        let grid = cfg.eval.grid.points();
        test.exact_grid = test
            .items
            .par_iter()
            .map(|it| {
                let d = GkDensity::new(&it.theta)?;
                Ok(grid.iter().map(|&x| d.logpdf(x)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
    }
    if metrics.contains(&Metric::Mmd) {
        let (m, d) = (sim.observations(), sim.ladder().noise_dim(top));
        test.simulator_draws = test
            .items
            .par_iter()
            .enumerate()
            .map(|(i, it)| {
                let k = key.derive(1).derive(i as u64);
                let mut rows = Vec::new();
                for s in 0..cfg.eval.n_mmd_samples {
                    let noise = sample_noise(&k.derive(s as u64), m, d, sim.noise_kind())?;
                    let x = sim.simulate(top, &it.theta, &noise)?;
                    rows.extend(x.iter().copied());
                }
                Array2::from_shape_vec((cfg.eval.n_mmd_samples * m, sim.data_dim()), rows)
                    .map_err(|e| Error::invalid(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
    }
    Ok(test)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryRow {
    pub item: usize,
    pub dim: usize,
    pub truth: f64,
    pub median: f64,
    /// Median absolute deviation of the posterior draws.
    pub mad: f64,
}

/// Metrics of one trained estimator.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    /// One aggregate per metric name, in evaluation order.
    pub scalars: Vec<(String, f64)>,
    /// Per-test-item values: `(metric, item, value)`.
    pub items: Vec<(String, usize, f64)>,
    pub coverage: Option<CoverageCurve>,
    pub recovery: Vec<RecoveryRow>,
}

impl Evaluation {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn push_items(&mut self, name: &str, values: &[f64]) {
        self.items.extend(values.iter().enumerate().map(|(i, v)| (name.to_string(), i, *v)));
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn repeat_row(row: &[f64], n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, row.len()), |(_, j)| row[j])
}

struct PosteriorDraws {
    membership: Vec<bool>,
    medians: Vec<f64>,
    mads: Vec<f64>,
}

fn posterior_draws(est: &Mdn, item: &TestItem, n: usize, key: &SeedKey) -> Result<PosteriorDraws> {
    let draws = est.sample(&item.condition, n, key)?;
    let lps = est.logpdf_batch(repeat_row(&item.condition, n).view(), draws.view())?;
    let membership = hpd_membership(&lps, est.logpdf(&item.condition, &item.theta)?, &credibility_levels())?;
    let medians = column_medians(draws.view());
    let dev = Array2::from_shape_fn(draws.dim(), |(i, j)| (draws[[i, j]] - medians[j]).abs());
    let mads = column_medians(dev.view());
    Ok(PosteriorDraws { membership, medians, mads })
}

/// Evaluate `est` on `test`. `key` drives the posterior and estimator draws.
pub fn evaluate(
    cfg: &ExperimentConfig,
    est: &Mdn,
    test: &TestSet,
    reference: Option<&Mdn>,
    key: &SeedKey,
) -> Result<Evaluation> {
    let mut out = Evaluation::default();
    let metrics = cfg.resolved_metrics();
    let items = &test.items;
    if metrics.iter().any(|m| matches!(m, Metric::Kld | Metric::Ise)) {
        if test.exact_grid.len() != items.len() {
            return Err(Error::invalid("test set has no exact grid densities"));
        }
        let grid = cfg.eval.grid;
        let targets =
            Array2::from_shape_vec((grid.n_points, 1), grid.points()).map_err(|e| Error::invalid(e.to_string()))?;
        let pairs = items
            .par_iter()
            .zip(&test.exact_grid)
            .map(|(it, p_log)| {
                // a very narrow exact density can fall between grid points
                if p_log.iter().all(|v| *v == f64::NEG_INFINITY) {
                    return Ok((f64::NAN, f64::NAN));
                }
                let q_log = est.logpdf_batch(repeat_row(&it.condition, grid.n_points).view(), targets.view())?;
                let p: Vec<f64> = p_log.iter().map(|v| v.exp()).collect();
                let q: Vec<f64> = q_log.iter().map(|v| v.exp()).collect();
                Ok((grid_kld(p_log, &q_log, &grid)?, grid_ise(&p, &q)?))
            })
            .collect::<Result<Vec<_>>>()?;
        let (kld, ise): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let unresolved = kld.iter().filter(|v| v.is_nan()).count();
        if unresolved == kld.len() {
            return Err(Error::invalid("no test item has an exact density resolved by the grid"));
        }
        let resolved_mean = |v: &[f64]| mean(&v.iter().copied().filter(|x| !x.is_nan()).collect::<Vec<_>>());
        if metrics.contains(&Metric::Kld) {
            out.scalars.push(("kld".into(), resolved_mean(&kld)));
            out.push_items("kld", &kld);
        }
        if metrics.contains(&Metric::Ise) {
            out.scalars.push(("ise".into(), resolved_mean(&ise)));
            out.push_items("ise", &ise);
        }
        out.scalars.push(("grid_unresolved".into(), unresolved as f64));
    }
    if metrics.contains(&Metric::Nlpd) {
        let v = items.iter().map(|it| Ok(nlpd(est.logpdf(&it.condition, &it.theta)?))).collect::<Result<Vec<_>>>()?;
        let s = robust_summary(&v)?;
        out.scalars.push(("nlpd".into(), s.median));
        out.scalars.push(("nlpd_excluded".into(), s.n_excluded as f64));
        out.push_items("nlpd", &v);
    }
    if metrics.iter().any(|m| matches!(m, Metric::Coverage | Metric::Recovery)) {
        let draws = items
            .par_iter()
            .enumerate()
            .map(|(i, it)| posterior_draws(est, it, cfg.eval.n_posterior_draws, &key.derive(0).derive(i as u64)))
            .collect::<Result<Vec<_>>>()?;
        if metrics.contains(&Metric::Coverage) {
            let m: Vec<Vec<bool>> = draws.iter().map(|d| d.membership.clone()).collect();
            let curve = CoverageCurve::from_memberships(credibility_levels(), &m)?;
            let err = curve.levels.iter().zip(&curve.empirical).map(|(a, b)| (a - b).abs()).sum::<f64>()
                / curve.levels.len() as f64;
            out.scalars.push(("coverage_error".into(), err));
            out.coverage = Some(curve);
        }
        if metrics.contains(&Metric::Recovery) {
            let p = items[0].theta.len();
            let truths = Array2::from_shape_fn((items.len(), p), |(i, j)| items[i].theta[j]);
            let medians = Array2::from_shape_fn((items.len(), p), |(i, j)| draws[i].medians[j]);
            if items.len() >= 2 {
                for (j, r) in recovery_stats(truths.view(), medians.view())?.into_iter().enumerate() {
                    out.scalars.push((format!("recovery_r_{j}"), r.r.unwrap_or(f64::NAN)));
                    out.scalars.push((format!("recovery_r2_{j}"), r.r2.unwrap_or(f64::NAN)));
                }
            }
            for (i, d) in draws.iter().enumerate() {
                for j in 0..p {
                    out.recovery.push(RecoveryRow {
                        item: i,
                        dim: j,
                        truth: items[i].theta[j],
                        median: d.medians[j],
                        mad: d.mads[j],
                    });
                }
            }
        }
    }
    if metrics.contains(&Metric::Mmd) {
        if test.simulator_draws.len() != items.len() {
            return Err(Error::invalid("test set has no simulator draws"));
        }
        let v = items
            .par_iter()
            .zip(&test.simulator_draws)
            .enumerate()
            .map(|(i, (it, sim_x))| {
                let q = est.sample(&it.condition, sim_x.nrows(), &key.derive(1).derive(i as u64))?;
                mmd(sim_x.view(), q.view())
            })
            .collect::<Result<Vec<_>>>()?;
        out.scalars.push(("mmd".into(), robust_summary(&v)?.median));
        out.push_items("mmd", &v);
    }
    if metrics.contains(&Metric::KldReference) {
        let r = reference.ok_or_else(|| Error::invalid("kld_reference needs a reference estimator"))?;
        let v = items
            .par_iter()
            .enumerate()
            .map(|(i, it)| {
                kld_to_reference(est, r, &it.condition, cfg.eval.n_kld_draws, &key.derive(2).derive(i as u64))
            })
            .collect::<Result<Vec<_>>>()?;
        out.scalars.push(("kld_reference".into(), mean(&v)));
        out.push_items("kld_reference", &v);
    }
    if metrics.contains(&Metric::PosteriorMeanError) {
        let s = cfg.lingauss.clone().unwrap_or_default();
        let lg = LinearGaussian::new(s.dim, s.noise_sd, s.observations)?;
        let v = items
            .iter()
            .map(|it| {
                let exact = lg.posterior(it.data.view());
                let c = est.components(&it.condition)?;
                let err = (0..exact.mean.len())
                    .map(|j| {
                        let m: f64 = c.weights.iter().enumerate().map(|(k, w)| w * c.means[[k, j]]).sum();
                        (m - exact.mean[j]).abs()
                    })
                    .fold(0.0, f64::max);
                Ok(err)
            })
            .collect::<Result<Vec<_>>>()?;
        out.scalars.push(("posterior_mean_error".into(), mean(&v)));
        out.push_items("posterior_mean_error", &v);
    }
    Ok(out)
}

/// Reference NPE of a run, if its metrics need one.
pub fn build_reference(cfg: &ExperimentConfig, sim: &dyn Simulator) -> Result<Option<Mdn>> {
    if !cfg.resolved_metrics().contains(&Metric::KldReference) {
        return Ok(None);
    }
    let rc = cfg.eval.reference.as_ref().ok_or_else(|| Error::Config("eval.reference is required".into()))?;
    let (m, _) = reference_npe(sim, &cfg.experiment.task(), rc, &SeedKey::new(cfg.eval.seed).derive(2))?;
    Ok(Some(m))
}

#[derive(Debug, Clone)]
pub struct ReplicateResult {
    pub variant: usize,
    pub replicate: usize,
    pub model: Mdn,
    pub log: TrainingLog,
    pub eval: Evaluation,
}

#[derive(Debug, Clone)]
pub struct RunResults {
    /// The config with every default filled in.
    pub config: ExperimentConfig,
    pub variants: Vec<Variant>,
    pub replicates: Vec<ReplicateResult>,
}

impl RunResults {
    /// Per-replicate values of a scalar metric for one variant.
    pub fn values(&self, variant: usize, metric: &str) -> Vec<f64> {
        self.replicates.iter().filter(|r| r.variant == variant).filter_map(|r| r.eval.scalar(metric)).collect()
    }

    pub fn summary(&self, variant: usize, metric: &str) -> Option<RobustSummary> {
        robust_summary(&self.values(variant, metric)).ok()
    }

    pub fn metric_names(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for r in &self.replicates {
            for (n, _) in &r.eval.scalars {
                if !names.contains(n) {
                    names.push(n.clone());
                }
            }
        }
        names
    }
}

/// Full pipeline. With `out`, datasets, models and the results bundle are
/// written there.
pub fn run(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunResults> {
    cfg.check()?;
    let cfg = cfg.resolved();
    let sim = cfg.simulator()?;
    let variants = variants(&cfg)?;
    let test = build_test_set(&cfg, sim.as_ref()).map_err(|e| e.in_stage("simulate"))?;
    let reference = build_reference(&cfg, sim.as_ref()).map_err(|e| e.in_stage("reference"))?;
    let jobs: Vec<(usize, usize)> =
        (0..variants.len()).flat_map(|v| (0..cfg.replicates).map(move |r| (v, r))).collect();
    let replicates = jobs
        .into_par_iter()
        .map(|(vi, r)| {
            let v = &variants[vi];
            let batches = simulate_variant(&cfg, sim.as_ref(), v, r).map_err(|e| e.in_stage("simulate"))?;
            if let Some(dir) = out {
                let seed = cfg.seed_u64()?;
                dataset::write_dataset(
                    &dir.join("data").join(&v.label).join(format!("r{r}")),
                    sim.as_ref(),
                    seed,
                    &batches,
                )
                .map_err(|e| e.in_stage("write"))?;
            }
            let (model, log) = train_replicate(&cfg, &batches, r).map_err(|e| e.in_stage("train"))?;
            let key = replicate_key(&cfg, r)?.derive(2);
            let eval = evaluate(&cfg, &model, &test, reference.as_ref(), &key).map_err(|e| e.in_stage("evaluate"))?;
            Ok(ReplicateResult { variant: vi, replicate: r, model, log, eval })
        })
        .collect::<Result<Vec<_>>>()?;
    let results = RunResults { config: cfg, variants, replicates };
    if let Some(dir) = out {
        crate::report::write_bundle(dir, &results).map_err(|e| e.in_stage("write"))?;
    }
    Ok(results)
}
