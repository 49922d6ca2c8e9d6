//! Experiment configuration: JSON schema, defaults and validation.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalGrid;
use crate::loss::Task;
use crate::reference::ReferenceConfig;
use crate::simulators::{GAndK, LinearGaussian, OrnsteinUhlenbeck, Simulator, SummaryScheme, ToggleSwitch};
use crate::train::{TrainConfig, DEFAULT_LEARNING_RATE, DEFAULT_WEIGHT_DECAY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GkNle,
    GkNpe,
    OuNpe,
    ToggleNle,
    LingaussCalibration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    McLow,
    McMid,
    McHigh,
    Mlmc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Kld,
    Ise,
    Nlpd,
    Coverage,
    Recovery,
    Mmd,
    KldReference,
    PosteriorMeanError,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Kld => "kld",
            Metric::Ise => "ise",
            Metric::Nlpd => "nlpd",
            Metric::Coverage => "coverage",
            Metric::Recovery => "recovery",
            Metric::Mmd => "mmd",
            Metric::KldReference => "kld_reference",
            Metric::PosteriorMeanError => "posterior_mean_error",
        }
    }
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::McLow => "mc_low",
            Method::McMid => "mc_mid",
            Method::McHigh => "mc_high",
            Method::Mlmc => "mlmc",
        }
    }
}

/// Calibration model dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LingaussSettings {
    pub dim: usize,
    pub observations: usize,
    pub noise_sd: f64,
}

impl Default for LingaussSettings {
    fn default() -> Self {
        LingaussSettings { dim: 1, observations: 1, noise_sd: 1.0 }
    }
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::GkNle => "gk_nle",
            ExperimentKind::GkNpe => "gk_npe",
            ExperimentKind::OuNpe => "ou_npe",
            ExperimentKind::ToggleNle => "toggle_nle",
            ExperimentKind::LingaussCalibration => "lingauss_calibration",
        }
    }

    pub fn n_levels(&self) -> usize {
        match self {
            ExperimentKind::ToggleNle => 3,
            ExperimentKind::LingaussCalibration => 1,
            _ => 2,
        }
    }

    pub fn task(&self) -> Task {
        match self {
            ExperimentKind::GkNle | ExperimentKind::ToggleNle => Task::nle(),
            ExperimentKind::GkNpe => Task::npe(SummaryScheme::GkQuantiles4),
            ExperimentKind::OuNpe => Task::npe(SummaryScheme::OuLogspace5),
            ExperimentKind::LingaussCalibration => Task::npe(SummaryScheme::Identity),
        }
    }

    /// Hidden layers and mixture components.
    pub fn default_estimator(&self) -> (Vec<usize>, usize) {
        match self {
            ExperimentKind::GkNle => (vec![50, 50, 50], 5),
            ExperimentKind::GkNpe => (vec![50, 50], 3),
            ExperimentKind::OuNpe => (vec![20], 3),
            ExperimentKind::ToggleNle => (vec![20, 20], 2),
            ExperimentKind::LingaussCalibration => (vec![16], 1),
        }
    }

    /// Epoch budgets of the full-size runs.
    pub fn full_epochs(&self) -> usize {
        match self {
            ExperimentKind::GkNle | ExperimentKind::ToggleNle => 10_000,
            ExperimentKind::GkNpe => 800,
            ExperimentKind::OuNpe => 500,
            ExperimentKind::LingaussCalibration => 2000,
        }
    }

    pub fn default_metrics(&self) -> Vec<Metric> {
        match self {
            ExperimentKind::GkNle => vec![Metric::Kld, Metric::Ise],
            ExperimentKind::GkNpe => vec![Metric::Nlpd, Metric::Coverage, Metric::Recovery],
            ExperimentKind::OuNpe => vec![Metric::Nlpd, Metric::Recovery],
            ExperimentKind::ToggleNle => vec![Metric::Mmd],
            ExperimentKind::LingaussCalibration => vec![Metric::PosteriorMeanError, Metric::Coverage, Metric::Nlpd],
        }
    }

    pub fn supports(&self, metric: Metric) -> bool {
        match metric {
            Metric::Kld | Metric::Ise => *self == ExperimentKind::GkNle,
            Metric::Mmd => self.task().kind == crate::loss::TaskKind::Nle,
            Metric::Nlpd | Metric::Coverage | Metric::Recovery | Metric::KldReference => {
                self.task().kind == crate::loss::TaskKind::Npe
            }
            Metric::PosteriorMeanError => *self == ExperimentKind::LingaussCalibration,
        }
    }

    pub fn default_costs(&self) -> Vec<f64> {
        match self {
            ExperimentKind::GkNle | ExperimentKind::GkNpe => vec![1.0, 10.0],
            ExperimentKind::OuNpe => vec![1.0, 100.0],
            ExperimentKind::ToggleNle => crate::simulators::TOGGLE_LEVEL_STEPS.iter().map(|&t| t as f64).collect(),
            ExperimentKind::LingaussCalibration => vec![1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_layers: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
}

fn default_eval_seed() -> u64 {
    20_250_101
}
fn default_n_test() -> usize {
    100
}
fn default_posterior_draws() -> usize {
    2000
}
fn default_mmd_samples() -> usize {
    500
}
fn default_kld_draws() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Seed of the held-out test set, shared by every method and replicate.
    #[serde(default = "default_eval_seed")]
    pub seed: u64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_posterior_draws")]
    pub n_posterior_draws: usize,
    #[serde(default = "default_mmd_samples")]
    pub n_mmd_samples: usize,
    #[serde(default = "default_kld_draws")]
    pub n_kld_draws: usize,
    #[serde(default = "EvalGrid::gk_default")]
    pub grid: EvalGrid,
    /// Reference NPE for `kld_reference`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceConfig>,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            seed: default_eval_seed(),
            n_test: default_n_test(),
            n_posterior_draws: default_posterior_draws(),
            n_mmd_samples: default_mmd_samples(),
            n_kld_draws: default_kld_draws(),
            grid: EvalGrid::gk_default(),
            reference: None,
        }
    }
}

/// Repeat an MLMC run with `n_per_level[level]` replaced by each value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub level: usize,
    pub values: Vec<usize>,
}

fn default_true() -> bool {
    true
}
fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub method: Method,
    /// Per-level sample counts; a single count for `mc_*` methods.
    #[serde(default)]
    pub n_per_level: Vec<usize>,
    /// MLMC counts whose simulation cost a single-level run should match.
    /// Overrides `n_per_level` for `mc_*` methods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_budget_of: Option<Vec<usize>>,
    pub seed: i128,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    /// Use the full epoch budgets rather than a tenth of them.
    #[serde(default)]
    pub full: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[serde(default = "default_true")]
    pub adjust_gradients: bool,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub estimator: EstimatorOverrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<Metric>>,
    #[serde(default)]
    pub eval: EvalSettings,
    /// Per-level unit costs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lingauss: Option<LingaussSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

/// One validation finding, located by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn diag(path: impl Into<String>, message: impl Into<String>) -> Diagnostic {
    Diagnostic { path: path.into(), message: message.into() }
}

impl ExperimentConfig {
    /// Minimal config with every optional field at its default.
    pub fn new(experiment: ExperimentKind, method: Method, n_per_level: Vec<usize>, seed: u64) -> Self {
        ExperimentConfig {
            experiment,
            method,
            n_per_level,
            match_budget_of: None,
            seed: seed as i128,
            epochs: None,
            full: false,
            learning_rate: None,
            weight_decay: None,
            adjust_gradients: true,
            replicates: 1,
            estimator: EstimatorOverrides::default(),
            metrics: None,
            eval: EvalSettings::default(),
            costs: None,
            sweep: None,
            lingauss: None,
            output_dir: None,
        }
    }

    /// Parse JSON text; type errors carry the offending field path.
    pub fn from_json(text: &str) -> std::result::Result<Self, Vec<Diagnostic>> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            vec![diag(if path == "." { "$".into() } else { path }, e.into_inner().to_string())]
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|d| Error::Config(join_diagnostics(&d)))
    }

    pub fn seed_u64(&self) -> Result<u64> {
        u64::try_from(self.seed).map_err(|_| Error::Config(format!("seed: {} is outside 0..=2^64-1", self.seed)))
    }

    /// Ladder level trained by a single-level method.
    pub fn single_level(&self) -> Option<usize> {
        match self.method {
            Method::McLow => Some(0),
            Method::McMid => Some(1),
            Method::McHigh => Some(self.experiment.n_levels() - 1),
            Method::Mlmc => None,
        }
    }

    pub fn resolved_costs(&self) -> Vec<f64> {
        self.costs.clone().unwrap_or_else(|| self.experiment.default_costs())
    }

    pub fn resolved_epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| {
            let full = self.experiment.full_epochs();
            if self.full {
                full
            } else {
                (full / 10).max(1)
            }
        })
    }

    pub fn resolved_estimator(&self) -> (Vec<usize>, usize) {
        let (h, k) = self.experiment.default_estimator();
        (self.estimator.hidden_layers.clone().unwrap_or(h), self.estimator.n_components.unwrap_or(k))
    }

    pub fn resolved_metrics(&self) -> Vec<Metric> {
        self.metrics.clone().unwrap_or_else(|| self.experiment.default_metrics())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.resolved_epochs(),
            learning_rate: self.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
            adjust_gradients: self.adjust_gradients,
            weight_decay: self.weight_decay.unwrap_or(DEFAULT_WEIGHT_DECAY),
        }
    }

    /// Copy with every default filled in, as recorded in results bundles.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        let (h, k) = self.resolved_estimator();
        c.epochs = Some(self.resolved_epochs());
        c.learning_rate = Some(self.train_config().learning_rate);
        c.weight_decay = Some(self.train_config().weight_decay);
        c.estimator = EstimatorOverrides { hidden_layers: Some(h), n_components: Some(k) };
        c.metrics = Some(self.resolved_metrics());
        c.costs = Some(self.resolved_costs());
        if self.experiment == ExperimentKind::LingaussCalibration && c.lingauss.is_none() {
            c.lingauss = Some(LingaussSettings::default());
        }
        c
    }

    pub fn simulator(&self) -> Result<Box<dyn Simulator>> {
        let costs = self.resolved_costs();
        let pair = |c: &[f64]| -> Result<[f64; 2]> {
            c.try_into().map_err(|_| Error::Config("costs: expected two levels".into()))
        };
        Ok(match self.experiment {
            ExperimentKind::GkNle => Box::new(GAndK::new(1, pair(&costs)?)?),
            ExperimentKind::GkNpe => Box::new(GAndK::new(1000, pair(&costs)?)?),
            ExperimentKind::OuNpe => Box::new(OrnsteinUhlenbeck::new(false, pair(&costs)?)?),
            ExperimentKind::ToggleNle => {
                let steps: Vec<usize> = costs.iter().map(|c| c.round() as usize).collect();
                Box::new(ToggleSwitch::new(&steps)?)
            }
            ExperimentKind::LingaussCalibration => {
                let s = self.lingauss.clone().unwrap_or_default();
                Box::new(LinearGaussian::new(s.dim, s.noise_sd, s.observations)?)
            }
        })
    }

    /// Schema and cross-field checks. Empty when the config is usable.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let levels = self.experiment.n_levels();
        if self.seed < 0 || self.seed > u64::MAX as i128 {
            out.push(diag("seed", format!("must be in 0..=2^64-1, got {}", self.seed)));
        }
        match self.method {
            Method::Mlmc => {
                if self.match_budget_of.is_some() {
                    out.push(diag("match_budget_of", "only applies to single-level methods"));
                }
                if levels < 2 {
                    out.push(diag("method", format!("{} has a single fidelity level", self.experiment.name())));
                } else if self.n_per_level.len() != levels {
                    out.push(diag(
                        "n_per_level",
                        format!(
                            "mlmc on {} needs {levels} counts, got {}",
                            self.experiment.name(),
                            self.n_per_level.len()
                        ),
                    ));
                }
                for (l, &n) in self.n_per_level.iter().enumerate() {
                    if n == 0 {
                        out.push(diag(format!("n_per_level[{l}]"), "every level needs n_l >= 1"));
                    }
                }
            }
            _ => {
                if self.method == Method::McMid && levels < 3 {
                    out.push(diag("method", format!("{} has no middle fidelity level", self.experiment.name())));
                }
                match &self.match_budget_of {
                    Some(m) => {
                        if !self.n_per_level.is_empty() {
                            out.push(diag("n_per_level", "leave empty when match_budget_of is set"));
                        }
                        if m.len() != levels {
                            out.push(diag("match_budget_of", format!("needs {levels} counts, got {}", m.len())));
                        }
                        if m.contains(&0) {
                            out.push(diag("match_budget_of", "every level needs n_l >= 1"));
                        }
                    }
                    None => {
                        if self.n_per_level.len() != 1 {
                            out.push(diag(
                                "n_per_level",
                                format!(
                                    "{} trains on one level and takes one count, got {}",
                                    self.method.name(),
                                    self.n_per_level.len()
                                ),
                            ));
                        } else if self.n_per_level[0] == 0 {
                            out.push(diag("n_per_level[0]", "needs n >= 1"));
                        }
                    }
                }
            }
        }
        if self.epochs == Some(0) {
            out.push(diag("epochs", "must be at least 1"));
        }
        if let Some(lr) = self.learning_rate {
            if !(lr > 0.0 && lr.is_finite()) {
                out.push(diag("learning_rate", "must be positive and finite"));
            }
        }
        if let Some(wd) = self.weight_decay {
            if !(wd >= 0.0 && wd.is_finite()) {
                out.push(diag("weight_decay", "must be non-negative"));
            }
        }
        if self.replicates == 0 {
            out.push(diag("replicates", "must be at least 1"));
        }
        if let Some(h) = &self.estimator.hidden_layers {
            for (i, &w) in h.iter().enumerate() {
                if w == 0 {
                    out.push(diag(format!("estimator.hidden_layers[{i}]"), "must be at least 1"));
                }
            }
        }
        if self.estimator.n_components == Some(0) {
            out.push(diag("estimator.n_components", "must be at least 1"));
        }
        for (i, m) in self.resolved_metrics().iter().enumerate() {
            if !self.experiment.supports(*m) {
                out.push(diag(
                    format!("metrics[{i}]"),
                    format!("{} is not available for {}", m.name(), self.experiment.name()),
                ));
            }
            if *m == Metric::KldReference && self.eval.reference.is_none() {
                out.push(diag(format!("metrics[{i}]"), "kld_reference needs eval.reference"));
            }
        }
        if self.eval.n_test == 0 {
            out.push(diag("eval.n_test", "must be at least 1"));
        }
        if self.eval.n_posterior_draws < 10 {
            out.push(diag("eval.n_posterior_draws", "needs at least 10 draws"));
        }
        if self.eval.n_mmd_samples == 0 {
            out.push(diag("eval.n_mmd_samples", "must be at least 1"));
        }
        if self.eval.n_kld_draws == 0 {
            out.push(diag("eval.n_kld_draws", "must be at least 1"));
        }
        if EvalGrid::new(self.eval.grid.lo, self.eval.grid.hi, self.eval.grid.n_points).is_err() {
            out.push(diag("eval.grid", "needs lo < hi and n_points >= 2"));
        }
        if let Some(c) = &self.costs {
            if c.len() != levels {
                out.push(diag("costs", format!("needs {levels} entries, got {}", c.len())));
            } else if c.iter().any(|v| !(*v > 0.0 && v.is_finite())) || c.windows(2).any(|w| w[1] <= w[0]) {
                out.push(diag("costs", "must be positive and strictly increasing"));
            } else if self.experiment == ExperimentKind::ToggleNle && c.iter().any(|v| v.fract() != 0.0) {
                out.push(diag("costs", "toggle-switch costs are step counts and must be whole numbers"));
            }
        }
        if let Some(s) = &self.sweep {
            if self.method != Method::Mlmc {
                out.push(diag("sweep", "sweeps vary an mlmc level count"));
            }
            if s.level >= levels {
                out.push(diag("sweep.level", format!("must be below {levels}")));
            }
            if s.values.is_empty() || s.values.contains(&0) {
                out.push(diag("sweep.values", "needs at least one value, all >= 1"));
            }
        }
        if let Some(l) = &self.lingauss {
            if self.experiment != ExperimentKind::LingaussCalibration {
                out.push(diag("lingauss", "only applies to lingauss_calibration"));
            }
            if l.dim == 0 || l.observations == 0 || !(l.noise_sd > 0.0) {
                out.push(diag("lingauss", "needs dim >= 1, observations >= 1 and noise_sd > 0"));
            }
        }
        out
    }

    /// `validate` as a `Result`.
    pub fn check(&self) -> Result<()> {
        let d = self.validate();
        if d.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(join_diagnostics(&d)))
        }
    }
}

pub fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Validate JSON text: parse errors and cross-field checks in one list.
pub fn validate_json(text: &str) -> Vec<Diagnostic> {
    match ExperimentConfig::from_json(text) {
        Ok(c) => c.validate(),
        Err(d) => d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paths(text: &str) -> Vec<String> {
        validate_json(text).into_iter().map(|d| d.path).collect()
    }

    #[test]
    fn valid_config_has_no_diagnostics() {
        let text = r#"{"experiment": "gk_nle", "method": "mlmc", "n_per_level": [10000, 100], "seed": 1}"#;
        assert!(validate_json(text).is_empty());
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.resolved_epochs(), 1000);
        assert_eq!(ExperimentConfig { full: true, ..c.clone() }.resolved_epochs(), 10_000);
        assert_eq!(c.resolved_estimator(), (vec![50, 50, 50], 5));
    }

    #[test]
    fn single_level_method_with_two_counts() {
        let text = r#"{"experiment": "gk_nle", "method": "mc_high", "n_per_level": [300, 20], "seed": 1}"#;
        assert_eq!(paths(text), vec!["n_per_level"]);
    }

    #[test]
    fn negative_seed() {
        let text = r#"{"experiment": "gk_nle", "method": "mc_low", "n_per_level": [300], "seed": -4}"#;
        assert_eq!(paths(text), vec!["seed"]);
    }

    #[test]
    fn zero_count_cites_floor() {
        let text = r#"{"experiment": "toggle_nle", "method": "mlmc", "n_per_level": [10000, 0, 300], "seed": 1}"#;
        let d = validate_json(text);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].path, "n_per_level[1]");
        assert!(d[0].message.contains(">= 1"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let d = validate_json(r#"{"experiment": "gk_nle", "method": "mlmc", "n_per_level": [1, "x"], "seed": 1}"#);
        assert_eq!(d[0].path, "n_per_level[1]");
        let d = validate_json(r#"{"experiment": "gk_nle", "method": "mlmc", "seed": 1, "eval": {"n_tset": 3}}"#);
        assert_eq!(d[0].path, "eval.n_tset");
        assert!(d[0].message.contains("n_tset"));
        let d = validate_json(r#"{"experiment": "nope", "method": "mlmc", "seed": 1}"#);
        assert_eq!(d[0].path, "experiment");
    }

    #[test]
    fn cross_field_checks() {
        let mut c = ExperimentConfig::new(ExperimentKind::GkNpe, Method::McMid, vec![10], 0);
        assert_eq!(c.validate()[0].path, "method");
        c.method = Method::Mlmc;
        c.n_per_level = vec![100, 10];
        c.metrics = Some(vec![Metric::Kld, Metric::KldReference]);
        let p: Vec<String> = c.validate().into_iter().map(|d| d.path).collect();
        assert_eq!(p, vec!["metrics[0]", "metrics[1]"]);
        let mut t = ExperimentConfig::new(ExperimentKind::ToggleNle, Method::McHigh, vec![], 0);
        t.match_budget_of = Some(vec![10_000, 500, 300]);
        assert!(t.validate().is_empty());
        t.costs = Some(vec![50.0, 80.5, 300.0]);
        assert_eq!(t.validate()[0].path, "costs");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ExperimentConfig::new(ExperimentKind::ToggleNle, Method::Mlmc, vec![100, 10, 5], 7).resolved();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), c);
        assert_eq!(c.costs, Some(vec![50.0, 80.0, 300.0]));
        assert_eq!(c.simulator().unwrap().ladder().costs(), vec![50.0, 80.0, 300.0]);
    }
}
