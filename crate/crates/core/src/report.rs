//! Results bundle: `results.json`, metric tables, training logs and the
//! plot-ready CSVs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::eval::RobustSummary;
use crate::experiment::{RunResults, Variant};
use crate::train::{EpochRecord, TrainingLog};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct VariantSummary<'a> {
    #[serde(flatten)]
    variant: &'a Variant,
    metrics: Vec<(String, RobustSummary)>,
}

#[derive(Serialize)]
struct ResultsJson<'a> {
    version: &'static str,
    config: &'a ExperimentConfig,
    /// Set when the reference posterior uses fewer samples than the full size.
    reference_scaled_down: Option<bool>,
    variants: Vec<VariantSummary<'a>>,
}

#[derive(Serialize)]
struct LogLine<'a> {
    variant: &'a str,
    replicate: usize,
    #[serde(flatten)]
    record: &'a EpochRecord,
}

fn fmt(v: f64) -> String {
    v.to_string()
}

/// Loss components per epoch, one row per epoch.
pub fn write_loss_components(
    w: &mut csv::Writer<impl Write>,
    variant: &str,
    replicate: usize,
    log: &TrainingLog,
    header: bool,
) -> Result<()> {
    let Some(first) = log.records.first() else { return Ok(()) };
    let levels = first.loss.levels();
    if header {
        let mut h = vec!["variant".to_string(), "replicate".into(), "epoch".into(), "total".into()];
        h.extend((0..levels).map(|l| format!("h_{l}")));
        h.extend((0..levels).map(|l| format!("f_plus_{l}")));
        h.extend((1..levels).map(|l| format!("f_minus_{}", l - 1)));
        h.extend(["grad_norm".into(), "grad_norm_h0".into(), "grad_norm_correction".into(), "conflict".into()]);
        w.write_record(&h)?;
    }
    for r in &log.records {
        let mut row = vec![variant.to_string(), replicate.to_string(), r.epoch.to_string(), fmt(r.loss.total)];
        row.extend(r.loss.h.iter().map(|v| fmt(*v)));
        row.extend(r.loss.f_plus.iter().map(|v| fmt(*v)));
        row.extend(r.loss.f_minus.iter().map(|v| fmt(*v)));
        row.extend([fmt(r.grad_norm), fmt(r.grad_norm_h0), fmt(r.grad_norm_correction), r.conflict.to_string()]);
        w.write_record(&row)?;
    }
    Ok(())
}

/// Write every artefact of `results` under `dir`.
pub fn write_bundle(dir: &Path, results: &RunResults) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = &results.config;
    let method = cfg.method.name();
    let experiment = cfg.experiment.name();
    let names = results.metric_names();

    let variants = results
        .variants
        .iter()
        .enumerate()
        .map(|(i, v)| VariantSummary {
            variant: v,
            metrics: names.iter().filter_map(|n| results.summary(i, n).map(|s| (n.clone(), s))).collect(),
        })
        .collect();
    let json = ResultsJson {
        version: CODE_VERSION,
        config: cfg,
        reference_scaled_down: cfg.eval.reference.as_ref().map(|r| r.is_scaled_down()),
        variants,
    };
    fs::write(dir.join("results.json"), serde_json::to_string_pretty(&json)? + "\n")?;

    let mut metrics = csv::Writer::from_path(dir.join("metrics.csv"))?;
    metrics.write_record(["experiment", "method", "variant", "replicate", "metric", "value"])?;
    let mut items = csv::Writer::from_path(dir.join("metric_items.csv"))?;
    items.write_record(["experiment", "method", "variant", "replicate", "metric", "item", "value"])?;
    let mut coverage = csv::Writer::from_path(dir.join("coverage.csv"))?;
    coverage.write_record(["variant", "replicate", "credibility", "empirical"])?;
    let mut recovery = csv::Writer::from_path(dir.join("recovery.csv"))?;
    recovery.write_record(["variant", "replicate", "item", "dim", "truth", "median", "mad"])?;
    let mut losses = csv::Writer::from_path(dir.join("loss_components.csv"))?;
    let mut log = BufWriter::new(File::create(dir.join("training_log.jsonl"))?);
    let models = dir.join("models");
    fs::create_dir_all(&models)?;

    for (k, r) in results.replicates.iter().enumerate() {
        let label = &results.variants[r.variant].label;
        let rep = r.replicate.to_string();
        for (name, v) in &r.eval.scalars {
            metrics.write_record([experiment, method, label, &rep, name, &fmt(*v)])?;
        }
        for (name, i, v) in &r.eval.items {
            items.write_record([experiment, method, label, &rep, name, &i.to_string(), &fmt(*v)])?;
        }
        if let Some(c) = &r.eval.coverage {
            for (l, e) in c.levels.iter().zip(&c.empirical) {
                coverage.write_record([label.as_str(), &rep, &fmt(*l), &fmt(*e)])?;
            }
        }
        for row in &r.eval.recovery {
            recovery.write_record([
                label.as_str(),
                &rep,
                &row.item.to_string(),
                &row.dim.to_string(),
                &fmt(row.truth),
                &fmt(row.median),
                &fmt(row.mad),
            ])?;
        }
        write_loss_components(&mut losses, label, r.replicate, &r.log, k == 0)?;
        for rec in &r.log.records {
            serde_json::to_writer(&mut log, &LogLine { variant: label, replicate: r.replicate, record: rec })?;
            log.write_all(b"\n")?;
        }
        r.model.save(&models.join(format!("{label}_r{}", r.replicate)))?;
    }
    metrics.flush()?;
    items.flush()?;
    coverage.flush()?;
    recovery.flush()?;
    losses.flush()?;
    log.flush()?;

    if let Some(s) = &cfg.sweep {
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        w.write_record(["level", "n", "metric", "median", "q1", "q3", "n_finite"])?;
        for (i, v) in results.variants.iter().enumerate() {
            for n in &names {
                if let Some(sm) = results.summary(i, n) {
                    w.write_record([
                        s.level.to_string(),
                        v.n_per_level[s.level].to_string(),
                        n.clone(),
                        fmt(sm.median),
                        fmt(sm.q1),
                        fmt(sm.q3),
                        sm.n_finite.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
    }
    Ok(())
}
