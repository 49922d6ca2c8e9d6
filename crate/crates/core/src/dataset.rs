//! Training datasets on disk: one CSV per level plus a JSON sidecar.
//!
//! Each CSV row holds one observation: `sample, obs, theta_0.., x_0..` and,
//! for coupled levels, `x_lo_0..`.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::NoiseBlock;
use crate::simulators::{CoupledLevelSample, LevelBatch, ParamVector, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelFile {
    pub level: usize,
    pub file: String,
    pub n: usize,
    pub has_lower: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub simulator: String,
    pub param_dim: usize,
    pub observations: usize,
    pub data_dim: usize,
    pub seed: u64,
    pub levels: Vec<LevelFile>,
}

fn header(p: usize, d: usize, lower: bool) -> Vec<String> {
    let mut h = vec!["sample".to_string(), "obs".to_string()];
    h.extend((0..p).map(|j| format!("theta_{j}")));
    h.extend((0..d).map(|j| format!("x_{j}")));
    if lower {
        h.extend((0..d).map(|j| format!("x_lo_{j}")));
    }
    h
}

pub fn write_level_csv(batch: &LevelBatch, path: &Path) -> Result<()> {
    let first = batch.samples.first().ok_or_else(|| Error::invalid("cannot write an empty batch"))?;
    let (p, d) = (first.theta.len(), first.x_hi.ncols());
    let lower = first.x_lo.is_some();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header(p, d, lower))?;
    let mut row = Vec::new();
    for (i, s) in batch.samples.iter().enumerate() {
        for j in 0..s.x_hi.nrows() {
            row.clear();
            row.push(i.to_string());
            row.push(j.to_string());
            row.extend(s.theta.iter().map(|v| v.to_string()));
            row.extend(s.x_hi.row(j).iter().map(|v| v.to_string()));
            if let Some(lo) = &s.x_lo {
                row.extend(lo.row(j).iter().map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a level written by [`write_level_csv`]. Noise is not stored, so the
/// samples carry an empty noise block.
pub fn read_level_csv(path: &Path, level: usize, param_dim: usize, sim: &dyn Simulator) -> Result<LevelBatch> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    let d = sim.data_dim();
    let lower = match cols.checked_sub(2 + param_dim) {
        Some(rest) if rest == d => false,
        Some(rest) if rest == 2 * d => true,
        _ => return Err(Error::invalid(format!("{}: unexpected column count {cols}", path.display()))),
    };
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let sample: usize =
            rec[0].parse().map_err(|_| Error::invalid(format!("{}: bad sample index", path.display())))?;
        let vals = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        rows.push((sample, vals));
    }
    let mut samples: Vec<CoupledLevelSample> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let id = rows[i].0;
        let end = rows[i..].iter().position(|r| r.0 != id).map_or(rows.len(), |k| i + k);
        let block = &rows[i..end];
        let theta = ParamVector(block[0].1[..param_dim].to_vec());
        let x_hi = Array2::from_shape_fn((block.len(), d), |(j, k)| block[j].1[param_dim + k]);
        let x_lo = lower.then(|| Array2::from_shape_fn((block.len(), d), |(j, k)| block[j].1[param_dim + d + k]));
        samples.push(CoupledLevelSample {
            theta,
            noise: NoiseBlock { values: Array2::zeros((0, 0)), kind: sim.noise_kind() },
            x_hi,
            x_lo,
        });
        i = end;
    }
    Ok(LevelBatch { level, samples })
}

/// Write every batch under `dir` with a `manifest.json`.
pub fn write_dataset(dir: &Path, sim: &dyn Simulator, seed: u64, batches: &[LevelBatch]) -> Result<DatasetManifest> {
    fs::create_dir_all(dir)?;
    let mut levels = Vec::new();
    for b in batches {
        let file = format!("level{}.csv", b.level);
        write_level_csv(b, &dir.join(&file))?;
        levels.push(LevelFile {
            level: b.level,
            file,
            n: b.n(),
            has_lower: b.samples.first().is_some_and(|s| s.x_lo.is_some()),
        });
    }
    let manifest = DatasetManifest {
        simulator: sim.name().to_string(),
        param_dim: sim.param_dim(),
        observations: sim.observations(),
        data_dim: sim.data_dim(),
        seed,
        levels,
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path, sim: &dyn Simulator) -> Result<(DatasetManifest, Vec<LevelBatch>)> {
    let manifest: DatasetManifest = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;
    if manifest.simulator != sim.name() {
        return Err(Error::invalid(format!("dataset was made by {}, not {}", manifest.simulator, sim.name())));
    }
    let batches = manifest
        .levels
        .iter()
        .map(|l| {
            let path: PathBuf = dir.join(&l.file);
            let b = read_level_csv(&path, l.level, manifest.param_dim, sim)?;
            if b.n() != l.n {
                return Err(Error::invalid(format!("{}: expected {} samples, found {}", path.display(), l.n, b.n())));
            }
            Ok(b)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, batches))
}
