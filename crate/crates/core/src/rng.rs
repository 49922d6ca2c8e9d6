//! Counter-based random streams with common random numbers across fidelity levels.
//!
//! A [`SeedKey`] names a stream by a root seed plus a derivation path. Every
//! draw is a pure hash of `(stream id, row, column)`, so a block of noise is
//! addressed by index rather than consumed sequentially. That is what makes a
//! `d'`-column block an exact prefix of a `d`-column block from the same key,
//! which is how simulators of different noise dimension stay seed matched.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::norm_ppf;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const ROW_MULT: u64 = 0xD1B5_4A32_D192_ED03;
const COL_MULT: u64 = 0xAEF1_7502_108E_F2D9;

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Map 64 random bits to the open interval (0, 1).
#[inline]
fn bits_to_open01(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Identifies a deterministic random stream: a root seed and a derivation path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "SeedKeyRepr", into = "SeedKeyRepr")]
pub struct SeedKey {
    root: u64,
    path: Vec<u64>,
    id: u64,
}

#[derive(Serialize, Deserialize)]
struct SeedKeyRepr {
    root: u64,
    #[serde(default)]
    path: Vec<u64>,
}

impl From<SeedKeyRepr> for SeedKey {
    fn from(r: SeedKeyRepr) -> Self {
        r.path.into_iter().fold(SeedKey::new(r.root), |k, c| k.derive(c))
    }
}

impl From<SeedKey> for SeedKeyRepr {
    fn from(k: SeedKey) -> Self {
        SeedKeyRepr { root: k.root, path: k.path }
    }
}

impl SeedKey {
    pub fn new(root: u64) -> Self {
        SeedKey { root, path: Vec::new(), id: mix64(root ^ 0x5851_F42D_4C95_7F2D) }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn path(&self) -> &[u64] {
        &self.path
    }

    /// Child stream with `child` appended to the path.
    pub fn derive(&self, child: u64) -> SeedKey {
        let mut path = self.path.clone();
        path.push(child);
        SeedKey {
            root: self.root,
            path,
            id: mix64(self.id ^ mix64(child.wrapping_mul(GOLDEN).wrapping_add(0x2545_F491_4F6C_DD1D))),
        }
    }

    /// Uniform draw in (0, 1) at cell `(row, col)` of this stream.
    #[inline]
    pub fn uniform_at(&self, row: u64, col: u64) -> f64 {
        let r = mix64(self.id ^ mix64(row.wrapping_mul(ROW_MULT).wrapping_add(GOLDEN)));
        bits_to_open01(mix64(r ^ mix64(col.wrapping_mul(COL_MULT).wrapping_add(!GOLDEN))))
    }

    /// Uniform draw in (0, 1) at a flat index (row 0).
    #[inline]
    pub fn uniform(&self, index: u64) -> f64 {
        self.uniform_at(0, index)
    }

    /// Standard normal draw at a flat index, by inverse CDF of [`SeedKey::uniform`].
    #[inline]
    pub fn normal(&self, index: u64) -> f64 {
        norm_ppf(self.uniform(index))
    }

    /// Sequential cursor over this stream.
    pub fn stream(&self) -> Stream {
        Stream { key: self.clone(), next: 0 }
    }
}

/// Free-function form of [`SeedKey::derive`].
pub fn derive_stream(key: &SeedKey, child: u64) -> SeedKey {
    key.derive(child)
}

/// Sequential reader over a counter-based stream, for consumers (MCMC,
/// initialisation) that draw a variable number of values.
#[derive(Debug, Clone)]
pub struct Stream {
    key: SeedKey,
    next: u64,
}

impl Stream {
    pub fn next_uniform(&mut self) -> f64 {
        let u = self.key.uniform(self.next);
        self.next += 1;
        u
    }

    pub fn next_normal(&mut self) -> f64 {
        norm_ppf(self.next_uniform())
    }
}

/// Base measure of a noise block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform01,
    StdNormal,
}

/// An `m × d` block of base-measure draws.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBlock {
    pub values: Array2<f64>,
    pub kind: NoiseKind,
}

impl NoiseBlock {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    /// Dimension of the noise domain.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.values.row(i)
    }
}

/// Draw an `m × d` block. Column `j` depends only on `(key, row, j)`, so
/// blocks of different width from one key agree on their shared columns.
pub fn sample_noise(key: &SeedKey, m: usize, d: usize, kind: NoiseKind) -> Result<NoiseBlock> {
    if m == 0 || d == 0 {
        return Err(Error::invalid(format!("noise block needs m >= 1 and d >= 1, got m={m}, d={d}")));
    }
    let values = Array2::from_shape_fn((m, d), |(i, j)| {
        let u = key.uniform_at(i as u64, j as u64);
        match kind {
            NoiseKind::Uniform01 => u,
            NoiseKind::StdNormal => norm_ppf(u),
        }
    });
    Ok(NoiseBlock { values, kind })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::s;
    use proptest::prelude::*;

    fn pearson(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn derive_appends_to_path() {
        let k = SeedKey::new(7);
        let c = derive_stream(&k, 0);
        assert_eq!(c.root(), 7);
        assert_eq!(c.path(), &[0]);
        assert_eq!(c, k.derive(0));
        assert_ne!(k.derive(0), k.derive(1));
    }

    #[test]
    fn sibling_streams_uncorrelated() {
        let k = SeedKey::new(7);
        let a: Vec<f64> = (0..10_000).map(|i| k.derive(0).normal(i)).collect();
        let b: Vec<f64> = (0..10_000).map(|i| k.derive(1).normal(i)).collect();
        assert!(pearson(&a, &b).abs() < 0.05);
        // also rows vs columns of one key
        let c: Vec<f64> = (0..10_000).map(|i| k.uniform_at(i, 0)).collect();
        let d: Vec<f64> = (0..10_000).map(|i| k.uniform_at(0, i)).collect();
        assert!(pearson(&c, &d).abs() < 0.05);
    }

    #[test]
    fn noise_is_deterministic_and_prefix_shared() {
        let k = SeedKey::new(42).derive(3);
        let a = sample_noise(&k, 3, 2, NoiseKind::StdNormal).unwrap();
        let b = sample_noise(&k, 3, 2, NoiseKind::StdNormal).unwrap();
        assert_eq!(a, b);
        let wide = sample_noise(&k, 3, 5, NoiseKind::StdNormal).unwrap();
        assert_eq!(a.values, wide.values.slice(s![.., 0..2]));
    }

    #[test]
    fn normal_block_is_transform_of_uniform_block() {
        let k = SeedKey::new(9);
        let u = sample_noise(&k, 4, 3, NoiseKind::Uniform01).unwrap();
        let z = sample_noise(&k, 4, 3, NoiseKind::StdNormal).unwrap();
        assert_eq!(u.values.mapv(norm_ppf), z.values);
    }

    #[test]
    fn normal_moments() {
        let z = sample_noise(&SeedKey::new(1), 100_000, 1, NoiseKind::StdNormal).unwrap();
        let n = z.values.len() as f64;
        let mean = z.values.sum() / n;
        let var = z.values.mapv(|x| (x - mean).powi(2)).sum() / (n - 1.0);
        assert!(mean.abs() < 0.02, "mean={mean}");
        assert!((var - 1.0).abs() < 0.02, "var={var}");
    }

    #[test]
    fn empty_block_rejected() {
        let k = SeedKey::new(0);
        assert!(matches!(sample_noise(&k, 0, 2, NoiseKind::Uniform01), Err(Error::InvalidArgument(_))));
        assert!(sample_noise(&k, 2, 0, NoiseKind::Uniform01).is_err());
    }

    #[test]
    fn seed_key_serde_roundtrip() {
        let k = SeedKey::new(5).derive(2).derive(9);
        let json = serde_json::to_string(&k).unwrap();
        assert_eq!(json, r#"{"root":5,"path":[2,9]}"#);
        let back: SeedKey = serde_json::from_str(&json).unwrap();
        assert_eq!(back, k);
        assert_eq!(back.uniform(3), k.uniform(3));
    }

    proptest! {
        #[test]
        fn prefix_columns_bitwise_equal(root in any::<u64>(), m in 1usize..6, d in 1usize..8, extra in 0usize..5) {
            let k = SeedKey::new(root).derive(1);
            let narrow = sample_noise(&k, m, d, NoiseKind::Uniform01).unwrap();
            let wide = sample_noise(&k, m, d + extra, NoiseKind::Uniform01).unwrap();
            for i in 0..m {
                for j in 0..d {
                    prop_assert_eq!(narrow.values[[i, j]].to_bits(), wide.values[[i, j]].to_bits());
                }
            }
            prop_assert!(narrow.values.iter().all(|&u| u > 0.0 && u < 1.0));
        }
    }
}
