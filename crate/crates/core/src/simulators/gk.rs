//! The g-and-k distribution, its Taylor-approximated low-fidelity variant and
//! a root-solving density oracle.

use ndarray::Array2;

use super::{Fidelity, FidelityLadder, FidelityLevel, Prior, PriorBox, Simulator};
use crate::error::{Error, Result};
use crate::rng::{NoiseBlock, NoiseKind};
use crate::special::{erfinv_taylor3, norm_cdf, norm_logpdf, norm_ppf};

/// High-fidelity uniforms are clamped to `(GK_U_CLAMP, 1 - GK_U_CLAMP)`.
pub const GK_U_CLAMP: f64 = 1e-9;

const SKEW_C: f64 = 0.8;

/// `G_θ` as a function of the standard normal quantile `z`.
pub fn gk_quantile(theta: &[f64], z: f64) -> f64 {
    let (a, b, g, k) = (theta[0], theta[1], theta[2], theta[3].ln());
    // (1 - e^{-gz}) / (1 + e^{-gz}) = tanh(gz / 2)
    a + b * (1.0 + SKEW_C * (0.5 * g * z).tanh()) * (1.0 + z * z).powf(k) * z
}

/// `dG_θ/dz`.
fn gk_quantile_dz(theta: &[f64], z: f64) -> f64 {
    let (b, g, k) = (theta[1], theta[2], theta[3].ln());
    let t = (0.5 * g * z).tanh();
    let skew = 1.0 + SKEW_C * t;
    let dskew = SKEW_C * 0.5 * g * (1.0 - t * t);
    let w = 1.0 + z * z;
    let pow = w.powf(k);
    b * (dskew * pow * z + skew * w.powf(k - 1.0) * (1.0 + (1.0 + 2.0 * k) * z * z))
}

/// `z(u)` at the requested fidelity.
fn gk_z(u: f64, fidelity: Fidelity) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::invalid(format!("g-and-k noise must lie in (0, 1), got {u}")));
    }
    Ok(match fidelity {
        Fidelity::High => norm_ppf(u.clamp(GK_U_CLAMP, 1.0 - GK_U_CLAMP)),
        Fidelity::Low => std::f64::consts::SQRT_2 * erfinv_taylor3(2.0 * u - 1.0),
    })
}

/// Push every uniform in the first noise column through `G_θ`.
///
/// High fidelity uses the exact normal quantile `√2 erfinv(2u - 1)`; low
/// fidelity replaces `erfinv` with its third-order Taylor polynomial.
pub fn gk_simulate(theta: &[f64], noise: &NoiseBlock, fidelity: Fidelity) -> Result<Vec<f64>> {
    if theta.len() != 4 {
        return Err(Error::invalid("g-and-k takes 4 parameters"));
    }
    (0..noise.rows()).map(|i| gk_z(noise.values[[i, 0]], fidelity).map(|z| gk_quantile(theta, z))).collect()
}

/// g-and-k simulator with a low (Taylor) and high (exact) fidelity level.
#[derive(Debug, Clone)]
pub struct GAndK {
    prior: Prior,
    ladder: FidelityLadder,
    observations: usize,
}

impl GAndK {
    pub fn new(observations: usize, costs: [f64; 2]) -> Result<Self> {
        if observations == 0 {
            return Err(Error::invalid("need at least one observation per dataset"));
        }
        let prior = Prior::Uniform(PriorBox::new(vec![0.0, 0.0, 0.0, 0.0], vec![3.0, 3.0, 3.0, 0.5f64.exp()])?);
        let ladder = FidelityLadder::new(vec![
            FidelityLevel { name: "taylor".into(), noise_dim: 1, cost: costs[0] },
            FidelityLevel { name: "exact".into(), noise_dim: 1, cost: costs[1] },
        ])?;
        Ok(GAndK { prior, ladder, observations })
    }

    /// One observation per dataset, as used for likelihood estimation.
    pub fn nle() -> Self {
        Self::new(1, [1.0, 10.0]).expect("static configuration")
    }

    /// `m = 1000` observations per dataset, as used for posterior estimation.
    pub fn npe() -> Self {
        Self::new(1000, [1.0, 10.0]).expect("static configuration")
    }
}

impl Simulator for GAndK {
    fn name(&self) -> &str {
        "g-and-k"
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
        self.observations
    }
    fn data_dim(&self) -> usize {
        1
    }
    fn simulate(&self, level: usize, theta: &[f64], noise: &NoiseBlock) -> Result<Array2<f64>> {
        let x = gk_simulate(theta, noise, Fidelity::from_level(level)?)?;
        Ok(Array2::from_shape_vec((x.len(), 1), x).expect("column vector"))
    }
}

/// Near-exact density of the high-fidelity g-and-k output.
///
/// Solves `x = G_θ(z)` by bisection inside every sign-change bracket of a
/// fine `z` grid over the clamped noise range, then sums
/// `φ(z*) / |G_θ'(z*)|` over the roots. When `G_θ` is monotone there is a
/// single root and this is `1 / (dG_θ/du)` at `u* = Φ(z*)`. Parameters with
/// `ln θ4 < 0` can give a non-monotone `G_θ`, and the sum over roots keeps
/// the density of the simulator output correct there too.
#[derive(Debug, Clone)]
pub struct GkDensity {
    theta: [f64; 4],
    z: Vec<f64>,
    g: Vec<f64>,
}

const DENSITY_GRID: usize = 4001;

impl GkDensity {
    pub fn new(theta: &[f64]) -> Result<Self> {
        if theta.len() != 4 || !(theta[1] > 0.0) || !(theta[3] > 0.0) {
            return Err(Error::invalid("g-and-k density needs θ2 > 0 and θ4 > 0"));
        }
        let zmax = -norm_ppf(GK_U_CLAMP);
        let z: Vec<f64> =
            (0..DENSITY_GRID).map(|i| -zmax + 2.0 * zmax * i as f64 / (DENSITY_GRID - 1) as f64).collect();
        let g = z.iter().map(|&zi| gk_quantile(theta, zi)).collect();
        Ok(GkDensity { theta: [theta[0], theta[1], theta[2], theta[3]], z, g })
    }

    fn bisect(&self, x: f64, mut lo: f64, mut hi: f64) -> f64 {
        let f_lo_neg = gk_quantile(&self.theta, lo) < x;
        // Bracket width in z of 1e-13 is well below 1e-12 in u.
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if (gk_quantile(&self.theta, mid) < x) == f_lo_neg {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn roots(&self, x: f64) -> Vec<f64> {
        let mut roots = Vec::new();
        for i in 0..self.z.len() - 1 {
            if (self.g[i] < x) != (self.g[i + 1] < x) {
                roots.push(self.bisect(x, self.z[i], self.z[i + 1]));
            }
        }
        roots
    }

    /// `log p̂(x | θ)`; `-∞` outside the range of `G_θ` on the clamped noise interval.
    pub fn logpdf(&self, x: f64) -> f64 {
        let total: f64 =
            self.roots(x).into_iter().map(|z| norm_logpdf(z).exp() / gk_quantile_dz(&self.theta, z).abs()).sum();
        total.ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.logpdf(x).exp()
    }

    /// `P(G_θ(Z) ≤ x)` restricted to the clamped noise interval.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut edges = vec![self.z[0]];
        edges.extend(self.roots(x));
        edges.push(*self.z.last().expect("grid"));
        let mut below = self.g[0] < x;
        let mut mass = 0.0;
        for w in edges.windows(2) {
            if below {
                mass += norm_cdf(w[1]) - norm_cdf(w[0]);
            }
            below = !below;
        }
        mass
    }

    /// Whether `G_θ` is increasing across the whole density grid.
    pub fn is_monotone(&self) -> bool {
        self.g.windows(2).all(|w| w[1] > w[0])
    }
}

/// Free-function form: `log p̂(x | θ)`.
pub fn gk_exact_logpdf(theta: &[f64], x: f64) -> Result<f64> {
    Ok(GkDensity::new(theta)?.logpdf(x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_noise, SeedKey};
    use ndarray::array;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / (n - 1) as f64;
        (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
                w * f(lo + h * i as f64)
            })
            .sum::<f64>()
            * h
    }

    #[test]
    fn median_is_theta1() {
        let noise = NoiseBlock { values: array![[0.5]], kind: NoiseKind::Uniform01 };
        for theta in [[1.0, 2.0, 0.5, 1.2], [0.3, 0.1, 2.9, 0.2]] {
            for f in [Fidelity::Low, Fidelity::High] {
                assert_eq!(gk_simulate(&theta, &noise, f).unwrap(), vec![theta[0]]);
            }
        }
    }

    #[test]
    fn rejects_noise_outside_unit_interval() {
        let noise = NoiseBlock { values: array![[1.0]], kind: NoiseKind::Uniform01 };
        assert!(gk_simulate(&[1.0, 1.0, 1.0, 1.0], &noise, Fidelity::High).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        let d = GkDensity::new(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        let mass = trapezoid(|x| d.pdf(x), -30.0, 30.0, 2000);
        assert!((mass - 1.0).abs() < 1e-3, "mass={mass}");
    }

    #[test]
    fn density_reduces_to_standard_normal() {
        let d = GkDensity::new(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!((d.pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-9);
        for i in 0..=100 {
            let x = -5.0 + 0.1 * i as f64;
            assert!((d.pdf(x) - norm_logpdf(x).exp()).abs() < 1e-9, "x={x}");
        }
        assert_eq!(d.logpdf(40.0), f64::NEG_INFINITY);
    }

    #[test]
    fn cdf_at_median_is_half() {
        for theta in [[1.0, 1.0, 1.0, 1.0], [2.5, 0.3, 2.0, 1.5], [0.0, 3.0, 0.1, 0.7]] {
            let d = GkDensity::new(&theta).unwrap();
            assert!((d.cdf(theta[0]) - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn quantile_increasing_for_nonnegative_kurtosis_exponent() {
        // With g > 0 and ln θ4 < 0 the quantile bends back slightly in the
        // lower tail, so strict monotonicity only holds for θ4 >= 1.
        for a in [0.0, 1.5, 3.0] {
            for b in [0.05, 1.0, 3.0] {
                for g in [0.0, 0.75, 1.5, 2.25, 3.0] {
                    for j in 0..=8 {
                        let t4 = 1.0 + (0.5f64.exp() - 1.0) * j as f64 / 8.0;
                        let d = GkDensity::new(&[a, b, g, t4]).unwrap();
                        assert!(d.is_monotone(), "θ=({a},{b},{g},{t4})");
                    }
                }
            }
        }
        assert!(!GkDensity::new(&[0.0, 1.0, 1.5, 0.8]).unwrap().is_monotone());
    }

    #[test]
    fn non_monotone_quantile_still_gives_a_density() {
        // G folds at z ≈ -0.61 and z ≈ 0.73, so all mass sits in [0.678, 1.421]
        // with inverse-square-root spikes at both ends.
        let theta = [1.0, 1.0, 0.5, 0.2];
        let d = GkDensity::new(&theta).unwrap();
        assert!(!d.is_monotone());
        // the grid stops at the noise clamp, leaving 2e-9 of tail mass
        assert!(d.cdf(0.6).abs() < 1e-8);
        assert!((d.cdf(1.5) - 1.0).abs() < 1e-8);
        assert_eq!(d.pdf(0.6), 0.0);
        for x in [0.75, 0.9, 1.1, 1.3] {
            let h = 1e-5;
            let fd = (d.cdf(x + h) - d.cdf(x - h)) / (2.0 * h);
            assert!((fd - d.pdf(x)).abs() < 1e-5 * d.pdf(x).max(1.0), "x={x}");
        }
        let noise = sample_noise(&SeedKey::new(3), 100_000, 1, NoiseKind::Uniform01).unwrap();
        let xs = gk_simulate(&theta, &noise, Fidelity::High).unwrap();
        for (lo, hi) in [(0.6, 0.8), (0.8, 1.0), (1.0, 1.2), (1.2, 1.5)] {
            let frac = xs.iter().filter(|&&x| x >= lo && x < hi).count() as f64 / xs.len() as f64;
            let exact = d.cdf(hi) - d.cdf(lo);
            let se = (exact * (1.0 - exact) / xs.len() as f64).sqrt();
            assert!((frac - exact).abs() < 5.0 * se + 1e-9, "[{lo},{hi}) {frac} vs {exact}");
        }
    }

    #[test]
    fn density_matches_simulator_histogram() {
        let theta = [1.0, 0.8, 1.5, 1.3];
        let noise = sample_noise(&SeedKey::new(17), 200_000, 1, NoiseKind::Uniform01).unwrap();
        let xs = gk_simulate(&theta, &noise, Fidelity::High).unwrap();
        let d = GkDensity::new(&theta).unwrap();
        for (lo, hi) in [(-1.0, 0.0), (0.0, 1.0), (1.0, 2.0), (2.0, 4.0)] {
            let frac = xs.iter().filter(|&&x| x >= lo && x < hi).count() as f64 / xs.len() as f64;
            let exact = d.cdf(hi) - d.cdf(lo);
            let quad = trapezoid(|x| d.pdf(x), lo, hi, 4001);
            assert!((quad - exact).abs() < 1e-5);
            let se = (exact * (1.0 - exact) / xs.len() as f64).sqrt();
            assert!((frac - exact).abs() < 4.0 * se + 1e-6, "[{lo},{hi}) frac={frac} exact={exact}");
        }
    }

    #[test]
    fn low_fidelity_close_to_high_in_centre() {
        let theta = [1.0, 1.0, 1.0, 1.0];
        let noise = NoiseBlock { values: array![[0.45], [0.55], [0.6]], kind: NoiseKind::Uniform01 };
        let lo = gk_simulate(&theta, &noise, Fidelity::Low).unwrap();
        let hi = gk_simulate(&theta, &noise, Fidelity::High).unwrap();
        for (a, b) in lo.iter().zip(&hi) {
            assert!((a - b).abs() < 1e-2);
        }
    }
}
