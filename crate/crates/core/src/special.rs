//! Normal-distribution special functions.
//!
//! The quantile function follows Wichura's AS241 (PPND16), which is accurate
//! to about 1e-16 relative. The tail branch takes the *tail probability*
//! directly so callers holding `1 - p` exactly (upper tails, `erfinv` near 1)
//! do not lose digits forming `p` first. `erfc` comes from `libm`.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Central branch of AS241, valid for `|q| <= 0.425` where `q = p - 0.5`.
fn ppf_central(q: f64) -> f64 {
    let r = 0.180625 - q * q;
    q * (((((((r * 2509.080_928_730_122_7 + 33430.575_583_588_128) * r + 67265.770_927_008_700) * r
        + 45921.953_931_549_871)
        * r
        + 13731.693_765_509_461)
        * r
        + 1971.590_950_306_551_4)
        * r
        + 133.141_667_891_784_38)
        * r
        + 3.387_132_872_796_366_6)
        / (((((((r * 5226.495_278_852_854_5 + 28729.085_735_721_943) * r + 39307.895_800_092_711) * r
            + 21213.794_301_586_596)
            * r
            + 5394.196_021_424_751_1)
            * r
            + 687.187_007_492_057_91)
            * r
            + 42.313_330_701_600_911)
            * r
            + 1.0)
}

/// Tail branch of AS241: returns the positive quantile magnitude for a tail
/// probability `r` in `(0, 0.075]`.
fn ppf_tail(r: f64) -> f64 {
    let r = (-r.ln()).sqrt();
    if r <= 5.0 {
        let r = r - 1.6;
        (((((((r * 7.745_450_142_783_414e-4 + 0.022_723_844_989_269_185) * r + 0.241_780_725_177_450_61) * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_6)
            * r
            + 5.769_497_221_460_691_4)
            * r
            + 4.630_337_846_156_545_3)
            * r
            + 1.423_437_110_749_683_6)
            / (((((((r * 1.050_750_071_644_416_8e-9 + 5.475_938_084_995_345e-4) * r + 0.015_198_666_563_616_457)
                * r
                + 0.148_103_976_427_480_07)
                * r
                + 0.689_767_334_985_100_05)
                * r
                + 1.676_384_830_183_803_8)
                * r
                + 2.053_191_626_637_758_8)
                * r
                + 1.0)
    } else {
        let r = r - 5.0;
        (((((((r * 2.010_334_399_292_288_1e-7 + 2.711_555_568_743_487_6e-5) * r + 0.001_242_660_947_388_078_4) * r
            + 0.026_532_189_526_576_123)
            * r
            + 0.296_560_571_828_504_89)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114_4)
            * r
            + 6.657_904_643_501_103_8)
            / (((((((r * 2.044_263_103_389_939_8e-15 + 1.421_511_758_316_445_9e-7) * r
                + 1.846_318_317_510_054_7e-5)
                * r
                + 7.868_691_311_456_132_6e-4)
                * r
                + 0.014_875_361_290_850_615)
                * r
                + 0.136_929_880_922_735_81)
                * r
                + 0.599_832_206_555_887_94)
                * r
                + 1.0)
    }
}

/// Standard normal quantile `Φ⁻¹(p)`. Returns ±∞ at the endpoints and NaN outside `[0, 1]`.
pub fn norm_ppf(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        return ppf_central(q);
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if q < 0.0 {
        -ppf_tail(p)
    } else {
        ppf_tail(1.0 - p)
    }
}

/// Upper-tail quantile: the `z` with `P(Z > z) = q`, accurate for tiny `q`.
pub fn norm_isf(q: f64) -> f64 {
    if q <= 0.075 {
        if q <= 0.0 {
            return if q == 0.0 { f64::INFINITY } else { f64::NAN };
        }
        ppf_tail(q)
    } else {
        -norm_ppf(q)
    }
}

/// Inverse error function.
///
/// Computed through the normal quantile with the tail probability formed as
/// `(1 - |v|) / 2`, which is exact in floating point for `|v| >= 0.5`.
pub fn erfinv(v: f64) -> f64 {
    if v.is_nan() || v.abs() > 1.0 {
        return f64::NAN;
    }
    if v.abs() == 1.0 {
        return v * f64::INFINITY;
    }
    let z = if v.abs() <= 0.85 { ppf_central(0.5 * v) } else { v.signum() * ppf_tail(0.5 * (1.0 - v.abs())) };
    z / SQRT_2
}

/// Third-order Taylor expansion of `erfinv` around zero.
pub fn erfinv_taylor3(v: f64) -> f64 {
    0.5 * PI.sqrt() * (v + PI / 12.0 * v * v * v)
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

pub fn norm_logpdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Inverse-CDF draw from `N(mean, sd²)` truncated to `(0, ∞)`.
///
/// Works on the survival scale, `P(X > x) = (1 - u) P(X > 0)`, so both a
/// mean far above zero and one far below it keep full precision. The result
/// is strictly positive.
pub fn truncnorm_pos_ppf(u: f64, mean: f64, sd: f64) -> f64 {
    let a = -mean / sd;
    let tail = (1.0 - u) * norm_sf(a);
    let z = norm_isf(tail);
    let x = mean + sd * z;
    if x > 0.0 {
        x
    } else {
        f64::MIN_POSITIVE
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln Σ exp(xs)`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
