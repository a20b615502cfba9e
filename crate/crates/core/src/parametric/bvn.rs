//! Univariate and bivariate standard normal distribution functions.
//!
//! The bivariate CDF follows Genz's BVNU reduction of the correlation
//! integral (Drezner–Wesolowsky substitution with Gauss–Legendre rules of
//! 6, 12 or 20 points chosen by `|ρ|`), accurate to about `1e-15`.

use core::f64::consts::{PI, SQRT_2};

use crate::error::{Error, Result};

// unused when std is linked (tests), where f64 has inherent math methods
#[allow(unused_imports)]
use num_traits::Float;

const TWO_PI: f64 = 2.0 * PI;

/// `Φ(x)`.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `φ(x)`.
#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / TWO_PI.sqrt()
}

// Half of each symmetric Gauss–Legendre rule on [-1, 1] (negative nodes).
const W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const X6: [f64; 3] = [-0.932_469_514_203_152_2, -0.661_209_386_466_264_7, -0.238_619_186_083_197];
const W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const X12: [f64; 6] = [
    -0.981_560_634_246_719_1,
    -0.904_117_256_370_475,
    -0.769_902_674_194_305,
    -0.587_317_954_286_617_1,
    -0.367_831_498_998_180_2,
    -0.125_233_408_511_469_2,
];
const W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const X20: [f64; 10] = [
    -0.993_128_599_185_094_9,
    -0.963_971_927_277_913_8,
    -0.912_234_428_251_325_9,
    -0.839_116_971_822_218_8,
    -0.746_331_906_460_150_8,
    -0.636_053_680_726_515,
    -0.510_867_001_950_827_1,
    -0.373_706_088_715_419_6,
    -0.227_785_851_141_645_1,
    -0.076_526_521_133_497_33,
];

/// `P(A > h, B > k)` for a standard bivariate normal pair with correlation
/// `r`, `|r| < 1`. No argument checks.
pub fn bvnu(h: f64, k: f64, r: f64) -> f64 {
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };
    let mut k = k;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for (wi, xi) in w.iter().zip(x) {
            for s in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * s / 2.0).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return bvn * asr / (2.0 * TWO_PI) + normal_cdf(-h) * normal_cdf(-k);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 16.0;
    bvn = a * (-(bs / as_ + hk) / 2.0).exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as_ * as_ / 5.0);
    if hk > -160.0 {
        let b = bs.sqrt();
        bvn -= (-hk / 2.0).exp() * TWO_PI.sqrt() * normal_cdf(-b / a) * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
    }
    a /= 2.0;
    for (wi, xi) in w.iter().zip(x) {
        let xs = (a * (xi + 1.0)) * (a * (xi + 1.0));
        let rs = (1.0 - xs).sqrt();
        bvn += a * wi * ((-bs / (2.0 * xs) - hk / (1.0 + rs)).exp() / rs
            - (-(bs / xs + hk) / 2.0).exp() * (1.0 + c * xs * (1.0 + d * xs)));
        let xs = as_ * (1.0 - xi) * (1.0 - xi) / 4.0;
        let rs = (1.0 - xs).sqrt();
        bvn += a * wi * (-(bs / xs + hk) / 2.0).exp()
            * ((-hk * xs / (2.0 * (1.0 + rs) * (1.0 + rs))).exp() / rs - (1.0 + c * xs * (1.0 + d * xs)));
    }
    bvn = -bvn / TWO_PI;
    if r > 0.0 {
        bvn + normal_cdf(-h.max(k))
    } else {
        let mut out = -bvn;
        if k > h {
            out += if h < 0.0 {
                normal_cdf(k) - normal_cdf(h)
            } else {
                normal_cdf(-h) - normal_cdf(-k)
            };
        }
        out
    }
}

/// Beyond this, `Φ` is `0` or `1` to within `1e-300`.
const SATURATION: f64 = 38.0;

/// `F₂(u, v, ρ)` without the domain check, for callers that already keep
/// `|ρ| < 1`. Infinite and saturated limits are handled exactly.
#[inline]
pub fn bvn_cdf_unchecked(u: f64, v: f64, rho: f64) -> f64 {
    if u <= -SATURATION || v <= -SATURATION {
        return 0.0;
    }
    if u >= SATURATION {
        return normal_cdf(v);
    }
    if v >= SATURATION {
        return normal_cdf(u);
    }
    bvnu(-u, -v, rho).clamp(0.0, 1.0)
}

/// `F₂(u, v, ρ) = P(A ≤ u, B ≤ v)` for a standard bivariate normal pair with
/// correlation `ρ`.
pub fn bivariate_normal_cdf(u: f64, v: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::Domain(rho));
    }
    Ok(bvn_cdf_unchecked(u, v, rho))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_at_origin() {
        assert!((bivariate_normal_cdf(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn arcsine_identity_at_origin() {
        for rho in [-0.95, -0.5, 0.1, 0.5, 0.8, 0.93, 0.99] {
            let want = 0.25 + libm::asin(rho) / TWO_PI;
            assert!((bivariate_normal_cdf(0.0, 0.0, rho).unwrap() - want).abs() < 1e-13, "rho {rho}");
        }
    }

    #[test]
    fn marginal_limits() {
        for u in [-2.0, 0.0, 2.0] {
            for rho in [-0.9, 0.0, 0.5, 0.97] {
                let f = bivariate_normal_cdf(u, 8.0, rho).unwrap();
                assert!((f - normal_cdf(u)).abs() < 1e-12);
            }
            assert_eq!(bivariate_normal_cdf(u, f64::INFINITY, 0.3).unwrap(), normal_cdf(u));
            assert_eq!(bivariate_normal_cdf(f64::NEG_INFINITY, u, 0.3).unwrap(), 0.0);
        }
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bivariate_normal_cdf(0.0, 0.0, 1.0), Err(Error::Domain(_))));
        assert!(bivariate_normal_cdf(0.0, 0.0, -1.5).is_err());
        assert!(bivariate_normal_cdf(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_cdf(-3.0) - 0.001_349_898_031_630_094_6).abs() < 1e-17);
    }
}
