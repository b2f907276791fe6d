//! Standard normal distribution functions.
//!
//! `norm_cdf` is built on the complementary error function, which keeps full
//! relative precision deep in the lower tail. `norm_inv_cdf` uses Acklam's
//! rational approximation (relative error about 1.15e-9) followed by one
//! Newton correction against `norm_cdf`, which brings the absolute CDF
//! residual to the level of double rounding.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A probability in the closed unit interval.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(domain(format!("probability {value} outside [0, 1]")))
        }
    }

    /// Checks `0 < value < 1`.
    pub fn open(value: f64) -> Result<Self> {
        if value > 0.0 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(domain(format!("probability {value} outside (0, 1)")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Probability {
    type Error = crate::Error;

    fn try_from(value: f64) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Probability> for f64 {
    fn from(p: Probability) -> f64 {
        p.0
    }
}

/// Standard normal density.
#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Unchecked standard normal CDF. Accepts infinities.
#[inline]
pub(crate) fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal cumulative distribution function Φ(x).
pub fn norm_cdf(x: f64) -> Result<Probability> {
    if !x.is_finite() {
        return Err(domain(format!("norm_cdf argument {x} is not finite")));
    }
    Ok(Probability(cdf(x)))
}

/// `ln Φ(x)`, accurate in the far lower tail where Φ underflows.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -30.0 {
        return cdf(x).ln();
    }
    // Asymptotic expansion of the Mills ratio.
    let z2 = 1.0 / (x * x);
    let series = 1.0 - z2 + 3.0 * z2 * z2 - 15.0 * z2 * z2 * z2;
    -0.5 * x * x - (-x).ln() - LN_SQRT_2PI + series.ln()
}

/// Inverse Mills ratio `pdf(x) / Φ(-x)`, the mean of a standard normal
/// truncated to `[x, ∞)`.
pub fn inverse_mills(x: f64) -> f64 {
    if x < 30.0 {
        norm_pdf(x) / cdf(-x)
    } else {
        (-0.5 * x * x - LN_SQRT_2PI - log_norm_cdf(-x)).exp()
    }
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const ACKLAM_P_LOW: f64 = 0.02425;

/// Acklam's approximation for `p <= 0.5`.
fn acklam_lower(p: f64) -> f64 {
    if p < ACKLAM_P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        let c = &ACKLAM_C;
        let d = &ACKLAM_D;
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        let a = &ACKLAM_A;
        let b = &ACKLAM_B;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    }
}

/// Unchecked inverse CDF for `0 < p < 1`.
pub(crate) fn inv_cdf(p: f64) -> f64 {
    // Solve in the lower tail, where Φ carries full relative precision.
    let (tail, sign) = if p > 0.5 { (1.0 - p, -1.0) } else { (p, 1.0) };
    let x0 = acklam_lower(tail);
    let density = norm_pdf(x0);
    let x = if density > 0.0 {
        x0 - (cdf(x0) - tail) / density
    } else {
        x0
    };
    sign * x
}

/// Inverse standard normal CDF Φ⁻¹(p) for `0 < p < 1`.
pub fn norm_inv_cdf(p: Probability) -> Result<f64> {
    let p = p.value();
    if p <= 0.0 || p >= 1.0 {
        return Err(domain(format!("norm_inv_cdf argument {p} outside (0, 1)")));
    }
    Ok(inv_cdf(p))
}

/// Expected-shortfall tail factor `exp(-Φ⁻¹(α)²/2) / ((1-α)√(2π))`.
pub fn es_tail_factor(alpha: Probability) -> Result<f64> {
    let a = alpha.value();
    if a <= 0.0 || a >= 1.0 {
        return Err(domain(format!("ES confidence level {a} outside (0, 1)")));
    }
    Ok(norm_pdf(inv_cdf(a)) / (1.0 - a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn cdf_reference_points() {
        assert_eq!(norm_cdf(0.0).unwrap().value(), 0.5);
        assert!((norm_cdf(10.0).unwrap().value() - 1.0).abs() <= 1e-12);
        assert!((norm_cdf(2.0).unwrap().value() - 0.9772).abs() < 5e-5);
        // Reference values of Φ from published tables (to 16 digits).
        let table = [
            (-1.0, 0.158_655_253_931_457_05),
            (1.5, 0.933_192_798_731_141_9),
            (-3.0, 0.001_349_898_031_630_094_6),
            (-8.0, 6.220_960_574_271_785e-16),
        ];
        for (x, want) in table {
            assert!((cdf(x) - want).abs() <= 1e-15, "Φ({x})");
        }
    }

    #[test]
    fn cdf_rejects_non_finite() {
        assert!(norm_cdf(f64::NAN).is_err());
        assert!(norm_cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn cdf_symmetry_and_monotonicity() {
        let mut prev = 0.0;
        for i in -1600..=1600 {
            let x = i as f64 * 0.005;
            let v = cdf(x);
            assert!(v >= prev);
            prev = v;
            assert!((cdf(-x) + v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn inverse_reference_points() {
        assert_eq!(norm_inv_cdf(p(0.5)).unwrap(), 0.0);
        assert!((norm_inv_cdf(p(0.9772)).unwrap() - 2.0).abs() < 5e-3);
        assert!((norm_inv_cdf(p(0.1)).unwrap() + 1.281_551_565_544_600_4).abs() < 1e-14);
        assert!(norm_inv_cdf(p(0.0)).is_err());
        assert!(norm_inv_cdf(p(1.0)).is_err());
        assert!(Probability::new(1.5).is_err());
    }

    #[test]
    fn inverse_residual_and_sign() {
        let mut probs = vec![
            1e-12, 1e-10, 1e-6, 1e-3, 0.02425, 0.3, 0.5, 0.7, 0.97575, 0.999,
        ];
        probs.extend(probs.clone().iter().map(|q| 1.0 - q));
        for &q in &probs {
            let x = norm_inv_cdf(p(q)).unwrap();
            assert!((cdf(x) - q).abs() <= 1e-12, "p = {q}");
            assert_eq!(x > 0.0, q > 0.5, "sign at p = {q}");
        }
        for i in 1..1000 {
            let q = i as f64 / 1000.0;
            let x = inv_cdf(q);
            assert!((cdf(x) - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn inverse_roundtrip_grid() {
        // Beyond |x| ≈ 5 the upper branch loses accuracy to the spacing of
        // doubles just below 1: Φ(x) is stored with absolute error up to
        // 2^-54, which displaces the inverse by that amount over pdf(x).
        for i in -600..=600 {
            let x = i as f64 * 0.01;
            let back = norm_inv_cdf(norm_cdf(x).unwrap()).unwrap();
            let representable = f64::EPSILON / 2.0 * cdf(x) / norm_pdf(x);
            assert!(
                (back - x).abs() <= 1e-9 + representable,
                "x = {x}, got {back}"
            );
            if x <= 5.0 {
                assert!((back - x).abs() <= 1e-9, "x = {x}");
            }
        }
    }

    #[test]
    fn es_factor_reference_points() {
        assert!((es_tail_factor(p(0.9420)).unwrap() - 2.0).abs() < 5e-3);
        let v = es_tail_factor(p(0.99)).unwrap();
        let ratio = v * v / (v * v + 1.0);
        assert!((ratio - 0.877).abs() < 2e-3, "ratio {ratio}");
        assert!(es_tail_factor(p(0.0)).is_err());
        assert!(es_tail_factor(p(1.0)).is_err());
    }

    /// Adaptive Simpson on [a, b].
    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        #[allow(clippy::too_many_arguments)]
        fn rec(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            let delta = left + right - whole;
            if depth == 0 || delta.abs() <= 15.0 * tol {
                left + right + delta / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let fa = f(a);
        let fb = f(b);
        let fm = f(0.5 * (a + b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    #[test]
    fn es_factor_matches_tail_integral() {
        for alpha in [0.9, 0.95, 0.99] {
            let upper = 1.0 - alpha;
            // ∫₀^u Φ⁻¹(p) dp with p = u·e^{-s}, removing the endpoint singularity.
            let integrand = |s: f64| inv_cdf(upper * (-s).exp()) * upper * (-s).exp();
            let integral = adaptive_simpson(&integrand, 0.0, 700.0, 1e-13);
            let oracle = -integral / upper;
            let closed = es_tail_factor(p(alpha)).unwrap();
            assert!(
                ((closed - oracle) / oracle).abs() <= 1e-8,
                "alpha {alpha}: closed {closed} oracle {oracle}"
            );
        }
    }

    #[test]
    fn es_dominates_var() {
        let mut prev = 0.0;
        for i in 1..1000 {
            let a = 0.5 + 0.5 * i as f64 / 1000.0;
            let es = es_tail_factor(p(a)).unwrap();
            assert!(es > inv_cdf(a));
            assert!(es > prev);
            prev = es;
        }
    }

    #[test]
    fn log_cdf_tail_continuity() {
        for x in [-29.9_f64, -30.0, -30.1] {
            let direct = cdf(x).ln();
            assert!((log_norm_cdf(x) - direct).abs() < 1e-9 * direct.abs());
        }
        assert!(log_norm_cdf(-60.0).is_finite());
        assert!((inverse_mills(0.0) - 2.0 * FRAC_1_SQRT_2PI).abs() < 1e-15);
    }
}
