//! Thermodynamic-limit predictions for the feasibility phase boundary and
//! the conditional estimation error.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::risk::{phi_of_alpha, RiskKind};
use crate::special::Probability;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicaPrediction {
    pub phi: f64,
    pub r_c: f64,
    pub r: f64,
    /// `None` at or beyond the boundary, where the error diverges.
    pub expected_q0_squared: Option<f64>,
}

impl ReplicaPrediction {
    pub fn new(phi: f64, r: f64) -> Result<Self> {
        if !(r >= 0.0) {
            return Err(domain(format!("aspect ratio must be nonnegative, got {r}")));
        }
        let r_c = phase_boundary_rc(phi)?;
        let expected_q0_squared = match expected_q0_squared(phi, r) {
            Ok(v) => Some(v),
            Err(Error::Divergence { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            phi,
            r_c,
            r,
            expected_q0_squared,
        })
    }
}

/// `r_c(φ) = φ²/(φ² + 1)`.
pub fn phase_boundary_rc(phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(domain(format!(
            "phi must be positive and finite, got {phi}"
        )));
    }
    // φ²/(φ² + 1) with the rounding errors of φ² and φ² + 1 fed back in a
    // correction step, so the result is correctly rounded in practice.
    let p = phi * phi;
    let e = phi.mul_add(phi, -p);
    let d = p + 1.0;
    let bp = d - 1.0;
    let d_err = (p - bp) + (1.0 - (d - bp));
    let q = p / d;
    let residual = (-q).mul_add(d, p) + e - q * (d_err + e);
    Ok(q + residual / d)
}

/// Phase boundary at confidence level `alpha` of a VaR or ES measure.
pub fn phase_boundary_rc_alpha(kind: RiskKind, alpha: Probability) -> Result<f64> {
    match kind {
        RiskKind::VaR | RiskKind::ES => phase_boundary_rc(phi_of_alpha(kind, alpha)?),
        other => Err(Error::Unsupported(format!(
            "measure {other} has no confidence-level boundary"
        ))),
    }
}

/// Conditional mean of q₀², `r_c/(r_c − r)`, for `0 ≤ r < r_c`.
pub fn expected_q0_squared(phi: f64, r: f64) -> Result<f64> {
    let r_c = phase_boundary_rc(phi)?;
    if !(r >= 0.0) {
        return Err(domain(format!("aspect ratio must be nonnegative, got {r}")));
    }
    if r >= r_c {
        return Err(Error::Divergence { r, r_c });
    }
    Ok(r_c / (r_c - r))
}

/// The same quantity written as `φ²/((1 − r)φ² − r)`.
pub fn expected_q0_squared_phi_form(phi: f64, r: f64) -> Result<f64> {
    let r_c = phase_boundary_rc(phi)?;
    if !(r >= 0.0) {
        return Err(domain(format!("aspect ratio must be nonnegative, got {r}")));
    }
    let phi2 = phi * phi;
    let denominator = (1.0 - r) * phi2 - r;
    if r >= r_c || denominator <= 0.0 {
        return Err(Error::Divergence { r, r_c });
    }
    Ok(phi2 / denominator)
}

/// Global minimum-variance benchmark `E q₀² = 1/(1 − r)`.
pub fn variance_benchmark_q0_squared(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(domain(format!("aspect ratio must be nonnegative, got {r}")));
    }
    if r >= 1.0 {
        return Err(Error::Divergence { r, r_c: 1.0 });
    }
    Ok(1.0 / (1.0 - r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn prob(v: f64) -> Probability {
        Probability::new(v).unwrap()
    }

    #[test]
    fn boundary_values() {
        assert_eq!(phase_boundary_rc(2.0).unwrap(), 0.8);
        assert_eq!(phase_boundary_rc(1.0 / 2.0_f64.sqrt()).unwrap(), 1.0 / 3.0);
        assert!((phase_boundary_rc(FRAC_1_SQRT_2).unwrap() - 1.0 / 3.0).abs() <= f64::EPSILON);
        assert_eq!(phase_boundary_rc(0.5).unwrap(), 0.2);
        assert_eq!(phase_boundary_rc(1.0).unwrap(), 0.5);
        assert!((phase_boundary_rc(1e6).unwrap() - 1.0).abs() < 1e-11);
        assert!(phase_boundary_rc(0.0).is_err());
        assert!(phase_boundary_rc(-1.0).is_err());
    }

    #[test]
    fn alpha_boundaries() {
        let var = phase_boundary_rc_alpha(RiskKind::VaR, prob(0.99)).unwrap();
        let es = phase_boundary_rc_alpha(RiskKind::ES, prob(0.99)).unwrap();
        assert!((var - 0.844).abs() <= 1e-3, "{var}");
        assert!((es - 0.877).abs() <= 1e-3, "{es}");
        for i in 1..500 {
            let a = 0.5 + 0.5 * i as f64 / 500.0;
            let var = phase_boundary_rc_alpha(RiskKind::VaR, prob(a)).unwrap();
            let es = phase_boundary_rc_alpha(RiskKind::ES, prob(a)).unwrap();
            assert!(es > var, "alpha {a}");
        }
        assert!(phase_boundary_rc_alpha(RiskKind::Semivariance, prob(0.9)).is_err());
    }

    #[test]
    fn boundary_approaches_one_steeply() {
        for kind in [RiskKind::VaR, RiskKind::ES] {
            let mut last_slope = 0.0;
            for k in 2..12 {
                let gap = 10f64.powi(-k);
                let a = 1.0 - gap;
                let h = gap * 1e-3;
                let lo = phase_boundary_rc_alpha(kind, prob(a - h)).unwrap();
                let hi = phase_boundary_rc_alpha(kind, prob(a + h)).unwrap();
                let slope = (hi - lo) / (2.0 * h);
                assert!(slope > last_slope, "{kind} slope at 1 - 1e-{k}");
                last_slope = slope;
            }
            assert!(last_slope > 1e6);
            let near = phase_boundary_rc_alpha(kind, prob(1.0 - 1e-12)).unwrap();
            assert!(near > 0.97);
        }
    }

    #[test]
    fn boundary_strictly_increasing() {
        let mut prev = 0.0;
        for i in 1..1000 {
            let rc = phase_boundary_rc(i as f64 * 0.01).unwrap();
            assert!(rc > prev && rc < 1.0);
            prev = rc;
        }
    }

    #[test]
    fn estimation_error_values() {
        assert!((expected_q0_squared(2.0, 0.4).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(expected_q0_squared(0.3, 0.0).unwrap(), 1.0);
        let semi = expected_q0_squared(FRAC_1_SQRT_2, 1.0 / 6.0).unwrap();
        assert!((semi - 2.0).abs() < 1e-14);
        assert!(matches!(
            expected_q0_squared(2.0, 0.8),
            Err(Error::Divergence { .. })
        ));
        assert!(matches!(
            expected_q0_squared(2.0, -0.1),
            Err(Error::Domain(_))
        ));
        let p = ReplicaPrediction::new(2.0, 0.9).unwrap();
        assert_eq!(p.expected_q0_squared, None);
        assert_eq!(
            ReplicaPrediction::new(2.0, 0.4)
                .unwrap()
                .expected_q0_squared,
            Some(2.0)
        );
    }

    #[test]
    fn benchmark_values_and_ordering() {
        assert_eq!(variance_benchmark_q0_squared(0.0).unwrap(), 1.0);
        assert_eq!(variance_benchmark_q0_squared(0.5).unwrap(), 2.0);
        assert!(matches!(
            variance_benchmark_q0_squared(1.0),
            Err(Error::Divergence { .. })
        ));
        for phi in [0.5, 1.0, 2.0, 5.0] {
            let rc = phase_boundary_rc(phi).unwrap();
            for i in 1..100 {
                let r = rc * i as f64 / 100.0;
                assert!(
                    expected_q0_squared(phi, r).unwrap()
                        > variance_benchmark_q0_squared(r).unwrap()
                );
            }
        }
    }

    #[test]
    fn strictly_increasing_in_r() {
        let rc = phase_boundary_rc(1.3).unwrap();
        let mut prev = 0.0;
        for i in 0..200 {
            let v = expected_q0_squared(1.3, rc * i as f64 / 200.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn critical_exponent() {
        for phi in [FRAC_1_SQRT_2, 1.0, 2.0, 3.5] {
            let rc = phase_boundary_rc(phi).unwrap();
            for delta in [1e-2, 1e-4, 1e-6] {
                let v = expected_q0_squared(phi, rc * (1.0 - delta)).unwrap();
                assert!((v * delta - 1.0).abs() <= 1e-6, "phi {phi} delta {delta}");
            }
        }
    }

    #[test]
    fn two_forms_agree() {
        for phi in [0.3, FRAC_1_SQRT_2, 1.0, 2.0, 4.0] {
            let rc = phase_boundary_rc(phi).unwrap();
            for i in 0..50 {
                let r = rc * i as f64 / 50.0;
                let a = expected_q0_squared(phi, r).unwrap();
                let b = expected_q0_squared_phi_form(phi, r).unwrap();
                assert!((a - b).abs() <= 1e-14 * a, "phi {phi} r {r}");
            }
        }
    }
}
