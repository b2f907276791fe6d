//! Closed-form minimization of `φ√(wᵀΣw) − μᵀw` on the budget hyperplane.
//!
//! With `A = 1ᵀΣ⁻¹1`, `B = 1ᵀΣ⁻¹μ` and `C = μᵀΣ⁻¹μ`, an optimum exists iff Σ
//! is nonsingular and the discriminant `B² − AC + Aφ²` is positive. The
//! budget multiplier is the smaller root of `Aλ² − 2Bλ + C − φ² = 0`,
//! weights are proportional to `Σ⁻¹(μ − λ1)`, and the quadratic multiplier
//! follows from stationarity `2ηΣw = μ − λ1`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, dot, forward_quad_scalars, CholeskyFactor, QuadScalars};
use crate::risk::{risk_of_weights, MomentParams, Origin, Portfolio, RiskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeasibilityStatus {
    Feasible,
    InfeasibleDiscriminant,
    InfeasibleSingular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub status: FeasibilityStatus,
    /// `B² − AC + Aφ²`; NaN when the covariance is singular.
    pub discriminant: f64,
    /// `None` when the covariance is singular.
    pub scalars: Option<QuadScalars>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.status == FeasibilityStatus::Feasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPortfolio {
    pub portfolio: Portfolio,
    pub lambda_star: f64,
    pub eta_star: f64,
    /// `w*ᵀ Σ w*`.
    pub z_star: f64,
    pub risk_value: f64,
    pub scalars: QuadScalars,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationError {
    pub q0: f64,
    pub q0_squared: f64,
}

/// Factorization and forward solves shared by the feasibility test, the
/// optimizer and the witness.
pub(crate) struct Analysis {
    factor: Option<CholeskyFactor>,
    /// `D⁻¹1`
    y_ones: Vec<f64>,
    /// `D⁻¹μ`
    y_mu: Vec<f64>,
    pub(crate) report: FeasibilityReport,
}

impl Analysis {
    pub(crate) fn new(m: &MomentParams, phi: f64) -> Result<Self> {
        let singular = Self {
            factor: None,
            y_ones: Vec::new(),
            y_mu: Vec::new(),
            report: FeasibilityReport {
                status: FeasibilityStatus::InfeasibleSingular,
                discriminant: f64::NAN,
                scalars: None,
            },
        };
        // The centered sample has rank at most T − 1.
        if let Origin::Estimated { n_obs } = m.origin() {
            if n_obs < m.dim() + 1 {
                return Ok(singular);
            }
        }
        let factor = match cholesky(m.sigma()) {
            Ok(f) => f,
            Err(Error::NotPositiveDefinite { .. }) => return Ok(singular),
            Err(e) => return Err(e),
        };
        let (scalars, y_ones, y_mu) = forward_quad_scalars(&factor, m.mu())?;
        let QuadScalars { a, b, c } = scalars;
        let phi2 = phi * phi;
        let discriminant = b * b - a * c + a * phi2;
        let tolerance = 1e-12 * (b * b + (a * c).abs() + a * phi2).max(1.0);
        let status = if discriminant > tolerance {
            FeasibilityStatus::Feasible
        } else {
            FeasibilityStatus::InfeasibleDiscriminant
        };
        Ok(Self {
            factor: Some(factor),
            y_ones,
            y_mu,
            report: FeasibilityReport {
                status,
                discriminant,
                scalars: Some(scalars),
            },
        })
    }

    /// `Σ⁻¹(s·μ − λ·1)` through the cached forward solves.
    fn combination(&self, mu_coef: f64, ones_coef: f64) -> Result<Vec<f64>> {
        let f = self.factor.as_ref().expect("nonsingular analysis");
        let y: Vec<f64> = self
            .y_mu
            .iter()
            .zip(&self.y_ones)
            .map(|(m, o)| mu_coef * m - ones_coef * o)
            .collect();
        f.backward_solve(&y)
    }

    pub(crate) fn optimize(
        &self,
        m: &MomentParams,
        phi: f64,
        budget: f64,
    ) -> Result<OptimalPortfolio> {
        if self.report.status != FeasibilityStatus::Feasible {
            return Err(Error::Contract(format!(
                "optimize called on {:?} problem",
                self.report.status
            )));
        }
        if !(budget != 0.0 && budget.is_finite()) {
            return Err(Error::Contract(format!(
                "budget must be nonzero, got {budget}"
            )));
        }
        let scalars = self.report.scalars.expect("feasible has scalars");
        // A negative budget is the positive-budget problem for −μ, mirrored.
        let sign = budget.signum();
        let b = sign * scalars.b;
        let root = self.report.discriminant.sqrt() / scalars.a;
        let lambda = b / scalars.a - root;
        let direction = self.combination(sign, lambda)?;
        // 1ᵀΣ⁻¹(±μ − λ1) = A·root > 0.
        let total: f64 = direction.iter().sum();
        let weights: Vec<f64> = direction.iter().map(|d| d * budget / total).collect();
        let z_star = m.sigma().quad_form(&weights)?.max(0.0);
        let risk_value = risk_of_weights(&weights, m, phi)?;
        let lambda_star = sign * lambda;
        let eta_star = total / (2.0 * budget.abs());
        Ok(OptimalPortfolio {
            portfolio: Portfolio::from_weights(weights),
            lambda_star,
            eta_star,
            z_star,
            risk_value,
            scalars,
        })
    }

    pub(crate) fn witness(&self) -> Result<Vec<f64>> {
        if self.report.status != FeasibilityStatus::InfeasibleDiscriminant {
            return Err(Error::Contract(format!(
                "infeasibility witness requested for {:?} problem",
                self.report.status
            )));
        }
        let s = self.report.scalars.expect("nonsingular has scalars");
        self.combination(1.0, s.b / s.a)
    }
}

fn check_dims(m: &MomentParams) -> Result<()> {
    if m.mu().len() != m.sigma().dim() {
        return Err(Error::Shape {
            expected: m.sigma().dim(),
            actual: m.mu().len(),
        });
    }
    Ok(())
}

/// Classifies the problem as feasible, infeasible or singular.
pub fn check_feasibility(m: &MomentParams, spec: &RiskSpec) -> Result<FeasibilityReport> {
    check_dims(m)?;
    Ok(Analysis::new(m, spec.phi())?.report)
}

/// Minimum-risk portfolio with weights summing to `budget`.
pub fn optimize(m: &MomentParams, spec: &RiskSpec, budget: f64) -> Result<OptimalPortfolio> {
    check_dims(m)?;
    Analysis::new(m, spec.phi())?.optimize(m, spec.phi(), budget)
}

/// A budget-neutral direction `u = Σ⁻¹μ − (B/A)Σ⁻¹1` along which the risk
/// decreases without bound.
pub fn infeasibility_witness(m: &MomentParams, spec: &RiskSpec) -> Result<Vec<f64>> {
    check_dims(m)?;
    Analysis::new(m, spec.phi())?.witness()
}

/// Asymptotic slope `φ√(uᵀΣu) − μᵀu` of the risk along `u`.
pub fn descent_slope(m: &MomentParams, spec: &RiskSpec, u: &[f64]) -> Result<f64> {
    risk_of_weights(u, m, spec.phi())
}

/// `q₀ = R(ŵ) / R(w*)`, both evaluated under the true moments at the
/// budget of `estimated`.
pub fn q0_ratio(
    true_m: &MomentParams,
    true_spec: &RiskSpec,
    estimated: &Portfolio,
) -> Result<EstimationError> {
    let optimum = optimize(true_m, true_spec, estimated.budget()).map_err(|e| match e {
        Error::Contract(msg) => Error::Contract(format!("true problem: {msg}")),
        other => other,
    })?;
    q0_against(
        true_m,
        true_spec.phi(),
        estimated.weights(),
        optimum.risk_value,
    )
}

pub(crate) fn q0_against(
    true_m: &MomentParams,
    phi: f64,
    weights: &[f64],
    optimal_risk: f64,
) -> Result<EstimationError> {
    if !(optimal_risk > 0.0) {
        return Err(Error::DegenerateDenominator(optimal_risk));
    }
    let q0 = risk_of_weights(weights, true_m, phi)? / optimal_risk;
    Ok(EstimationError {
        q0,
        q0_squared: q0 * q0,
    })
}

/// `(1/N)Σŵᵢ²`, the estimation error against an iid standard normal truth
/// for a portfolio under the `Σw = N` convention.
pub fn iid_q0_squared(weights: &[f64]) -> f64 {
    let n = weights.len() as f64;
    let total: f64 = weights.iter().sum();
    // Rescale to the Σw = N convention first.
    let scale = n / total;
    dot(weights, weights) * scale * scale / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CovMatrix;

    fn spec(phi: f64) -> RiskSpec {
        RiskSpec::raw_phi(phi).unwrap()
    }

    fn moments(mu: Vec<f64>, sigma: CovMatrix) -> MomentParams {
        MomentParams::new(mu, sigma, Origin::True).unwrap()
    }

    #[test]
    fn single_asset_feasible() {
        let m = moments(vec![0.0], CovMatrix::identity(1));
        let r = check_feasibility(&m, &spec(1.0)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::Feasible);
        assert_eq!(r.discriminant, 1.0);
    }

    #[test]
    fn two_asset_infeasible_and_witness() {
        let m = moments(vec![1.0, -1.0], CovMatrix::identity(2));
        let r = check_feasibility(&m, &spec(1.0)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::InfeasibleDiscriminant);
        assert_eq!(r.discriminant, -2.0);
        assert!(matches!(
            optimize(&m, &spec(1.0), 1.0),
            Err(Error::Contract(_))
        ));

        let u = infeasibility_witness(&m, &spec(1.0)).unwrap();
        assert!((u[0] - 1.0).abs() < 1e-15 && (u[1] + 1.0).abs() < 1e-15);
        let slope = descent_slope(&m, &spec(1.0), &u).unwrap();
        assert!((slope - (2.0_f64.sqrt() - 2.0)).abs() < 1e-15);
        let far = [0.5 + 1e6 * u[0], 0.5 + 1e6 * u[1]];
        assert!(risk_of_weights(&far, &m, 1.0).unwrap() < -1e5);
    }

    #[test]
    fn witness_requires_infeasible() {
        let m = MomentParams::iid_standard(3);
        assert!(matches!(
            infeasibility_witness(&m, &spec(1.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn singular_status() {
        let sigma = CovMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let r = check_feasibility(&moments(vec![0.0, 0.0], sigma), &spec(2.0)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::InfeasibleSingular);
        assert!(r.scalars.is_none());

        let est = MomentParams::new(
            vec![0.0; 4],
            CovMatrix::identity(4),
            Origin::Estimated { n_obs: 4 },
        )
        .unwrap();
        let r = check_feasibility(&est, &spec(2.0)).unwrap();
        assert_eq!(r.status, FeasibilityStatus::InfeasibleSingular);
    }

    #[test]
    fn iid_equal_weights() {
        let m = MomentParams::iid_standard(4);
        let opt = optimize(&m, &spec(2.0), 1.0).unwrap();
        for w in opt.portfolio.weights() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        assert!((opt.risk_value - 1.0).abs() < 1e-14);
        assert!((opt.lambda_star + 1.0).abs() < 1e-14);

        let opt = optimize(&m, &spec(2.0), 4.0).unwrap();
        for w in opt.portfolio.weights() {
            assert!((w - 1.0).abs() < 1e-14);
        }
        assert!((opt.risk_value - 2.0 * 2.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_zero_budget() {
        let m = MomentParams::iid_standard(2);
        assert!(matches!(
            optimize(&m, &spec(2.0), 0.0),
            Err(Error::Contract(_))
        ));
    }

    fn assert_invariants(m: &MomentParams, phi: f64, opt: &OptimalPortfolio, budget: f64) {
        let w = opt.portfolio.weights();
        let sum: f64 = w.iter().sum();
        assert!((sum - budget).abs() <= 1e-9 * budget.abs().max(1.0));
        let z = m.sigma().quad_form(w).unwrap();
        assert!((opt.z_star - z).abs() <= 1e-9 * z);
        let sw = m.sigma().mul_vec(w).unwrap();
        let scale = m
            .mu()
            .iter()
            .map(|v| v.abs())
            .fold(opt.lambda_star.abs(), f64::max);
        for (i, (s, mu)) in sw.iter().zip(m.mu()).enumerate() {
            let lhs = 2.0 * opt.eta_star * s;
            let rhs = mu - opt.lambda_star;
            assert!(
                (lhs - rhs).abs() <= 1e-8 * scale.max(1.0),
                "stationarity {i}"
            );
        }
        assert!(opt.eta_star > 0.0);
        let risk = phi * z.sqrt() - dot(m.mu(), w);
        assert!((opt.risk_value - risk).abs() <= 1e-9 * risk.abs().max(1.0));
        let via_lambda = -opt.lambda_star * budget;
        assert!((opt.risk_value - via_lambda).abs() <= 1e-9 * risk.abs().max(1.0));
    }

    #[test]
    fn invariants_for_several_budgets() {
        let sigma = CovMatrix::from_rows(&[
            vec![2.0, 0.3, -0.2],
            vec![0.3, 1.0, 0.1],
            vec![-0.2, 0.1, 0.5],
        ])
        .unwrap();
        let m = moments(vec![0.1, -0.05, 0.2], sigma);
        for budget in [1.0, 3.0, 0.25, -1.0, -2.5] {
            let opt = optimize(&m, &spec(1.5), budget).unwrap();
            assert_invariants(&m, 1.5, &opt, budget);
        }
    }

    /// Brute-force minimization over the single free coordinate of a
    /// two-asset problem, by golden-section search on a convex function.
    fn two_asset_oracle(m: &MomentParams, phi: f64) -> f64 {
        let f = |x: f64| risk_of_weights(&[x, 1.0 - x], m, phi).unwrap();
        let (mut lo, mut hi) = (-50.0_f64, 50.0_f64);
        let g = (5.0_f64.sqrt() - 1.0) / 2.0;
        for _ in 0..300 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) < f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        f(0.5 * (lo + hi))
    }

    #[test]
    fn diagonal_two_asset_matches_search() {
        let m = moments(vec![2.0, 1.0], CovMatrix::diagonal(&[4.0, 1.0]));
        let opt = optimize(&m, &spec(3.0), 1.0).unwrap();
        let oracle = two_asset_oracle(&m, 3.0);
        assert!((opt.risk_value - oracle).abs() <= 1e-8);
        assert_invariants(&m, 3.0, &opt, 1.0);
    }

    #[test]
    fn minus_root_is_the_minimum() {
        // The other root of the multiplier quadratic is a worse point.
        let m = moments(vec![2.0, 1.0], CovMatrix::diagonal(&[4.0, 1.0]));
        let a = Analysis::new(&m, 3.0).unwrap();
        let s = a.report.scalars.unwrap();
        let plus = s.b / s.a + a.report.discriminant.sqrt() / s.a;
        let dir = a.combination(1.0, plus).unwrap();
        let total: f64 = dir.iter().sum();
        let w: Vec<f64> = dir.iter().map(|d| d / total).collect();
        let opt = optimize(&m, &spec(3.0), 1.0).unwrap();
        assert!(risk_of_weights(&w, &m, 3.0).unwrap() > opt.risk_value);
    }

    #[test]
    fn q0_examples() {
        let m = MomentParams::iid_standard(5);
        let s = spec(2.0);
        let opt = optimize(&m, &s, 1.0).unwrap();
        let e = q0_ratio(&m, &s, &opt.portfolio).unwrap();
        assert!((e.q0 - 1.0).abs() < 1e-14);

        let corner = Portfolio::new(vec![1.0, 0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        let e = q0_ratio(&m, &s, &corner).unwrap();
        assert!((e.q0_squared - 5.0).abs() < 1e-12);
        assert!((e.q0 - 5.0_f64.sqrt()).abs() < 1e-12);

        let w = vec![1.2, 0.9, 0.7, 1.4, 0.8];
        let via_ratio = q0_ratio(&m, &s, &Portfolio::from_weights(w.clone())).unwrap();
        assert!((via_ratio.q0_squared - iid_q0_squared(&w)).abs() < 1e-10);
        // Budget convention does not matter.
        let unit: Vec<f64> = w.iter().map(|v| v / 5.0).collect();
        let unit_ratio = q0_ratio(&m, &s, &Portfolio::from_weights(unit)).unwrap();
        assert!((via_ratio.q0 - unit_ratio.q0).abs() < 1e-12);
    }

    #[test]
    fn q0_errors() {
        let m = moments(vec![1.0, -1.0], CovMatrix::identity(2));
        let p = Portfolio::equal_weights(2, 1.0);
        assert!(matches!(
            q0_ratio(&m, &spec(1.0), &p),
            Err(Error::Contract(_))
        ));
        // Strong positive drift makes the optimal risk negative.
        let m = moments(vec![5.0, 5.0], CovMatrix::identity(2));
        assert!(matches!(
            q0_ratio(&m, &spec(1.0), &p),
            Err(Error::DegenerateDenominator(_))
        ));
    }
}
