//! Parametric downside risk measures `R = φ·σ − μ` for Gaussian returns.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{dot, CovMatrix};
use crate::special::{cdf, es_tail_factor, inverse_mills, norm_inv_cdf, Probability};

/// The family of risk measure.
/// `1/√2` as computed by `1.0 / 2.0_f64.sqrt()`, one ulp below the
/// nearest double. With it the semivariance boundary rounds to exactly 1/3.
pub const SEMIVARIANCE_PHI: f64 = 0.707_106_781_186_547_5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    #[serde(rename = "var")]
    VaR,
    #[serde(rename = "es")]
    ES,
    Semivariance,
    /// φ supplied directly.
    #[serde(rename = "phi")]
    RawPhi,
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RiskKind::VaR => "var",
            RiskKind::ES => "es",
            RiskKind::Semivariance => "semivariance",
            RiskKind::RawPhi => "phi",
        })
    }
}

impl FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(Self::VaR),
            "es" => Ok(Self::ES),
            "semivariance" => Ok(Self::Semivariance),
            "phi" => Ok(Self::RawPhi),
            other => Err(domain(format!("unknown risk measure '{other}'"))),
        }
    }
}

/// A risk measure with its resolved tail factor φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskSpec {
    kind: RiskKind,
    alpha: Option<Probability>,
    phi: f64,
}

impl RiskSpec {
    pub fn var(alpha: f64) -> Result<Self> {
        let alpha = Probability::new(alpha)?;
        Ok(Self {
            kind: RiskKind::VaR,
            alpha: Some(alpha),
            phi: phi_of_alpha(RiskKind::VaR, alpha)?,
        })
    }

    pub fn es(alpha: f64) -> Result<Self> {
        let alpha = Probability::new(alpha)?;
        Ok(Self {
            kind: RiskKind::ES,
            alpha: Some(alpha),
            phi: phi_of_alpha(RiskKind::ES, alpha)?,
        })
    }

    /// Semi standard deviation, `φ = 1/√2`.
    pub fn semivariance() -> Self {
        Self {
            kind: RiskKind::Semivariance,
            alpha: None,
            phi: SEMIVARIANCE_PHI,
        }
    }

    pub fn raw_phi(phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi.is_finite()) {
            return Err(domain(format!(
                "phi must be positive and finite, got {phi}"
            )));
        }
        Ok(Self {
            kind: RiskKind::RawPhi,
            alpha: None,
            phi,
        })
    }

    /// Builds a spec from a kind plus whichever of α or φ it needs.
    pub fn from_parts(kind: RiskKind, alpha: Option<f64>, phi: Option<f64>) -> Result<Self> {
        match kind {
            RiskKind::VaR | RiskKind::ES => {
                let alpha = alpha.ok_or_else(|| domain(format!("measure {kind} needs alpha")))?;
                if kind == RiskKind::VaR {
                    Self::var(alpha)
                } else {
                    Self::es(alpha)
                }
            }
            RiskKind::Semivariance => Ok(Self::semivariance()),
            RiskKind::RawPhi => {
                Self::raw_phi(phi.ok_or_else(|| domain("measure phi needs a phi value"))?)
            }
        }
    }

    pub fn kind(&self) -> RiskKind {
        self.kind
    }

    pub fn alpha(&self) -> Option<Probability> {
        self.alpha
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Tail factor φ(α) of a measure.
pub fn phi_of_alpha(kind: RiskKind, alpha: Probability) -> Result<f64> {
    let a = alpha.value();
    match kind {
        RiskKind::VaR => {
            if !(a > 0.5 && a < 1.0) {
                return Err(domain(format!("VaR confidence level {a} outside (0.5, 1)")));
            }
            norm_inv_cdf(alpha)
        }
        RiskKind::ES => es_tail_factor(alpha),
        RiskKind::Semivariance => Ok(SEMIVARIANCE_PHI),
        RiskKind::RawPhi => Err(Error::Unsupported(
            "phi kind has no confidence level".into(),
        )),
    }
}

/// Confidence level α whose tail factor equals `phi`.
pub fn alpha_of_phi(kind: RiskKind, phi: f64) -> Result<Probability> {
    if !(phi > 0.0 && phi.is_finite()) {
        return Err(domain(format!(
            "phi must be positive and finite, got {phi}"
        )));
    }
    match kind {
        RiskKind::VaR => Probability::open(cdf(phi))
            .map_err(|_| domain(format!("VaR level for phi = {phi} rounds to 1"))),
        RiskKind::ES => {
            let x = es_quantile_of_phi(phi)?;
            Probability::open(cdf(x))
                .map_err(|_| domain(format!("ES level for phi = {phi} rounds to 0 or 1")))
        }
        RiskKind::Semivariance | RiskKind::RawPhi => Err(Error::Unsupported(format!(
            "measure {kind} has no confidence-level parameterization"
        ))),
    }
}

/// Solves `inverse_mills(x) = phi` for the quantile `x = Φ⁻¹(α)`.
///
/// The inverse Mills ratio is strictly increasing with derivative
/// `m(m − x) ∈ (0, 1)`, so a bracketed Newton iteration is safe. Working in
/// the quantile rather than in α keeps precision as α → 1.
fn es_quantile_of_phi(phi: f64) -> Result<f64> {
    let f = |x: f64| inverse_mills(x) - phi;
    let (mut lo, mut hi) = (-40.0_f64, phi.max(1.0));
    if f(lo) > 0.0 {
        return Err(domain(format!("ES phi = {phi} is below the bracket")));
    }
    while f(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(domain(format!("ES phi = {phi} cannot be bracketed")));
        }
    }
    // m(x) > x, so phi is an upper bound on the root and phi - 1/phi a
    // lower one for phi >= 1.
    let mut x = if phi > 1.0 {
        phi - 1.0 / phi
    } else {
        0.5 * (lo + hi)
    };
    for _ in 0..200 {
        let m = inverse_mills(x);
        let fx = m - phi;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let slope = m * (m - x);
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) || hi - lo <= 1e-15 * x.abs().max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Budget-constrained portfolio weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    weights: Vec<f64>,
    budget: f64,
}

impl Portfolio {
    /// Weights must sum to `budget` within `1e-10 · max(1, |budget|)`.
    pub fn new(weights: Vec<f64>, budget: f64) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if (sum - budget).abs() > 1e-10 * budget.abs().max(1.0) {
            return Err(domain(format!("weights sum to {sum}, budget is {budget}")));
        }
        Ok(Self { weights, budget })
    }

    /// Uses the weight sum as the budget.
    pub fn from_weights(weights: Vec<f64>) -> Self {
        let budget = weights.iter().sum();
        Self { weights, budget }
    }

    pub fn equal_weights(n: usize, budget: f64) -> Self {
        Self {
            weights: vec![budget / n as f64; n],
            budget,
        }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Whether moments are the data-generating truth or a sample estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    True,
    Estimated { n_obs: usize },
}

/// Mean vector and covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentParams {
    mu: Vec<f64>,
    sigma: CovMatrix,
    origin: Origin,
}

impl MomentParams {
    pub fn new(mu: Vec<f64>, sigma: CovMatrix, origin: Origin) -> Result<Self> {
        if mu.len() != sigma.dim() {
            return Err(Error::Shape {
                expected: sigma.dim(),
                actual: mu.len(),
            });
        }
        Ok(Self { mu, sigma, origin })
    }

    /// Zero means, identity covariance.
    pub fn iid_standard(n: usize) -> Self {
        Self {
            mu: vec![0.0; n],
            sigma: CovMatrix::identity(n),
            origin: Origin::True,
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &CovMatrix {
        &self.sigma
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `φ·√(wᵀΣw) − μᵀw`.
pub fn portfolio_risk(p: &Portfolio, m: &MomentParams, spec: &RiskSpec) -> Result<f64> {
    risk_of_weights(p.weights(), m, spec.phi())
}

pub(crate) fn risk_of_weights(w: &[f64], m: &MomentParams, phi: f64) -> Result<f64> {
    let mut variance = m.sigma.quad_form(w)?;
    if variance < 0.0 {
        let scale = dot(w, w) * (0..m.dim()).fold(0.0_f64, |a, i| a.max(m.sigma.get(i, i)));
        if variance < -1e-12 * scale.max(1.0) {
            return Err(Error::Indefinite(variance));
        }
        variance = 0.0;
    }
    Ok(phi * variance.sqrt() - dot(&m.mu, w))
}
