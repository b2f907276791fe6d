//! Probit curves `g(r) = 1 − Φ((r − μ)/σ)` fitted to phase scans by
//! binomial maximum likelihood.
//!
//! The likelihood is maximized over `(μ, ln σ)` by damped Newton steps with
//! backtracking. When the observed Hessian is not negative definite the
//! step falls back to Fisher scoring, and if no ascent direction makes
//! progress a compass search takes over for a while before Newton resumes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::PhasePoint;
use crate::special::{cdf, inv_cdf, log_norm_cdf, norm_pdf, Probability};

const MAX_ITERATIONS: usize = 500;
const GRADIENT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitFit {
    pub mu_fit: f64,
    pub sigma_fit: f64,
    pub log_likelihood: f64,
    pub n_points: usize,
    /// Asymptotic standard errors from the observed information.
    pub se_mu: f64,
    pub se_sigma: f64,
    pub iterations: usize,
}

impl ProbitFit {
    /// Curve value at aspect ratio `r`.
    pub fn curve(&self, r: f64) -> f64 {
        probit_curve(self.mu_fit, self.sigma_fit, r)
    }
}

/// `1 − Φ((r − μ)/σ)`.
pub fn probit_curve(mu: f64, sigma: f64, r: f64) -> f64 {
    cdf((mu - r) / sigma)
}

/// A binomial observation at abscissa `x`.
#[derive(Debug, Clone, Copy)]
struct Obs {
    x: f64,
    successes: f64,
    failures: f64,
}

fn observations(points: &[PhasePoint]) -> Vec<Obs> {
    points
        .iter()
        .filter(|p| !p.is_structural_zero())
        .map(|p| Obs {
            x: p.r(),
            successes: p.successes as f64,
            failures: (p.trials - p.successes) as f64,
        })
        .collect()
}

/// Log-likelihood, gradient and observed Hessian in `(μ, s = ln σ)`.
struct Eval {
    value: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
    fisher: [[f64; 2]; 2],
}

fn evaluate(obs: &[Obs], mu: f64, s: f64) -> Eval {
    let inv_sigma = (-s).exp();
    let mut e = Eval {
        value: 0.0,
        grad: [0.0; 2],
        hess: [[0.0; 2]; 2],
        fisher: [[0.0; 2]; 2],
    };
    for o in obs {
        let z = (o.x - mu) * inv_sigma;
        // g = Φ(−z): success probability; 1 − g = Φ(z).
        let (log_g, log_not_g) = (log_norm_cdf(-z), log_norm_cdf(z));
        e.value += o.successes * log_g + o.failures * log_not_g;
        // h1 = pdf/Φ(−z), h0 = pdf/Φ(z)
        let h1 = (-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_g).exp();
        let h0 = (-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - log_not_g).exp();
        let dz = -o.successes * h1 + o.failures * h0;
        let dzz = -o.successes * h1 * (h1 - z) - o.failures * h0 * (z + h0);
        // ∂z/∂μ = −1/σ, ∂z/∂s = −z, ∂²z/∂μ∂s = 1/σ, ∂²z/∂s² = z.
        let jz = [-inv_sigma, -z];
        e.grad[0] += dz * jz[0];
        e.grad[1] += dz * jz[1];
        e.hess[0][0] += dzz * jz[0] * jz[0];
        e.hess[0][1] += dzz * jz[0] * jz[1] + dz * inv_sigma;
        e.hess[1][1] += dzz * jz[1] * jz[1] + dz * z;
        // Expected information: K · pdf² / (g(1 − g)).
        let info = (o.successes + o.failures) * h1 * h0;
        e.fisher[0][0] += info * jz[0] * jz[0];
        e.fisher[0][1] += info * jz[0] * jz[1];
        e.fisher[1][1] += info * jz[1] * jz[1];
    }
    e.hess[1][0] = e.hess[0][1];
    e.fisher[1][0] = e.fisher[0][1];
    e
}

fn norm2(v: [f64; 2]) -> f64 {
    (v[0] * v[0] + v[1] * v[1]).sqrt()
}

/// Solves `M d = g` for a 2×2 symmetric positive definite `M`.
fn solve_spd2(m: [[f64; 2]; 2], g: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if !(m[0][0] > 0.0 && det > 0.0) {
        return None;
    }
    Some([
        (m[1][1] * g[0] - m[0][1] * g[1]) / det,
        (m[0][0] * g[1] - m[1][0] * g[0]) / det,
    ])
}

/// Starting point from the two points bracketing p = 1/2.
fn initializer(obs: &[Obs]) -> (f64, f64) {
    let mut sorted: Vec<(f64, f64)> = obs
        .iter()
        .map(|o| (o.x, o.successes / (o.successes + o.failures)))
        .collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let span = (sorted.last().unwrap().0 - sorted[0].0).max(1e-3);
    for w in sorted.windows(2) {
        let ((x0, p0), (x1, p1)) = (w[0], w[1]);
        if p0 >= 0.5 && p1 <= 0.5 && p0 > p1 && x1 > x0 {
            let mu = x0 + (p0 - 0.5) * (x1 - x0) / (p0 - p1);
            let slope = (p0 - p1) / (x1 - x0);
            let sigma = (norm_pdf(0.0) / slope).clamp(1e-4 * span, 10.0 * span);
            return (mu, sigma.ln());
        }
    }
    let nearest = sorted
        .iter()
        .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()))
        .unwrap();
    (nearest.0, (0.25 * span).ln())
}

/// Compass search over `(μ, s)` from `start`, returning the improved point.
fn compass_search(obs: &[Obs], start: (f64, f64), mut step: f64) -> (f64, f64) {
    let (mut mu, mut s) = start;
    let mut best = evaluate(obs, mu, s).value;
    for _ in 0..2000 {
        let mut improved = false;
        for (dm, ds) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)] {
            let (m2, s2) = (mu + dm * step * s.exp(), s + ds * step);
            let v = evaluate(obs, m2, s2).value;
            if v > best {
                best = v;
                mu = m2;
                s = s2;
                improved = true;
                break;
            }
        }
        if !improved {
            step *= 0.5;
            if step < 1e-10 {
                break;
            }
        }
    }
    (mu, s)
}

/// Maximum-likelihood probit fit to points sharing `(N, φ)`.
///
/// Points with `T − 1 < N` carry no information about the curve shape and
/// are left out.
pub fn fit_probit(points: &[PhasePoint]) -> Result<ProbitFit> {
    let obs = observations(points);
    if obs.len() < 2 {
        return Err(Error::UnidentifiableFit(format!(
            "need at least two usable points, got {}",
            obs.len()
        )));
    }
    if obs.iter().all(|o| o.successes == 0.0 || o.failures == 0.0) {
        return Err(Error::UnidentifiableFit(
            "every point is saturated at p = 0 or p = 1".into(),
        ));
    }
    let (mut mu, mut s) = initializer(&obs);
    let mut current = evaluate(&obs, mu, s);
    let mut searched = false;
    for iteration in 0..MAX_ITERATIONS {
        let gnorm = norm2(current.grad);
        if gnorm <= GRADIENT_TOLERANCE {
            return finish(&obs, mu, s, current, iteration);
        }
        let neg_hess = [
            [-current.hess[0][0], -current.hess[0][1]],
            [-current.hess[1][0], -current.hess[1][1]],
        ];
        let directions = [
            solve_spd2(neg_hess, current.grad),
            solve_spd2(current.fisher, current.grad),
        ];
        let mut stepped = false;
        for dir in directions.into_iter().flatten() {
            let mut t = 1.0;
            // Keep the width change bounded per step.
            let ds_max = dir[1].abs();
            if ds_max > 2.0 {
                t = 2.0 / ds_max;
            }
            while t > 1e-12 {
                let (m2, s2) = (mu + t * dir[0], s + t * dir[1]);
                let trial = evaluate(&obs, m2, s2);
                if trial.value.is_finite() && trial.value >= current.value {
                    let gain = trial.value - current.value;
                    mu = m2;
                    s = s2;
                    current = trial;
                    stepped = gain > 0.0 || norm2(current.grad) < gnorm;
                    break;
                }
                t *= 0.5;
            }
            if stepped {
                break;
            }
        }
        if !stepped {
            if searched {
                break;
            }
            searched = true;
            let (m2, s2) = compass_search(&obs, (mu, s), 0.1);
            mu = m2;
            s = s2;
            current = evaluate(&obs, mu, s);
        }
        if s < -40.0 {
            return Err(Error::UnidentifiableFit(
                "curve width collapses to zero (separated data)".into(),
            ));
        }
    }
    let gnorm = norm2(current.grad);
    if gnorm <= GRADIENT_TOLERANCE {
        return finish(&obs, mu, s, current, MAX_ITERATIONS);
    }
    Err(Error::Convergence {
        iterations: MAX_ITERATIONS,
        gradient_norm: gnorm,
    })
}

const MAX_LOG_WIDTH_SE: f64 = 100.0;

fn finish(obs: &[Obs], mu: f64, s: f64, e: Eval, iterations: usize) -> Result<ProbitFit> {
    let sigma = s.exp();
    // Covariance of (μ, s) is the inverse of −H; σ = e^s scales by σ.
    let m = [
        [-e.hess[0][0], -e.hess[0][1]],
        [-e.hess[1][0], -e.hess[1][1]],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let sd_s = (m[0][0] / det).sqrt();
    // A plateau in the width (e.g. separated data) leaves ln σ undetermined.
    if !(det > 0.0 && m[0][0] > 0.0 && sd_s <= MAX_LOG_WIDTH_SE) {
        return Err(Error::UnidentifiableFit(format!(
            "curve width is not determined by the data (sd of ln sigma = {sd_s:.3e})"
        )));
    }
    let (se_mu, se_sigma) = ((m[1][1] / det).sqrt(), sigma * sd_s);
    Ok(ProbitFit {
        mu_fit: mu,
        sigma_fit: sigma,
        log_likelihood: e.value,
        n_points: obs.len(),
        se_mu,
        se_sigma,
        iterations,
    })
}

/// Aspect ratio at which the fitted curve equals `p_target`.
pub fn contour_r(fit: &ProbitFit, p_target: Probability) -> Result<f64> {
    let p = p_target.value();
    if !(p > 0.0 && p < 1.0) {
        return Err(crate::error::domain(format!(
            "contour level {p} outside (0, 1)"
        )));
    }
    Ok(fit.mu_fit + fit.sigma_fit * inv_cdf(1.0 - p))
}

/// The unique `r` where two probit curves cross.
pub fn critical_point_intersection(a: &ProbitFit, b: &ProbitFit) -> Result<f64> {
    let (sa, sb) = (a.sigma_fit, b.sigma_fit);
    if (sa - sb).abs() <= 1e-6 * sa.max(sb) {
        return Err(Error::NoIntersection {
            sigma_a: sa,
            sigma_b: sb,
        });
    }
    Ok((a.mu_fit * sb - b.mu_fit * sa) / (sb - sa))
}
