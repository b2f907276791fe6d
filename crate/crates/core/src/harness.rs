//! Monte Carlo estimation of feasibility probabilities and conditional
//! estimation errors.
//!
//! Each trial draws a sample from the true distribution, estimates the
//! moments, tests feasibility of the estimated problem and, when asked,
//! evaluates the estimated optimum under the true risk. Trial seeds are a
//! pure function of `(master_seed, cell, trial)`, results are collected in
//! index order, and counts are integers, so output does not depend on the
//! number of workers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{cholesky, CholeskyFactor, CovMatrix};
use crate::optimizer::{q0_against, Analysis};
use crate::replica::phase_boundary_rc;
use crate::risk::{MomentParams, Origin, RiskSpec};
use crate::sampling::{estimate_moments, gen_iid_sample, gen_with_factor, SeedSpec};

/// How many threads execute trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Workers {
    Serial,
    Threads(usize),
    /// Rayon's global pool.
    #[default]
    Max,
}

impl Workers {
    /// `0` means all available cores.
    pub fn from_count(count: usize) -> Self {
        match count {
            0 => Workers::Max,
            1 => Workers::Serial,
            n => Workers::Threads(n),
        }
    }

    /// Maps `f` over `0..count`, returning results in index order.
    pub fn map<T, F>(self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        match self {
            Workers::Serial => (0..count).map(f).collect(),
            Workers::Max => (0..count).into_par_iter().map(f).collect(),
            Workers::Threads(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| domain(format!("cannot build worker pool: {e}")))?;
                pool.install(|| (0..count).into_par_iter().map(f).collect())
            }
        }
    }
}

/// Outcome of one simulated sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub feasible: bool,
    pub q0_squared: Option<f64>,
}

/// The true data-generating distribution for a trial set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TruthKind {
    /// Zero means, identity covariance.
    Iid,
    /// Zero means with a fixed covariance; every grid cell must match its
    /// dimension.
    Correlated(CovMatrix),
}

impl TruthKind {
    pub fn moments(&self, n_assets: usize) -> Result<MomentParams> {
        match self {
            TruthKind::Iid => Ok(MomentParams::iid_standard(n_assets)),
            TruthKind::Correlated(sigma) => {
                if sigma.dim() != n_assets {
                    return Err(Error::Shape {
                        expected: n_assets,
                        actual: sigma.dim(),
                    });
                }
                MomentParams::new(vec![0.0; n_assets], sigma.clone(), Origin::True)
            }
        }
    }
}

/// A true distribution prepared for repeated trials.
#[derive(Debug, Clone)]
pub struct Experiment {
    truth: MomentParams,
    spec: RiskSpec,
    /// `None` for the identity covariance.
    factor: Option<CholeskyFactor>,
    has_mean: bool,
    /// True optimal risk at unit budget.
    optimal_risk: f64,
}

impl Experiment {
    pub fn new(truth: MomentParams, spec: RiskSpec) -> Result<Self> {
        if truth.origin() != Origin::True {
            return Err(Error::Contract(
                "experiment truth must be true moments".into(),
            ));
        }
        let analysis = Analysis::new(&truth, spec.phi())?;
        if !analysis.report.is_feasible() {
            return Err(Error::Contract(format!(
                "true problem is {:?}",
                analysis.report.status
            )));
        }
        let optimal_risk = analysis.optimize(&truth, spec.phi(), 1.0)?.risk_value;
        let factor = if truth.sigma().is_identity() {
            None
        } else {
            Some(cholesky(truth.sigma())?)
        };
        let has_mean = truth.mu().iter().any(|&m| m != 0.0);
        Ok(Self {
            truth,
            spec,
            factor,
            has_mean,
            optimal_risk,
        })
    }

    pub fn n_assets(&self) -> usize {
        self.truth.dim()
    }

    pub fn spec(&self) -> &RiskSpec {
        &self.spec
    }

    pub fn truth(&self) -> &MomentParams {
        &self.truth
    }

    /// Runs one trial; q₀² is computed only when `with_q0` is set.
    pub fn trial(&self, n_obs: usize, seed: SeedSpec, with_q0: bool) -> Result<TrialRecord> {
        let n = self.n_assets();
        if n_obs < n + 1 {
            // Rank deficiency: the estimated covariance is singular.
            return Ok(TrialRecord {
                feasible: false,
                q0_squared: None,
            });
        }
        let mut sample = match &self.factor {
            None => gen_iid_sample(n, n_obs, seed)?,
            Some(f) => gen_with_factor(f, n_obs, seed)?,
        };
        if self.has_mean {
            sample.shift_means(self.truth.mu());
        }
        let estimated = estimate_moments(&sample)?;
        let phi = self.spec.phi();
        let analysis = Analysis::new(&estimated, phi)?;
        if !analysis.report.is_feasible() {
            return Ok(TrialRecord {
                feasible: false,
                q0_squared: None,
            });
        }
        let q0_squared = if with_q0 {
            let w = analysis.optimize(&estimated, phi, 1.0)?;
            Some(q0_against(&self.truth, phi, w.portfolio.weights(), self.optimal_risk)?.q0_squared)
        } else {
            None
        };
        Ok(TrialRecord {
            feasible: true,
            q0_squared,
        })
    }
}

/// One trial against `truth`: sample, estimate, test feasibility and, if
/// feasible, measure q₀².
pub fn run_trial(
    n_assets: usize,
    n_obs: usize,
    spec: &RiskSpec,
    seed: SeedSpec,
    truth: &MomentParams,
) -> Result<TrialRecord> {
    if truth.dim() != n_assets {
        return Err(Error::Shape {
            expected: n_assets,
            actual: truth.dim(),
        });
    }
    Experiment::new(truth.clone(), *spec)?.trial(n_obs, seed, true)
}

/// A Monte Carlo estimate of the feasibility probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub n_assets: usize,
    pub n_obs: usize,
    pub phi: f64,
    pub trials: usize,
    pub successes: usize,
    pub p_hat: f64,
    pub master_seed: u64,
}

impl PhasePoint {
    pub fn new(
        n_assets: usize,
        n_obs: usize,
        phi: f64,
        trials: usize,
        successes: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if trials == 0 || successes > trials {
            return Err(domain(format!(
                "invalid counts: {successes} successes of {trials} trials"
            )));
        }
        Ok(Self {
            n_assets,
            n_obs,
            phi,
            trials,
            successes,
            p_hat: successes as f64 / trials as f64,
            master_seed,
        })
    }

    /// Aspect ratio `N/T`.
    pub fn r(&self) -> f64 {
        self.n_assets as f64 / self.n_obs as f64
    }

    /// `√(p̂(1 − p̂)/K)`.
    pub fn binomial_stderr(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }

    /// Whether `T − 1 < N`, where feasibility is structurally impossible.
    pub fn is_structural_zero(&self) -> bool {
        self.n_obs < self.n_assets + 1
    }
}

/// A `(N, T, φ)` point of a scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub n_assets: usize,
    pub n_obs: usize,
    pub phi: f64,
}

impl GridCell {
    /// Cell with `T = round(N/r)`.
    pub fn from_ratio(n_assets: usize, r: f64, phi: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(domain(format!("aspect ratio must be positive, got {r}")));
        }
        let n_obs = (n_assets as f64 / r).round() as usize;
        if n_obs < 2 {
            return Err(domain(format!("r = {r} gives fewer than two observations")));
        }
        Ok(Self {
            n_assets,
            n_obs,
            phi,
        })
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        Err(domain("number of trials must be at least 1"))
    } else {
        Ok(())
    }
}

/// Fraction of `trials` iid samples on which the estimated problem is
/// feasible.
pub fn estimate_feasibility_prob(
    n_assets: usize,
    n_obs: usize,
    spec: &RiskSpec,
    trials: usize,
    master_seed: u64,
    workers: Workers,
) -> Result<PhasePoint> {
    let cell = GridCell {
        n_assets,
        n_obs,
        phi: spec.phi(),
    };
    let mut points = scan_phase_grid(&[cell], trials, master_seed, &TruthKind::Iid, workers)?;
    Ok(points.remove(0))
}

/// One [`PhasePoint`] per grid cell; cell `c`, trial `k` uses seed
/// `(master_seed, c, k)`.
pub fn scan_phase_grid(
    grid: &[GridCell],
    trials: usize,
    master_seed: u64,
    truth: &TruthKind,
    workers: Workers,
) -> Result<Vec<PhasePoint>> {
    if grid.is_empty() {
        return Err(domain("phase grid is empty"));
    }
    check_trials(trials)?;
    let experiments = grid
        .iter()
        .map(|cell| Experiment::new(truth.moments(cell.n_assets)?, RiskSpec::raw_phi(cell.phi)?))
        .collect::<Result<Vec<_>>>()?;
    let outcomes = workers.map(grid.len() * trials, |task| {
        let (cell, trial) = (task / trials, task % trials);
        let seed = SeedSpec::with_stream(master_seed, cell as u64, trial as u64);
        Ok(experiments[cell]
            .trial(grid[cell].n_obs, seed, false)?
            .feasible)
    })?;
    grid.iter()
        .zip(outcomes.chunks_exact(trials))
        .map(|(cell, flags)| {
            let successes = flags.iter().filter(|&&f| f).count();
            PhasePoint::new(
                cell.n_assets,
                cell.n_obs,
                cell.phi,
                trials,
                successes,
                master_seed,
            )
        })
        .collect()
}

/// Conditional statistics of q₀² over feasible trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QZeroStats {
    pub trials: usize,
    pub n_feasible: usize,
    pub mean_q0_squared: f64,
    /// Sample variance (divisor `n − 1`); zero for a single trial.
    pub variance_q0_squared: f64,
    pub samples: Option<Vec<f64>>,
}

impl QZeroStats {
    pub fn from_samples(trials: usize, samples: Vec<f64>, keep: bool) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyStatistics { trials });
        }
        let n = samples.len() as f64;
        let mean = neumaier_sum(samples.iter().copied()) / n;
        let variance = if samples.len() > 1 {
            neumaier_sum(samples.iter().map(|q| (q - mean) * (q - mean))) / (n - 1.0)
        } else {
            0.0
        };
        Ok(Self {
            trials,
            n_feasible: samples.len(),
            mean_q0_squared: mean,
            variance_q0_squared: variance,
            samples: keep.then_some(samples),
        })
    }

    /// Standard error of the conditional mean.
    pub fn std_error(&self) -> f64 {
        (self.variance_q0_squared / self.n_feasible as f64).sqrt()
    }
}

/// Compensated summation in iteration order.
pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut compensation = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            compensation += (sum - t) + v;
        } else {
            compensation += (v - t) + sum;
        }
        sum = t;
    }
    sum + compensation
}

/// Where an aspect ratio sits relative to the phase boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryProximity {
    /// `r ≤ r_c/2`
    Comfortable,
    /// `r_c/2 < r < r_c`; finite-size effects may dominate.
    Near,
    /// `r ≥ r_c`; the thermodynamic-limit error diverges.
    Beyond,
}

pub fn boundary_proximity(r: f64, phi: f64) -> Result<BoundaryProximity> {
    let r_c = phase_boundary_rc(phi)?;
    Ok(if r >= r_c {
        BoundaryProximity::Beyond
    } else if r > 0.5 * r_c {
        BoundaryProximity::Near
    } else {
        BoundaryProximity::Comfortable
    })
}

/// Mean and variance of q₀² over the feasible trials among `trials`.
pub fn measure_q0(
    n_assets: usize,
    n_obs: usize,
    spec: &RiskSpec,
    trials: usize,
    master_seed: u64,
    truth: &MomentParams,
    workers: Workers,
) -> Result<QZeroStats> {
    measure_q0_with(
        n_assets,
        n_obs,
        spec,
        trials,
        master_seed,
        truth,
        workers,
        false,
    )
}

/// Like [`measure_q0`], optionally keeping the per-trial values.
#[allow(clippy::too_many_arguments)]
pub fn measure_q0_with(
    n_assets: usize,
    n_obs: usize,
    spec: &RiskSpec,
    trials: usize,
    master_seed: u64,
    truth: &MomentParams,
    workers: Workers,
    keep_samples: bool,
) -> Result<QZeroStats> {
    check_trials(trials)?;
    if truth.dim() != n_assets {
        return Err(Error::Shape {
            expected: n_assets,
            actual: truth.dim(),
        });
    }
    let experiment = Experiment::new(truth.clone(), *spec)?;
    let records = workers.map(trials, |k| {
        experiment.trial(n_obs, SeedSpec::new(master_seed, k as u64), true)
    })?;
    let samples: Vec<f64> = records.iter().filter_map(|r| r.q0_squared).collect();
    QZeroStats::from_samples(trials, samples, keep_samples)
}
