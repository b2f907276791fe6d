//! Parametric downside-risk portfolio optimization under estimation noise.
//!
//! For Gaussian returns, Value-at-Risk, Expected Shortfall and semivariance
//! all take the form `φ·σ − μ`. Minimizing that risk on the budget
//! hyperplane has a closed-form solution which exists only when the sample
//! moments satisfy a discriminant condition, so with estimated moments the
//! optimization succeeds with a probability that drops from one to zero
//! around a critical aspect ratio `N/T = φ²/(φ² + 1)`.
//!
//! The crate provides the optimizer ([`optimizer`]), seeded sampling
//! ([`sampling`]), a parallel deterministic Monte Carlo harness
//! ([`harness`]), thermodynamic-limit predictions ([`replica`]), probit
//! curve fitting ([`fitting`]) and the fixed CSV schemas used by the
//! command-line tool ([`tables`]).

// `!(x > y)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fitting;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod replica;
pub mod risk;
pub mod sampling;
pub mod special;
pub mod tables;

pub use error::{Error, Result};
pub use fitting::{contour_r, critical_point_intersection, fit_probit, ProbitFit};
pub use harness::{
    estimate_feasibility_prob, measure_q0, run_trial, scan_phase_grid, GridCell, PhasePoint,
    QZeroStats, TrialRecord, TruthKind, Workers,
};
pub use linalg::{cholesky, quad_scalars, spd_solve, CholeskyFactor, CovMatrix, QuadScalars};
pub use optimizer::{
    check_feasibility, infeasibility_witness, optimize, q0_ratio, EstimationError,
    FeasibilityReport, FeasibilityStatus, OptimalPortfolio,
};
pub use replica::{
    expected_q0_squared, phase_boundary_rc, phase_boundary_rc_alpha, variance_benchmark_q0_squared,
    ReplicaPrediction,
};
pub use risk::{
    alpha_of_phi, phi_of_alpha, portfolio_risk, MomentParams, Origin, Portfolio, RiskKind, RiskSpec,
};
pub use sampling::{
    estimate_moments, gen_correlated_sample, gen_iid_sample, ReturnSample, SeedSpec,
};
pub use special::{es_tail_factor, norm_cdf, norm_inv_cdf, Probability};
