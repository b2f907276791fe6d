mod common;

use phasefolio::{
    check_feasibility, infeasibility_witness, optimize, portfolio_risk, FeasibilityStatus,
    Portfolio, RiskSpec, SeedSpec,
};

#[test]
fn closed_form_matches_numerical_minimizer() {
    let mut checked = 0;
    for k in 0..400u64 {
        let n = 2 + (k % 7) as usize;
        let m = common::random_moments(SeedSpec::new(5, k), n, 0.5);
        let res = common::residual_na(&m);
        let phi = res.max(1e-3).sqrt() * (1.1 + (k % 5) as f64 * 0.4);
        let spec = RiskSpec::raw_phi(phi).unwrap();
        if !check_feasibility(&m, &spec).unwrap().is_feasible() {
            continue;
        }
        for budget in [1.0, n as f64, 0.3] {
            let closed = optimize(&m, &spec, budget).unwrap();
            let (numeric, w) = common::numeric_min_risk(&m, phi, budget);
            let rel = (closed.risk_value - numeric).abs() / closed.risk_value.abs();
            assert!(
                rel <= 1e-7,
                "instance {k}, budget {budget}: {} vs {numeric}",
                closed.risk_value
            );
            let at_numeric =
                portfolio_risk(&Portfolio::new(w, budget).unwrap(), &m, &spec).unwrap();
            assert!(closed.risk_value <= at_numeric + 1e-12 * at_numeric.abs());
        }
        checked += 1;
    }
    assert!(checked >= 100, "only {checked} feasible instances");
}

#[test]
fn dichotomy_on_random_instances() {
    for k in 0..300u64 {
        let n = 2 + (k % 6) as usize;
        let m = common::random_moments(SeedSpec::new(6, k), n, 1.0);
        let res = common::residual_na(&m);
        let phi = res.sqrt() * (0.2 + 0.2 * (k % 9) as f64);
        let spec = RiskSpec::raw_phi(phi.max(1e-6)).unwrap();
        match check_feasibility(&m, &spec).unwrap().status {
            FeasibilityStatus::Feasible => {
                assert!(optimize(&m, &spec, 1.0).is_ok());
                assert!(infeasibility_witness(&m, &spec).is_err());
            }
            FeasibilityStatus::InfeasibleDiscriminant => {
                assert!(optimize(&m, &spec, 1.0).is_err());
                let u = infeasibility_witness(&m, &spec).unwrap();
                let w0 = Portfolio::equal_weights(n, 1.0);
                let r = |t: f64| {
                    let w = w0
                        .weights()
                        .iter()
                        .zip(&u)
                        .map(|(w, u)| w + t * u)
                        .collect();
                    portfolio_risk(&Portfolio::from_weights(w), &m, &spec).unwrap()
                };
                assert!(r(1e3) < r(1e2) && r(1e2) < r(1e1));
            }
            FeasibilityStatus::InfeasibleSingular => panic!("random SPD truth reported singular"),
        }
    }
}
