mod common;

use common::v;
use pontryagin::pmp::{check_pmp, BoundarySpec, EndpointSpec, PmpOptions, TimeMode};
use pontryagin::shooting::{shoot, Guess, ShootingOptions, ShootingProblem};
use pontryagin::system::{ControlSet, ControlSystem};
use proptest::prelude::*;

fn cross_validate(prob: &ShootingProblem, guess: &Guess) -> Result<(), TestCaseError> {
    let opts = ShootingOptions::default();
    let res = shoot(prob, guess, &opts).unwrap();
    prop_assert!(res.converged, "residual {}", res.residual_norm);
    let pmp = PmpOptions {
        tol: 10.0 * opts.tol,
        ..PmpOptions::default()
    };
    let rep = check_pmp(&prob.sys, &res.extremal, &prob.bounds, &pmp).unwrap();
    prop_assert!(rep.passed(), "{:?}", rep.failures());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn time_optimal_results_pass_the_checker(x1 in 0.3..1.5f64, x2 in -0.5..0.5f64) {
        let bounds = BoundarySpec {
            mode: TimeMode::Free,
            initial: EndpointSpec::Point(v(&[x1, x2])),
            terminal: EndpointSpec::Point(v(&[0.0, 0.0])),
        };
        let prob = ShootingProblem::new(ControlSystem::double_integrator(), bounds, 0.0, 2.0).unwrap();
        cross_validate(&prob, &Guess::new(v(&[0.5, 0.5])))?;
    }

    #[test]
    fn lqr_results_pass_the_checker(x0 in -2.0..2.0f64, q in 0.1..3.0f64, horizon in 0.5..2.0f64) {
        let sys = ControlSystem::new("lqr", 1, 1, |_, u| v(&[u[0]]), ControlSet::unbounded(1))
            .unwrap()
            .with_cost(move |x, u| q * x[0] * x[0] + u[0] * u[0]);
        let bounds = BoundarySpec {
            mode: TimeMode::Fixed,
            initial: EndpointSpec::Point(v(&[x0])),
            terminal: EndpointSpec::Manifold { anchor: v(&[0.0]), tangent_basis: vec![v(&[1.0])] },
        };
        let prob = ShootingProblem::new(sys, bounds, 0.0, horizon).unwrap();
        cross_validate(&prob, &Guess::new(v(&[0.0])))?;
    }
}
