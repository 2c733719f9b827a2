mod common;

use common::v;
use nalgebra::DVector;
use pontryagin::flows::IntegratorConfig;
use pontryagin::signal::ControlSignal;
use pontryagin::system::{ControlSet, ControlSystem};
use pontryagin::trajectory::{simulate, simulate_extended};
use proptest::prelude::*;

fn pendulum() -> ControlSystem {
    ControlSystem::new(
        "pendulum",
        2,
        1,
        |x, u| v(&[x[1], -x[0].sin() + u[0]]),
        ControlSet::interval(-1.0, 1.0).unwrap(),
    )
    .unwrap()
    .with_cost(|x, u| x[0] * x[0] + 0.5 * u[0] * u[0])
}

/// Piecewise-constant control on `[0, 2]` from sorted switch fractions.
fn control() -> impl Strategy<Value = ControlSignal> {
    (prop::collection::vec(0.05..1.95f64, 0..4), prop::collection::vec(-1.0..1.0f64, 5)).prop_map(|(mut sw, vals)| {
        sw.sort_by(f64::total_cmp);
        sw.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let values = vals.iter().take(sw.len() + 1).map(|u| v(&[*u])).collect();
        ControlSignal::new(0.0, 2.0, sw, values).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn simulation_is_deterministic(u in control(), x0 in prop::collection::vec(-1.0..1.0f64, 2)) {
        let sys = pendulum();
        let cfg = IntegratorConfig::new(1e-2);
        let a = simulate(&sys, &u, &v(&x0), &cfg).unwrap();
        let b = simulate(&sys, &u, &v(&x0), &cfg).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cost_is_additive(u in control(), x0 in prop::collection::vec(-1.0..1.0f64, 2)) {
        let sys = pendulum();
        let cfg = IntegratorConfig::new(1e-2);
        let whole = simulate_extended(&sys, &u, &v(&x0), &cfg).unwrap();
        for &c in u.switch_times() {
            let head = simulate_extended(&sys, &u.restricted(0.0, c).unwrap(), &v(&x0), &cfg).unwrap();
            let mid: DVector<f64> = head.projected().final_state().clone();
            let tail = simulate_extended(&sys, &u.restricted(c, 2.0).unwrap(), &mid, &cfg).unwrap();
            prop_assert!((whole.cost() - head.cost() - tail.cost()).abs() < 1e-9);
        }
    }

    #[test]
    fn extended_projection_matches(u in control(), x0 in prop::collection::vec(-1.0..1.0f64, 2)) {
        let sys = pendulum();
        let cfg = IntegratorConfig::new(1e-2);
        let plain = simulate(&sys, &u, &v(&x0), &cfg).unwrap();
        let ext = simulate_extended(&sys, &u, &v(&x0), &cfg).unwrap().projected();
        prop_assert_eq!(plain.grid(), ext.grid());
        for (a, b) in plain.states().iter().zip(ext.states()) {
            prop_assert!((a - b).amax() < 1e-12);
        }
    }
}
