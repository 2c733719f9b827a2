//! Acceptance harness: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p pontryagin --test acceptance`.

mod common;

use std::time::Instant;

use common::{oracle_separated, random_cone, random_smooth_field, random_vector, rng, slope_errors, strictly_decreasing, v};
use nalgebra::{DMatrix, DVector};
use pontryagin::flows::{pairing_drift, IntegratorConfig};
use pontryagin::geometry::{difference_spans, separate};
use pontryagin::perturbations::{
    apply_needles, apply_time_perturbation, build_initial_cone, build_tangent_cone, build_time_cone,
    class1_vector, cone_transport_check, multi_needle_vector, realize_direction, time_perturbation_vector,
    transport_vector, ConeSampling, NeedleData, RealizeOptions, TimePerturbationData,
};
use pontryagin::pmp::{
    adjoint_flow, check_pmp, BoundarySpec, EndpointSpec, Extremal, MaximizeOptions, PmpOptions, TimeMode,
};
use pontryagin::reachable::decomposition_reach_check;
use pontryagin::shooting::{shoot, switching_structure, Guess, ShootingOptions, ShootingProblem};
use pontryagin::signal::ControlSignal;
use pontryagin::system::{ControlSet, ControlSystem};
use pontryagin::trajectory::{simulate, simulate_extended, Trajectory};
use pontryagin::Result;
use rand::Rng;

type Outcome = Result<(bool, String)>;

fn time_optimal_di() -> Outcome {
    let started = Instant::now();
    let bounds = BoundarySpec {
        mode: TimeMode::Free,
        initial: EndpointSpec::Point(v(&[1.0, 0.0])),
        terminal: EndpointSpec::Point(v(&[0.0, 0.0])),
    };
    let prob = ShootingProblem::new(ControlSystem::double_integrator(), bounds, 0.0, 1.5)?;
    let res = shoot(&prob, &Guess::new(v(&[0.5, 0.5])), &ShootingOptions::default())?;
    let st = switching_structure(&prob.sys, &res.extremal, &MaximizeOptions::default())?;
    let rep = check_pmp(&prob.sys, &res.extremal, &prob.bounds, &PmpOptions::default())?;
    let elapsed = started.elapsed().as_secs_f64();
    // t* = 2·sqrt(d) for the rest-to-rest transfer over distance d = 1
    let t_star = 2.0;
    let b = res.extremal.trajectory().end();
    let ok = res.converged
        && (b - t_star).abs() <= 1e-3
        && st.switches.len() == 1
        && (st.switches[0] - 1.0).abs() <= 1e-3
        && rep.res_3a < 1e-5
        && rep.res_3b < 1e-5
        && rep.res_3c > 0.1
        && rep.sigma0 == -1.0
        && elapsed < 10.0;
    Ok((
        ok,
        format!(
            "t*={b:.6} switches={:?} res_3a={:.1e} res_3b={:.1e} res_3c={:.3} sigma0={} runtime={elapsed:.2}s",
            st.switches, rep.res_3a, rep.res_3b, rep.res_3c, rep.sigma0
        ),
    ))
}

/// Backward RK4 on `K̇ = K² − 1`, `K(1) = 0`, then forward RK4 on
/// `ẋ = −K(t)x` from `x(0) = 1`, on a grid of `n` steps.
fn riccati_state(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    let f = |k: f64| k * k - 1.0;
    let mut k = vec![0.0; n + 1];
    for i in (0..n).rev() {
        let y = k[i + 1];
        let k1 = f(y);
        let k2 = f(y - 0.5 * h * k1);
        let k3 = f(y - 0.5 * h * k2);
        let k4 = f(y - h * k3);
        k[i] = y - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    let kt = |t: f64| {
        let i = ((t / h) as usize).min(n - 1);
        let w = t / h - i as f64;
        k[i] * (1.0 - w) + k[i + 1] * w
    };
    let mut x = vec![1.0; n + 1];
    for i in 0..n {
        let t = i as f64 * h;
        let g = |t: f64, x: f64| -kt(t) * x;
        let k1 = g(t, x[i]);
        let k2 = g(t + 0.5 * h, x[i] + 0.5 * h * k1);
        let k3 = g(t + 0.5 * h, x[i] + 0.5 * h * k2);
        let k4 = g(t + h, x[i] + h * k3);
        x[i + 1] = x[i] + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    x
}

fn scalar_lqr() -> Outcome {
    let sys = ControlSystem::new("lqr", 1, 1, |_, u| v(&[u[0]]), ControlSet::unbounded(1))?
        .with_cost(|x, u| x[0] * x[0] + u[0] * u[0]);
    let bounds = BoundarySpec {
        mode: TimeMode::Fixed,
        initial: EndpointSpec::Point(v(&[1.0])),
        terminal: EndpointSpec::Manifold {
            anchor: v(&[0.0]),
            tangent_basis: vec![v(&[1.0])],
        },
    };
    let prob = ShootingProblem::new(sys, bounds, 0.0, 1.0)?;
    let res = shoot(&prob, &Guess::new(v(&[0.0])), &ShootingOptions::default())?;
    let n = 20_000;
    let oracle = riccati_state(n);
    let traj = res.extremal.trajectory();
    let sup = traj
        .grid()
        .iter()
        .zip(traj.states())
        .map(|(t, x)| (x[0] - oracle[(t * n as f64).round() as usize]).abs())
        .fold(0.0, f64::max);
    let p1 = res.extremal.adjoint().terminal()[0].abs();
    Ok((
        res.converged && sup < 1e-4 && p1 < 1e-6,
        format!("sup|x - riccati|={sup:.2e} |p(1)|={p1:.2e}"),
    ))
}

fn pairing_invariance() -> Outcome {
    let mut r = rng(2024);
    let cfg = IntegratorConfig::new(1e-2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let m = r.gen_range(1..=4);
        let field = random_smooth_field(&mut r, m);
        let a: f64 = r.gen_range(-1.0..1.0);
        let (x0, v0, p0) = (
            random_vector(&mut r, m, 1.0),
            random_vector(&mut r, m, 1.0),
            random_vector(&mut r, m, 1.0),
        );
        worst = worst.max(pairing_drift(&field, (a, a + 1.0), &x0, &v0, &p0, &cfg)?);
    }
    Ok((worst < 1e-6, format!("20 fields, max drift {worst:.2e}")))
}

const SLOPE_SCALES: [f64; 3] = [1e-2, 1e-3, 1e-4];

/// Reference on the double integrator: `u = 1` then `−1` with a switch at 1.
fn di_reference() -> Result<(ControlSystem, Trajectory)> {
    let sys = ControlSystem::double_integrator();
    let u = ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[1.0]), v(&[-1.0])])?;
    let traj = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2))?;
    Ok((sys, traj))
}

fn endpoint(sys: &ControlSystem, u: &ControlSignal, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let cut = u.restricted(u.start(), t)?;
    Ok(simulate(sys, &cut, x0, &IntegratorConfig::new(1e-2))?.final_state().clone())
}

fn needle_tangency() -> Outcome {
    let (sys, traj) = di_reference()?;
    let x0 = traj.initial_state().clone();
    let u = traj.control().clone();
    let mut lines = Vec::new();
    let mut ok = true;
    let mut worst_ratio = 0.0f64;
    let mut record = |name: String, errs: Vec<f64>| {
        let dec = strictly_decreasing(&errs);
        ok &= dec;
        worst_ratio = worst_ratio.max(errs[2] / errs[0]);
        if !dec {
            lines.push(format!("{name} not decreasing {errs:?}"));
        }
    };

    let controls = [v(&[-1.0]), v(&[0.5]), v(&[1.0])];
    let mut single = 0;
    for &t1 in &[0.3, 0.7, 1.4, 1.8] {
        for u1 in &controls {
            let pi = NeedleData::new(t1, 1.0, u1.clone())?;
            let vec = class1_vector(&sys, &traj, &pi)?;
            if vec.vector.norm() == 0.0 {
                continue;
            }
            single += 1;
            let errs = slope_errors(
                |s| endpoint(&sys, &apply_needles(&u, std::slice::from_ref(&pi), s).unwrap(), &x0, t1).unwrap(),
                &traj.state_at(t1),
                &vec.vector,
                &SLOPE_SCALES,
            );
            record(format!("needle t1={t1} u1={}", u1[0]), errs);
            let moved = transport_vector(&sys, &traj, &vec, 2.0)?;
            let errs = slope_errors(
                |s| endpoint(&sys, &apply_needles(&u, std::slice::from_ref(&pi), s).unwrap(), &x0, 2.0).unwrap(),
                traj.final_state(),
                &moved.vector,
                &SLOPE_SCALES,
            );
            record(format!("transported needle t1={t1} u1={}", u1[0]), errs);
        }
    }

    // distinct times, then a same-time stack
    let pairs = [
        vec![NeedleData::new(0.4, 1.0, v(&[-1.0]))?, NeedleData::new(1.6, 0.5, v(&[1.0]))?],
        vec![NeedleData::new(1.2, 1.0, v(&[0.0]))?, NeedleData::new(1.2, 2.0, v(&[1.0]))?],
    ];
    for needles in &pairs {
        let vec = multi_needle_vector(&sys, &traj, needles, 2.0)?;
        let errs = slope_errors(
            |s| endpoint(&sys, &apply_needles(&u, needles, s).unwrap(), &x0, 2.0).unwrap(),
            traj.final_state(),
            &vec.vector,
            &SLOPE_SCALES,
        );
        record(format!("two needles at {} and {}", needles[0].t1, needles[1].t1), errs);
    }

    // u_τ = 0 with δτ = l_τ would make the endpoint exactly linear in s
    for (tau, delta, u_tau) in [(0.6, 0.5, 0.0), (0.6, -0.5, -1.0), (1.5, 1.0, 1.0), (1.5, -0.25, 0.0)] {
        let pi = TimePerturbationData {
            tau,
            l_tau: 1.0,
            delta_tau: delta,
            u_tau: v(&[u_tau]),
        };
        let vec = time_perturbation_vector(&sys, &traj, &pi)?;
        let errs = slope_errors(
            |s| {
                let p = apply_time_perturbation(&u, &pi, s).unwrap();
                endpoint(&sys, &p, &x0, tau + delta * s).unwrap()
            },
            &traj.state_at(tau),
            &vec.vector,
            &SLOPE_SCALES,
        );
        record(format!("time perturbation tau={tau} delta={delta}"), errs);
    }
    lines.insert(
        0,
        format!("{single} needles (+ transported), 2 pairs, 4 time perturbations; worst err(1e-4)/err(1e-2)={worst_ratio:.1e}"),
    );
    Ok((ok, lines.join("; ")))
}

fn flow_decomposition() -> Outcome {
    let mut worst = 0.0f64;
    let cfg = IntegratorConfig::new(1e-2);
    let scalar = ControlSystem::scalar_integrator();
    let zero = ControlSignal::constant(0.0, 1.0, v(&[0.0]))?;
    let one = ControlSignal::constant(0.0, 1.0, v(&[1.0]))?;
    worst = worst.max(decomposition_reach_check(&scalar, &zero, &one, 1.0, &v(&[0.3]), &cfg)?.residual);

    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let box_u = ControlSet::interval(-1.0, 1.0)?;
    let matrices = [
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[-0.5, 1.0, -2.0, -0.1]),
    ];
    for a in &matrices {
        let sys = ControlSystem::linear_system(a.clone(), b.clone(), box_u.clone())?;
        for (ur, ua) in [(0.0, 1.0), (1.0, -1.0), (-0.3, 0.7)] {
            let reference = ControlSignal::constant(0.0, 1.5, v(&[ur]))?;
            let alternative = ControlSignal::constant(0.0, 1.5, v(&[ua]))?;
            let rep = decomposition_reach_check(&sys, &reference, &alternative, 1.5, &v(&[1.0, -0.5]), &cfg)?;
            worst = worst.max(rep.residual);
        }
    }

    // smooth nonlinear pair for the step-halving order
    let pendulum = ControlSystem::new(
        "pendulum",
        2,
        1,
        |x, u| v(&[x[1], -x[0].sin() + u[0]]),
        ControlSet::interval(-1.0, 1.0)?,
    )?;
    let reference = ControlSignal::constant(0.0, 2.0, v(&[0.0]))?;
    let alternative = ControlSignal::constant(0.0, 2.0, v(&[1.0]))?;
    let x0 = v(&[1.0, 0.0]);
    let r1 = decomposition_reach_check(&pendulum, &reference, &alternative, 2.0, &x0, &IntegratorConfig::new(0.1))?.residual;
    let r2 = decomposition_reach_check(&pendulum, &reference, &alternative, 2.0, &x0, &IntegratorConfig::new(0.05))?.residual;
    let ratio = r1 / r2;
    Ok((
        worst < 1e-6 && (8.0..=32.0).contains(&ratio),
        format!("linear/constant max residual {worst:.2e}; halving ratio {ratio:.1} (residual {r1:.2e} -> {r2:.2e})"),
    ))
}

fn cone_oracle() -> Outcome {
    let mut r = rng(77);
    let mut disagreements = Vec::new();
    let mut separated_count = 0;
    for i in 0..200 {
        let n = if i < 100 { 2 } else { 3 };
        let c1 = random_cone(&mut r, n, n + 1);
        let c2 = random_cone(&mut r, n, n + 1);
        let sep = separate(&c1, &c2)?.separated;
        let oracle = oracle_separated(&c1, &c2, 1e-9);
        let spans = difference_spans(&c1, &c2)?;
        separated_count += sep as usize;
        if sep != oracle || spans == sep {
            disagreements.push(i);
        }
    }
    Ok((
        disagreements.is_empty(),
        format!("200 pairs, {separated_count} separated, disagreements {disagreements:?}"),
    ))
}

fn realization() -> Outcome {
    let sys = ControlSystem::double_integrator();
    let u = ControlSignal::constant(0.0, 1.0, v(&[0.0]))?;
    let traj = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2))?;
    // control-affine with a box: the extreme controls are exhaustive
    let times = (1..10).map(|i| i as f64 / 10.0).collect();
    let cone = build_tangent_cone(&sys, &traj, 1.0, &ConeSampling::extreme(&sys, times)?)?;
    let opts = RealizeOptions {
        tol: 0.05,
        s_start: 1e-2,
        max_halvings: 0,
        ..RealizeOptions::default()
    };
    let mut ok = true;
    let mut worst_rel = 0.0f64;
    let mut ratio_range = (f64::INFINITY, 0.0f64);
    for k in 0..10 {
        let angle = 0.3 + k as f64 * std::f64::consts::TAU / 10.0;
        let dir = v(&[angle.cos(), angle.sin()]);
        let rz = realize_direction(&sys, &traj, 1.0, &dir, &cone, &opts)?;
        let rel = rz.residual / rz.s;
        let ratio = rz.s_prime / rz.s;
        worst_rel = worst_rel.max(rel);
        ratio_range = (ratio_range.0.min(ratio), ratio_range.1.max(ratio));
        ok &= rz.s == 1e-2 && rel < 0.05 && (0.5..=2.0).contains(&ratio);
    }
    Ok((
        ok,
        format!(
            "10 directions at s=1e-2, max residual/s {worst_rel:.2e}, s'/s in [{:.3}, {:.3}]",
            ratio_range.0, ratio_range.1
        ),
    ))
}

fn cone_transport() -> Outcome {
    let sys = ControlSystem::double_integrator();
    let cfg = IntegratorConfig::new(1e-2);
    let references = [
        ControlSignal::constant(0.0, 2.0, v(&[0.5]))?,
        ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[1.0]), v(&[-1.0])])?,
        ControlSignal::new(0.0, 2.0, vec![0.5, 1.3], vec![v(&[-1.0]), v(&[0.0]), v(&[1.0])])?,
    ];
    let mut violation = 0.0f64;
    let mut axis = 0.0f64;
    let mut axis_checks = 0;
    for u in &references {
        let traj = simulate(&sys, u, &v(&[0.2, -0.1]), &cfg)?;
        let sampling = ConeSampling::extreme(&sys, vec![0.15, 0.35, 0.45])?;
        let extra = ConeSampling::extreme(&sys, vec![0.7, 1.1, 1.45])?;
        for (t1, t2) in [(0.45, 0.9), (0.45, 1.6), (1.4, 1.9), (0.6, 1.75)] {
            let cones = [
                build_tangent_cone(&sys, &traj, t1, &sampling)?,
                build_time_cone(&sys, &traj, t1, &sampling)?,
                build_initial_cone(&sys, &traj, t1, &sampling, &[v(&[1.0, 0.0])])?,
            ];
            for cone in &cones {
                let rep = cone_transport_check(&sys, &traj, t1, t2, cone, &extra)?;
                violation = violation.max(rep.max_violation);
                if let Some(d) = rep.axis_defect {
                    axis = axis.max(d);
                    axis_checks += 1;
                }
            }
        }
    }
    Ok((
        violation < 1e-8 && axis < 1e-6 && axis_checks > 0,
        format!("max violation {violation:.2e}; axis identity max defect {axis:.2e} over {axis_checks} checks"),
    ))
}

fn negative_controls() -> Outcome {
    let sys = ControlSystem::double_integrator();
    let cfg = IntegratorConfig::new(1e-2);
    let bounds = BoundarySpec {
        mode: TimeMode::Free,
        initial: EndpointSpec::Point(v(&[1.0, 0.0])),
        terminal: EndpointSpec::Point(v(&[0.0, 0.0])),
    };
    let opts = PmpOptions::default();
    let p_b = v(&[-1.0, 1.0]);
    let u = ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[-1.0]), v(&[1.0])])?;
    let ext = simulate_extended(&sys, &u, &v(&[1.0, 0.0]), &cfg)?;
    let adj = adjoint_flow(&sys, &ext.projected(), -1.0, &p_b)?;
    let good = Extremal::new(ext.clone(), adj.clone())?;
    let base = check_pmp(&sys, &good, &bounds, &opts)?;

    let flipped = check_pmp(&sys, &Extremal::new(ext.clone(), adj.scaled(-1.0))?, &bounds, &opts)?;
    let zeroed = check_pmp(&sys, &Extremal::new(ext, adj.scaled(0.0))?, &bounds, &opts)?;

    let weak = ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[-1.0]), v(&[0.5])])?;
    let ext = simulate_extended(&sys, &weak, &v(&[1.0, 0.0]), &cfg)?;
    let adj = adjoint_flow(&sys, &ext.projected(), -1.0, &p_b)?;
    let sub = check_pmp(&sys, &Extremal::new(ext, adj)?, &bounds, &opts)?;

    let ok = base.passed()
        && flipped.failures().contains(&"3d")
        && zeroed.failures().contains(&"3c")
        && sub.res_3a > 1e-2;
    Ok((
        ok,
        format!(
            "reference passes={}; flipped fails {:?}; zeroed fails {:?}; sub-maximal res_3a={:.3}",
            base.passed(),
            flipped.failures(),
            zeroed.failures(),
            sub.res_3a
        ),
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("time-optimal double integrator", time_optimal_di),
        ("scalar LQR against Riccati", scalar_lqr),
        ("pairing invariance", pairing_invariance),
        ("needle tangency", needle_tangency),
        ("flow decomposition", flow_decomposition),
        ("cone separation oracle", cone_oracle),
        ("direction realization", realization),
        ("cone transport inclusion", cone_transport),
        ("negative controls", negative_controls),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (ok, detail) = match run() {
            Ok(out) => out,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !ok as usize;
        println!("{} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" }, i + 1);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
