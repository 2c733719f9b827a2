use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use pontryagin::csvio;
use pontryagin::flows::IntegratorConfig;
use pontryagin::geometry::{conic_membership, distance_l1};
use pontryagin::perturbations::{build_initial_cone, build_tangent_cone, build_time_cone, PerturbationCone};
use pontryagin::pmp::{adjoint_flow, check_pmp, AdjointCurve, Extremal, MaximizeOptions, PmpOptions, TimeMode};
use pontryagin::reachable::{cone_approximation_check, sample_reachable, SamplingPolicy};
use pontryagin::shooting::{shoot, switching_structure, Guess, ShootingOptions, ShootingProblem};
use pontryagin::signal::ControlSignal;
use pontryagin::system::ControlSystem;
use pontryagin::trajectory::{read_trajectory_csv, simulate, simulate_extended, Trajectory};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::problem::{ConeKind, Problem};

/// Flags shared by every command.
#[derive(Debug, Clone)]
pub struct Options {
    pub problem: PathBuf,
    pub out: PathBuf,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub mode: Option<TimeMode>,
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| CliError::Io { path, source })
}

fn json_text(value: &serde_json::Value) -> String {
    serde_json::to_string_pretty(value).expect("json serializes")
}

fn load(opts: &Options) -> CliResult<Problem> {
    let src = read(&opts.problem)?;
    let problem = Problem::parse(&src)
        .map_err(|e| CliError::input(format!("{}: {e}", opts.problem.display())))?;
    fs::create_dir_all(&opts.out).map_err(|source| CliError::Io {
        path: opts.out.clone(),
        source,
    })?;
    Ok(problem)
}

fn pmp_options(problem: &Problem, opts: &Options) -> PmpOptions {
    let (tol, drift_tol) = problem.tolerances();
    let mut out = PmpOptions::default();
    if let Some(t) = opts.tol.or(tol) {
        out.tol = t;
    }
    if let Some(t) = drift_tol {
        out.drift_tol = t;
    }
    out
}

/// Columns `start,end,u0..u{k-1}`, one row per piece.
pub fn control_to_csv(u: &ControlSignal) -> String {
    let mut header = vec!["start".to_string(), "end".to_string()];
    header.extend((0..u.dim()).map(|i| format!("u{i}")));
    let rows: Vec<Vec<f64>> = u
        .pieces()
        .into_iter()
        .map(|(lo, hi, v)| {
            let mut r = vec![lo, hi];
            r.extend(v.iter());
            r
        })
        .collect();
    csvio::write_table(&header, &rows)
}

pub fn control_from_csv(text: &str) -> CliResult<ControlSignal> {
    let (header, rows) = csvio::read_table(text)?;
    if header.len() < 3 || header[0] != "start" || header[1] != "end" {
        return Err(CliError::input("control table must have columns start,end,u0,..."));
    }
    if rows.is_empty() {
        return Err(CliError::input("control table has no rows"));
    }
    for w in rows.windows(2) {
        if w[0][1] != w[1][0] {
            return Err(CliError::input(format!("control pieces are not contiguous at {}", w[0][1])));
        }
    }
    Ok(ControlSignal::new(
        rows[0][0],
        rows[rows.len() - 1][1],
        rows[1..].iter().map(|r| r[0]).collect(),
        rows.iter().map(|r| DVector::from_column_slice(&r[2..])).collect(),
    )?)
}

fn control_for(problem: &Problem, path: Option<&Path>) -> CliResult<ControlSignal> {
    match path {
        Some(p) => control_from_csv(&read(p)?),
        None => problem.reference_control(),
    }
}

fn reference(problem: &Problem, sys: &ControlSystem, control: Option<&Path>) -> CliResult<Trajectory> {
    let u = control_for(problem, control)?;
    let cfg = IntegratorConfig::new(problem.step());
    Ok(simulate(sys, &u, &problem.initial_state()?, &cfg)?)
}

/// Writes `trajectory.csv` (with the cost column) and `summary.json`.
pub fn simulate_cmd(opts: &Options, control: Option<&Path>) -> CliResult<()> {
    let problem = load(opts)?;
    let sys = problem.system()?;
    let u = control_for(&problem, control)?;
    let x0 = problem.initial_state()?;
    let ext = simulate_extended(&sys, &u, &x0, &IntegratorConfig::new(problem.step()))?;
    let traj = ext.projected();
    write(&opts.out, "trajectory.csv", &ext.to_csv())?;
    let summary = json!({
        "name": problem.name,
        "start": traj.start(),
        "end": traj.end(),
        "initial_state": traj.initial_state().as_slice(),
        "final_state": traj.final_state().as_slice(),
        "cost": ext.cost(),
        "nodes": traj.grid().len(),
    });
    write(&opts.out, "summary.json", &json_text(&summary))
}

/// Runs the shooting method, writes the extremal and its check report.
pub fn shoot_cmd(opts: &Options) -> CliResult<()> {
    let problem = load(opts)?;
    let sys = problem.system()?;
    let bounds = problem.boundary(opts.mode)?;
    let spec = problem
        .shooting
        .as_ref()
        .ok_or_else(|| CliError::input("missing [shooting] section"))?;
    let mut sp = ShootingProblem::new(sys.clone(), bounds.clone(), problem.start(), problem.end())?;
    if let Some(p0) = spec.p0 {
        sp = sp.with_p0(p0)?;
    }
    let mut guess = Guess::new(DVector::from_column_slice(&spec.p_a));
    if let Some(b) = spec.final_time {
        guess = guess.with_final_time(b);
    }
    let mut sopts = ShootingOptions::default();
    if let Some(n) = spec.steps {
        sopts.steps = n;
    }
    if let Some(n) = spec.max_iter {
        sopts.max_iter = n;
    }
    if let Some(m) = spec.multistart {
        sopts.multistart = m;
    }
    sopts.seed = opts.seed.unwrap_or(0);
    let res = shoot(&sp, &guess, &sopts)?;
    let ex = &res.extremal;
    write(&opts.out, "trajectory.csv", &ex.extended().to_csv())?;
    write(&opts.out, "adjoint.csv", &ex.adjoint().to_csv())?;
    write(&opts.out, "control.csv", &control_to_csv(ex.control()))?;
    let structure = switching_structure(&sys, ex, &MaximizeOptions::default())?;
    let summary = json!({
        "converged": res.converged,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
        "trial": res.trial,
        "jacobian_rank": res.jacobian_rank,
        "unknowns": res.unknowns.as_slice(),
        "final_time": ex.control().end(),
        "cost": ex.cost(),
        "switches": structure.switches,
        "arcs": structure.arcs,
    });
    write(&opts.out, "shooting.json", &json_text(&summary))?;
    if !res.converged {
        return Err(CliError::Numerical(format!(
            "shooting did not converge; best residual {:.3e}",
            res.residual_norm
        )));
    }
    let report = check_pmp(&sys, ex, &bounds, &pmp_options(&problem, opts))?;
    write(&opts.out, "report.json", &report.to_json())?;
    if !report.passed() {
        return Err(CliError::CheckFailed(report.failures().join(", ")));
    }
    Ok(())
}

/// Checks an extremal given as control and adjoint tables.
///
/// The trajectory is re-simulated on the adjoint grid. When that grid cannot
/// be reproduced, the adjoint is re-integrated from its terminal value.
pub fn check_cmd(opts: &Options, control: &Path, adjoint: &Path, trajectory: Option<&Path>) -> CliResult<()> {
    let problem = load(opts)?;
    let sys = problem.system()?;
    let bounds = problem.boundary(opts.mode)?;
    let u = control_from_csv(&read(control)?)?;
    let adj = AdjointCurve::from_csv(&read(adjoint)?)?;
    let grid = &adj.grid;
    if grid.len() < 2 || grid[0] != u.start() || grid[grid.len() - 1] != u.end() {
        return Err(CliError::input("adjoint grid must span the control interval"));
    }
    let x0 = match trajectory {
        Some(p) => {
            let (_, states, has_cost) = read_trajectory_csv(&read(p)?)?;
            let first = states.first().ok_or_else(|| CliError::input("trajectory table has no rows"))?;
            let skip = usize::from(has_cost);
            first.rows(skip, first.len() - skip).into_owned()
        }
        None => bounds.initial.anchor().clone(),
    };
    let spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let cfg = IntegratorConfig::new(spacing * (1.0 + 1e-12)).with_events(grid.iter().copied());
    let ext = simulate_extended(&sys, &u, &x0, &cfg)?;
    let adj = if ext.trajectory().grid() == grid.as_slice() {
        adj
    } else {
        eprintln!("note: control switches off the adjoint grid; adjoint re-integrated from its terminal value");
        adjoint_flow(&sys, &ext.projected(), adj.sigma0, adj.terminal())?
    };
    let ex = Extremal::new(ext, adj)?;
    let report = check_pmp(&sys, &ex, &bounds, &pmp_options(&problem, opts))?;
    write(&opts.out, "report.json", &report.to_json())?;
    if !report.passed() {
        return Err(CliError::CheckFailed(report.failures().join(", ")));
    }
    Ok(())
}

fn build_cone(problem: &Problem, sys: &ControlSystem, traj: &Trajectory) -> CliResult<PerturbationCone> {
    let spec = problem
        .cones
        .as_ref()
        .ok_or_else(|| CliError::input("missing [cones] section"))?;
    let sampling = problem.cone_sampling(sys)?;
    Ok(match spec.kind {
        ConeKind::Tangent => build_tangent_cone(sys, traj, spec.time, &sampling)?,
        ConeKind::Time => build_time_cone(sys, traj, spec.time, &sampling)?,
        ConeKind::Initial => build_initial_cone(sys, traj, spec.time, &sampling, &problem.initial_tangent_basis()?)?,
    })
}

/// Writes `cone.csv` and `membership.json` for the queries of `[cones]`.
pub fn cones_cmd(opts: &Options, control: Option<&Path>) -> CliResult<()> {
    let problem = load(opts)?;
    let sys = problem.system()?;
    let traj = reference(&problem, &sys, control)?;
    let cone = build_cone(&problem, &sys, &traj)?;
    write(&opts.out, "cone.csv", &cone.to_csv())?;
    let generated = cone.cone()?;
    let tol = opts.tol.unwrap_or(1e-9);
    let mut queries = Vec::new();
    for q in &problem.cones.as_ref().expect("checked by build_cone").queries {
        let v = DVector::from_column_slice(q);
        let verdict = conic_membership(&generated, &v, tol)?;
        queries.push(json!({
            "vector": q,
            "verdict": format!("{verdict:?}").to_lowercase(),
            "distance_l1": distance_l1(&generated, &v)?,
        }));
    }
    let out = json!({
        "time": cone.at_time,
        "generators": cone.generators.len(),
        "span_dim": generated.span_dim(),
        "tol": tol,
        "queries": queries,
    });
    write(&opts.out, "membership.json", &json_text(&out))
}

/// Samples the reachable set; with `scales` also compares it with the cone
/// of `[cones]`.
pub fn reach_cmd(opts: &Options, control: Option<&Path>) -> CliResult<()> {
    let problem = load(opts)?;
    let sys = problem.system()?;
    let spec = problem.reach.clone().unwrap_or_default();
    let t = spec
        .time
        .or_else(|| problem.cones.as_ref().map(|c| c.time))
        .unwrap_or(problem.end());
    let defaults = SamplingPolicy::default();
    let policy = SamplingPolicy {
        n_controls: spec.n_controls.unwrap_or(defaults.n_controls),
        max_switches: spec.max_switches.unwrap_or(defaults.max_switches),
        values: spec.values.unwrap_or(defaults.values),
        seed: opts.seed.or(spec.seed).unwrap_or(defaults.seed),
        constant_extremes: spec.constant_extremes.unwrap_or(defaults.constant_extremes),
    };
    let x0 = problem.initial_state()?;
    let cfg = IntegratorConfig::new(problem.step());
    let cloud = sample_reachable(&sys, &x0, problem.start(), t, &policy, &cfg)?;
    write(&opts.out, "cloud.csv", &cloud.to_csv())?;
    write(&opts.out, "provenance.json", &cloud.provenance_json())?;
    if let Some(scales) = &spec.scales {
        let traj = reference(&problem, &sys, control)?;
        let cone = build_cone(&problem, &sys, &traj)?;
        if (cone.at_time - t).abs() > 1e-12 {
            return Err(CliError::input(format!("cones.time {} differs from the reach time {t}", cone.at_time)));
        }
        let stats = cone_approximation_check(&traj, t, &cone.cone()?, &cloud, scales, spec.rel_tol.unwrap_or(0.1))?;
        write(&opts.out, "approximation.json", &serde_json::to_string_pretty(&stats).expect("stats serialize"))?;
    }
    Ok(())
}
