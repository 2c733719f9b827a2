//! Indirect shooting: roots the boundary residual of the coupled state and
//! adjoint system under pointwise-maximized controls.
//!
//! The control is followed face by face. Within a step the face (the
//! [`ArcLabel`]) is frozen; a bang face gives a constant control, an
//! interior face is re-solved at every Runge–Kutta stage so that smooth
//! arcs keep fourth-order accuracy. When the face at the end of a step
//! differs from the frozen one, the switch is located by bisection and the
//! step is split there.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};
use crate::flows::IntegratorConfig;
use crate::pmp::{
    maximize_hamiltonian, maximize_on_face, AdjointCurve, Arc, ArcLabel, Bound, BoundarySpec, EndpointSpec,
    Extremal, MaximizeOptions, TimeMode,
};
use crate::signal::ControlSignal;
use crate::system::{ControlSet, ControlSystem};
use crate::trajectory::{ExtendedTrajectory, Trajectory};

/// Unknowns are `p(a)`, then coordinates of `x(a)` along the initial
/// manifold basis, then `b` in free-time mode. Residuals are the terminal
/// defect (normal components of `x(b)` minus the anchor, then `p(b)`
/// against the final tangent basis), then `p(a)` against the initial
/// tangent basis, then `ℳ(b)` in free-time mode. Both counts are
/// `m + dim S_a + [free]`.
#[derive(Debug, Clone)]
pub struct ShootingProblem {
    pub sys: ControlSystem,
    pub bounds: BoundarySpec,
    /// `−1` (normal) or `0` (abnormal).
    pub p0: f64,
    pub a: f64,
    /// Final time; only the default guess in free-time mode.
    pub b: f64,
}

/// Starting point for Newton.
#[derive(Debug, Clone)]
pub struct Guess {
    pub p_a: DVector<f64>,
    pub final_time: Option<f64>,
    pub initial_coords: Option<DVector<f64>>,
}

impl Guess {
    pub fn new(p_a: DVector<f64>) -> Self {
        Self {
            p_a,
            final_time: None,
            initial_coords: None,
        }
    }

    pub fn with_final_time(mut self, b: f64) -> Self {
        self.final_time = Some(b);
        self
    }

    pub fn with_initial_coords(mut self, xi: DVector<f64>) -> Self {
        self.initial_coords = Some(xi);
        self
    }
}

#[derive(Debug, Clone)]
pub struct ShootingOptions {
    /// Convergence threshold on the residual norm.
    pub tol: f64,
    pub max_iter: usize,
    /// Base steps over `[a, b]`.
    pub steps: usize,
    /// Relative central-difference step of the Jacobian.
    pub fd_step: f64,
    /// Accuracy of located switch times.
    pub switch_tol: f64,
    pub multistart: bool,
    pub directions: usize,
    pub scales: Vec<f64>,
    pub seed: u64,
    pub maximize: MaximizeOptions,
}

impl Default for ShootingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 60,
            steps: 400,
            fd_step: 1e-6,
            switch_tol: 1e-10,
            multistart: true,
            directions: 8,
            scales: vec![0.1, 1.0, 10.0],
            seed: 0,
            maximize: MaximizeOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub extremal: Extremal,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final unknown vector, laid out as in [`ShootingProblem`].
    pub unknowns: DVector<f64>,
    /// Index of the start that produced the result; 0 is the caller's guess.
    pub trial: usize,
    /// Numerical rank of the residual Jacobian at the result.
    pub jacobian_rank: usize,
}

/// One integration of the coupled system. `ys[i] = (x⁰, x, p)`.
struct Run {
    grid: Vec<f64>,
    ys: Vec<DVector<f64>>,
    labels: Vec<ArcLabel>,
}

fn constant_face(label: &ArcLabel) -> bool {
    match label {
        ArcLabel::Finite(_) => true,
        ArcLabel::Box(b) => b.iter().all(|c| *c != Bound::Interior),
        ArcLabel::Free => false,
    }
}

impl ShootingProblem {
    pub fn new(sys: ControlSystem, bounds: BoundarySpec, a: f64, b: f64) -> Result<Self> {
        bounds.validate(sys.state_dim())?;
        if !(a < b) {
            return Err(Error::InvalidArgument(format!("need a < b, got [{a}, {b}]")));
        }
        Ok(Self {
            sys,
            bounds,
            p0: -1.0,
            a,
            b,
        })
    }

    /// Sets `p₀`, which must be `−1` or `0`.
    pub fn with_p0(mut self, p0: f64) -> Result<Self> {
        if p0 != -1.0 && p0 != 0.0 {
            return Err(Error::InvalidArgument(format!("p0 must be -1 or 0, got {p0}")));
        }
        self.p0 = p0;
        Ok(self)
    }

    fn free(&self) -> bool {
        self.bounds.mode == TimeMode::Free
    }

    fn initial_dim(&self) -> usize {
        self.bounds.initial.tangent_basis().len()
    }

    pub fn unknown_count(&self) -> usize {
        self.sys.state_dim() + self.initial_dim() + usize::from(self.free())
    }

    pub fn pack(&self, guess: &Guess) -> Result<DVector<f64>> {
        let m = self.sys.state_dim();
        check_dim(m, guess.p_a.len())?;
        let ka = self.initial_dim();
        let mut z = DVector::zeros(self.unknown_count());
        z.rows_mut(0, m).copy_from(&guess.p_a);
        if let Some(xi) = &guess.initial_coords {
            check_dim(ka, xi.len())?;
            z.rows_mut(m, ka).copy_from(xi);
        }
        if self.free() {
            z[m + ka] = guess.final_time.unwrap_or(self.b);
        }
        Ok(z)
    }

    fn unpack(&self, z: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, f64)> {
        check_dim(self.unknown_count(), z.len())?;
        let m = self.sys.state_dim();
        let ka = self.initial_dim();
        let p_a = z.rows(0, m).into_owned();
        let mut x_a = self.bounds.initial.anchor().clone();
        for (i, w) in self.bounds.initial.tangent_basis().iter().enumerate() {
            x_a += w * z[m + i];
        }
        let b = if self.free() { z[m + ka] } else { self.b };
        if !(b > self.a) || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("final time {b} is not after {}", self.a)));
        }
        Ok((x_a, p_a, b))
    }

    fn split(&self, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let m = self.sys.state_dim();
        (y.rows(1, m).into_owned(), y.rows(1 + m, m).into_owned())
    }

    fn label_at(&self, y: &DVector<f64>, opts: &ShootingOptions) -> Result<ArcLabel> {
        let (x, p) = self.split(y);
        Ok(maximize_hamiltonian(&self.sys, self.p0, &p, &x, &opts.maximize)?.label)
    }

    fn control(&self, label: &ArcLabel, y: &DVector<f64>, opts: &ShootingOptions) -> Result<DVector<f64>> {
        let (x, p) = self.split(y);
        maximize_on_face(&self.sys, self.p0, &p, &x, label, &opts.maximize)
    }

    /// `(F, f, −p₀∇F − (∂f/∂x)ᵀp)`.
    fn derivative(&self, y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let m = self.sys.state_dim();
        let (x, p) = self.split(y);
        let mut out = DVector::zeros(2 * m + 1);
        out[0] = self.sys.running_cost(&x, u);
        out.rows_mut(1, m).copy_from(&self.sys.dynamics(&x, u));
        let mut dp = -(self.sys.state_jacobian(&x, u).transpose() * &p);
        if self.p0 != 0.0 {
            dp -= self.sys.cost_gradient(&x, u) * self.p0;
        }
        out.rows_mut(1 + m, m).copy_from(&dp);
        out
    }

    fn rk4(&self, label: &ArcLabel, y: &DVector<f64>, h: f64, opts: &ShootingOptions) -> Result<DVector<f64>> {
        let frozen = if constant_face(label) {
            Some(self.control(label, y, opts)?)
        } else {
            None
        };
        let rhs = |y: &DVector<f64>| -> Result<DVector<f64>> {
            match &frozen {
                Some(u) => Ok(self.derivative(y, u)),
                None => Ok(self.derivative(y, &self.control(label, y, opts)?)),
            }
        };
        let k1 = rhs(y)?;
        let k2 = rhs(&(y + &k1 * (0.5 * h)))?;
        let k3 = rhs(&(y + &k2 * (0.5 * h)))?;
        let k4 = rhs(&(y + &k3 * h))?;
        let next = y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if next.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp { t: h });
        }
        Ok(next)
    }

    fn run(&self, x_a: &DVector<f64>, p_a: &DVector<f64>, b: f64, opts: &ShootingOptions) -> Result<Run> {
        let m = self.sys.state_dim();
        let mut y = DVector::zeros(2 * m + 1);
        y.rows_mut(1, m).copy_from(x_a);
        y.rows_mut(1 + m, m).copy_from(p_a);
        let steps = opts.steps.max(1);
        let h = (b - self.a) / steps as f64;
        let mut label = self.label_at(&y, opts)?;
        let mut run = Run {
            grid: vec![self.a],
            ys: vec![y.clone()],
            labels: Vec::new(),
        };
        for i in 0..steps {
            let target = if i + 1 == steps { b } else { self.a + h * (i + 1) as f64 };
            let mut t = *run.grid.last().expect("nonempty");
            let mut switches = 0;
            loop {
                let next = self.rk4(&label, &y, target - t, opts).map_err(|_| Error::BlowUp { t: target })?;
                let next_label = self.label_at(&next, opts)?;
                if next_label == label {
                    run.grid.push(target);
                    run.ys.push(next.clone());
                    run.labels.push(label.clone());
                    y = next;
                    break;
                }
                switches += 1;
                if switches > 8 {
                    return Err(Error::Inconsistent(format!("control chatters near t = {t}")));
                }
                let (mut lo, mut hi, mut new_label) = (t, target, next_label);
                while hi - lo > opts.switch_tol {
                    let mid = 0.5 * (lo + hi);
                    let ym = self.rk4(&label, &y, mid - t, opts)?;
                    let lm = self.label_at(&ym, opts)?;
                    if lm == label {
                        lo = mid;
                    } else {
                        hi = mid;
                        new_label = lm;
                    }
                }
                let ts = hi;
                let ys = if ts == target { next } else { self.rk4(&label, &y, ts - t, opts)? };
                run.grid.push(ts);
                run.ys.push(ys.clone());
                run.labels.push(label.clone());
                label = new_label;
                y = ys;
                t = ts;
                if t >= target {
                    break;
                }
            }
        }
        Ok(run)
    }

    /// The boundary residual at `z`.
    pub fn residual(&self, z: &DVector<f64>, opts: &ShootingOptions) -> Result<DVector<f64>> {
        let (x_a, p_a, b) = self.unpack(z)?;
        let run = self.run(&x_a, &p_a, b, opts)?;
        let (x_b, p_b) = self.split(run.ys.last().expect("nonempty"));
        let m = self.sys.state_dim();
        let mut r = Vec::with_capacity(self.unknown_count());
        match &self.bounds.terminal {
            EndpointSpec::Point(target) => r.extend((&x_b - target).iter()),
            spec @ EndpointSpec::Manifold { anchor, tangent_basis } => {
                let n = spec.normal_basis(m);
                r.extend((n.transpose() * (&x_b - anchor)).iter());
                r.extend(tangent_basis.iter().map(|w| p_b.dot(w)));
            }
        }
        r.extend(self.bounds.initial.tangent_basis().iter().map(|w| p_a.dot(w)));
        if self.free() {
            r.push(maximize_hamiltonian(&self.sys, self.p0, &p_b, &x_b, &opts.maximize)?.value);
        }
        Ok(DVector::from_vec(r))
    }

    /// Central-difference Jacobian of [`Self::residual`] with relative step
    /// `step`.
    pub fn residual_jacobian(&self, z: &DVector<f64>, step: f64, opts: &ShootingOptions) -> Result<DMatrix<f64>> {
        let n = z.len();
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = step * z[j].abs().max(1.0);
            let (mut up, mut dn) = (z.clone(), z.clone());
            up[j] += h;
            dn[j] -= h;
            let col = (self.residual(&up, opts)? - self.residual(&dn, opts)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    /// Integrates from `z` and assembles the extremal with its arcs.
    pub fn extremal(&self, z: &DVector<f64>, opts: &ShootingOptions) -> Result<Extremal> {
        let (x_a, p_a, b) = self.unpack(z)?;
        let run = self.run(&x_a, &p_a, b, opts)?;
        let m = self.sys.state_dim();
        let n = run.grid.len();
        let mut pieces = Vec::new();
        let mut velocities = Vec::with_capacity(n - 1);
        let mut switches = Vec::new();
        for j in 0..n - 1 {
            let label = &run.labels[j];
            let u0 = self.control(label, &run.ys[j], opts)?;
            let u1 = self.control(label, &run.ys[j + 1], opts)?;
            pieces.push((run.grid[j], u0.clone()));
            if !constant_face(label) {
                // centred sample-and-hold: node controls are exact maximizers
                pieces.push((0.5 * (run.grid[j] + run.grid[j + 1]), u1.clone()));
            }
            if j > 0 && run.labels[j - 1] != *label {
                switches.push(run.grid[j]);
            }
            let head = |y: &DVector<f64>, u: &DVector<f64>| self.derivative(y, u).rows(0, m + 1).into_owned();
            velocities.push((head(&run.ys[j], &u0), head(&run.ys[j + 1], &u1)));
        }
        let control = ControlSignal::from_breakpoints(self.a, b, pieces)?;
        let config = IntegratorConfig::new((b - self.a) / opts.steps.max(1) as f64)
            .with_events(control.switch_times().iter().copied());
        let states = run.ys.iter().map(|y| y.rows(0, m + 1).into_owned()).collect();
        let ext = ExtendedTrajectory(Trajectory::from_parts(
            run.grid.clone(),
            states,
            control,
            velocities,
            config,
        ));
        let adjoint = AdjointCurve {
            grid: run.grid.clone(),
            sigma0: self.p0,
            sigma: run.ys.iter().map(|y| y.rows(1 + m, m).into_owned()).collect(),
        };
        let mut arcs: Vec<Arc> = Vec::new();
        for j in 0..n - 1 {
            match arcs.last_mut() {
                Some(arc) if arc.label == run.labels[j] => arc.end = run.grid[j + 1],
                _ => arcs.push(Arc {
                    start: run.grid[j],
                    end: run.grid[j + 1],
                    label: run.labels[j].clone(),
                }),
            }
        }
        Ok(Extremal::new(ext, adjoint)?.with_arcs(arcs))
    }
}

/// `count` unit directions from a seeded generator, Gaussian-normalized.
fn start_directions(m: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v = DVector::from_fn(m, |_, _| {
            let (u1, u2): (f64, f64) = (rng.gen_range(f64::EPSILON..1.0), rng.gen());
            (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        });
        let n = v.norm();
        if n > 1e-8 {
            out.push(v / n);
        }
    }
    out
}

struct Trial {
    z: DVector<f64>,
    norm: f64,
    iterations: usize,
}

fn newton(problem: &ShootingProblem, z0: DVector<f64>, opts: &ShootingOptions) -> Result<Trial> {
    let mut z = z0;
    let mut r = problem.residual(&z, opts)?;
    let mut norm = r.norm();
    let mut iterations = 0;
    while norm > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let jac = problem.residual_jacobian(&z, opts.fd_step, opts)?;
        let svd = jac.svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let Ok(dz) = svd.solve(&(-&r), cutoff) else {
            break;
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        while alpha >= 1e-6 {
            let cand = &z + &dz * alpha;
            if let Ok(rc) = problem.residual(&cand, opts) {
                let nc = rc.norm();
                if nc < (1.0 - 1e-4 * alpha) * norm {
                    z = cand;
                    r = rc;
                    norm = nc;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(Trial { z, norm, iterations })
}

fn numerical_rank(jac: &DMatrix<f64>) -> usize {
    let sv = jac.clone().svd(false, false).singular_values;
    let cutoff = 1e-8 * sv.max();
    sv.iter().filter(|s| **s > cutoff).count()
}

/// Damped Newton from `guess`, then from `scale·d` for the configured
/// scales and seeded unit directions `d`, replacing only `p(a)`. Stops at
/// the first converged start; otherwise returns the lowest residual (ties
/// go to the earlier start).
pub fn shoot(problem: &ShootingProblem, guess: &Guess, opts: &ShootingOptions) -> Result<ShootingResult> {
    let z0 = problem.pack(guess)?;
    let m = problem.sys.state_dim();
    let mut starts = vec![z0.clone()];
    if opts.multistart {
        let dirs = start_directions(m, opts.directions, opts.seed);
        for s in &opts.scales {
            for d in &dirs {
                let mut z = z0.clone();
                z.rows_mut(0, m).copy_from(&(d * *s));
                starts.push(z);
            }
        }
    }
    let mut best: Option<(usize, Trial)> = None;
    let mut last_err = None;
    for (i, z) in starts.into_iter().enumerate() {
        match newton(problem, z, opts) {
            Ok(trial) => {
                let done = trial.norm <= opts.tol;
                if best.as_ref().is_none_or(|(_, b)| trial.norm < b.norm) {
                    best = Some((i, trial));
                }
                if done {
                    break;
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let Some((trial_index, trial)) = best else {
        return Err(last_err.unwrap_or(Error::Empty("shooting starts")));
    };
    let extremal = problem.extremal(&trial.z, opts)?;
    let jacobian_rank = problem
        .residual_jacobian(&trial.z, opts.fd_step, opts)
        .map(|j| numerical_rank(&j))
        .unwrap_or(0);
    Ok(ShootingResult {
        extremal,
        residual_norm: trial.norm,
        iterations: trial.iterations,
        converged: trial.norm <= opts.tol,
        unknowns: trial.z,
        trial: trial_index,
        jacobian_rank,
    })
}

/// Switch times and the arcs between them.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingStructure {
    pub switches: Vec<f64>,
    pub arcs: Vec<Arc>,
}

/// The arcs recorded by shooting, or, for extremals built elsewhere, arcs
/// reconstructed from the maximizing face at each non-switch node.
pub fn switching_structure(sys: &ControlSystem, extremal: &Extremal, opts: &MaximizeOptions) -> Result<SwitchingStructure> {
    let arcs = if extremal.arcs().is_empty() {
        let traj = extremal.trajectory();
        let adj = extremal.adjoint();
        let grid = traj.grid();
        let u = traj.control();
        let mut arcs: Vec<Arc> = Vec::new();
        for i in 0..grid.len() - 1 {
            let node = if u.switch_times().contains(&grid[i]) && i + 1 < grid.len() - 1 {
                i + 1
            } else {
                i
            };
            let label = maximize_hamiltonian(sys, adj.sigma0, adj.at_node(node), &traj.states()[node], opts)?.label;
            match arcs.last_mut() {
                Some(arc) if arc.label == label => arc.end = grid[i + 1],
                _ => arcs.push(Arc {
                    start: grid[i],
                    end: grid[i + 1],
                    label,
                }),
            }
        }
        arcs
    } else {
        extremal.arcs().to_vec()
    };
    let switches = arcs.windows(2).map(|w| w[0].end).collect();
    Ok(SwitchingStructure { switches, arcs })
}

/// The control value on the face `label`, when the face pins it.
pub fn face_value(set: &ControlSet, label: &ArcLabel) -> Option<DVector<f64>> {
    match (set, label) {
        (ControlSet::Finite(points), ArcLabel::Finite(i)) => points.get(*i).cloned(),
        (ControlSet::Box { lo, hi }, ArcLabel::Box(face)) if constant_face(label) => Some(DVector::from_iterator(
            face.len(),
            face.iter().enumerate().map(|(i, b)| if *b == Bound::Lower { lo[i] } else { hi[i] }),
        )),
        _ => None,
    }
}
