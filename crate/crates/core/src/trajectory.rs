//! Simulated trajectories of controlled systems.

use nalgebra::DVector;

use crate::csvio;
use crate::error::{check_dim, Error, Result};
use crate::flows::{rk4_path, rk4_step, time_grid, IntegratorConfig};
use crate::signal::ControlSignal;
use crate::system::ControlSystem;

/// States on an integrator grid that hits every switch time, plus the end
/// velocities of each step for cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    grid: Vec<f64>,
    states: Vec<DVector<f64>>,
    control: ControlSignal,
    velocities: Vec<(DVector<f64>, DVector<f64>)>,
    config: IntegratorConfig,
}

impl Trajectory {
    /// Assembles a trajectory integrated elsewhere. `velocities[i]` holds
    /// the field at both ends of step `i` under that step's control.
    pub(crate) fn from_parts(
        grid: Vec<f64>,
        states: Vec<DVector<f64>>,
        control: ControlSignal,
        velocities: Vec<(DVector<f64>, DVector<f64>)>,
        config: IntegratorConfig,
    ) -> Self {
        debug_assert_eq!(grid.len(), states.len());
        debug_assert_eq!(grid.len(), velocities.len() + 1);
        Self {
            grid,
            states,
            control,
            velocities,
            config,
        }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn control(&self) -> &ControlSignal {
        &self.control
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    pub fn initial_state(&self) -> &DVector<f64> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty trajectory")
    }

    /// Index `i` of the step `[grid[i], grid[i+1]]` containing `t`.
    pub fn step_index(&self, t: f64) -> usize {
        let n = self.grid.len();
        self.grid.partition_point(|&g| g <= t).clamp(1, n - 1) - 1
    }

    /// `γ(t)` by cubic Hermite interpolation; exact at grid nodes.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        let i = self.step_index(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        if t == t0 {
            return self.states[i].clone();
        }
        if t == t1 {
            return self.states[i + 1].clone();
        }
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let (v0, v1) = &self.velocities[i];
        &self.states[i] * h00 + v0 * (h10 * h) + &self.states[i + 1] * h01 + v1 * (h11 * h)
    }

    /// Largest difference between a stored node and one RK4 step from the
    /// previous node under the active control.
    pub fn resimulation_defect(&self, sys: &ControlSystem) -> f64 {
        let rhs = |piece: f64, _t: f64, x: &DVector<f64>| sys.dynamics(x, self.control.value_at(piece));
        (0..self.grid.len() - 1)
            .map(|i| {
                let next = rk4_step(&rhs, self.grid[i], self.grid[i + 1] - self.grid[i], &self.states[i]);
                (next - &self.states[i + 1]).amax()
            })
            .fold(0.0, f64::max)
    }

    /// CSV with header `t,x0..x{m-1}`, or `t,x0..x{m-1},xcost` when
    /// `cost_first` says the first coordinate is the cost.
    pub fn to_csv(&self, cost_first: bool) -> String {
        let m = self.dim();
        let base = if cost_first { m - 1 } else { m };
        let mut header = vec!["t".to_string()];
        header.extend((0..base).map(|i| format!("x{i}")));
        if cost_first {
            header.push("xcost".into());
        }
        let rows: Vec<Vec<f64>> = self
            .grid
            .iter()
            .zip(&self.states)
            .map(|(t, x)| {
                let mut r = vec![*t];
                if cost_first {
                    r.extend(x.iter().skip(1));
                    r.push(x[0]);
                } else {
                    r.extend(x.iter());
                }
                r
            })
            .collect();
        csvio::write_table(&header, &rows)
    }
}

/// Reads a trajectory table. Returns the grid, the states (cost coordinate
/// first when present) and whether an `xcost` column was found.
pub fn read_trajectory_csv(text: &str) -> Result<(Vec<f64>, Vec<DVector<f64>>, bool)> {
    let (header, rows) = csvio::read_table(text)?;
    if header.first().map(String::as_str) != Some("t") {
        return Err(Error::InvalidArgument("trajectory table must start with a t column".into()));
    }
    let has_cost = header.last().map(String::as_str) == Some("xcost");
    let grid = rows.iter().map(|r| r[0]).collect();
    let states = rows
        .iter()
        .map(|r| {
            if has_cost {
                let mut v = vec![*r.last().expect("cost column")];
                v.extend_from_slice(&r[1..r.len() - 1]);
                DVector::from_vec(v)
            } else {
                DVector::from_column_slice(&r[1..])
            }
        })
        .collect();
    Ok((grid, states, has_cost))
}

/// A trajectory of the cost-augmented system; coordinate 0 is `x⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTrajectory(pub(crate) Trajectory);

impl ExtendedTrajectory {
    pub fn trajectory(&self) -> &Trajectory {
        &self.0
    }

    pub fn into_inner(self) -> Trajectory {
        self.0
    }

    /// `x⁰(b)`.
    pub fn cost(&self) -> f64 {
        self.0.final_state()[0]
    }

    /// The trajectory of the original system, dropping `x⁰`.
    pub fn projected(&self) -> Trajectory {
        let m = self.0.dim() - 1;
        let tail = |v: &DVector<f64>| v.rows(1, m).into_owned();
        Trajectory {
            grid: self.0.grid.clone(),
            states: self.0.states.iter().map(tail).collect(),
            control: self.0.control.clone(),
            velocities: self
                .0
                .velocities
                .iter()
                .map(|(a, b)| (tail(a), tail(b)))
                .collect(),
            config: self.0.config.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        self.0.to_csv(true)
    }
}

/// `x⁰(b)` of an extended trajectory.
pub fn cost(ext: &ExtendedTrajectory) -> f64 {
    ext.cost()
}

/// Integrates `ẋ = f(x, u(t))` over the interval of `u`. The grid includes
/// every switch time of `u` and every event of `cfg`.
pub fn simulate(
    sys: &ControlSystem,
    u: &ControlSignal,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    check_dim(sys.state_dim(), x0.len())?;
    check_dim(sys.control_dim(), u.dim())?;
    if x0.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("non-finite initial state".into()));
    }
    let config = cfg.clone().with_events(u.switch_times().iter().copied());
    let grid = time_grid(u.start(), u.end(), &config);
    let states = rk4_path(
        |piece, _t, x| sys.dynamics(x, u.value_at(piece)),
        &grid,
        x0.clone(),
    )?;
    let velocities = grid
        .windows(2)
        .zip(states.windows(2))
        .map(|(g, x)| {
            let w = u.value_at(0.5 * (g[0] + g[1]));
            (sys.dynamics(&x[0], w), sys.dynamics(&x[1], w))
        })
        .collect();
    Ok(Trajectory {
        grid,
        states,
        control: u.clone(),
        velocities,
        config,
    })
}

/// Simulates the extended system from `(0, x0)`.
pub fn simulate_extended(
    sys: &ControlSystem,
    u: &ControlSignal,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<ExtendedTrajectory> {
    let ext = sys.extend()?;
    check_dim(sys.state_dim(), x0.len())?;
    let mut xh = DVector::zeros(x0.len() + 1);
    xh.rows_mut(1, x0.len()).copy_from(x0);
    Ok(ExtendedTrajectory(simulate(&ext, u, &xh, cfg)?))
}

/// The candidates lying strictly inside `(a, b)` that are not switch
/// times. For piecewise-constant controls these are exactly the interior
/// Lebesgue times.
pub fn lebesgue_times(u: &ControlSignal, candidates: &[f64]) -> Vec<f64> {
    candidates
        .iter()
        .copied()
        .filter(|t| *t > u.start() && *t < u.end() && !u.switch_times().contains(t))
        .collect()
}
