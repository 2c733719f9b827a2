//! Evolution operators of time-dependent vector fields and their lifts.
//!
//! All integration is fixed-step RK4 on a grid that hits every event time
//! exactly, so piecewise-in-time fields (controlled dynamics with switches)
//! are integrated piece by piece. Backward integration (`t < s`) uses the
//! same grid with negative steps.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Condition number above which a transported differential is rejected.
pub const MAX_CONDITION: f64 = 1e12;

/// A time-dependent vector field `X: I × Rᵐ → Rᵐ`.
///
/// Piecewise fields override [`eval_on`](Self::eval_on): the integrator
/// passes the midpoint of the current step as `piece`, so stage evaluations
/// that land on a step boundary still see the piece the step belongs to.
pub trait TimeVectorField: Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64>;

    /// `∂X/∂x`; central differences unless overridden.
    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        finite_difference_jacobian(|y| self.eval(t, y), x)
    }

    fn eval_on(&self, piece: f64, t: f64, x: &DVector<f64>) -> DVector<f64> {
        let _ = piece;
        self.eval(t, x)
    }

    fn jacobian_on(&self, piece: f64, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        let _ = piece;
        self.jacobian(t, x)
    }
}

/// Central-difference Jacobian with step `1e-6·(1 + ‖x‖)`.
pub fn finite_difference_jacobian<F>(f: F, x: &DVector<f64>) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let h = 1e-6 * (1.0 + x.norm());
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        cols.push((f(&xp) - f(&xm)) / (2.0 * h));
    }
    if cols.is_empty() {
        return DMatrix::zeros(0, 0);
    }
    DMatrix::from_columns(&cols)
}

type EvalFn = Box<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacFn = Box<dyn Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A field given by closures.
pub struct FnField {
    dim: usize,
    eval: EvalFn,
    jacobian: Option<JacFn>,
}

impl FnField {
    pub fn new<F>(dim: usize, eval: F) -> Self
    where
        F: Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            eval: Box::new(eval),
            jacobian: None,
        }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(f64, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Box::new(jacobian));
        self
    }
}

impl TimeVectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.eval)(t, x)
    }

    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        match &self.jacobian {
            Some(j) => j(t, x),
            None => finite_difference_jacobian(|y| (self.eval)(t, y), x),
        }
    }
}

/// `X(t, x) = A x + b`.
#[derive(Debug, Clone)]
pub struct AffineField {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl AffineField {
    pub fn linear(a: DMatrix<f64>) -> Self {
        let b = DVector::zeros(a.nrows());
        Self { a, b }
    }

    pub fn constant(b: DVector<f64>) -> Self {
        let n = b.len();
        Self {
            a: DMatrix::zeros(n, n),
            b,
        }
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(DVector::zeros(n))
    }
}

impl TimeVectorField for AffineField {
    fn dim(&self) -> usize {
        self.b.len()
    }

    fn eval(&self, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }

    fn jacobian(&self, _t: f64, _x: &DVector<f64>) -> DMatrix<f64> {
        self.a.clone()
    }
}

/// `X + Y`.
pub struct SumField<'a> {
    pub x: &'a dyn TimeVectorField,
    pub y: &'a dyn TimeVectorField,
}

impl TimeVectorField for SumField<'_> {
    fn dim(&self) -> usize {
        self.x.dim()
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.x.eval(t, x) + self.y.eval(t, x)
    }

    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.x.jacobian(t, x) + self.y.jacobian(t, x)
    }

    fn eval_on(&self, piece: f64, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.x.eval_on(piece, t, x) + self.y.eval_on(piece, t, x)
    }

    fn jacobian_on(&self, piece: f64, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.x.jacobian_on(piece, t, x) + self.y.jacobian_on(piece, t, x)
    }
}

/// Step size and the times the grid must hit exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub step: f64,
    pub event_times: Vec<f64>,
}

impl IntegratorConfig {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            event_times: Vec::new(),
        }
    }

    /// Default base step `1e-3·(b − a)`.
    pub fn for_interval(a: f64, b: f64) -> Self {
        Self::new(1e-3 * (b - a).abs())
    }

    pub fn with_events(mut self, events: impl IntoIterator<Item = f64>) -> Self {
        self.event_times.extend(events);
        self.event_times.sort_by(f64::total_cmp);
        self.event_times.dedup();
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "integrator step must be positive, got {}",
                self.step
            )));
        }
        Ok(())
    }
}

/// Grid from `s` to `t` (either direction) through every event strictly
/// between them. Each event-delimited segment gets equal steps no longer
/// than `cfg.step`.
pub fn time_grid(s: f64, t: f64, cfg: &IntegratorConfig) -> Vec<f64> {
    let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
    let mut breaks = vec![s];
    let inner = cfg.event_times.iter().copied().filter(|e| *e > lo && *e < hi);
    if s <= t {
        breaks.extend(inner);
    } else {
        let mut v: Vec<f64> = inner.collect();
        v.reverse();
        breaks.extend(v);
    }
    breaks.push(t);
    let mut grid = vec![s];
    for w in breaks.windows(2) {
        let len = w[1] - w[0];
        if len == 0.0 {
            continue;
        }
        let n = ((len.abs() / cfg.step) - 1e-9).ceil().max(1.0) as usize;
        for i in 1..n {
            grid.push(w[0] + len * (i as f64) / (n as f64));
        }
        grid.push(w[1]);
    }
    grid
}

/// One RK4 step for `y' = rhs(piece, t, y)`.
pub(crate) fn rk4_step<R>(rhs: &R, t: f64, h: f64, y: &DVector<f64>) -> DVector<f64>
where
    R: Fn(f64, f64, &DVector<f64>) -> DVector<f64>,
{
    let piece = t + 0.5 * h;
    let k1 = rhs(piece, t, y);
    let k2 = rhs(piece, t + 0.5 * h, &(y + &k1 * (0.5 * h)));
    let k3 = rhs(piece, t + 0.5 * h, &(y + &k2 * (0.5 * h)));
    let k4 = rhs(piece, t + h, &(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Integrates along `grid`, returning the state at every node.
pub(crate) fn rk4_path<R>(rhs: R, grid: &[f64], y0: DVector<f64>) -> Result<Vec<DVector<f64>>>
where
    R: Fn(f64, f64, &DVector<f64>) -> DVector<f64>,
{
    let mut out = Vec::with_capacity(grid.len());
    out.push(y0);
    for w in grid.windows(2) {
        let y = rk4_step(&rhs, w[0], w[1] - w[0], out.last().expect("nonempty"));
        if y.iter().any(|c| !c.is_finite()) {
            return Err(Error::BlowUp { t: w[1] });
        }
        out.push(y);
    }
    Ok(out)
}

fn check_start(x: &dyn TimeVectorField, x0: &DVector<f64>, cfg: &IntegratorConfig) -> Result<()> {
    cfg.validate()?;
    check_dim(x.dim(), x0.len())?;
    if x0.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidArgument("non-finite initial state".into()));
    }
    Ok(())
}

/// `Φ^X(t, s, x0)`.
pub fn flow(
    field: &dyn TimeVectorField,
    t: f64,
    s: f64,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    let (_, states) = flow_path(field, t, s, x0, cfg)?;
    Ok(states.into_iter().last().expect("nonempty path"))
}

/// Like [`flow`] but returns the grid and every node state.
pub fn flow_path(
    field: &dyn TimeVectorField,
    t: f64,
    s: f64,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    check_start(field, x0, cfg)?;
    let grid = time_grid(s, t, cfg);
    let states = rk4_path(|p, t, y| field.eval_on(p, t, y), &grid, x0.clone())?;
    Ok((grid, states))
}

/// A point of `TM` in coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
}

/// A point of `T*M` in coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentState {
    pub x: DVector<f64>,
    pub p: DVector<f64>,
}

fn split(y: &DVector<f64>, m: usize) -> (DVector<f64>, DVector<f64>) {
    (y.rows(0, m).into_owned(), y.rows(m, y.len() - m).into_owned())
}

/// Flow of the complete lift: `ẋ = X(t,x)`, `v̇ = ∂X/∂x · v`.
pub fn tangent_lift_flow(
    field: &dyn TimeVectorField,
    t: f64,
    s: f64,
    init: &TangentState,
    cfg: &IntegratorConfig,
) -> Result<TangentState> {
    check_start(field, &init.x, cfg)?;
    let m = field.dim();
    check_dim(m, init.v.len())?;
    let grid = time_grid(s, t, cfg);
    let y0 = DVector::from_iterator(2 * m, init.x.iter().chain(init.v.iter()).copied());
    let path = rk4_path(
        |p, t, y| {
            let (x, v) = split(y, m);
            let dx = field.eval_on(p, t, &x);
            let dv = field.jacobian_on(p, t, &x) * v;
            DVector::from_iterator(2 * m, dx.iter().chain(dv.iter()).copied())
        },
        &grid,
        y0,
    )?;
    let (x, v) = split(path.last().expect("nonempty"), m);
    Ok(TangentState { x, v })
}

/// The differential `T_x Φ^X_{(t,s)}` as an `m × m` matrix, together with
/// the transported base point.
pub fn tangent_lift_matrix(
    field: &dyn TimeVectorField,
    t: f64,
    s: f64,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_start(field, x0, cfg)?;
    let m = field.dim();
    let grid = time_grid(s, t, cfg);
    let mut y0 = DVector::zeros(m + m * m);
    y0.rows_mut(0, m).copy_from(x0);
    for i in 0..m {
        y0[m + i * m + i] = 1.0;
    }
    let path = rk4_path(
        |p, t, y| {
            let x = y.rows(0, m).into_owned();
            let mat = DMatrix::from_column_slice(m, m, y.rows(m, m * m).as_slice());
            let dx = field.eval_on(p, t, &x);
            let dm = field.jacobian_on(p, t, &x) * mat;
            let mut out = DVector::zeros(m + m * m);
            out.rows_mut(0, m).copy_from(&dx);
            out.rows_mut(m, m * m).copy_from_slice(dm.as_slice());
            out
        },
        &grid,
        y0,
    )?;
    let y = path.last().expect("nonempty");
    let x = y.rows(0, m).into_owned();
    let mat = DMatrix::from_column_slice(m, m, y.rows(m, m * m).as_slice());
    Ok((x, mat))
}

/// Flow of the cotangent lift: `ẋ = X(t,x)`, `ṗ = −(∂X/∂x)ᵀ p`.
pub fn cotangent_lift_flow(
    field: &dyn TimeVectorField,
    t: f64,
    s: f64,
    init: &CotangentState,
    cfg: &IntegratorConfig,
) -> Result<CotangentState> {
    check_start(field, &init.x, cfg)?;
    let m = field.dim();
    check_dim(m, init.p.len())?;
    let grid = time_grid(s, t, cfg);
    let y0 = DVector::from_iterator(2 * m, init.x.iter().chain(init.p.iter()).copied());
    let path = rk4_path(
        |piece, t, y| {
            let (x, p) = split(y, m);
            let dx = field.eval_on(piece, t, &x);
            let dp = -(field.jacobian_on(piece, t, &x).transpose() * p);
            DVector::from_iterator(2 * m, dx.iter().chain(dp.iter()).copied())
        },
        &grid,
        y0,
    )?;
    let (x, p) = split(path.last().expect("nonempty"), m);
    Ok(CotangentState { x, p })
}

/// Integrates both lifts over the same base curve on `[a, b]` and returns
/// `max |⟨p(t), v(t)⟩ − ⟨p₀, v₀⟩|` over the grid.
pub fn pairing_drift(
    field: &dyn TimeVectorField,
    interval: (f64, f64),
    x0: &DVector<f64>,
    v0: &DVector<f64>,
    p0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    check_start(field, x0, cfg)?;
    let m = field.dim();
    check_dim(m, v0.len())?;
    check_dim(m, p0.len())?;
    let (a, b) = interval;
    let grid = time_grid(a, b, cfg);
    let y0 = DVector::from_iterator(
        3 * m,
        x0.iter().chain(v0.iter()).chain(p0.iter()).copied(),
    );
    let path = rk4_path(
        |piece, t, y| {
            let x = y.rows(0, m).into_owned();
            let v = y.rows(m, m);
            let p = y.rows(2 * m, m);
            let jac = field.jacobian_on(piece, t, &x);
            let dx = field.eval_on(piece, t, &x);
            let dv = &jac * v;
            let dp = -(jac.transpose() * p);
            DVector::from_iterator(3 * m, dx.iter().chain(dv.iter()).chain(dp.iter()).copied())
        },
        &grid,
        y0,
    )?;
    let reference = p0.dot(v0);
    Ok(path
        .iter()
        .map(|y| (y.rows(2 * m, m).dot(&y.rows(m, m)) - reference).abs())
        .fold(0.0, f64::max))
}

/// The pulled-back field `Z(t, x) = (T Φ^X_{(t,s)})⁻¹ · Y(t, Φ^X_{(t,s)}(x))`.
///
/// Each evaluation integrates the tangent lift of `X` from `s` to `t` and
/// solves a dense linear system. Evaluation failures (singular differential
/// or blow-up) produce a NaN vector, which the integrator turns into a
/// blow-up; the underlying error is kept and can be recovered with
/// [`take_failure`](Self::take_failure).
pub struct PullbackField<'a> {
    x: &'a dyn TimeVectorField,
    y: &'a dyn TimeVectorField,
    s: f64,
    cfg: IntegratorConfig,
    failure: Mutex<Option<Error>>,
}

/// See [`PullbackField`].
pub fn pullback_field<'a>(
    x: &'a dyn TimeVectorField,
    y: &'a dyn TimeVectorField,
    s: f64,
    cfg: &IntegratorConfig,
) -> Result<PullbackField<'a>> {
    check_dim(x.dim(), y.dim())?;
    cfg.validate()?;
    Ok(PullbackField {
        x,
        y,
        s,
        cfg: cfg.clone(),
        failure: Mutex::new(None),
    })
}

impl PullbackField<'_> {
    pub fn try_eval(&self, piece: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let (phi, mat) = tangent_lift_matrix(self.x, t, self.s, x, &self.cfg)?;
        let rhs = self.y.eval_on(piece, t, &phi);
        let sv = mat.clone().singular_values();
        let smin = sv.min();
        let condition = if smin > 0.0 { sv.max() / smin } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::SingularJacobian { condition });
        }
        mat.lu()
            .solve(&rhs)
            .ok_or(Error::SingularJacobian { condition })
    }

    /// The first evaluation error, if any occurred.
    pub fn take_failure(&self) -> Option<Error> {
        self.failure.lock().expect("poisoned").take()
    }
}

impl TimeVectorField for PullbackField<'_> {
    fn dim(&self) -> usize {
        self.x.dim()
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.eval_on(t, t, x)
    }

    fn eval_on(&self, piece: f64, t: f64, x: &DVector<f64>) -> DVector<f64> {
        match self.try_eval(piece, t, x) {
            Ok(z) => z,
            Err(e) => {
                let mut slot = self.failure.lock().expect("poisoned");
                if slot.is_none() {
                    *slot = Some(e);
                }
                DVector::from_element(self.x.dim(), f64::NAN)
            }
        }
    }
}

/// `‖Φ^{X+Y}(t,s,x0) − Φ^X(t,s, Φ^Z(t,s,x0))‖` with `Z` the pullback of `Y`
/// by the flow of `X`.
pub fn flow_decomposition_residual(
    x: &dyn TimeVectorField,
    y: &dyn TimeVectorField,
    t: f64,
    s: f64,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<f64> {
    let sum = SumField { x, y };
    let direct = flow(&sum, t, s, x0, cfg)?;
    let z = pullback_field(x, y, s, cfg)?;
    let inner = flow(&z, t, s, x0, cfg).map_err(|e| z.take_failure().unwrap_or(e))?;
    let composed = flow(x, t, s, &inner, cfg)?;
    Ok((direct - composed).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn nilpotent() -> AffineField {
        AffineField::linear(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]))
    }

    #[test]
    fn grid_hits_events() {
        let cfg = IntegratorConfig::new(0.3).with_events([0.5, 2.0]);
        let g = time_grid(0.0, 1.0, &cfg);
        assert!(g.contains(&0.5));
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] - w[0] <= 0.3 + 1e-15));
        let back = time_grid(1.0, 0.0, &cfg);
        assert_eq!(back.first(), Some(&1.0));
        assert!(back.contains(&0.5));
    }

    #[test]
    fn flow_examples() {
        let cfg = IntegratorConfig::new(1e-3);
        let x0 = v(&[0.3, -2.0]);
        assert_eq!(flow(&AffineField::zero(2), 1.7, 0.2, &x0, &cfg).unwrap(), x0);

        let exp = AffineField::linear(DMatrix::from_element(1, 1, 1.0));
        let e = flow(&exp, 1.0, 0.0, &v(&[1.0]), &cfg).unwrap();
        assert_abs_diff_eq!(e[0], std::f64::consts::E, epsilon = 1e-6);

        let di = FnField::new(2, |_, x| DVector::from_column_slice(&[x[1], 1.0]));
        let end = flow(&di, 1.0, 0.0, &v(&[0.0, 0.0]), &cfg).unwrap();
        assert_abs_diff_eq!(end, v(&[0.5, 1.0]), epsilon = 1e-12);
    }

    #[test]
    fn backward_flow_inverts_forward() {
        let cfg = IntegratorConfig::new(1e-3);
        let f = FnField::new(2, |t, x| DVector::from_column_slice(&[x[1].sin(), -x[0] + t]));
        let x0 = v(&[0.4, 0.1]);
        let fwd = flow(&f, 1.0, 0.0, &x0, &cfg).unwrap();
        let back = flow(&f, 0.0, 1.0, &fwd, &cfg).unwrap();
        assert_abs_diff_eq!(back, x0, epsilon = 1e-10);
    }

    #[test]
    fn blow_up_is_reported() {
        let f = FnField::new(1, |_, x| DVector::from_element(1, x[0] * x[0]));
        let err = flow(&f, 2.0, 0.0, &v(&[1.0]), &IntegratorConfig::new(1e-2)).unwrap_err();
        assert!(matches!(err, Error::BlowUp { .. }));
    }

    #[test]
    fn lift_examples() {
        let cfg = IntegratorConfig::new(1e-3);
        let x0 = v(&[1.0, 2.0]);
        let tau = 0.7;
        let zero = AffineField::zero(2);
        let ts = tangent_lift_flow(&zero, tau, 0.0, &TangentState { x: x0.clone(), v: v(&[3.0, 4.0]) }, &cfg).unwrap();
        assert_eq!(ts.v, v(&[3.0, 4.0]));

        let ts = tangent_lift_flow(&nilpotent(), tau, 0.0, &TangentState { x: x0.clone(), v: v(&[0.0, 1.0]) }, &cfg).unwrap();
        assert_abs_diff_eq!(ts.v, v(&[tau, 1.0]), epsilon = 1e-12);

        let cs = cotangent_lift_flow(&nilpotent(), tau, 0.0, &CotangentState { x: x0.clone(), p: v(&[1.0, 0.0]) }, &cfg).unwrap();
        assert_abs_diff_eq!(cs.p, v(&[1.0, -tau]), epsilon = 1e-12);

        let nl = FnField::new(2, |_, x| DVector::from_column_slice(&[x[1] * x[0], x[0].cos()]));
        let ts = tangent_lift_flow(&nl, 1.0, 0.0, &TangentState { x: x0.clone(), v: DVector::zeros(2) }, &cfg).unwrap();
        assert_eq!(ts.v, DVector::zeros(2));
        let cs = cotangent_lift_flow(&nl, 1.0, 0.0, &CotangentState { x: x0, p: DVector::zeros(2) }, &cfg).unwrap();
        assert_eq!(cs.p, DVector::zeros(2));
    }

    #[test]
    fn pairing_examples() {
        let cfg = IntegratorConfig::new(1e-3);
        let d = pairing_drift(&AffineField::zero(2), (0.0, 1.0), &v(&[1.0, 1.0]), &v(&[1.0, 2.0]), &v(&[3.0, 4.0]), &cfg).unwrap();
        assert_eq!(d, 0.0);
        let d = pairing_drift(&nilpotent(), (0.0, 1.0), &v(&[0.0, 0.0]), &v(&[0.0, 1.0]), &v(&[1.0, 0.0]), &cfg).unwrap();
        assert!(d < 1e-10);
        let scalar = AffineField::linear(DMatrix::from_element(1, 1, 1.0));
        let d = pairing_drift(&scalar, (0.0, 1.0), &v(&[1.0]), &v(&[2.0]), &v(&[3.0]), &cfg).unwrap();
        assert!(d < 1e-8);
    }

    #[test]
    fn pullback_examples() {
        let cfg = IntegratorConfig::new(1e-3);
        let yfield = FnField::new(2, |t, x| DVector::from_column_slice(&[x[1] + t, -x[0]]));
        let zero = AffineField::zero(2);
        let z = pullback_field(&zero, &yfield, 0.0, &cfg).unwrap();
        let x = v(&[0.3, 0.9]);
        assert_abs_diff_eq!(z.eval(0.6, &x), yfield.eval(0.6, &x), epsilon = 1e-14);

        let cx = AffineField::constant(v(&[1.0, -1.0]));
        let cy = AffineField::constant(v(&[0.5, 2.0]));
        let z = pullback_field(&cx, &cy, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(z.eval(0.8, &x), v(&[0.5, 2.0]), epsilon = 1e-14);

        // exp(-A t) b with A nilpotent: (b1 - t b2, b2)
        let b = v(&[0.5, 2.0]);
        let nil = nilpotent();
        let z = pullback_field(&nil, &cy, 0.0, &cfg).unwrap();
        assert_abs_diff_eq!(z.eval(0.8, &x), v(&[b[0] - 0.8 * b[1], b[1]]), epsilon = 1e-12);
    }

    #[test]
    fn decomposition_examples() {
        let cfg = IntegratorConfig::new(1e-2);
        let x0 = v(&[0.2, -0.1]);
        let yfield = FnField::new(2, |_, x| DVector::from_column_slice(&[x[1], -x[0].sin()]));
        let r = flow_decomposition_residual(&AffineField::zero(2), &yfield, 1.0, 0.0, &x0, &cfg).unwrap();
        assert!(r < 1e-10);
        let r = flow_decomposition_residual(
            &AffineField::constant(v(&[1.0, 0.0])),
            &AffineField::constant(v(&[0.0, 1.0])),
            1.0,
            0.0,
            &x0,
            &cfg,
        )
        .unwrap();
        assert!(r < 1e-8);
        let r = flow_decomposition_residual(&nilpotent(), &AffineField::constant(v(&[0.0, 1.0])), 1.0, 0.0, &x0, &cfg).unwrap();
        assert!(r < 1e-6);
    }
}
