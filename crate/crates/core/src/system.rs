//! Control systems `ẋ = f(x, u)`, `u ∈ U`, with a running cost `F(x, u)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::flows::{finite_difference_jacobian, TimeVectorField};
use crate::signal::ControlSignal;

pub type DynamicsFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
pub type CostFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
pub type StateJacobianFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type CostGradientFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// The admissible control values `U ⊂ Rᵏ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlSet {
    /// Componentwise bounds; infinite bounds are allowed.
    Box { lo: DVector<f64>, hi: DVector<f64> },
    Finite(Vec<DVector<f64>>),
    Ball { center: DVector<f64>, radius: f64 },
}

impl ControlSet {
    pub fn new_box(lo: DVector<f64>, hi: DVector<f64>) -> Result<Self> {
        check_dim(lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::InvalidArgument("box bounds need lo <= hi".into()));
        }
        Ok(ControlSet::Box { lo, hi })
    }

    /// `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new_box(DVector::from_element(1, lo), DVector::from_element(1, hi))
    }

    /// `Rᵏ`.
    pub fn unbounded(k: usize) -> Self {
        ControlSet::Box {
            lo: DVector::from_element(k, f64::NEG_INFINITY),
            hi: DVector::from_element(k, f64::INFINITY),
        }
    }

    pub fn finite(points: Vec<DVector<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("finite control set"))?;
        let k = first.len();
        for p in &points {
            check_dim(k, p.len())?;
        }
        Ok(ControlSet::Finite(points))
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument("ball radius must be finite and nonnegative".into()));
        }
        Ok(ControlSet::Ball { center, radius })
    }

    pub fn dim(&self) -> usize {
        match self {
            ControlSet::Box { lo, .. } => lo.len(),
            ControlSet::Finite(p) => p[0].len(),
            ControlSet::Ball { center, .. } => center.len(),
        }
    }

    pub fn is_bounded(&self) -> bool {
        match self {
            ControlSet::Box { lo, hi } => lo.iter().chain(hi.iter()).all(|c| c.is_finite()),
            _ => true,
        }
    }

    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        if u.len() != self.dim() {
            return false;
        }
        match self {
            ControlSet::Box { lo, hi } => u
                .iter()
                .zip(lo.iter().zip(hi.iter()))
                .all(|(x, (l, h))| *x >= l - tol && *x <= h + tol),
            ControlSet::Finite(points) => points.iter().any(|p| (p - u).amax() <= tol),
            ControlSet::Ball { center, radius } => (u - center).norm() <= radius + tol,
        }
    }

    /// Extreme points: box vertices, the finite points themselves, or the
    /// `2k` axis points of a ball. Empty for unbounded boxes.
    pub fn extreme_points(&self) -> Vec<DVector<f64>> {
        match self {
            ControlSet::Box { lo, hi } => {
                if !self.is_bounded() {
                    return Vec::new();
                }
                let k = lo.len();
                (0..1usize << k)
                    .map(|mask| {
                        DVector::from_iterator(
                            k,
                            (0..k).map(|i| if mask >> i & 1 == 1 { hi[i] } else { lo[i] }),
                        )
                    })
                    .collect()
            }
            ControlSet::Finite(points) => points.clone(),
            ControlSet::Ball { center, radius } => {
                let k = center.len();
                let mut out = Vec::with_capacity(2 * k);
                for i in 0..k {
                    for s in [1.0, -1.0] {
                        let mut p = center.clone();
                        p[i] += s * radius;
                        out.push(p);
                    }
                }
                out
            }
        }
    }
}

/// `ẋ = f(x, u)` with running cost `F(x, u)` and control set `U`.
///
/// State Jacobians default to central differences when no analytic form is
/// supplied.
#[derive(Clone)]
pub struct ControlSystem {
    name: String,
    m: usize,
    k: usize,
    f: DynamicsFn,
    cost: CostFn,
    df_dx: Option<StateJacobianFn>,
    dcost_dx: Option<CostGradientFn>,
    control_set: ControlSet,
    extended: bool,
}

impl fmt::Debug for ControlSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlSystem")
            .field("name", &self.name)
            .field("m", &self.m)
            .field("k", &self.k)
            .field("control_set", &self.control_set)
            .field("extended", &self.extended)
            .finish_non_exhaustive()
    }
}

impl ControlSystem {
    /// A system with zero running cost.
    pub fn new<F>(name: impl Into<String>, m: usize, k: usize, f: F, control_set: ControlSet) -> Result<Self>
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        if m == 0 {
            return Err(Error::InvalidArgument("state dimension must be positive".into()));
        }
        check_dim(k, control_set.dim())?;
        Ok(Self {
            name: name.into(),
            m,
            k,
            f: Arc::new(f),
            cost: Arc::new(|_, _| 0.0),
            df_dx: None,
            dcost_dx: None,
            control_set,
            extended: false,
        })
    }

    pub fn with_cost<F>(mut self, cost: F) -> Self
    where
        F: Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        self.cost = Arc::new(cost);
        self.dcost_dx = None;
        self
    }

    pub fn with_cost_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        self.dcost_dx = Some(Arc::new(grad));
        self
    }

    pub fn with_state_jacobian<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.df_dx = Some(Arc::new(jac));
        self
    }

    /// `F ≡ 1`, the time-optimal cost.
    pub fn with_time_cost(self) -> Self {
        let m = self.m;
        self.with_cost(|_, _| 1.0)
            .with_cost_gradient(move |_, _| DVector::zeros(m))
    }

    /// `F = xᵀQx + uᵀRu`.
    pub fn with_quadratic_cost(self, q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        check_dim(self.m, q.nrows())?;
        check_dim(self.k, r.nrows())?;
        let (q2, r2) = (q.clone(), r.clone());
        let qg = &q + q.transpose();
        Ok(self
            .with_cost(move |x, u| (x.transpose() * &q2 * x)[0] + (u.transpose() * &r2 * u)[0])
            .with_cost_gradient(move |x, _| &qg * x))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn state_dim(&self) -> usize {
        self.m
    }

    pub fn control_dim(&self) -> usize {
        self.k
    }

    pub fn control_set(&self) -> &ControlSet {
        &self.control_set
    }

    pub fn is_extended(&self) -> bool {
        self.extended
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.df_dx.is_some()
    }

    pub fn dynamics(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        (self.f)(x, u)
    }

    pub fn running_cost(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (self.cost)(x, u)
    }

    pub fn state_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        match &self.df_dx {
            Some(j) => j(x, u),
            None => finite_difference_jacobian(|y| (self.f)(y, u), x),
        }
    }

    pub fn cost_gradient(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match &self.dcost_dx {
            Some(g) => g(x, u),
            None => {
                let jac = finite_difference_jacobian(
                    |y| DVector::from_element(1, (self.cost)(y, u)),
                    x,
                );
                jac.row(0).transpose()
            }
        }
    }

    /// The cost-augmented system on `(x⁰, x)` with `f̂ = (F, f)`.
    ///
    /// Nothing depends on `x⁰`, so the first column of `∂f̂/∂x̂` is zero and
    /// the extended system carries zero running cost of its own.
    pub fn extend(&self) -> Result<ControlSystem> {
        if self.extended {
            return Err(Error::AlreadyExtended);
        }
        let m = self.m;
        let base = self.clone();
        let base_jac = self.clone();
        let f = move |xh: &DVector<f64>, u: &DVector<f64>| {
            let x = xh.rows(1, m).into_owned();
            let mut out = DVector::zeros(m + 1);
            out[0] = base.running_cost(&x, u);
            out.rows_mut(1, m).copy_from(&base.dynamics(&x, u));
            out
        };
        let jac = move |xh: &DVector<f64>, u: &DVector<f64>| {
            let x = xh.rows(1, m).into_owned();
            let mut out = DMatrix::zeros(m + 1, m + 1);
            out.view_mut((0, 1), (1, m))
                .copy_from(&base_jac.cost_gradient(&x, u).transpose());
            out.view_mut((1, 1), (m, m))
                .copy_from(&base_jac.state_jacobian(&x, u));
            out
        };
        let mut ext = ControlSystem::new(
            format!("{}+cost", self.name),
            m + 1,
            self.k,
            f,
            self.control_set.clone(),
        )?
        .with_state_jacobian(jac);
        ext.extended = true;
        Ok(ext)
    }

    /// `ẋ₁ = x₂, ẋ₂ = u`, `|u| ≤ 1`, `F ≡ 1`.
    pub fn double_integrator() -> Self {
        ControlSystem::new(
            "double_integrator",
            2,
            1,
            |x, u| DVector::from_column_slice(&[x[1], u[0]]),
            ControlSet::interval(-1.0, 1.0).expect("valid interval"),
        )
        .expect("valid system")
        .with_state_jacobian(|_, _| DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]))
        .with_time_cost()
    }

    /// `ẋ = u`, `|u| ≤ 1`, `F ≡ 1`.
    pub fn scalar_integrator() -> Self {
        ControlSystem::new(
            "scalar_integrator",
            1,
            1,
            |_, u| DVector::from_element(1, u[0]),
            ControlSet::interval(-1.0, 1.0).expect("valid interval"),
        )
        .expect("valid system")
        .with_state_jacobian(|_, _| DMatrix::zeros(1, 1))
        .with_time_cost()
    }

    /// `ẋ = Ax + Bu`, `F ≡ 1`.
    pub fn linear_system(a: DMatrix<f64>, b: DMatrix<f64>, control_set: ControlSet) -> Result<Self> {
        let m = a.nrows();
        check_dim(m, a.ncols())?;
        check_dim(m, b.nrows())?;
        let (a2, b2) = (a.clone(), b.clone());
        Ok(ControlSystem::new(
            "linear_system",
            m,
            b.ncols(),
            move |x, u| &a2 * x + &b2 * u,
            control_set,
        )?
        .with_state_jacobian(move |_, _| a.clone())
        .with_time_cost())
    }

    /// The time-dependent field `x ↦ f(x, u(t))`.
    pub fn field<'a>(&'a self, control: &'a ControlSignal) -> ControlledField<'a> {
        ControlledField {
            sys: self,
            control,
        }
    }
}

/// `X^{u}(t, x) = f(x, u(t))`, resolving the active control piece from the
/// integrator's step hint.
pub struct ControlledField<'a> {
    sys: &'a ControlSystem,
    control: &'a ControlSignal,
}

impl TimeVectorField for ControlledField<'_> {
    fn dim(&self) -> usize {
        self.sys.m
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.sys.dynamics(x, self.control.value_at(t))
    }

    fn jacobian(&self, t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.sys.state_jacobian(x, self.control.value_at(t))
    }

    fn eval_on(&self, piece: f64, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.sys.dynamics(x, self.control.value_at(piece))
    }

    fn jacobian_on(&self, piece: f64, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.sys.state_jacobian(x, self.control.value_at(piece))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    #[test]
    fn extend_time_optimal() {
        let sys = ControlSystem::double_integrator();
        let ext = sys.extend().unwrap();
        assert_eq!(ext.state_dim(), 3);
        let f = ext.dynamics(&v(&[5.0, 1.0, 2.0]), &v(&[0.5]));
        assert_eq!(f, v(&[1.0, 2.0, 0.5]));
        let j = ext.state_jacobian(&v(&[5.0, 1.0, 2.0]), &v(&[0.5]));
        assert!(j.column(0).iter().all(|c| *c == 0.0));
        assert!(matches!(ext.extend(), Err(Error::AlreadyExtended)));
    }

    #[test]
    fn extend_quadratic_cost() {
        let sys = ControlSystem::new("int", 1, 1, |_, u| u.clone(), ControlSet::unbounded(1))
            .unwrap()
            .with_cost(|_, u| u[0] * u[0]);
        let ext = sys.extend().unwrap();
        assert_eq!(ext.dynamics(&v(&[0.0, 3.0]), &v(&[0.5])), v(&[0.25, 0.5]));
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let sys = ControlSystem::new(
            "pendulum",
            2,
            1,
            |x, u| v(&[x[1], -x[0].sin() + u[0]]),
            ControlSet::interval(-1.0, 1.0).unwrap(),
        )
        .unwrap();
        let x = v(&[0.3, -0.2]);
        let j = sys.state_jacobian(&x, &v(&[0.1]));
        let exact = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -(0.3f64).cos(), 0.0]);
        assert!((j - exact).amax() < 1e-8);
    }

    #[test]
    fn control_set_queries() {
        let b = ControlSet::new_box(v(&[-1.0, 0.0]), v(&[1.0, 2.0])).unwrap();
        assert_eq!(b.extreme_points().len(), 4);
        assert!(b.contains(&v(&[0.0, 2.0]), 0.0));
        assert!(!b.contains(&v(&[0.0, 2.1]), 0.0));
        assert!(ControlSet::new_box(v(&[1.0]), v(&[0.0])).is_err());
        assert!(ControlSet::finite(vec![]).is_err());
        assert!(ControlSet::unbounded(2).extreme_points().is_empty());
        let ball = ControlSet::ball(v(&[0.0, 0.0]), 2.0).unwrap();
        assert_eq!(ball.extreme_points().len(), 4);
        assert!(ball.contains(&v(&[1.0, 1.0]), 0.0));
    }
}
