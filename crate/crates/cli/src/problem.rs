//! Problem files: TOML in, validated [`Problem`] out, and back.
//!
//! ```toml
//! name = "di"
//! horizon = [0.0, 2.0]
//!
//! [dynamics]
//! builtin = "double_integrator"
//!
//! [boundary]
//! mode = "free"
//! initial = { point = [1.0, 0.0] }
//! terminal = { point = [0.0, 0.0] }
//! ```
//!
//! Expression dynamics replace `builtin` with `f = ["x1", "u0"]`; the
//! running cost is `cost = "..."` at the top level and defaults to `F ≡ 1`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use pontryagin::perturbations::ConeSampling;
use pontryagin::pmp::{BoundarySpec, EndpointSpec, TimeMode};
use pontryagin::reachable::ValueSampling;
use pontryagin::signal::ControlSignal;
use pontryagin::system::{ControlSet, ControlSystem};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{CliError, CliResult};
use crate::expr::{self, Expr};

/// A parsed expression. The source span only serves diagnostics and is
/// ignored by equality.
#[derive(Debug, Clone)]
pub struct Formula {
    pub expr: Expr,
    span: Option<Range<usize>>,
}

impl Formula {
    pub fn new(expr: Expr) -> Self {
        Self { expr, span: None }
    }
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.expr == other.expr
    }
}

impl Serialize for Formula {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.expr)
    }
}

impl<'de> Deserialize<'de> for Formula {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = toml::Spanned::<String>::deserialize(d)?;
        let expr = expr::parse(text.get_ref()).map_err(|e| {
            serde::de::Error::custom(format!(
                "in expression {:?}: {} at offset {}",
                text.get_ref(),
                e,
                e.offset
            ))
        })?;
        Ok(Self {
            expr,
            span: Some(text.span()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Builtin {
    DoubleIntegrator,
    ScalarIntegrator,
    LinearSystem,
    /// `f ≡ 0` on `R^dim`.
    Zero,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dynamics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<Builtin>,
    #[serde(default, rename = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, rename = "B", skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Formula>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    Box,
    Finite,
    Ball,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpec {
    pub kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
}

/// A point, or the affine set through `anchor` cut out by the level-set
/// `normals`. No normals means the whole space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoint {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normals: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    #[serde(default = "fixed")]
    pub mode: TimeMode,
    pub initial: Endpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Endpoint>,
}

fn fixed() -> TimeMode {
    TimeMode::Fixed
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Integrator {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift_tol: Option<f64>,
}

/// Piecewise-constant control on the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSpec {
    #[serde(default)]
    pub switch_times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShootingSpec {
    pub p_a: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multistart: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeKind {
    #[default]
    Tangent,
    Time,
    Initial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConesSpec {
    pub time: f64,
    #[serde(default)]
    pub kind: ConeKind,
    pub sample_times: Vec<f64>,
    /// Needle values; the extreme points of `U` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub queries: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReachSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_controls: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_switches: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<ValueSampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_extremes: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Slice radii of the cone approximation check; needs `[cones]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    pub name: String,
    pub horizon: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<Formula>,
    pub dynamics: Dynamics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control_set: Option<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<Integrator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shooting: Option<ShootingSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cones: Option<ConesSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reach: Option<ReachSpec>,
}

/// 1-based line of a byte offset.
fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|b| *b == b'\n').count() + 1
}

fn vector(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

fn matrix(key: &str, rows: &[Vec<f64>]) -> CliResult<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::input(format!("dynamics.{key}: rows must be nonempty and of equal length")));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}

fn require<'a, T>(value: &'a Option<T>, key: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::input(format!("missing key {key}")))
}

/// Orthonormal basis of the orthogonal complement of the normals.
fn tangent_basis(m: usize, normals: &[DVector<f64>]) -> CliResult<Vec<DVector<f64>>> {
    let mut normal_basis: Vec<DVector<f64>> = Vec::new();
    for n in normals {
        let mut w = n.clone();
        for q in &normal_basis {
            w -= q * q.dot(&w);
        }
        if w.norm() <= 1e-10 * n.norm().max(1.0) {
            return Err(CliError::input("manifold normals are linearly dependent"));
        }
        normal_basis.push(w.normalize());
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for i in 0..m {
        let mut w = DVector::zeros(m);
        w[i] = 1.0;
        for q in normal_basis.iter().chain(&basis) {
            w -= q * q.dot(&w);
        }
        if w.norm() > 1e-8 {
            basis.push(w.normalize());
        }
    }
    Ok(basis)
}

impl Endpoint {
    pub fn spec(&self, m: usize, which: &str) -> CliResult<EndpointSpec> {
        let check = |v: &[f64], key: &str| {
            if v.len() != m {
                return Err(CliError::input(format!(
                    "boundary.{which}.{key} has {} entries, the state has {m}",
                    v.len()
                )));
            }
            Ok(vector(v))
        };
        match (&self.point, &self.anchor) {
            (Some(p), None) if self.normals.is_none() => Ok(EndpointSpec::Point(check(p, "point")?)),
            (None, Some(anchor)) => {
                let anchor = check(anchor, "anchor")?;
                let normals = self
                    .normals
                    .iter()
                    .flatten()
                    .map(|n| check(n, "normals"))
                    .collect::<CliResult<Vec<_>>>()?;
                Ok(EndpointSpec::Manifold {
                    anchor,
                    tangent_basis: tangent_basis(m, &normals)?,
                })
            }
            _ => Err(CliError::input(format!(
                "boundary.{which} needs either point, or anchor with optional normals"
            ))),
        }
    }
}

impl Problem {
    /// Parses and validates. TOML errors carry the line and column of the
    /// offending value; expression errors also name the token.
    pub fn parse(src: &str) -> CliResult<Self> {
        let problem: Problem = toml::from_str(src).map_err(|e| CliError::input(e.to_string()))?;
        problem.validate(src)?;
        Ok(problem)
    }

    /// Canonical TOML; parsing it gives back an equal problem.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("problem serializes")
    }

    pub fn start(&self) -> f64 {
        self.horizon[0]
    }

    pub fn end(&self) -> f64 {
        self.horizon[1]
    }

    fn validate(&self, src: &str) -> CliResult<()> {
        let [a, b] = self.horizon;
        if !(a.is_finite() && b.is_finite() && a < b) {
            return Err(CliError::input(format!("horizon [{a}, {b}] must be finite and increasing")));
        }
        let (m, k) = self.dims()?;
        let formulas = self.dynamics.f.iter().flatten().chain(&self.cost);
        for f in formulas {
            if let Some(name) = f.expr.out_of_range(m, k) {
                let at = f.span.as_ref().map_or(String::new(), |s| format!("line {}: ", line_of(src, s.start)));
                return Err(CliError::input(format!(
                    "{at}variable {name} is out of range for {m} states and {k} controls in {:?}",
                    f.expr.to_string()
                )));
            }
        }
        let sys = self.system()?;
        if let Some(bd) = &self.boundary {
            bd.initial.spec(m, "initial")?;
            if let Some(t) = &bd.terminal {
                t.spec(m, "terminal")?;
            }
        }
        if let Some(step) = self.integrator.as_ref().and_then(|i| i.step) {
            if !(step > 0.0 && step.is_finite()) {
                return Err(CliError::input(format!("integrator.step must be positive, got {step}")));
            }
        }
        if self.control.is_some() {
            self.reference_control()?.validate(sys.control_set(), 1e-9)?;
        }
        if let Some(sh) = &self.shooting {
            if sh.p_a.len() != m {
                return Err(CliError::input(format!("shooting.p_a has {} entries, the state has {m}", sh.p_a.len())));
            }
        }
        if let Some(c) = &self.cones {
            if c.queries.iter().any(|q| q.len() != m) {
                return Err(CliError::input(format!("cones.queries: every query needs {m} entries")));
            }
            if c.controls.iter().flatten().any(|u| u.len() != k) {
                return Err(CliError::input(format!("cones.controls: every control needs {k} entries")));
            }
        }
        Ok(())
    }

    /// State and control dimensions.
    pub fn dims(&self) -> CliResult<(usize, usize)> {
        let d = &self.dynamics;
        let m = match (d.builtin, &d.f) {
            (Some(_), Some(_)) => return Err(CliError::input("dynamics: give either builtin or f, not both")),
            (None, None) => return Err(CliError::input("dynamics: missing builtin or f")),
            (Some(Builtin::DoubleIntegrator), _) => 2,
            (Some(Builtin::ScalarIntegrator), _) => 1,
            (Some(Builtin::LinearSystem), _) => matrix("A", require(&d.a, "dynamics.A")?)?.nrows(),
            (Some(Builtin::Zero), _) => *require(&d.dim, "dynamics.dim")?,
            (None, Some(f)) => f.len(),
        };
        if m == 0 {
            return Err(CliError::input("dynamics: state dimension must be positive"));
        }
        let k = match (&self.control_set, d.builtin) {
            (Some(set), _) => self.control_set_spec(set)?.dim(),
            (None, Some(Builtin::LinearSystem)) => matrix("B", require(&d.b, "dynamics.B")?)?.ncols(),
            (None, Some(_)) => 1,
            (None, None) => d
                .f
                .iter()
                .flatten()
                .chain(&self.cost)
                .map(|f| f.expr.arity().1)
                .max()
                .unwrap_or(0)
                .max(1),
        };
        Ok((m, k))
    }

    fn control_set_spec(&self, s: &SetSpec) -> CliResult<ControlSet> {
        let set = match s.kind {
            SetKind::Box => ControlSet::new_box(vector(require(&s.lo, "control_set.lo")?), vector(require(&s.hi, "control_set.hi")?))?,
            SetKind::Finite => ControlSet::finite(require(&s.points, "control_set.points")?.iter().map(|p| vector(p)).collect())?,
            SetKind::Ball => ControlSet::ball(vector(require(&s.center, "control_set.center")?), *require(&s.radius, "control_set.radius")?)?,
            SetKind::Unbounded => ControlSet::unbounded(*require(&s.dim, "control_set.dim")?),
        };
        Ok(set)
    }

    /// The control set, `[-1, 1]^k` when the file gives none.
    pub fn control_set(&self) -> CliResult<ControlSet> {
        match &self.control_set {
            Some(s) => self.control_set_spec(s),
            None => {
                let (_, k) = self.dims()?;
                Ok(ControlSet::new_box(DVector::from_element(k, -1.0), DVector::from_element(k, 1.0))?)
            }
        }
    }

    pub fn system(&self) -> CliResult<ControlSystem> {
        let (m, k) = self.dims()?;
        let set = self.control_set()?;
        let d = &self.dynamics;
        let linear = |a: DMatrix<f64>, b: DMatrix<f64>| -> CliResult<ControlSystem> {
            if b.ncols() != k {
                return Err(CliError::input(format!("dynamics: B has {} columns, the control set has dimension {k}", b.ncols())));
            }
            Ok(ControlSystem::linear_system(a, b, set.clone())?)
        };
        let sys = match d.builtin {
            Some(Builtin::DoubleIntegrator) if self.control_set.is_none() => ControlSystem::double_integrator(),
            Some(Builtin::ScalarIntegrator) if self.control_set.is_none() => ControlSystem::scalar_integrator(),
            Some(Builtin::DoubleIntegrator) => {
                linear(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]), DMatrix::from_row_slice(2, 1, &[0.0, 1.0]))?
            }
            Some(Builtin::ScalarIntegrator) => linear(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0))?,
            Some(Builtin::LinearSystem) => {
                let a = matrix("A", require(&d.a, "dynamics.A")?)?;
                let b = matrix("B", require(&d.b, "dynamics.B")?)?;
                if a.ncols() != m || b.nrows() != m {
                    return Err(CliError::input("dynamics: A must be square and B must have as many rows as A"));
                }
                linear(a, b)?
            }
            Some(Builtin::Zero) => linear(DMatrix::zeros(m, m), DMatrix::zeros(m, k))?,
            None => {
                let f: Arc<Vec<Expr>> = Arc::new(require(&d.f, "dynamics.f")?.iter().map(|f| f.expr.clone()).collect());
                let g = f.clone();
                ControlSystem::new(
                    self.name.clone(),
                    m,
                    k,
                    move |x, u| DVector::from_iterator(f.len(), f.iter().map(|e| e.eval(x, u))),
                    set,
                )?
                .with_state_jacobian(move |x, u| {
                    let mut jac = DMatrix::zeros(g.len(), x.len());
                    for (i, e) in g.iter().enumerate() {
                        jac.row_mut(i).copy_from(&e.eval_grad(x, u).1.transpose());
                    }
                    jac
                })
                .with_time_cost()
            }
        };
        Ok(match &self.cost {
            Some(c) => {
                let (e, g) = (c.expr.clone(), c.expr.clone());
                sys.with_cost(move |x, u| e.eval(x, u))
                    .with_cost_gradient(move |x, u| g.eval_grad(x, u).1)
            }
            None => sys,
        })
    }

    pub fn boundary(&self, mode: Option<TimeMode>) -> CliResult<BoundarySpec> {
        let (m, _) = self.dims()?;
        let bd = require(&self.boundary, "[boundary]")?;
        let terminal = require(&bd.terminal, "boundary.terminal")?;
        let spec = BoundarySpec {
            mode: mode.unwrap_or(bd.mode),
            initial: bd.initial.spec(m, "initial")?,
            terminal: terminal.spec(m, "terminal")?,
        };
        spec.validate(m)?;
        Ok(spec)
    }

    /// The anchor of the initial endpoint set.
    pub fn initial_state(&self) -> CliResult<DVector<f64>> {
        let (m, _) = self.dims()?;
        let bd = require(&self.boundary, "[boundary]")?;
        Ok(bd.initial.spec(m, "initial")?.anchor().clone())
    }

    pub fn step(&self) -> f64 {
        self.integrator
            .as_ref()
            .and_then(|i| i.step)
            .unwrap_or(1e-3 * (self.end() - self.start()))
    }

    pub fn tolerances(&self) -> (Option<f64>, Option<f64>) {
        self.integrator.as_ref().map_or((None, None), |i| (i.tol, i.drift_tol))
    }

    pub fn reference_control(&self) -> CliResult<ControlSignal> {
        let c = require(&self.control, "[control]")?;
        Ok(ControlSignal::new(
            self.start(),
            self.end(),
            c.switch_times.clone(),
            c.values.iter().map(|v| vector(v)).collect(),
        )?)
    }

    pub fn cone_sampling(&self, sys: &ControlSystem) -> CliResult<ConeSampling> {
        let c = require(&self.cones, "[cones]")?;
        Ok(match &c.controls {
            Some(controls) => ConeSampling::new(c.sample_times.clone(), controls.iter().map(|v| vector(v)).collect()),
            None => ConeSampling::extreme(sys, c.sample_times.clone())?,
        })
    }

    /// Tangent basis of the initial manifold, empty for a point.
    pub fn initial_tangent_basis(&self) -> CliResult<Vec<DVector<f64>>> {
        let (m, _) = self.dims()?;
        let bd = require(&self.boundary, "[boundary]")?;
        Ok(bd.initial.spec(m, "initial")?.tangent_basis().to_vec())
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_toml())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DI: &str = r#"
name = "di"
horizon = [0.0, 2.0]

[dynamics]
builtin = "double_integrator"

[boundary]
mode = "free"
initial = { point = [1.0, 0.0] }
terminal = { point = [0.0, 0.0] }
"#;

    #[test]
    fn builtin_parses() {
        let p = Problem::parse(DI).unwrap();
        assert_eq!(p.dims().unwrap(), (2, 1));
        let bd = p.boundary(None).unwrap();
        assert_eq!(bd.mode, TimeMode::Free);
        assert_eq!(p.boundary(Some(TimeMode::Fixed)).unwrap().mode, TimeMode::Fixed);
        assert_eq!(p.step(), 2e-3);
    }

    #[test]
    fn normals_become_tangent_basis() {
        let b = tangent_basis(3, &[vector(&[1.0, 1.0, 0.0])]).unwrap();
        assert_eq!(b.len(), 2);
        for w in &b {
            assert!(w.dot(&vector(&[1.0, 1.0, 0.0])).abs() < 1e-12);
            assert!((w.norm() - 1.0).abs() < 1e-12);
        }
        assert!(b[0].dot(&b[1]).abs() < 1e-12);
        assert_eq!(tangent_basis(2, &[]).unwrap().len(), 2);
        assert!(tangent_basis(2, &[vector(&[1.0, 0.0]), vector(&[2.0, 0.0])]).is_err());
    }

    #[test]
    fn expression_dynamics_match_builtin() {
        let src = DI.replace("builtin = \"double_integrator\"", "f = [\"x1\", \"u0\"]");
        let p = Problem::parse(&src).unwrap();
        let sys = p.system().unwrap();
        let di = ControlSystem::double_integrator();
        let (x, u) = (vector(&[0.3, -0.7]), vector(&[0.5]));
        assert_eq!(sys.dynamics(&x, &u), di.dynamics(&x, &u));
        assert_eq!(sys.state_jacobian(&x, &u), di.state_jacobian(&x, &u));
        assert_eq!(sys.running_cost(&x, &u), 1.0);
    }

    #[test]
    fn out_of_range_variable_names_line() {
        let src = DI.replace("builtin = \"double_integrator\"", "f = [\"x1\",\n \"u0 + x2\"]");
        let err = Problem::parse(&src).unwrap_err().to_string();
        assert!(err.contains("line 7") && err.contains("x2"), "{err}");
    }
}
