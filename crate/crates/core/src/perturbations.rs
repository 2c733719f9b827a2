//! Needle-like variations, perturbation vectors and the cones they generate.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::flows::{tangent_lift_matrix, IntegratorConfig};
use crate::geometry::cone::{complement_basis, distance_l1, GeneratedCone};
use crate::geometry::covering::{covered_point_root, CoveringOptions};
use crate::geometry::lp::{LinearProgram, Relation};
use crate::geometry::{conic_membership, MembershipVerdict};
use crate::signal::ControlSignal;
use crate::system::ControlSystem;
use crate::trajectory::{simulate, Trajectory};

/// `π₁ = {t₁, l₁, u₁}`: the control is replaced by `u₁` on
/// `[t₁ − l₁s, t₁]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeedleData {
    pub t1: f64,
    pub l1: f64,
    pub u1: DVector<f64>,
}

impl NeedleData {
    pub fn new(t1: f64, l1: f64, u1: DVector<f64>) -> Result<Self> {
        if !(l1 >= 0.0) || !l1.is_finite() {
            return Err(Error::InvalidArgument(format!("needle length rate must be >= 0, got {l1}")));
        }
        Ok(Self { t1, l1, u1 })
    }
}

/// `π± = {τ, l_τ, δτ, u_τ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePerturbationData {
    pub tau: f64,
    pub l_tau: f64,
    pub delta_tau: f64,
    pub u_tau: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationVector {
    pub base_time: f64,
    pub vector: DVector<f64>,
}

/// Needle intervals for a family of needles at parameter `s`.
///
/// Needles sharing a time are stacked, the later-listed one innermost:
/// for lengths `l′, l″` at `t₁` the intervals are `[t₁−(l′+l″)s, t₁−l″s]`
/// and `[t₁−l″s, t₁]`. `end_of` maps a needle time to the right end of its
/// stack (the identity except for end-time shifts).
fn stacked_intervals(
    needles: &[NeedleData],
    s: f64,
    end_of: impl Fn(f64) -> f64,
) -> Vec<(f64, f64, DVector<f64>)> {
    let mut out = Vec::new();
    let mut times: Vec<f64> = needles.iter().map(|n| n.t1).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for t in times {
        let mut hi = end_of(t);
        for n in needles.iter().rev().filter(|n| n.t1 == t && n.l1 > 0.0) {
            let lo = hi - n.l1 * s;
            out.push((lo, hi, n.u1.clone()));
            hi = lo;
        }
    }
    out.sort_by(|x, y| x.0.total_cmp(&y.0));
    out
}

fn insert_intervals(
    u: &ControlSignal,
    intervals: &[(f64, f64, DVector<f64>)],
) -> Result<ControlSignal> {
    for w in intervals.windows(2) {
        if w[1].0 < w[0].1 {
            return Err(Error::NeedleInterval {
                lo: w[1].0,
                hi: w[1].1,
                reason: format!("overlaps [{}, {}]", w[0].0, w[0].1),
            });
        }
    }
    let mut out = u.clone();
    for (lo, hi, val) in intervals {
        if !(*lo > u.start() && *hi <= u.end()) {
            return Err(Error::NeedleInterval {
                lo: *lo,
                hi: *hi,
                reason: format!("escapes ({}, {}]", u.start(), u.end()),
            });
        }
        check_dim(u.dim(), val.len())?;
        out = out.with_value_on(*lo, *hi, val.clone())?;
    }
    Ok(out)
}

/// `u[π^s]`: `u₁` on `[t₁ − l₁s, t₁]`, `u` elsewhere.
pub fn apply_needle(u: &ControlSignal, pi: &NeedleData, s: f64) -> Result<ControlSignal> {
    apply_needles(u, std::slice::from_ref(pi), s)
}

/// Applies several needles at once, rejecting overlapping intervals.
pub fn apply_needles(u: &ControlSignal, needles: &[NeedleData], s: f64) -> Result<ControlSignal> {
    if !(s > 0.0) {
        return Err(Error::InvalidArgument(format!("perturbation parameter must be positive, got {s}")));
    }
    insert_intervals(u, &stacked_intervals(needles, s, |t| t))
}

/// `u[π±^s]` on `[a, b + δτ·s]`: `u` up to `τ − (l−δτ)s`, `u_τ` up to
/// `τ + δτ·s`, then `u` delayed by `δτ·s`.
pub fn apply_time_perturbation(
    u: &ControlSignal,
    pi: &TimePerturbationData,
    s: f64,
) -> Result<ControlSignal> {
    check_dim(u.dim(), pi.u_tau.len())?;
    let shift = pi.delta_tau * s;
    let lo = pi.tau - (pi.l_tau - pi.delta_tau) * s;
    let hi = pi.tau + shift;
    if !(lo > u.start() && pi.tau < u.end() && pi.l_tau >= 0.0) {
        return Err(Error::NeedleInterval {
            lo,
            hi,
            reason: format!("escapes ({}, {})", u.start(), u.end()),
        });
    }
    let mut pieces: Vec<(f64, DVector<f64>)> = u
        .pieces()
        .into_iter()
        .filter(|(st, _, _)| *st < lo.min(pi.tau))
        .map(|(st, _, v)| (st, v.clone()))
        .collect();
    pieces.push((lo, pi.u_tau.clone()));
    pieces.push((hi, u.value_at(pi.tau).clone()));
    for (st, _, v) in u.pieces() {
        if st > pi.tau {
            pieces.push((st + shift, v.clone()));
        }
    }
    ControlSignal::from_breakpoints(u.start(), u.end() + shift, pieces)
}

fn check_lebesgue(traj: &Trajectory, t: f64) -> Result<()> {
    let u = traj.control();
    if !(t > u.start() && t <= u.end()) {
        return Err(Error::InvalidArgument(format!(
            "time {t} is outside ({}, {}]",
            u.start(),
            u.end()
        )));
    }
    if u.switch_times().contains(&t) {
        return Err(Error::SwitchTime { t });
    }
    Ok(())
}

/// `v[π₁] = l₁·(f(γ(t₁), u₁) − f(γ(t₁), u(t₁)))`.
pub fn class1_vector(sys: &ControlSystem, traj: &Trajectory, pi: &NeedleData) -> Result<PerturbationVector> {
    check_lebesgue(traj, pi.t1)?;
    check_dim(sys.control_dim(), pi.u1.len())?;
    let x = traj.state_at(pi.t1);
    let u = traj.control().value_at(pi.t1);
    Ok(PerturbationVector {
        base_time: pi.t1,
        vector: (sys.dynamics(&x, &pi.u1) - sys.dynamics(&x, u)) * pi.l1,
    })
}

/// `f(γ(τ),u(τ))·δτ + l_τ·(f(γ(τ),u_τ) − f(γ(τ),u(τ)))`.
pub fn time_perturbation_vector(
    sys: &ControlSystem,
    traj: &Trajectory,
    pi: &TimePerturbationData,
) -> Result<PerturbationVector> {
    check_lebesgue(traj, pi.tau)?;
    let x = traj.state_at(pi.tau);
    let f0 = sys.dynamics(&x, traj.control().value_at(pi.tau));
    let f1 = sys.dynamics(&x, &pi.u_tau);
    Ok(PerturbationVector {
        base_time: pi.tau,
        vector: &f0 * pi.delta_tau + (f1 - &f0) * pi.l_tau,
    })
}

/// `(Φ^{X^u}_{(to,from)})_*` at `γ(from)` along the trajectory.
pub fn transport_matrix(sys: &ControlSystem, traj: &Trajectory, from: f64, to: f64) -> Result<DMatrix<f64>> {
    let m = sys.state_dim();
    if from == to {
        return Ok(DMatrix::identity(m, m));
    }
    let field = sys.field(traj.control());
    let (_, mat) = tangent_lift_matrix(&field, to, from, &traj.state_at(from), traj.config())?;
    Ok(mat)
}

/// `V[π](t)`: the complete lift carries `v` from its base time to `t`.
pub fn transport_vector(
    sys: &ControlSystem,
    traj: &Trajectory,
    v: &PerturbationVector,
    t: f64,
) -> Result<PerturbationVector> {
    if t < v.base_time {
        return Err(Error::InvalidArgument(format!(
            "cannot transport from {} back to {t}",
            v.base_time
        )));
    }
    let mat = transport_matrix(sys, traj, v.base_time, t)?;
    Ok(PerturbationVector {
        base_time: t,
        vector: mat * &v.vector,
    })
}

/// `Σ V[πᵢ](t)` for needles at times `≤ t`.
pub fn multi_needle_vector(
    sys: &ControlSystem,
    traj: &Trajectory,
    needles: &[NeedleData],
    t: f64,
) -> Result<PerturbationVector> {
    let mut sum = DVector::zeros(sys.state_dim());
    for pi in needles {
        if pi.t1 > t {
            return Err(Error::InvalidArgument(format!("needle at {} is after {t}", pi.t1)));
        }
        sum += transport_vector(sys, traj, &class1_vector(sys, traj, pi)?, t)?.vector;
    }
    Ok(PerturbationVector {
        base_time: t,
        vector: sum,
    })
}

/// Where each cone generator comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum Provenance {
    /// Transported class-I vector of the needle `{tau, l, u1}`.
    Needle { tau: f64, l: f64, u1: DVector<f64> },
    /// `sign · f(γ(t), u(t))`.
    TimeAxis { sign: f64 },
    /// `sign ·` the transported `index`-th tangent vector of `S_a`.
    InitialManifold {
        index: usize,
        sign: f64,
        direction: DVector<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeGenerator {
    pub vector: DVector<f64>,
    pub provenance: Provenance,
}

/// A finitely sampled perturbation cone at `at_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationCone {
    pub at_time: f64,
    pub state_dim: usize,
    pub control_dim: usize,
    pub generators: Vec<ConeGenerator>,
}

impl PerturbationCone {
    pub fn cone(&self) -> Result<GeneratedCone> {
        GeneratedCone::new(
            self.state_dim,
            self.generators.iter().map(|g| g.vector.clone()).collect(),
        )
    }

    pub fn vectors(&self) -> Vec<DVector<f64>> {
        self.generators.iter().map(|g| g.vector.clone()).collect()
    }

    fn needle_times(&self) -> Vec<f64> {
        self.generators
            .iter()
            .filter_map(|g| match g.provenance {
                Provenance::Needle { tau, .. } => Some(tau),
                _ => None,
            })
            .collect()
    }

    fn needle_controls(&self) -> Vec<DVector<f64>> {
        self.generators
            .iter()
            .filter_map(|g| match &g.provenance {
                Provenance::Needle { u1, .. } => Some(u1.clone()),
                _ => None,
            })
            .collect()
    }

    fn initial_basis(&self) -> Vec<DVector<f64>> {
        let mut basis: Vec<(usize, DVector<f64>)> = self
            .generators
            .iter()
            .filter_map(|g| match &g.provenance {
                Provenance::InitialManifold { index, sign, direction } if *sign > 0.0 => {
                    Some((*index, direction.clone()))
                }
                _ => None,
            })
            .collect();
        basis.sort_by_key(|(i, _)| *i);
        basis.into_iter().map(|(_, d)| d).collect()
    }

    fn has_time_axis(&self) -> bool {
        self.generators
            .iter()
            .any(|g| matches!(g.provenance, Provenance::TimeAxis { .. }))
    }

    /// Columns `g0..g{m-1},tau,l,u0..u{k-1},kind`. Non-needle rows leave the
    /// control columns as `NaN`; the time axis stores its sign in `l`.
    pub fn to_csv(&self) -> String {
        let (m, k) = (self.state_dim, self.control_dim);
        let mut header: Vec<String> = (0..m).map(|i| format!("g{i}")).collect();
        header.push("tau".into());
        header.push("l".into());
        header.extend((0..k).map(|i| format!("u{i}")));
        header.push("kind".into());
        let mut out = header.join(",");
        out.push('\n');
        let fmt = crate::csvio::format_value;
        for g in &self.generators {
            let mut cells: Vec<String> = g.vector.iter().map(|c| fmt(*c)).collect();
            let nan = || fmt(f64::NAN);
            let kind = match &g.provenance {
                Provenance::Needle { tau, l, u1 } => {
                    cells.push(fmt(*tau));
                    cells.push(fmt(*l));
                    cells.extend(u1.iter().map(|c| fmt(*c)));
                    "needle".to_string()
                }
                Provenance::TimeAxis { sign } => {
                    cells.push(fmt(self.at_time));
                    cells.push(fmt(*sign));
                    cells.extend((0..k).map(|_| nan()));
                    "time".to_string()
                }
                Provenance::InitialManifold { index, sign, .. } => {
                    cells.push(nan());
                    cells.push(fmt(*sign));
                    cells.extend((0..k).map(|_| nan()));
                    format!("initial:{index}")
                }
            };
            cells.push(kind);
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Explicit sample of Lebesgue times and control values.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSampling {
    pub times: Vec<f64>,
    pub controls: Vec<DVector<f64>>,
}

impl ConeSampling {
    pub fn new(times: Vec<f64>, controls: Vec<DVector<f64>>) -> Self {
        Self { times, controls }
    }

    /// The extreme points of `U` at each time. For control-affine dynamics
    /// with a polytope `U` these generate the same cone as all of `U`.
    pub fn extreme(sys: &ControlSystem, times: Vec<f64>) -> Result<Self> {
        let controls = sys.control_set().extreme_points();
        if controls.is_empty() {
            return Err(Error::InvalidArgument(
                "control set has no finite extreme points; sample controls explicitly".into(),
            ));
        }
        Ok(Self { times, controls })
    }

    fn union(&self, other_times: &[f64], other_controls: &[DVector<f64>]) -> Self {
        let mut times = self.times.clone();
        times.extend_from_slice(other_times);
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut controls = self.controls.clone();
        for c in other_controls {
            if !controls.contains(c) {
                controls.push(c.clone());
            }
        }
        Self { times, controls }
    }
}

fn is_negligible(v: &DVector<f64>, scale: f64) -> bool {
    v.amax() <= 1e-14 * scale.max(1.0)
}

/// `K_t` sampled: every `(τ, u₁)` pair gives the transported class-I vector
/// with `l₁ = 1`. Zero vectors are dropped.
pub fn build_tangent_cone(
    sys: &ControlSystem,
    traj: &Trajectory,
    t: f64,
    sampling: &ConeSampling,
) -> Result<PerturbationCone> {
    if sampling.times.is_empty() {
        return Err(Error::Empty("sampling times"));
    }
    if sampling.controls.is_empty() {
        return Err(Error::Empty("sampling controls"));
    }
    let mut generators = Vec::new();
    let mut times = sampling.times.clone();
    times.sort_by(f64::total_cmp);
    times.dedup();
    for &tau in &times {
        if tau > t {
            return Err(Error::InvalidArgument(format!("sample time {tau} is after {t}")));
        }
        check_lebesgue(traj, tau)?;
        let mat = transport_matrix(sys, traj, tau, t)?;
        let x = traj.state_at(tau);
        let f0 = sys.dynamics(&x, traj.control().value_at(tau));
        for u1 in &sampling.controls {
            check_dim(sys.control_dim(), u1.len())?;
            let v = sys.dynamics(&x, u1) - &f0;
            if is_negligible(&v, f0.amax()) {
                continue;
            }
            generators.push(ConeGenerator {
                vector: &mat * v,
                provenance: Provenance::Needle {
                    tau,
                    l: 1.0,
                    u1: u1.clone(),
                },
            });
        }
    }
    Ok(PerturbationCone {
        at_time: t,
        state_dim: sys.state_dim(),
        control_dim: sys.control_dim(),
        generators,
    })
}

/// `K^±_t`: the tangent cone plus `±f(γ(t), u(t))`.
pub fn build_time_cone(
    sys: &ControlSystem,
    traj: &Trajectory,
    t: f64,
    sampling: &ConeSampling,
) -> Result<PerturbationCone> {
    check_lebesgue(traj, t)?;
    let mut cone = build_tangent_cone(sys, traj, t, sampling)?;
    let f = sys.dynamics(&traj.state_at(t), traj.control().value_at(t));
    if !is_negligible(&f, 0.0) {
        for sign in [1.0, -1.0] {
            cone.generators.push(ConeGenerator {
                vector: &f * sign,
                provenance: Provenance::TimeAxis { sign },
            });
        }
    }
    Ok(cone)
}

/// `𝒦_t`: the time cone plus `±` the transported basis of `T S_a`.
pub fn build_initial_cone(
    sys: &ControlSystem,
    traj: &Trajectory,
    t: f64,
    sampling: &ConeSampling,
    sa_tangent_basis: &[DVector<f64>],
) -> Result<PerturbationCone> {
    let mut cone = build_time_cone(sys, traj, t, sampling)?;
    if sa_tangent_basis.is_empty() {
        return Ok(cone);
    }
    let mat = transport_matrix(sys, traj, traj.start(), t)?;
    for (index, w) in sa_tangent_basis.iter().enumerate() {
        check_dim(sys.state_dim(), w.len())?;
        let tw = &mat * w;
        for sign in [1.0, -1.0] {
            cone.generators.push(ConeGenerator {
                vector: &tw * sign,
                provenance: Provenance::InitialManifold {
                    index,
                    sign,
                    direction: w.clone(),
                },
            });
        }
    }
    Ok(cone)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeTransportReport {
    /// Largest L1 distance from a transported unit generator to the cone at
    /// `t2`.
    pub max_violation: f64,
    /// `‖Φ_*(f(γ(t1),u(t1))) − f(γ(t2),u(t2))‖`, reported only when the
    /// control has no switch in `[t1, t2]`, where the identity holds.
    pub axis_defect: Option<f64>,
    pub generators_checked: usize,
}

/// Transports every generator of a cone at `t1` to `t2` and measures how far
/// it lands from the cone of the same kind at `t2`, built from the union of
/// the original sampling and `extra`.
pub fn cone_transport_check(
    sys: &ControlSystem,
    traj: &Trajectory,
    t1: f64,
    t2: f64,
    cone_t1: &PerturbationCone,
    extra: &ConeSampling,
) -> Result<ConeTransportReport> {
    if t2 < t1 {
        return Err(Error::InvalidArgument(format!("need t1 <= t2, got {t1} > {t2}")));
    }
    check_lebesgue(traj, t1)?;
    check_lebesgue(traj, t2)?;
    let sampling = extra.union(&cone_t1.needle_times(), &cone_t1.needle_controls());
    let sampling = ConeSampling {
        times: sampling.times.into_iter().filter(|t| *t <= t2).collect(),
        controls: sampling.controls,
    };
    let basis = cone_t1.initial_basis();
    let cone_t2 = if !basis.is_empty() {
        build_initial_cone(sys, traj, t2, &sampling, &basis)?
    } else if cone_t1.has_time_axis() {
        build_time_cone(sys, traj, t2, &sampling)?
    } else {
        build_tangent_cone(sys, traj, t2, &sampling)?
    };
    let target = cone_t2.cone()?;
    let mat = transport_matrix(sys, traj, t1, t2)?;
    let mut max_violation = 0.0f64;
    for g in &cone_t1.generators {
        let w = &mat * &g.vector;
        let n = w.norm();
        if n == 0.0 {
            continue;
        }
        max_violation = max_violation.max(distance_l1(&target, &(w / n))?);
    }
    let u = traj.control();
    let switch_between = u.switch_times().iter().any(|s| *s >= t1 && *s <= t2);
    let axis_defect = if switch_between {
        None
    } else {
        let f1 = sys.dynamics(&traj.state_at(t1), u.value_at(t1));
        let f2 = sys.dynamics(&traj.state_at(t2), u.value_at(t2));
        Some((mat * f1 - f2).norm())
    };
    Ok(ConeTransportReport {
        max_violation,
        axis_defect,
        generators_checked: cone_t1.generators.len(),
    })
}

#[derive(Debug, Clone)]
pub struct RealizeOptions {
    /// Required `‖endpoint − (γ(t) + s′v)‖ / s`.
    pub tol: f64,
    /// First perturbation parameter tried.
    pub s_start: f64,
    /// Number of times `s` may be halved.
    pub max_halvings: usize,
    /// Tolerance of the interior-membership precondition.
    pub membership_tol: f64,
    pub covering: CoveringOptions,
}

impl Default for RealizeOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            s_start: 1e-2,
            max_halvings: 12,
            membership_tol: 1e-9,
            covering: CoveringOptions::default(),
        }
    }
}

/// A perturbed control whose endpoint lies on the ray `γ(t) + s′v`.
#[derive(Debug, Clone)]
pub struct Realization {
    pub s: f64,
    pub s_prime: f64,
    pub control: ControlSignal,
    /// Initial state of the perturbed curve; moves only when the cone has
    /// initial-manifold generators.
    pub initial_state: DVector<f64>,
    /// `t + s·δτ`, the time at which the endpoint is read.
    pub end_time: f64,
    pub endpoint: DVector<f64>,
    pub reference: DVector<f64>,
    /// The offset `r ⊥ v` solving `G_s(r) = 0`.
    pub r: DVector<f64>,
    /// `‖endpoint − (γ(t) + s′v)‖`.
    pub residual: f64,
}

/// Positive coefficients `v = Σ λᵢ gᵢ` with `Σλ` at most twice its minimum,
/// maximizing the smallest coefficient.
fn positive_combination(gens: &[DVector<f64>], v: &DVector<f64>) -> Option<(Vec<f64>, f64)> {
    let (n, ng) = (v.len(), gens.len());
    if ng == 0 {
        return None;
    }
    let mut lp = LinearProgram::new(ng).maximize(vec![-1.0; ng]);
    for row in 0..n {
        lp.constraint(gens.iter().map(|g| g[row]).collect(), Relation::Eq, v[row]);
    }
    let (_, neg_sum) = lp.solve(1e-10).optimal()?;
    let budget = 2.0 * (-neg_sum).max(1e-12);
    // λ = θ·1 + λ′
    let mut obj = vec![0.0; ng + 1];
    obj[ng] = 1.0;
    let mut lp = LinearProgram::new(ng + 1).maximize(obj);
    for row in 0..n {
        let mut coeffs: Vec<f64> = gens.iter().map(|g| g[row]).collect();
        coeffs.push(gens.iter().map(|g| g[row]).sum());
        lp.constraint(coeffs, Relation::Eq, v[row]);
    }
    let mut sum = vec![1.0; ng + 1];
    sum[ng] = ng as f64;
    lp.constraint(sum, Relation::Le, budget);
    let (x, theta) = lp.solve(1e-10).optimal()?;
    Some((x[..ng].iter().map(|l| l + theta).collect(), theta))
}

struct Assembly {
    control: ControlSignal,
    x0: DVector<f64>,
    t_eval: f64,
}

fn assemble(
    traj: &Trajectory,
    t: f64,
    gens: &[ConeGenerator],
    lambda: &[f64],
    s: f64,
) -> Result<Assembly> {
    let mut delta_tau = 0.0;
    let mut x0 = traj.initial_state().clone();
    let mut needles = Vec::new();
    for (g, &l) in gens.iter().zip(lambda) {
        match &g.provenance {
            Provenance::Needle { tau, l: rate, u1 } => needles.push(NeedleData {
                t1: *tau,
                l1: l * rate,
                u1: u1.clone(),
            }),
            Provenance::TimeAxis { sign } => delta_tau += sign * l,
            Provenance::InitialManifold { sign, direction, .. } => {
                x0 += direction * (s * sign * l);
            }
        }
    }
    let t_eval = t + s * delta_tau;
    let base = traj.control().with_end(t_eval)?;
    let intervals = stacked_intervals(&needles, s, |tau| if tau == t { t_eval } else { tau });
    let control = insert_intervals(&base, &intervals)?;
    Ok(Assembly { control, x0, t_eval })
}

/// Realizes an interior cone direction by a perturbed control.
///
/// `v` is written as a strictly positive combination of the cone generators.
/// For `r ⊥ v` near zero the combination is moved affinely so that it
/// represents `v + r`, which defines a composite perturbation `π_r` (needles,
/// end-time shift, initial-point shift). With `Δ(s, r)` the simulated
/// endpoint displacement, the map
/// `G_s(r) = Bᵀ(‖v‖²/⟨Δ,v⟩ · Δ − v)` is driven to zero on a ball by
/// [`covered_point_root`]; then `Δ = s′v` with `s′ = ⟨Δ,v⟩/‖v‖²`.
///
/// The ball radius is half the largest radius that keeps every coefficient
/// nonnegative. `s` starts at `opts.s_start` and is halved whenever the
/// covering hypothesis, the root search or the needle layout fails.
pub fn realize_direction(
    sys: &ControlSystem,
    traj: &Trajectory,
    t: f64,
    v: &DVector<f64>,
    cone: &PerturbationCone,
    opts: &RealizeOptions,
) -> Result<Realization> {
    let m = sys.state_dim();
    check_dim(m, v.len())?;
    if v.norm() == 0.0 {
        return Err(Error::NotInterior);
    }
    let gc = cone.cone()?;
    // the interior must be taken in Rᵐ, not relative to the span
    if gc.span_dim() < m || conic_membership(&gc, v, opts.membership_tol)? != MembershipVerdict::Interior {
        return Err(Error::NotInterior);
    }
    let gens = cone.vectors();
    let (lambda_v, theta) = positive_combination(&gens, v).ok_or(Error::NotInterior)?;
    if !(theta > 0.0) {
        return Err(Error::NotInterior);
    }
    let gmat = DMatrix::from_columns(&gens);
    let basis = complement_basis(m, std::slice::from_ref(v));
    let pinv = gmat
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p = &pinv * &basis;
    let positivity = (0..gens.len())
        .filter_map(|i| {
            let rn = p.row(i).norm();
            (rn > 0.0).then(|| lambda_v[i] / rn)
        })
        .fold(f64::INFINITY, f64::min);
    let radius = (0.5 * positivity).min(v.norm());
    let vv = v.norm_squared();
    let reference = traj.state_at(t);
    let cfg: &IntegratorConfig = traj.config();

    let lambda_at = |rho: &DVector<f64>| -> Vec<f64> {
        let d = &p * rho;
        lambda_v.iter().zip(d.iter()).map(|(l, e)| (l + e).max(0.0)).collect()
    };
    let endpoint_for = |rho: &DVector<f64>, s: f64| -> Result<(Assembly, DVector<f64>)> {
        let asm = assemble(traj, t, &cone.generators, &lambda_at(rho), s)?;
        let tr = simulate(sys, &asm.control, &asm.x0, cfg)?;
        let end = tr.final_state().clone();
        Ok((asm, end))
    };

    let mut s = opts.s_start;
    let mut last_err = Error::NotInterior;
    for _ in 0..=opts.max_halvings {
        let g_s = |rho: &DVector<f64>| -> DVector<f64> {
            match endpoint_for(rho, s) {
                Ok((_, end)) => {
                    let delta = end - &reference;
                    let dv = delta.dot(v);
                    basis.transpose() * (delta * (vv / dv) - v)
                }
                Err(_) => DVector::from_element(basis.ncols(), f64::NAN),
            }
        };
        let attempt = covered_point_root(
            g_s,
            &DVector::zeros(basis.ncols()),
            radius,
            &DVector::zeros(basis.ncols()),
            &opts.covering,
        )
        .and_then(|root| {
            let (asm, endpoint) = endpoint_for(&root.x, s)?;
            let delta = &endpoint - &reference;
            let s_prime = delta.dot(v) / vv;
            let residual = (&delta - v * s_prime).norm();
            if !(s_prime > 0.0) || residual > opts.tol * s {
                return Err(Error::RootBudget {
                    best_residual: residual / s,
                    best: root.x,
                });
            }
            Ok(Realization {
                s,
                s_prime,
                control: asm.control,
                initial_state: asm.x0,
                end_time: asm.t_eval,
                endpoint,
                reference: reference.clone(),
                r: &basis * &root.x,
                residual,
            })
        });
        match attempt {
            Ok(r) => return Ok(r),
            Err(e) => last_err = e,
        }
        s *= 0.5;
    }
    Err(last_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::ControlSet;
    use approx::assert_abs_diff_eq;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn di_rest(b: f64) -> (ControlSystem, Trajectory) {
        let sys = ControlSystem::double_integrator();
        let u = ControlSignal::constant(0.0, b, v(&[0.0])).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        (sys, tr)
    }

    #[test]
    fn needle_application() {
        let u = ControlSignal::constant(0.0, 2.0, v(&[0.0])).unwrap();
        let pi = NeedleData::new(1.0, 1.0, v(&[1.0])).unwrap();
        let n = apply_needle(&u, &pi, 0.1).unwrap();
        assert_eq!(n.switch_times(), &[0.9, 1.0]);
        assert_eq!(n.value_at(0.95)[0], 1.0);
        let zero = NeedleData::new(1.0, 0.0, v(&[1.0])).unwrap();
        assert_eq!(apply_needle(&u, &zero, 0.1).unwrap(), u);
        let escape = NeedleData::new(0.1, 2.0, v(&[1.0])).unwrap();
        assert!(apply_needle(&u, &escape, 0.1).is_err());
    }

    #[test]
    fn stacked_and_overlapping_needles() {
        let u = ControlSignal::constant(0.0, 2.0, v(&[0.0])).unwrap();
        let p1 = NeedleData::new(1.0, 1.0, v(&[1.0])).unwrap();
        let p2 = NeedleData::new(1.0, 2.0, v(&[-1.0])).unwrap();
        let n = apply_needles(&u, &[p1, p2], 0.1).unwrap();
        assert_eq!(n.value_at(0.75)[0], 1.0);
        assert_eq!(n.value_at(0.85)[0], -1.0);
        assert_eq!(n.value_at(1.0)[0], 0.0);
        let q1 = NeedleData::new(1.0, 1.0, v(&[1.0])).unwrap();
        let q2 = NeedleData::new(1.05, 1.0, v(&[-1.0])).unwrap();
        assert!(matches!(
            apply_needles(&u, &[q1, q2], 0.1),
            Err(Error::NeedleInterval { .. })
        ));
    }

    #[test]
    fn class1_examples() {
        let (sys, tr) = di_rest(2.0);
        let pi = NeedleData::new(1.0, 1.0, v(&[1.0])).unwrap();
        assert_eq!(class1_vector(&sys, &tr, &pi).unwrap().vector, v(&[0.0, 1.0]));
        let same = NeedleData::new(1.0, 1.0, v(&[0.0])).unwrap();
        assert_eq!(class1_vector(&sys, &tr, &same).unwrap().vector, v(&[0.0, 0.0]));
        let twice = NeedleData::new(1.0, 2.0, v(&[1.0])).unwrap();
        assert_eq!(class1_vector(&sys, &tr, &twice).unwrap().vector, v(&[0.0, 2.0]));

        let u = ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[1.0]), v(&[-1.0])]).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        assert!(matches!(class1_vector(&sys, &tr, &pi), Err(Error::SwitchTime { .. })));
    }

    #[test]
    fn transport_nilpotent() {
        let (sys, tr) = di_rest(2.0);
        let pv = PerturbationVector {
            base_time: 0.5,
            vector: v(&[0.0, 1.0]),
        };
        assert_eq!(transport_vector(&sys, &tr, &pv, 0.5).unwrap(), pv);
        let out = transport_vector(&sys, &tr, &pv, 1.7).unwrap();
        assert_abs_diff_eq!(out.vector, v(&[1.2, 1.0]), epsilon = 1e-12);
        let zero = PerturbationVector {
            base_time: 0.5,
            vector: v(&[0.0, 0.0]),
        };
        assert_eq!(transport_vector(&sys, &tr, &zero, 1.7).unwrap().vector, v(&[0.0, 0.0]));
    }

    #[test]
    fn time_vector_example() {
        let sys = ControlSystem::double_integrator();
        let u = ControlSignal::constant(0.0, 2.0, v(&[0.0])).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0, 1.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let x = tr.state_at(1.0);
        let pi = TimePerturbationData {
            tau: 1.0,
            l_tau: 1.0,
            delta_tau: 0.5,
            u_tau: v(&[1.0]),
        };
        let out = time_perturbation_vector(&sys, &tr, &pi).unwrap();
        assert_abs_diff_eq!(out.vector, v(&[0.5, 1.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tangent_cone_examples() {
        let (sys, tr) = di_rest(1.0);
        let only_ref = ConeSampling::new(vec![0.5], vec![v(&[0.0])]);
        assert!(build_tangent_cone(&sys, &tr, 1.0, &only_ref).unwrap().generators.is_empty());

        let sampling = ConeSampling::extreme(&sys, vec![0.25, 0.5, 0.75]).unwrap();
        let cone = build_tangent_cone(&sys, &tr, 1.0, &sampling).unwrap();
        assert_eq!(cone.generators.len(), 6);
        for g in &cone.generators {
            if let Provenance::Needle { tau, u1, .. } = &g.provenance {
                assert_abs_diff_eq!(g.vector.clone(), v(&[1.0 - tau, 1.0]) * u1[0], epsilon = 1e-12);
            }
        }
        assert_eq!(
            conic_membership(&cone.cone().unwrap(), &v(&[0.6, 1.0]), 1e-9).unwrap(),
            MembershipVerdict::Interior
        );

        let scalar = ControlSystem::scalar_integrator();
        let u = ControlSignal::constant(0.0, 1.0, v(&[0.0])).unwrap();
        let tr = simulate(&scalar, &u, &v(&[0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let cone = build_tangent_cone(&scalar, &tr, 1.0, &ConeSampling::extreme(&scalar, vec![0.5]).unwrap()).unwrap();
        let gc = cone.cone().unwrap();
        for x in [-1.0, 1.0] {
            assert_eq!(conic_membership(&gc, &v(&[x]), 1e-9).unwrap(), MembershipVerdict::Interior);
        }
    }

    #[test]
    fn time_and_initial_cones() {
        let sys = ControlSystem::double_integrator();
        let u = ControlSignal::constant(0.0, 1.0, v(&[1.0])).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let sampling = ConeSampling::extreme(&sys, vec![0.5]).unwrap();
        let tangent = build_tangent_cone(&sys, &tr, 0.8, &sampling).unwrap();
        let time = build_time_cone(&sys, &tr, 0.8, &sampling).unwrap();
        assert_eq!(time.generators.len(), tangent.generators.len() + 2);
        let axis = &time.generators[time.generators.len() - 2];
        assert_abs_diff_eq!(axis.vector.clone(), v(&[0.8, 1.0]), epsilon = 1e-12);

        let (sys, tr) = di_rest(1.0);
        let sampling = ConeSampling::extreme(&sys, vec![0.5]).unwrap();
        let time = build_time_cone(&sys, &tr, 1.0, &sampling).unwrap();
        let tangent = build_tangent_cone(&sys, &tr, 1.0, &sampling).unwrap();
        assert_eq!(time, tangent);
        let init = build_initial_cone(&sys, &tr, 1.0, &sampling, &[v(&[1.0, 0.0])]).unwrap();
        let last = &init.generators[init.generators.len() - 2..];
        assert_abs_diff_eq!(last[0].vector.clone(), v(&[1.0, 0.0]), epsilon = 1e-12);
        assert_abs_diff_eq!(last[1].vector.clone(), v(&[-1.0, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn transport_check_on_double_integrator() {
        let sys = ControlSystem::double_integrator();
        let u = ControlSignal::constant(0.0, 2.0, v(&[0.5])).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0, 0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let sampling = ConeSampling::extreme(&sys, vec![0.3, 0.6]).unwrap();
        let k1 = build_time_cone(&sys, &tr, 0.9, &sampling).unwrap();
        let same = cone_transport_check(&sys, &tr, 0.9, 0.9, &k1, &sampling).unwrap();
        assert!(same.max_violation < 1e-12);
        let extra = ConeSampling::extreme(&sys, vec![1.2, 1.5]).unwrap();
        let rep = cone_transport_check(&sys, &tr, 0.9, 1.6, &k1, &extra).unwrap();
        assert!(rep.max_violation < 1e-8, "{rep:?}");
        assert!(rep.axis_defect.unwrap() < 1e-6);
    }

    #[test]
    fn cone_csv_columns() {
        let (sys, tr) = di_rest(1.0);
        let cone = build_time_cone(&sys, &tr, 1.0, &ConeSampling::extreme(&sys, vec![0.5]).unwrap()).unwrap();
        let text = cone.to_csv();
        assert!(text.starts_with("g0,g1,tau,l,u0,kind\n"));
        assert_eq!(text.lines().count(), 1 + cone.generators.len());
    }

    #[test]
    fn realize_scalar_integrator() {
        let sys = ControlSystem::scalar_integrator();
        let u = ControlSignal::constant(0.0, 1.0, v(&[0.0])).unwrap();
        let tr = simulate(&sys, &u, &v(&[0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let cone = build_tangent_cone(&sys, &tr, 1.0, &ConeSampling::extreme(&sys, vec![0.5]).unwrap()).unwrap();
        let r = realize_direction(&sys, &tr, 1.0, &v(&[0.5]), &cone, &RealizeOptions::default()).unwrap();
        assert_abs_diff_eq!(r.endpoint[0], 0.5 * r.s_prime, epsilon = 1e-12);
        assert_abs_diff_eq!(r.s_prime, r.s, epsilon = 1e-12);
        let again = simulate(&sys, &r.control, &r.initial_state, tr.config()).unwrap();
        assert_eq!(again.final_state(), &r.endpoint);
    }

    #[test]
    fn realize_rejects_non_interior() {
        let (sys, tr) = di_rest(1.0);
        let sampling = ConeSampling::new(vec![0.5], vec![v(&[1.0])]);
        let cone = build_tangent_cone(&sys, &tr, 1.0, &sampling).unwrap();
        let err = realize_direction(&sys, &tr, 1.0, &v(&[0.5, 1.0]), &cone, &RealizeOptions::default());
        assert!(matches!(err, Err(Error::NotInterior)));
        let cone = build_tangent_cone(&sys, &tr, 1.0, &ConeSampling::extreme(&sys, vec![0.5]).unwrap()).unwrap();
        let err = realize_direction(&sys, &tr, 1.0, &v(&[0.0, 0.0]), &cone, &RealizeOptions::default());
        assert!(matches!(err, Err(Error::NotInterior)));
    }

    #[test]
    fn realize_double_integrator_interior() {
        let (sys, tr) = di_rest(1.0);
        let sampling = ConeSampling::extreme(&sys, vec![0.25, 0.5, 0.75]).unwrap();
        let cone = build_tangent_cone(&sys, &tr, 1.0, &sampling).unwrap();
        let target = v(&[0.6, 1.0]);
        let r = realize_direction(&sys, &tr, 1.0, &target, &cone, &RealizeOptions::default()).unwrap();
        assert!(r.residual <= 1e-6 * r.s);
        assert!((r.s_prime / r.s - 1.0).abs() < 0.1);
        let again = simulate(&sys, &r.control, &r.initial_state, tr.config()).unwrap();
        assert_eq!(again.final_state(), &r.endpoint);
    }

    #[test]
    fn time_perturbation_control_layout() {
        let u = ControlSignal::new(0.0, 2.0, vec![1.5], vec![v(&[0.0]), v(&[1.0])]).unwrap();
        let pi = TimePerturbationData {
            tau: 1.0,
            l_tau: 1.0,
            delta_tau: 0.5,
            u_tau: v(&[-1.0]),
        };
        let p = apply_time_perturbation(&u, &pi, 0.1).unwrap();
        assert_abs_diff_eq!(p.end(), 2.05, epsilon = 1e-15);
        assert_eq!(p.value_at(0.94)[0], 0.0);
        assert_eq!(p.value_at(0.96)[0], -1.0);
        assert_eq!(p.value_at(1.06)[0], 0.0);
        assert_abs_diff_eq!(p.switch_times()[2], 1.55, epsilon = 1e-15);
    }

    #[test]
    fn ball_control_set_sampling() {
        let sys = ControlSystem::new("planar", 2, 2, |_, u| u.clone(), ControlSet::ball(v(&[0.0, 0.0]), 1.0).unwrap()).unwrap();
        let s = ConeSampling::extreme(&sys, vec![0.5]).unwrap();
        assert_eq!(s.controls.len(), 4);
    }
}
