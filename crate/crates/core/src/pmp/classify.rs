//! Terminal covectors from the perturbation cone, and the search for normal
//! and abnormal adjoint lifts of a given trajectory.
//!
//! Along a fixed trajectory the adjoint is affine in `(p₀, p_b)`:
//! `p(t) = p₀ψ(t) + Φ(t)p_b`. Every sampled condition is then an affine
//! function of `p_b` once `p₀` is fixed, so the best lift on the sampled
//! conditions is a small linear program in `p_b` that minimizes the largest
//! residual. A lift found this way is kept only if [`check_pmp`] accepts it.

use nalgebra::DVector;

use super::check::{check_pmp, PmpOptions, Verdict};
use super::{adjoint_flow, AdjointCurve, BoundarySpec, Extremal, TimeMode};
use crate::error::{check_dim, Result};
use crate::geometry::lp::{LinearProgram, Relation};
use crate::geometry::{Covector, GeneratedCone};
use crate::system::{ControlSet, ControlSystem};
use crate::trajectory::ExtendedTrajectory;

const LP_TOL: f64 = 1e-10;

fn free_split(m: usize, n: usize, coeffs: &DVector<f64>) -> Vec<f64> {
    let mut row = vec![0.0; n];
    for i in 0..m {
        row[i] = coeffs[i];
        row[m + i] = -coeffs[i];
    }
    row
}

fn split_value(m: usize, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(m, (0..m).map(|i| x[i] - x[m + i]))
}

/// A covector `σ̂_b` on the extended space (cost coordinate first) with
/// `σ̂_b·g ≤ 0` on every generator, `σ̂_b⁰ ≤ 0` and `σ̂_b ⟂ {0}×T S_f`.
///
/// Tries `σ̂_b⁰ = −1` first and falls back to `σ̂_b⁰ = 0` normalized by
/// `‖σ̂_b‖∞ = 1`. `None` means only the zero covector qualifies, which is
/// the case when `(−1, 0, …, 0)` is interior to the cone.
pub fn terminal_covector_from_cone(cone: &GeneratedCone, final_basis: Option<&[DVector<f64>]>) -> Option<Covector> {
    let d = cone.dim();
    let n = 2 * d;
    let mut base = LinearProgram::new(n);
    for g in cone.generators() {
        base.constraint(free_split(d, n, g), Relation::Le, 0.0);
    }
    for w in final_basis.unwrap_or(&[]) {
        if w.len() + 1 != d {
            return None;
        }
        let mut lifted = DVector::zeros(d);
        lifted.rows_mut(1, d - 1).copy_from(w);
        base.constraint(free_split(d, n, &lifted), Relation::Eq, 0.0);
    }
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        base.constraint(row, Relation::Le, if i % d == 0 { 1.0 } else { 1e6 });
    }
    let pin = |lp: &mut LinearProgram, j: usize, value: f64| {
        let mut e = DVector::zeros(d);
        e[j] = 1.0;
        lp.constraint(free_split(d, n, &e), Relation::Eq, value);
    };

    let mut normal = base.clone();
    pin(&mut normal, 0, -1.0);
    if let Some((x, _)) = normal.solve(LP_TOL).optimal() {
        return Some(Covector::new(split_value(d, &x)));
    }
    for j in 1..d {
        for s in [1.0, -1.0] {
            let mut lp = base.clone();
            pin(&mut lp, 0, 0.0);
            pin(&mut lp, j, s);
            for i in 0..n {
                let mut row = vec![0.0; n];
                row[i] = 1.0;
                lp.constraint(row, Relation::Le, 1.0);
            }
            if let Some((x, _)) = lp.solve(LP_TOL).optimal() {
                return Some(Covector::new(split_value(d, &x)));
            }
        }
    }
    None
}

#[derive(Debug, Clone)]
pub struct ClassifyOptions {
    /// Acceptance tolerance, also passed on to [`check_pmp`].
    pub tol: f64,
    /// Sampled Lebesgue nodes used in the linear program.
    pub max_nodes: usize,
    /// `‖p_b‖∞` bound in the normal search.
    pub normal_bound: f64,
    /// A search counts as provably infeasible when its best residual
    /// exceeds `certificate_factor · tol`.
    pub certificate_factor: f64,
    pub pmp: PmpOptions,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_nodes: 100,
            normal_bound: 1e6,
            certificate_factor: 2.0,
            pmp: PmpOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub verdict: Verdict,
    /// Verified lift with `σ₀ = −1`.
    pub normal: Option<Extremal>,
    /// Verified lift with `σ₀ = 0`.
    pub abnormal: Option<Extremal>,
    /// Smallest achievable max residual on the sampled conditions.
    pub normal_residual: f64,
    pub abnormal_residual: f64,
    pub notes: Vec<String>,
}

impl Classification {
    pub fn is_normal(&self) -> bool {
        matches!(self.verdict, Verdict::Normal | Verdict::StrictNormalCertificate)
    }

    pub fn is_abnormal(&self) -> bool {
        matches!(self.verdict, Verdict::Abnormal | Verdict::StrictAbnormalCertificate)
    }
}

/// `value = p₀·a + b·p_b − c·[uses_c]`, constrained either one-sided
/// (`value ≤ t`) or two-sided (`|value| ≤ t`).
struct Row {
    a: f64,
    b: DVector<f64>,
    uses_c: bool,
    two_sided: bool,
}

struct LiftFamily {
    psi: AdjointCurve,
    phi: Vec<AdjointCurve>,
}

impl LiftFamily {
    fn psi(&self, i: usize) -> &DVector<f64> {
        &self.psi.sigma[i]
    }

    /// `Φ(t_i)ᵀd`.
    fn phi_t(&self, i: usize, d: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.phi.len(), self.phi.iter().map(|c| c.sigma[i].dot(d)))
    }

    fn row(&self, i: usize, df: f64, d: &DVector<f64>, two_sided: bool) -> Row {
        Row {
            a: df + self.psi(i).dot(d),
            b: self.phi_t(i, d),
            uses_c: false,
            two_sided,
        }
    }
}

fn interior_coords(set: &ControlSet, u: &DVector<f64>) -> Vec<usize> {
    match set {
        ControlSet::Box { lo, hi } => (0..u.len())
            .filter(|&i| {
                let eps = 1e-9 * (1.0 + u[i].abs());
                u[i] > lo[i] + eps && u[i] < hi[i] - eps
            })
            .collect(),
        ControlSet::Ball { center, radius } => {
            if (u - center).norm() < radius * (1.0 - 1e-9) {
                (0..u.len()).collect()
            } else {
                Vec::new()
            }
        }
        ControlSet::Finite(_) => Vec::new(),
    }
}

fn sampled_rows(
    sys: &ControlSystem,
    ext: &ExtendedTrajectory,
    bounds: &BoundarySpec,
    family: &LiftFamily,
    max_nodes: usize,
) -> Vec<Row> {
    let traj = ext.projected();
    let u = traj.control();
    let grid = traj.grid();
    let n = grid.len();
    let lebesgue: Vec<usize> = (1..n.saturating_sub(1))
        .filter(|&i| !u.switch_times().contains(&grid[i]))
        .collect();
    let stride = lebesgue.len().div_ceil(max_nodes.max(1)).max(1);
    let extremes = sys.control_set().extreme_points();
    let mut rows = Vec::new();
    for &i in lebesgue.iter().step_by(stride) {
        let x = &traj.states()[i];
        let w = u.value_at(grid[i]);
        let f = sys.dynamics(x, w);
        let cost = sys.running_cost(x, w);
        for e in &extremes {
            let d = sys.dynamics(x, e) - &f;
            rows.push(family.row(i, sys.running_cost(x, e) - cost, &d, false));
        }
        for l in interior_coords(sys.control_set(), w) {
            let h = 1e-6 * (1.0 + w[l].abs());
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[l] += h;
            dn[l] -= h;
            let d = (sys.dynamics(x, &up) - sys.dynamics(x, &dn)) / (2.0 * h);
            let df = (sys.running_cost(x, &up) - sys.running_cost(x, &dn)) / (2.0 * h);
            rows.push(family.row(i, df, &d, true));
        }
        let mut r = family.row(i, cost, &f, true);
        r.uses_c = bounds.mode == TimeMode::Fixed;
        rows.push(r);
    }
    for w in bounds.initial.tangent_basis() {
        rows.push(family.row(0, 0.0, w, true));
    }
    for w in bounds.terminal.tangent_basis() {
        rows.push(family.row(n - 1, 0.0, w, true));
    }
    rows
}

/// Minimizes the largest sampled residual over `p_b` for fixed `p₀`.
/// Variables: `p_b⁺, p_b⁻, c⁺, c⁻, t`.
fn best_lift(m: usize, rows: &[Row], p0: f64, bound: f64, pin: Option<(usize, f64)>) -> Option<(f64, DVector<f64>)> {
    let n = 2 * m + 3;
    let t_col = n - 1;
    let mut lp = LinearProgram::new(n).maximize({
        let mut o = vec![0.0; n];
        o[t_col] = -1.0;
        o
    });
    for r in rows {
        let mut coeffs = free_split(m, n, &r.b);
        if r.uses_c {
            coeffs[2 * m] = -1.0;
            coeffs[2 * m + 1] = 1.0;
        }
        let a = p0 * r.a;
        let mut le = coeffs.clone();
        le[t_col] = -1.0;
        lp.constraint(le, Relation::Le, -a);
        if r.two_sided {
            coeffs[t_col] = 1.0;
            lp.constraint(coeffs, Relation::Ge, -a);
        }
    }
    for i in 0..2 * m {
        let mut row = vec![0.0; n];
        row[i] = 1.0;
        lp.constraint(row, Relation::Le, bound);
    }
    if let Some((j, s)) = pin {
        let mut e = DVector::zeros(m);
        e[j] = 1.0;
        lp.constraint(free_split(m, n, &e), Relation::Eq, s);
    }
    let (x, value) = lp.solve(LP_TOL).optimal()?;
    Some((-value, split_value(m, &x)))
}

fn verify(
    sys: &ControlSystem,
    ext: &ExtendedTrajectory,
    bounds: &BoundarySpec,
    p0: f64,
    p_b: &DVector<f64>,
    opts: &ClassifyOptions,
    notes: &mut Vec<String>,
) -> Option<Extremal> {
    let kind = if p0 == 0.0 { "abnormal" } else { "normal" };
    let attempt = || -> Result<(Extremal, Vec<&'static str>)> {
        let adj = adjoint_flow(sys, &ext.projected(), p0, p_b)?;
        let ex = Extremal::new(ext.clone(), adj)?;
        let pmp = PmpOptions {
            tol: opts.tol,
            ..opts.pmp.clone()
        };
        let rep = check_pmp(sys, &ex, bounds, &pmp)?;
        Ok((ex, rep.failures()))
    };
    match attempt() {
        Ok((ex, failures)) if failures.is_empty() => Some(ex),
        Ok((_, failures)) => {
            notes.push(format!("{kind} candidate fails {}", failures.join(",")));
            None
        }
        Err(e) => {
            notes.push(format!("{kind} candidate rejected: {e}"));
            None
        }
    }
}

/// Searches for lifts with `σ₀ = −1` and with `σ₀ = 0` separately.
///
/// A strict verdict needs the complementary search to be infeasible on the
/// sampled conditions by more than `certificate_factor · tol`; the normal
/// search is bounded by `normal_bound`.
pub fn classify_extremal(
    sys: &ControlSystem,
    ext: &ExtendedTrajectory,
    bounds: &BoundarySpec,
    opts: &ClassifyOptions,
) -> Result<Classification> {
    let m = sys.state_dim();
    check_dim(m + 1, ext.trajectory().dim())?;
    bounds.validate(m)?;
    let traj = ext.projected();
    let family = LiftFamily {
        psi: adjoint_flow(sys, &traj, 1.0, &DVector::zeros(m))?,
        phi: (0..m)
            .map(|j| {
                let mut e = DVector::zeros(m);
                e[j] = 1.0;
                adjoint_flow(sys, &traj, 0.0, &e)
            })
            .collect::<Result<_>>()?,
    };
    let rows = sampled_rows(sys, ext, bounds, &family, opts.max_nodes);
    let mut notes = Vec::new();

    let normal_best = best_lift(m, &rows, -1.0, opts.normal_bound, None);
    let normal_residual = normal_best.as_ref().map_or(f64::INFINITY, |b| b.0);
    let normal = normal_best.and_then(|(_, p_b)| verify(sys, ext, bounds, -1.0, &p_b, opts, &mut notes));

    let mut abnormal_best: Option<(f64, DVector<f64>)> = None;
    for j in 0..m {
        for s in [1.0, -1.0] {
            if let Some(c) = best_lift(m, &rows, 0.0, 1.0, Some((j, s))) {
                if abnormal_best.as_ref().is_none_or(|b| c.0 < b.0) {
                    abnormal_best = Some(c);
                }
            }
        }
    }
    let abnormal_residual = abnormal_best.as_ref().map_or(f64::INFINITY, |b| b.0);
    let abnormal = abnormal_best.and_then(|(_, p_b)| verify(sys, ext, bounds, 0.0, &p_b, opts, &mut notes));

    let threshold = opts.certificate_factor * opts.tol;
    let verdict = if abnormal.is_some() {
        if normal_residual > threshold {
            Verdict::StrictAbnormalCertificate
        } else {
            Verdict::Abnormal
        }
    } else if normal.is_some() {
        if abnormal_residual > threshold {
            Verdict::StrictNormalCertificate
        } else {
            Verdict::Normal
        }
    } else {
        Verdict::Undetermined
    };
    Ok(Classification {
        verdict,
        normal,
        abnormal,
        normal_residual,
        abnormal_residual,
        notes,
    })
}
