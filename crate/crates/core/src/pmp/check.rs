use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::hamiltonian::{hamiltonian, maximize_hamiltonian, MaximizeOptions};
use super::{BoundarySpec, Extremal, TimeMode};
use crate::error::{Error, Result};
use crate::flows::{cotangent_lift_flow, CotangentState};
use crate::system::ControlSystem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Normal,
    Abnormal,
    StrictNormalCertificate,
    StrictAbnormalCertificate,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Res3d {
    /// `|σ₀(a) − σ₀(b)|` after integrating the extended cotangent lift.
    pub drift: f64,
    /// `σ₀ ≤ 0`.
    pub sign_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Res3e {
    /// `max |σ(a)·w|` over the tangent basis of the initial manifold.
    pub initial: f64,
    /// `max |σ(b)·w|` over the tangent basis of the final manifold.
    pub terminal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub tol: f64,
    pub drift_tol: f64,
    /// Sampling resolution of the control maximization, when not exact.
    pub hamiltonian_resolution: Option<f64>,
}

/// Residuals of the maximum principle along an extremal. All are
/// nonnegative; `res_3c` must stay away from zero, the others must vanish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmpReport {
    pub res_3a: f64,
    pub res_3b: f64,
    pub res_3c: f64,
    pub res_3d: Res3d,
    pub res_3e: Res3e,
    /// Distance of the endpoints from the prescribed endpoint sets.
    pub boundary_defect: f64,
    pub sigma0: f64,
    pub lebesgue_nodes: usize,
    pub classification: Verdict,
    pub tolerances: Tolerances,
}

impl PmpReport {
    /// Names of the conditions that fail at the report's tolerances.
    pub fn failures(&self) -> Vec<&'static str> {
        let tol = self.tolerances.tol;
        let mut out = Vec::new();
        if !(self.res_3a <= tol) {
            out.push("3a");
        }
        if !(self.res_3b <= tol) {
            out.push("3b");
        }
        if !(self.res_3c > tol) {
            out.push("3c");
        }
        if !(self.res_3d.drift <= self.tolerances.drift_tol && self.res_3d.sign_ok) {
            out.push("3d");
        }
        if !(self.res_3e.initial <= tol && self.res_3e.terminal <= tol) {
            out.push("3e");
        }
        if !(self.boundary_defect <= tol) {
            out.push("boundary");
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct PmpOptions {
    pub tol: f64,
    pub drift_tol: f64,
    pub maximize: MaximizeOptions,
}

impl Default for PmpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            drift_tol: 1e-9,
            maximize: MaximizeOptions::default(),
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Evaluates conditions 3a–3e on the interior grid nodes that are not
/// switch times.
pub fn check_pmp(
    sys: &ControlSystem,
    extremal: &Extremal,
    bounds: &BoundarySpec,
    opts: &PmpOptions,
) -> Result<PmpReport> {
    let m = sys.state_dim();
    bounds.validate(m)?;
    let traj = extremal.trajectory();
    let adj = extremal.adjoint();
    if traj.dim() != m {
        return Err(Error::GridMismatch(format!(
            "extremal has state dimension {}, system {m}",
            traj.dim()
        )));
    }
    let u = traj.control();
    let grid = traj.grid();
    let n = grid.len();
    let sigma0 = adj.sigma0;

    let mut gap = 0.0f64;
    let mut sup_values = Vec::new();
    let mut resolution: Option<f64> = None;
    for i in 1..n.saturating_sub(1) {
        let t = grid[i];
        if u.switch_times().contains(&t) {
            continue;
        }
        let x = &traj.states()[i];
        let p = adj.at_node(i);
        let best = maximize_hamiltonian(sys, sigma0, p, x, &opts.maximize)?;
        if let Some(r) = best.resolution {
            resolution = Some(resolution.map_or(r, |q: f64| q.max(r)));
        }
        let actual = hamiltonian(sys, sigma0, p, x, u.value_at(t));
        gap = gap.max(best.value - actual);
        sup_values.push(best.value);
    }
    if sup_values.is_empty() {
        return Err(Error::Empty("Lebesgue grid"));
    }
    let res_3b = match bounds.mode {
        TimeMode::Fixed => {
            let mut vals = sup_values.clone();
            let med = median(&mut vals);
            sup_values.iter().map(|v| (v - med).abs()).fold(0.0, f64::max)
        }
        TimeMode::Free => sup_values.iter().map(|v| v.abs()).fold(0.0, f64::max),
    };
    let res_3c = adj
        .sigma
        .iter()
        .map(|p| (p.norm_squared() + sigma0 * sigma0).sqrt())
        .fold(f64::INFINITY, f64::min);

    let ext_sys = sys.extend()?;
    let ext_traj = extremal.extended().trajectory();
    let mut p_hat = DVector::zeros(m + 1);
    p_hat[0] = sigma0;
    p_hat.rows_mut(1, m).copy_from(adj.terminal());
    let back = cotangent_lift_flow(
        &ext_sys.field(u),
        traj.start(),
        traj.end(),
        &CotangentState {
            x: ext_traj.final_state().clone(),
            p: p_hat,
        },
        traj.config(),
    )?;
    let res_3d = Res3d {
        drift: (back.p[0] - sigma0).abs(),
        sign_ok: sigma0 <= 0.0,
    };

    let annihilation = |p: &DVector<f64>, basis: &[DVector<f64>]| {
        basis.iter().map(|w| p.dot(w).abs()).fold(0.0, f64::max)
    };
    let res_3e = Res3e {
        initial: annihilation(adj.initial(), bounds.initial.tangent_basis()),
        terminal: annihilation(adj.terminal(), bounds.terminal.tangent_basis()),
    };
    let boundary_defect = bounds
        .initial
        .defect(traj.initial_state())
        .max(bounds.terminal.defect(traj.final_state()));

    let classification = if sigma0.abs() <= opts.tol {
        Verdict::Abnormal
    } else if sigma0 < 0.0 {
        Verdict::Normal
    } else {
        Verdict::Undetermined
    };
    Ok(PmpReport {
        res_3a: gap.max(0.0),
        res_3b,
        res_3c,
        res_3d,
        res_3e,
        boundary_defect,
        sigma0,
        lebesgue_nodes: sup_values.len(),
        classification,
        tolerances: Tolerances {
            tol: opts.tol,
            drift_tol: opts.drift_tol,
            hamiltonian_resolution: resolution,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::super::{adjoint_flow, EndpointSpec};
    use super::*;
    use crate::flows::IntegratorConfig;
    use crate::signal::ControlSignal;
    use crate::trajectory::simulate_extended;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    /// Time-optimal transfer (1,0) → (0,0): u = −1 then +1, switch at 1,
    /// t* = 2. With σ₀ = −1 the adjoint is p₁ ≡ −1, p₂(t) = t − 1.
    fn analytic() -> (ControlSystem, Extremal, BoundarySpec) {
        let sys = ControlSystem::double_integrator();
        let u = ControlSignal::new(0.0, 2.0, vec![1.0], vec![v(&[-1.0]), v(&[1.0])]).unwrap();
        let ext = simulate_extended(&sys, &u, &v(&[1.0, 0.0]), &IntegratorConfig::new(1e-2)).unwrap();
        let adj = adjoint_flow(&sys, &ext.projected(), -1.0, &v(&[-1.0, 1.0])).unwrap();
        let bounds = BoundarySpec {
            mode: TimeMode::Free,
            initial: EndpointSpec::Point(v(&[1.0, 0.0])),
            terminal: EndpointSpec::Point(v(&[0.0, 0.0])),
        };
        (sys, Extremal::new(ext, adj).unwrap(), bounds)
    }

    #[test]
    fn analytic_extremal_passes() {
        let (sys, ex, bounds) = analytic();
        let rep = check_pmp(&sys, &ex, &bounds, &PmpOptions::default()).unwrap();
        assert!(rep.passed(), "{rep:?}");
        assert!(rep.res_3a < 1e-6 && rep.res_3b < 1e-6 && rep.boundary_defect < 1e-6);
        assert_eq!(rep.classification, Verdict::Normal);
        assert_eq!(rep.sigma0, -1.0);
        let json = rep.to_json();
        for key in ["res_3a", "res_3b", "res_3c", "res_3d", "res_3e", "classification", "tolerances"] {
            assert!(json.contains(key));
        }
    }

    #[test]
    fn flipped_adjoint_fails_sign() {
        let (sys, ex, bounds) = analytic();
        let flipped = Extremal::new(ex.extended().clone(), ex.adjoint().scaled(-1.0)).unwrap();
        let rep = check_pmp(&sys, &flipped, &bounds, &PmpOptions::default()).unwrap();
        assert!(!rep.res_3d.sign_ok);
        assert!(rep.failures().contains(&"3d"));
    }

    #[test]
    fn zero_adjoint_flags_3c() {
        let (sys, ex, bounds) = analytic();
        let zero = Extremal::new(ex.extended().clone(), ex.adjoint().scaled(0.0)).unwrap();
        let rep = check_pmp(&sys, &zero, &bounds, &PmpOptions::default()).unwrap();
        assert_eq!(rep.res_3c, 0.0);
        assert!(rep.failures().contains(&"3c"));
    }

    #[test]
    fn transversality_on_line() {
        let (sys, ex, mut bounds) = analytic();
        bounds.terminal = EndpointSpec::Manifold {
            anchor: v(&[0.0, 0.0]),
            tangent_basis: vec![v(&[0.0, 1.0])],
        };
        let rep = check_pmp(&sys, &ex, &bounds, &PmpOptions::default()).unwrap();
        assert!((rep.res_3e.terminal - ex.adjoint().terminal()[1].abs()).abs() < 1e-15);
    }
}
