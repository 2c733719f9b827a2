//! Sampled reachable sets, and two checks that the perturbation cone and
//! the flow decomposition describe them to first order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csvio;
use crate::error::{check_dim, Error, Result};
use crate::flows::{flow, pullback_field, IntegratorConfig, TimeVectorField};
use crate::geometry::cone::distance_l1;
use crate::geometry::GeneratedCone;
use crate::signal::ControlSignal;
use crate::system::{ControlSet, ControlSystem};
use crate::trajectory::{simulate, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSampling {
    /// Values drawn from the extreme points of `U`.
    Extreme,
    /// Values drawn uniformly from `U`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingPolicy {
    pub n_controls: usize,
    pub max_switches: usize,
    pub values: ValueSampling,
    pub seed: u64,
    /// Prepend one constant control per extreme point of `U`.
    pub constant_extremes: bool,
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            n_controls: 200,
            max_switches: 3,
            values: ValueSampling::Uniform,
            seed: 0,
            constant_extremes: true,
        }
    }
}

/// Enough to rebuild the control of one cloud point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlRecord {
    pub id: usize,
    pub switch_times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl ControlRecord {
    pub fn signal(&self, a: f64, b: f64) -> Result<ControlSignal> {
        ControlSignal::new(
            a,
            b,
            self.switch_times.clone(),
            self.values.iter().map(|v| DVector::from_column_slice(v)).collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSample {
    pub id: usize,
    pub reason: String,
}

/// Endpoints `x(T)` of sampled controls started at `x0` at time `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachCloud {
    pub x0: DVector<f64>,
    pub a: f64,
    pub t: f64,
    pub step: f64,
    pub points: Vec<DVector<f64>>,
    /// `provenance[i]` produced `points[i]`.
    pub provenance: Vec<ControlRecord>,
    pub skipped: Vec<SkippedSample>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    x0: Vec<f64>,
    a: f64,
    t: f64,
    step: f64,
    controls: Vec<ControlRecord>,
    skipped: Vec<SkippedSample>,
}

impl ReachCloud {
    /// Columns `x0..x{m-1},provenance_id`.
    pub fn to_csv(&self) -> String {
        let m = self.x0.len();
        let mut header: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
        header.push("provenance_id".into());
        let rows: Vec<Vec<f64>> = self
            .points
            .iter()
            .zip(&self.provenance)
            .map(|(p, r)| {
                let mut row: Vec<f64> = p.iter().copied().collect();
                row.push(r.id as f64);
                row
            })
            .collect();
        csvio::write_table(&header, &rows)
    }

    /// Base point, horizon and the control of every point.
    pub fn provenance_json(&self) -> String {
        let side = Sidecar {
            x0: self.x0.iter().copied().collect(),
            a: self.a,
            t: self.t,
            step: self.step,
            controls: self.provenance.clone(),
            skipped: self.skipped.clone(),
        };
        serde_json::to_string_pretty(&side).expect("sidecar serializes")
    }

    /// Rebuilds a cloud from its CSV and sidecar.
    pub fn from_files(csv: &str, json: &str) -> Result<Self> {
        let side: Sidecar =
            serde_json::from_str(json).map_err(|e| Error::InvalidArgument(format!("provenance sidecar: {e}")))?;
        let (header, rows) = csvio::read_table(csv)?;
        let m = side.x0.len();
        if header.len() != m + 1 || header[m] != "provenance_id" {
            return Err(Error::InvalidArgument("cloud table must be x0..,provenance_id".into()));
        }
        let mut points = Vec::with_capacity(rows.len());
        let mut provenance = Vec::with_capacity(rows.len());
        for r in &rows {
            let id = r[m] as usize;
            let rec = side
                .controls
                .iter()
                .find(|c| c.id == id)
                .ok_or_else(|| Error::Inconsistent(format!("no provenance for point {id}")))?;
            points.push(DVector::from_column_slice(&r[..m]));
            provenance.push(rec.clone());
        }
        Ok(Self {
            x0: DVector::from_vec(side.x0),
            a: side.a,
            t: side.t,
            step: side.step,
            points,
            provenance,
            skipped: side.skipped,
        })
    }

    /// Re-simulates the control of point `i`.
    pub fn resimulate(&self, sys: &ControlSystem, i: usize) -> Result<DVector<f64>> {
        let u = self.provenance[i].signal(self.a, self.t)?;
        Ok(simulate(sys, &u, &self.x0, &IntegratorConfig::new(self.step))?
            .final_state()
            .clone())
    }
}

fn sample_value(set: &ControlSet, mode: ValueSampling, extremes: &[DVector<f64>], rng: &mut ChaCha8Rng) -> DVector<f64> {
    match (mode, set) {
        (ValueSampling::Extreme, _) | (_, ControlSet::Finite(_)) => extremes[rng.gen_range(0..extremes.len())].clone(),
        (ValueSampling::Uniform, ControlSet::Box { lo, hi }) => {
            DVector::from_iterator(lo.len(), lo.iter().zip(hi.iter()).map(|(l, h)| rng.gen_range(*l..=*h)))
        }
        (ValueSampling::Uniform, ControlSet::Ball { center, radius }) => {
            let k = center.len();
            loop {
                let d = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..=1.0));
                if d.norm() <= 1.0 {
                    return center + d * *radius;
                }
            }
        }
    }
}

/// Simulates constant extreme controls (optionally) and then
/// `policy.n_controls` seeded random piecewise-constant controls on
/// `[a, t]`. Samples that blow up are recorded and skipped.
pub fn sample_reachable(
    sys: &ControlSystem,
    x0: &DVector<f64>,
    a: f64,
    t: f64,
    policy: &SamplingPolicy,
    cfg: &IntegratorConfig,
) -> Result<ReachCloud> {
    check_dim(sys.state_dim(), x0.len())?;
    if !(t > a) {
        return Err(Error::InvalidArgument(format!("horizon {t} must exceed start {a}")));
    }
    cfg.validate()?;
    let set = sys.control_set();
    if !set.is_bounded() {
        return Err(Error::InvalidArgument("reachable sampling needs a bounded control set".into()));
    }
    let extremes = set.extreme_points();
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    let mut records = Vec::new();
    if policy.constant_extremes {
        for e in &extremes {
            records.push((Vec::new(), vec![e.clone()]));
        }
    }
    for _ in 0..policy.n_controls {
        let k = rng.gen_range(0..=policy.max_switches);
        let mut times: Vec<f64> = (0..k).map(|_| rng.gen_range(a..t)).filter(|s| *s > a).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let values = (0..=times.len())
            .map(|_| sample_value(set, policy.values, &extremes, &mut rng))
            .collect();
        records.push((times, values));
    }
    let mut cloud = ReachCloud {
        x0: x0.clone(),
        a,
        t,
        step: cfg.step,
        points: Vec::new(),
        provenance: Vec::new(),
        skipped: Vec::new(),
    };
    let plain = IntegratorConfig::new(cfg.step);
    for (id, (times, values)) in records.into_iter().enumerate() {
        let rec = ControlRecord {
            id,
            switch_times: times,
            values: values.iter().map(|v| v.iter().copied().collect()).collect(),
        };
        let outcome = rec.signal(a, t).and_then(|u| simulate(sys, &u, x0, &plain));
        match outcome {
            Ok(tr) => {
                cloud.points.push(tr.final_state().clone());
                cloud.provenance.push(rec);
            }
            Err(e) => cloud.skipped.push(SkippedSample {
                id,
                reason: e.to_string(),
            }),
        }
    }
    Ok(cloud)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleStat {
    pub s_scale: f64,
    /// Cloud points within `s_scale` of `γ(t)`.
    pub points: usize,
    pub inside: usize,
    pub fraction: f64,
    /// Largest `dist₁(y − γ(t), K) / ‖y − γ(t)‖₁` in the slice.
    pub max_relative_distance: f64,
}

/// For each scale, the share of cloud points `y` with `‖y − γ(t)‖ ≤ s`
/// whose displacement lies in the cone up to relative L1 distance
/// `rel_tol`. Points equal to `γ(t)` count as inside.
pub fn cone_approximation_check(
    traj: &Trajectory,
    t: f64,
    cone: &GeneratedCone,
    cloud: &ReachCloud,
    scales: &[f64],
    rel_tol: f64,
) -> Result<Vec<ScaleStat>> {
    check_dim(traj.dim(), cone.dim())?;
    if (cloud.t - t).abs() > 1e-12 || (cloud.a - traj.start()).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "cloud covers [{}, {}], check asks for [{}, {t}]",
            cloud.a,
            cloud.t,
            traj.start()
        )));
    }
    let center = traj.state_at(t);
    let mut out = Vec::with_capacity(scales.len());
    for &s in scales {
        let mut points = 0;
        let mut inside = 0;
        let mut worst = 0.0f64;
        for y in &cloud.points {
            let d = y - &center;
            if d.norm() > s {
                continue;
            }
            points += 1;
            let n1 = d.lp_norm(1);
            let rel = if n1 == 0.0 { 0.0 } else { distance_l1(cone, &d)? / n1 };
            worst = worst.max(rel);
            if rel <= rel_tol {
                inside += 1;
            }
        }
        if points == 0 {
            return Err(Error::Empty("cloud slice"));
        }
        out.push(ScaleStat {
            s_scale: s,
            points,
            inside,
            fraction: inside as f64 / points as f64,
            max_relative_distance: worst,
        });
    }
    Ok(out)
}

/// `X^{ũ} − X^{u}`.
struct DifferenceField<'a> {
    sys: &'a ControlSystem,
    reference: &'a ControlSignal,
    alternative: &'a ControlSignal,
}

impl TimeVectorField for DifferenceField<'_> {
    fn dim(&self) -> usize {
        self.sys.state_dim()
    }

    fn eval(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.eval_on(t, t, x)
    }

    fn eval_on(&self, piece: f64, _t: f64, x: &DVector<f64>) -> DVector<f64> {
        self.sys.dynamics(x, self.alternative.value_at(piece)) - self.sys.dynamics(x, self.reference.value_at(piece))
    }

    fn jacobian_on(&self, piece: f64, _t: f64, x: &DVector<f64>) -> DMatrix<f64> {
        self.sys.state_jacobian(x, self.alternative.value_at(piece))
            - self.sys.state_jacobian(x, self.reference.value_at(piece))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// `Φ^{X^ũ}(t₁, a)(x0)`.
    pub direct: DVector<f64>,
    /// `Φ^{X^u}(t₁, a)(Φ^Z(t₁, a)(x0))` with `Z` the pullback of `X^ũ − X^u`.
    pub composed: DVector<f64>,
    pub residual: f64,
}

/// Computes the endpoint of the alternative control directly and through
/// the reference flow composed with the pulled-back difference field.
pub fn decomposition_reach_check(
    sys: &ControlSystem,
    reference: &ControlSignal,
    alternative: &ControlSignal,
    t1: f64,
    x0: &DVector<f64>,
    cfg: &IntegratorConfig,
) -> Result<DecompositionReport> {
    check_dim(sys.state_dim(), x0.len())?;
    let a = reference.start();
    if alternative.start() != a || !(t1 > a) || t1 > reference.end() || t1 > alternative.end() {
        return Err(Error::InvalidArgument(format!(
            "both controls must cover [{a}, {t1}]"
        )));
    }
    let cfg = cfg
        .clone()
        .with_events(reference.switch_times().iter().chain(alternative.switch_times()).copied());
    let x_field = sys.field(reference);
    let alt_field = sys.field(alternative);
    let y_field = DifferenceField {
        sys,
        reference,
        alternative,
    };
    let direct = flow(&alt_field, t1, a, x0, &cfg)?;
    let z = pullback_field(&x_field, &y_field, a, &cfg)?;
    let inner = flow(&z, t1, a, x0, &cfg).map_err(|e| z.take_failure().unwrap_or(e))?;
    if let Some(e) = z.take_failure() {
        return Err(e);
    }
    let composed = flow(&x_field, t1, a, &inner, &cfg)?;
    let residual = (&direct - &composed).norm();
    Ok(DecompositionReport {
        direct,
        composed,
        residual,
    })
}
