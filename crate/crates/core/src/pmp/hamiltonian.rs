//! The Hamiltonian `H = p₀F + p·f` and its pointwise maximization over `U`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::sphere_directions;
use crate::system::{ControlSet, ControlSystem};

/// `p₀·F(x,u) + p·f(x,u)`.
pub fn hamiltonian(sys: &ControlSystem, p0: f64, p: &DVector<f64>, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let h = p.dot(&sys.dynamics(x, u));
    if p0 == 0.0 {
        h
    } else {
        p0 * sys.running_cost(x, u) + h
    }
}

/// Which bound a box coordinate sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Lower,
    Upper,
    Interior,
}

/// The face of `U` on which the maximizer lies. On a fixed face the
/// maximizer is a smooth function of `(x, p)`, so an arc keeps its label
/// between switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcLabel {
    Box(Vec<Bound>),
    Finite(usize),
    /// Ball or sampled maximization; no face structure is tracked.
    Free,
}

impl std::fmt::Display for ArcLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ArcLabel::Box(b) => {
                let s: Vec<&str> = b
                    .iter()
                    .map(|c| match c {
                        Bound::Lower => "lower",
                        Bound::Upper => "upper",
                        Bound::Interior => "interior",
                    })
                    .collect();
                write!(f, "{}", s.join("/"))
            }
            ArcLabel::Finite(i) => write!(f, "point{i}"),
            ArcLabel::Free => write!(f, "free"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMax {
    pub u_star: DVector<f64>,
    pub value: f64,
    pub label: ArcLabel,
    /// Grid spacing used when the maximum was found by sampling; `None`
    /// when it is exact.
    pub resolution: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MaximizeOptions {
    /// Grid points per axis for non-quadratic Hamiltonians on a box.
    pub grid_per_axis: usize,
    /// Golden-section refinements around the best grid point.
    pub refinements: usize,
    /// Sphere directions per control dimension on a ball.
    pub ball_samples: usize,
}

impl Default for MaximizeOptions {
    fn default() -> Self {
        Self {
            grid_per_axis: 41,
            refinements: 60,
            ball_samples: 256,
        }
    }
}

/// Quadratic model `q(u) = h0 + g·(u − c) + ½(u − c)ᵀQ(u − c)` of `H` in
/// `u`, or `None` when `H` is not quadratic in `u` at this `(x, p)`.
struct QuadraticModel {
    center: DVector<f64>,
    g: DVector<f64>,
    q: DMatrix<f64>,
}

fn probe_center(lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        lo.len(),
        lo.iter().zip(hi.iter()).map(|(l, h)| match (l.is_finite(), h.is_finite()) {
            (true, true) => 0.5 * (l + h),
            (true, false) => l + 1.0,
            (false, true) => h - 1.0,
            (false, false) => 0.0,
        }),
    )
}

fn quadratic_model<H: Fn(&DVector<f64>) -> f64>(h: &H, center: DVector<f64>, scale: &DVector<f64>) -> Option<QuadraticModel> {
    let k = center.len();
    let h0 = h(&center);
    let step = |i: usize, a: f64| {
        let mut u = center.clone();
        u[i] += a * scale[i];
        u
    };
    let mut g = DVector::zeros(k);
    let mut q = DMatrix::zeros(k, k);
    let hp: Vec<f64> = (0..k).map(|i| h(&step(i, 1.0))).collect();
    let hm: Vec<f64> = (0..k).map(|i| h(&step(i, -1.0))).collect();
    for i in 0..k {
        g[i] = (hp[i] - hm[i]) / (2.0 * scale[i]);
        q[(i, i)] = (hp[i] - 2.0 * h0 + hm[i]) / (scale[i] * scale[i]);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            let mut u = center.clone();
            u[i] += scale[i];
            u[j] += scale[j];
            let hij = h(&u);
            let v = (hij - hp[i] - hp[j] + h0) / (scale[i] * scale[j]);
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    let model = QuadraticModel { center, g, q };
    // validate on a few deterministic off-axis points
    let magnitude = h0.abs() + hp.iter().chain(&hm).fold(0.0f64, |a, b| a.max(b.abs()));
    for (n, d) in sphere_directions(k.max(1), 4 * k.max(1)).iter().enumerate().take(4 * k) {
        let r = 0.37 + 0.41 * n as f64;
        let u = &model.center + d.component_mul(scale) * r;
        let predicted = h0 + model.eval_delta(&(&u - &model.center));
        if (predicted - h(&u)).abs() > 1e-9 * (1.0 + magnitude) * (1.0 + r * r) {
            return None;
        }
    }
    Some(model)
}

impl QuadraticModel {
    fn eval_delta(&self, d: &DVector<f64>) -> f64 {
        self.g.dot(d) + 0.5 * d.dot(&(&self.q * d))
    }
}

fn scale_of(lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        lo.len(),
        lo.iter().zip(hi.iter()).map(|(l, h)| {
            let w = h - l;
            if w.is_finite() && w > 0.0 {
                0.5 * w
            } else {
                1.0
            }
        }),
    )
}

fn clamp_label(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> Vec<Bound> {
    u.iter()
        .zip(lo.iter().zip(hi.iter()))
        .map(|(x, (l, h))| {
            let tol = 1e-12 * (1.0 + x.abs());
            if (x - l).abs() <= tol {
                Bound::Lower
            } else if (x - h).abs() <= tol {
                Bound::Upper
            } else {
                Bound::Interior
            }
        })
        .collect()
}

/// Maximizer of the quadratic model on the face `face` of the box. Free
/// coordinates solve the stationarity equations in the least-squares sense.
fn face_point(model: &QuadraticModel, lo: &DVector<f64>, hi: &DVector<f64>, face: &[Bound]) -> Option<DVector<f64>> {
    let k = face.len();
    let mut u = model.center.clone();
    let free: Vec<usize> = (0..k).filter(|&i| face[i] == Bound::Interior).collect();
    for i in 0..k {
        match face[i] {
            Bound::Lower => u[i] = lo[i],
            Bound::Upper => u[i] = hi[i],
            Bound::Interior => {}
        }
        if !u[i].is_finite() {
            return None;
        }
    }
    if !free.is_empty() {
        let nf = free.len();
        let d_fixed = &u - &model.center;
        let mut qff = DMatrix::zeros(nf, nf);
        let mut rhs = DVector::zeros(nf);
        for (a, &i) in free.iter().enumerate() {
            let mut r = -model.g[i];
            for j in 0..k {
                if face[j] != Bound::Interior {
                    r -= model.q[(i, j)] * d_fixed[j];
                }
            }
            rhs[a] = r;
            for (b, &j) in free.iter().enumerate() {
                qff[(a, b)] = model.q[(i, j)];
            }
        }
        let sol = qff.svd(true, true).solve(&rhs, 1e-12).ok()?;
        for (a, &i) in free.iter().enumerate() {
            u[i] = model.center[i] + sol[a];
        }
        for &i in &free {
            let tol = 1e-12 * (1.0 + u[i].abs());
            if u[i] < lo[i] - tol || u[i] > hi[i] + tol {
                return None;
            }
        }
    }
    Some(u)
}

/// Detects an unbounded supremum along the unbounded coordinates of a box.
fn check_bounded(model: &QuadraticModel, lo: &DVector<f64>, hi: &DVector<f64>, at: &DVector<f64>) -> Result<()> {
    let unb: Vec<usize> = (0..lo.len())
        .filter(|&i| !lo[i].is_finite() || !hi[i].is_finite())
        .collect();
    if unb.is_empty() {
        return Ok(());
    }
    let n = unb.len();
    let quu = DMatrix::from_fn(n, n, |a, b| model.q[(unb[a], unb[b])]);
    let grad = &model.g + &model.q * (at - &model.center);
    let scale = 1.0 + model.q.amax() + model.g.amax();
    let eig = quu.symmetric_eigen();
    for (idx, lambda) in eig.eigenvalues.iter().enumerate() {
        let dir = eig.eigenvectors.column(idx);
        let slope: f64 = (0..n).map(|a| dir[a] * grad[unb[a]]).sum();
        if *lambda > 1e-10 * scale || (lambda.abs() <= 1e-10 * scale && slope.abs() > 1e-10 * scale) {
            return Err(Error::UnboundedHamiltonian);
        }
    }
    Ok(())
}

fn faces(k: usize, lo: &DVector<f64>, hi: &DVector<f64>) -> Vec<Vec<Bound>> {
    let options: Vec<Vec<Bound>> = (0..k)
        .map(|i| {
            let mut o = Vec::new();
            if lo[i].is_finite() {
                o.push(Bound::Lower);
            }
            if hi[i].is_finite() && hi[i] > lo[i] {
                o.push(Bound::Upper);
            }
            if hi[i] > lo[i] {
                o.push(Bound::Interior);
            }
            o
        })
        .collect();
    let mut out = vec![Vec::new()];
    for o in &options {
        let mut next = Vec::with_capacity(out.len() * o.len());
        for prefix in &out {
            for b in o {
                let mut p = prefix.clone();
                p.push(*b);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

/// Keeps the first of equal values so that ties go to the lowest index.
fn better(value: f64, best: f64) -> bool {
    value > best + 1e-13 * (1.0 + best.abs())
}

/// `sup_{u∈U} H(p₀, p, x, u)` with its argmax.
///
/// Finite sets are enumerated. On a box the Hamiltonian is first probed for
/// quadratic structure in `u`; when it is quadratic every face is solved
/// exactly (vertices, edges, interior stationary points), which also covers
/// control-affine dynamics with quadratic costs. Otherwise a grid search with
/// coordinate-wise golden-section refinement is used and its resolution is
/// reported. A ball is handled exactly for affine `H` and by sampling
/// otherwise.
pub fn maximize_hamiltonian(
    sys: &ControlSystem,
    p0: f64,
    p: &DVector<f64>,
    x: &DVector<f64>,
    opts: &MaximizeOptions,
) -> Result<HamiltonianMax> {
    check_dim(sys.state_dim(), p.len())?;
    check_dim(sys.state_dim(), x.len())?;
    let h = |u: &DVector<f64>| hamiltonian(sys, p0, p, x, u);
    match sys.control_set() {
        ControlSet::Finite(points) => {
            let mut best = 0;
            let mut best_v = h(&points[0]);
            for (i, pt) in points.iter().enumerate().skip(1) {
                let v = h(pt);
                if better(v, best_v) {
                    best = i;
                    best_v = v;
                }
            }
            Ok(HamiltonianMax {
                u_star: points[best].clone(),
                value: best_v,
                label: ArcLabel::Finite(best),
                resolution: None,
            })
        }
        ControlSet::Box { lo, hi } => maximize_on_box(&h, lo, hi, opts),
        ControlSet::Ball { center, radius } => {
            let k = center.len();
            let unit = DVector::from_element(k, radius.max(1e-300));
            if let Some(model) = quadratic_model(&h, center.clone(), &unit) {
                if model.q.amax() <= 1e-12 * (1.0 + model.g.amax()) {
                    let gn = model.g.norm();
                    let u = if gn > 0.0 { center + &model.g * (radius / gn) } else { center.clone() };
                    return Ok(HamiltonianMax {
                        value: h(&u),
                        u_star: u,
                        label: ArcLabel::Free,
                        resolution: None,
                    });
                }
            }
            let mut best_u = center.clone();
            let mut best_v = h(center);
            let dirs = sphere_directions(k, opts.ball_samples * k);
            let radii = 8;
            for d in &dirs {
                for j in 1..=radii {
                    let u = center + d * (radius * j as f64 / radii as f64);
                    let v = h(&u);
                    if better(v, best_v) {
                        best_v = v;
                        best_u = u;
                    }
                }
            }
            Ok(HamiltonianMax {
                u_star: best_u,
                value: best_v,
                label: ArcLabel::Free,
                resolution: Some(radius / radii as f64),
            })
        }
    }
}

fn maximize_on_box<H: Fn(&DVector<f64>) -> f64>(
    h: &H,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &MaximizeOptions,
) -> Result<HamiltonianMax> {
    let k = lo.len();
    let center = probe_center(lo, hi);
    let scale = scale_of(lo, hi);
    let bounded = lo.iter().chain(hi.iter()).all(|c| c.is_finite());
    if let Some(model) = quadratic_model(h, center.clone(), &scale) {
        check_bounded(&model, lo, hi, &center)?;
        let mut best: Option<(DVector<f64>, f64)> = None;
        for face in faces(k, lo, hi) {
            if let Some(u) = face_point(&model, lo, hi, &face) {
                let v = h(&u);
                if best.as_ref().is_none_or(|(_, bv)| better(v, *bv)) {
                    best = Some((u, v));
                }
            }
        }
        let (u, v) = best.ok_or(Error::UnboundedHamiltonian)?;
        check_bounded(&model, lo, hi, &u)?;
        return Ok(HamiltonianMax {
            label: ArcLabel::Box(clamp_label(&u, lo, hi)),
            u_star: u,
            value: v,
            resolution: None,
        });
    }
    if !bounded {
        return Err(Error::InvalidArgument(
            "Hamiltonian is not quadratic in u on an unbounded control set".into(),
        ));
    }
    // grid search
    let n = opts.grid_per_axis.max(2);
    let total = n.checked_pow(k as u32).unwrap_or(usize::MAX).min(1 << 20);
    let mut best_u = lo.clone();
    let mut best_v = h(lo);
    for idx in 0..total {
        let mut rem = idx;
        let u = DVector::from_iterator(
            k,
            (0..k).map(|i| {
                let j = rem % n;
                rem /= n;
                lo[i] + (hi[i] - lo[i]) * j as f64 / (n - 1) as f64
            }),
        );
        let v = h(&u);
        if better(v, best_v) {
            best_v = v;
            best_u = u;
        }
    }
    // coordinate-wise golden-section refinement within one grid cell
    let invphi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..3 {
        for i in 0..k {
            let cell = (hi[i] - lo[i]) / (n - 1) as f64;
            let (mut a, mut b) = ((best_u[i] - cell).max(lo[i]), (best_u[i] + cell).min(hi[i]));
            let at = |c: f64| {
                let mut u = best_u.clone();
                u[i] = c;
                h(&u)
            };
            for _ in 0..opts.refinements {
                let c = b - invphi * (b - a);
                let d = a + invphi * (b - a);
                if at(c) >= at(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let mid = 0.5 * (a + b);
            let v = at(mid);
            if better(v, best_v) {
                best_v = v;
                best_u[i] = mid;
            }
        }
    }
    let resolution = (0..k)
        .map(|i| (hi[i] - lo[i]) / (n - 1) as f64)
        .fold(0.0, f64::max)
        * invphi.powi(opts.refinements as i32);
    Ok(HamiltonianMax {
        label: ArcLabel::Box(clamp_label(&best_u, lo, hi)),
        u_star: best_u,
        value: best_v,
        resolution: Some(resolution),
    })
}

/// The maximizer restricted to the face `label`. Used to continue an arc
/// without re-deciding its face. Falls back to full maximization when the
/// face carries no structure.
pub fn maximize_on_face(
    sys: &ControlSystem,
    p0: f64,
    p: &DVector<f64>,
    x: &DVector<f64>,
    label: &ArcLabel,
    opts: &MaximizeOptions,
) -> Result<DVector<f64>> {
    match (label, sys.control_set()) {
        (ArcLabel::Finite(i), ControlSet::Finite(points)) if *i < points.len() => Ok(points[*i].clone()),
        (ArcLabel::Box(face), ControlSet::Box { lo, hi }) if face.iter().all(|b| *b != Bound::Interior) => {
            Ok(DVector::from_iterator(
                face.len(),
                face.iter().enumerate().map(|(i, b)| if *b == Bound::Lower { lo[i] } else { hi[i] }),
            ))
        }
        (ArcLabel::Box(face), ControlSet::Box { lo, hi }) => {
            let h = |u: &DVector<f64>| hamiltonian(sys, p0, p, x, u);
            let model = quadratic_model(&h, probe_center(lo, hi), &scale_of(lo, hi));
            match model.and_then(|m| face_point_unclamped(&m, lo, hi, face)) {
                Some(u) => Ok(u),
                None => Ok(maximize_hamiltonian(sys, p0, p, x, opts)?.u_star),
            }
        }
        _ => Ok(maximize_hamiltonian(sys, p0, p, x, opts)?.u_star),
    }
}

/// Like [`face_point`] but clamps free coordinates instead of rejecting, so
/// that an arc can be followed up to the point where it leaves its face.
fn face_point_unclamped(model: &QuadraticModel, lo: &DVector<f64>, hi: &DVector<f64>, face: &[Bound]) -> Option<DVector<f64>> {
    let wide_lo = DVector::from_element(lo.len(), f64::NEG_INFINITY);
    let wide_hi = DVector::from_element(lo.len(), f64::INFINITY);
    let mut fixed_lo = wide_lo.clone();
    let mut fixed_hi = wide_hi.clone();
    for i in 0..face.len() {
        if face[i] != Bound::Interior {
            fixed_lo[i] = lo[i];
            fixed_hi[i] = hi[i];
        }
    }
    let u = face_point(model, &fixed_lo, &fixed_hi, face)?;
    Some(DVector::from_iterator(
        u.len(),
        u.iter().zip(lo.iter().zip(hi.iter())).map(|(x, (l, h))| x.clamp(*l, *h)),
    ))
}
