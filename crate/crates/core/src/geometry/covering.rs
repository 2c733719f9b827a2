//! Root finding for maps that cover a point of a ball.
//!
//! If `g` is continuous on the closed ball `B(c, R)` and
//! `‖g(x) − x‖ < ‖x − p‖` on its boundary, then `g(B)` covers `p`. The
//! hypothesis is checked on a deterministic boundary sample and the
//! preimage is then located numerically.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone)]
pub struct CoveringOptions {
    /// Boundary sample size per ambient dimension.
    pub samples_per_dim: usize,
    /// Required `‖g(x*) − p‖`.
    pub tol: f64,
    /// Newton iterations per start.
    pub max_iter: usize,
    /// Grid points per axis for the multistart fallback.
    pub grid_per_axis: usize,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for CoveringOptions {
    fn default() -> Self {
        Self {
            samples_per_dim: 64,
            tol: 1e-10,
            max_iter: 60,
            grid_per_axis: 5,
            fd_step: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CoveredRoot {
    pub x: DVector<f64>,
    pub residual: f64,
    /// `min (‖x − p‖ − ‖g(x) − x‖)` over the boundary sample; positive when
    /// the covering hypothesis holds on the sample.
    pub boundary_margin: f64,
}

/// Deterministic, roughly uniform unit directions in `Rⁿ`.
///
/// One dimension gives `±1`; two dimensions use equally spaced angles;
/// higher dimensions push a Halton sequence through Box–Muller and
/// normalize.
pub fn sphere_directions(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        0 => Vec::new(),
        1 => vec![DVector::from_element(1, 1.0), DVector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let th = (k as f64 + 0.5) * std::f64::consts::TAU / count as f64;
                DVector::from_column_slice(&[th.cos(), th.sin()])
            })
            .collect(),
        _ => {
            let pairs = n.div_ceil(2);
            let primes = first_primes(2 * pairs);
            (1..=count)
                .map(|idx| {
                    let mut z = Vec::with_capacity(2 * pairs);
                    for p in 0..pairs {
                        let u1 = radical_inverse(idx, primes[2 * p]);
                        let u2 = radical_inverse(idx, primes[2 * p + 1]);
                        let r = (-2.0 * u1.ln()).sqrt();
                        let th = std::f64::consts::TAU * u2;
                        z.push(r * th.cos());
                        z.push(r * th.sin());
                    }
                    DVector::from_iterator(n, z.into_iter().take(n)).normalize()
                })
                .collect()
        }
    }
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

fn first_primes(k: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let mut c = 2;
    while out.len() < k {
        if (2..c).take_while(|d| d * d <= c).all(|d| c % d != 0) {
            out.push(c);
        }
        c += 1;
    }
    out
}

/// Finds `x*` in `B(center, radius)` with `‖g(x*) − p‖ ≤ opts.tol`.
///
/// The boundary condition is verified first on `samples_per_dim · n`
/// directions; a violation is reported with the offending point. The root
/// is then sought by damped Newton with a finite-difference Jacobian from
/// the center, falling back to a grid of interior starts.
pub fn covered_point_root<G>(
    g: G,
    center: &DVector<f64>,
    radius: f64,
    p: &DVector<f64>,
    opts: &CoveringOptions,
) -> Result<CoveredRoot>
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = center.len();
    check_dim(n, p.len())?;
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    if (p - center).norm() >= radius {
        return Err(Error::InvalidArgument("target point must lie strictly inside the ball".into()));
    }
    if n == 0 {
        return Ok(CoveredRoot {
            x: DVector::zeros(0),
            residual: 0.0,
            boundary_margin: f64::INFINITY,
        });
    }

    let mut margin = f64::INFINITY;
    for d in sphere_directions(n, opts.samples_per_dim * n) {
        let x = center + d * radius;
        let gx = g(&x);
        check_dim(n, gx.len())?;
        let displacement = (&gx - &x).norm();
        let dist = (&x - p).norm();
        if !(displacement < dist) {
            return Err(Error::BoundaryCondition {
                point: x.iter().copied().collect(),
                displacement,
                radius: dist,
            });
        }
        margin = margin.min(dist - displacement);
    }

    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut starts = vec![center.clone()];
    starts.extend(grid_starts(center, radius, opts.grid_per_axis));
    for start in starts {
        let (x, res) = newton(&g, start, center, radius, p, opts);
        if res <= opts.tol {
            return Ok(CoveredRoot {
                x,
                residual: res,
                boundary_margin: margin,
            });
        }
        if best.as_ref().is_none_or(|(_, r)| res < *r) {
            best = Some((x, res));
        }
    }
    let (best, best_residual) = best.expect("at least one start");
    Err(Error::RootBudget {
        best_residual,
        best,
    })
}

fn grid_starts(center: &DVector<f64>, radius: f64, per_axis: usize) -> Vec<DVector<f64>> {
    let n = center.len();
    let per_axis = per_axis.max(2);
    let total = per_axis.checked_pow(n as u32).unwrap_or(usize::MAX).min(4096);
    let mut out = Vec::new();
    for idx in 0..total {
        let mut rem = idx;
        let mut x = center.clone();
        for i in 0..n {
            let k = rem % per_axis;
            rem /= per_axis;
            x[i] += radius * (-0.9 + 1.8 * k as f64 / (per_axis - 1) as f64);
        }
        if (&x - center).norm() < radius {
            out.push(x);
        }
    }
    out
}

fn project(x: DVector<f64>, center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = &x - center;
    let nd = d.norm();
    if nd <= radius {
        x
    } else {
        center + d * (radius / nd)
    }
}

fn newton<G>(
    g: &G,
    mut x: DVector<f64>,
    center: &DVector<f64>,
    radius: f64,
    p: &DVector<f64>,
    opts: &CoveringOptions,
) -> (DVector<f64>, f64)
where
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.len();
    let mut fx = g(&x) - p;
    let mut res = fx.norm();
    for _ in 0..opts.max_iter {
        if res <= opts.tol || !res.is_finite() {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let h = opts.fd_step * radius.max(1e-12);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (g(&xp) - g(&xm)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let Some(step) = jac.lu().solve(&(-&fx)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let trial = project(&x + &step * lambda, center, radius);
            let ft = g(&trial) - p;
            let rt = ft.norm();
            if rt < res {
                x = trial;
                fx = ft;
                res = rt;
                improved = true;
                break;
            }
            lambda *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (x, res)
}
