//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use pontryagin::flows::FnField;
use pontryagin::geometry::GeneratedCone;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn v(c: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(c)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-scale..=scale))
}

pub fn random_matrix(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| r.gen_range(-scale..=scale))
}

/// `X(t, x) = Ax + b ∘ sin(Cx + ωt)` with its exact Jacobian.
pub fn random_smooth_field(r: &mut ChaCha8Rng, m: usize) -> FnField {
    let a = random_matrix(r, m, 1.0);
    let b = random_vector(r, m, 1.0);
    let c = random_matrix(r, m, 1.0);
    let w: f64 = r.gen_range(-2.0..=2.0);
    let (a2, b2, c2) = (a.clone(), b.clone(), c.clone());
    FnField::new(m, move |t, x| {
        let arg = &c * x + DVector::from_element(x.len(), w * t);
        &a * x + b.component_mul(&arg.map(f64::sin))
    })
    .with_jacobian(move |t, x| {
        let arg = &c2 * x + DVector::from_element(x.len(), w * t);
        let d = b2.component_mul(&arg.map(f64::cos));
        &a2 + DMatrix::from_diagonal(&d) * &c2
    })
}

pub fn random_cone(r: &mut ChaCha8Rng, n: usize, max_gens: usize) -> GeneratedCone {
    let k = r.gen_range(1..=max_gens);
    let gens = (0..k)
        .map(|_| loop {
            let g = random_vector(r, n, 1.0);
            if g.norm() > 0.1 {
                break g;
            }
        })
        .collect();
    GeneratedCone::new(n, gens).expect("valid cone")
}

/// Candidate extreme rays of the covector cone cut out by the generators:
/// in R² the perpendiculars of each generator, in R³ the cross products of
/// generator pairs plus a perpendicular of each generator for the rank-one
/// case. Coordinate axes are thrown in for the empty case.
fn candidate_normals(n: usize, gens: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    match n {
        2 => {
            for g in gens {
                out.push(v(&[-g[1], g[0]]));
            }
            out.push(v(&[1.0, 0.0]));
            out.push(v(&[0.0, 1.0]));
        }
        3 => {
            let g3: Vec<Vector3<f64>> = gens.iter().map(|g| Vector3::new(g[0], g[1], g[2])).collect();
            for i in 0..g3.len() {
                for j in i + 1..g3.len() {
                    let c = g3[i].cross(&g3[j]);
                    if c.norm() > 1e-9 {
                        out.push(v(&[c[0], c[1], c[2]]));
                    }
                }
                // perpendiculars to a single generator cover the rank-one case
                let e = if g3[i][0].abs() < 0.9 { Vector3::x() } else { Vector3::y() };
                let c = g3[i].cross(&e);
                out.push(v(&[c[0], c[1], c[2]]));
            }
            out.push(v(&[1.0, 0.0, 0.0]));
            out.push(v(&[0.0, 1.0, 0.0]));
            out.push(v(&[0.0, 0.0, 1.0]));
        }
        _ => panic!("oracle supports R² and R³ only"),
    }
    let mut signed = Vec::with_capacity(2 * out.len());
    for c in out {
        let c = c.normalize();
        signed.push(-&c);
        signed.push(c);
    }
    signed
}

/// Brute-force separation: some enumerated `α ≠ 0` with `α(C₁) ≤ 0 ≤ α(C₂)`.
pub fn oracle_separated(c1: &GeneratedCone, c2: &GeneratedCone, tol: f64) -> bool {
    let n = c1.dim();
    let mut all = c1.generators().to_vec();
    all.extend(c2.generators().iter().cloned());
    candidate_normals(n, &all).iter().any(|a| {
        c1.generators().iter().all(|g| a.dot(g) <= tol) && c2.generators().iter().all(|g| a.dot(g) >= -tol)
    })
}

/// Unit directions covering the sphere: an angle sweep in R², a Fibonacci
/// lattice in R³.
pub fn sphere_sample(n: usize, count: usize) -> Vec<DVector<f64>> {
    match n {
        2 => (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                v(&[a.cos(), a.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    v(&[r * a.cos(), r * a.sin(), z])
                })
                .collect()
        }
        _ => panic!("sphere sample supports R² and R³ only"),
    }
}

/// Largest `α·x` over the sampled polar directions `α`, `None` when no
/// sample lands in the polar.
pub fn max_polar_pairing<P>(polar: P, samples: &[DVector<f64>], x: &DVector<f64>) -> Option<f64>
where
    P: Fn(&DVector<f64>) -> bool,
{
    samples
        .iter()
        .filter(|a| polar(a))
        .map(|a| a.dot(x))
        .fold(None, |m, p| Some(m.map_or(p, |q: f64| q.max(p))))
}

/// Slope-test errors `‖(F(s) − F(0))/s − v‖` for the given `s` values.
pub fn slope_errors<F>(endpoint: F, base: &DVector<f64>, vector: &DVector<f64>, scales: &[f64]) -> Vec<f64>
where
    F: Fn(f64) -> DVector<f64>,
{
    scales
        .iter()
        .map(|&s| ((endpoint(s) - base) / s - vector).norm())
        .collect()
}

pub fn strictly_decreasing(errs: &[f64]) -> bool {
    errs.windows(2).all(|w| w[1] < w[0])
}
