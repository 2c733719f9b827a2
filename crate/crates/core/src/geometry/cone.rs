//! Finitely generated convex cones: membership, polar, supporting
//! hyperplanes and separation.
//!
//! A cone is stored as a list of unit generators; it represents
//! `{ Σ λᵢ gᵢ : λᵢ ≥ 0 }`. Every decision reduces to a small linear
//! feasibility problem solved by [`super::lp`].

use nalgebra::{DMatrix, DVector};

use super::lp::{LinearProgram, LpStatus, Relation};
use crate::error::{check_dim, Error, Result};

/// Default absolute tolerance on pairings.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Relative threshold under which a singular value is treated as zero.
const RANK_EPS: f64 = 1e-10;

/// Elements of the ambient space `E = Rⁿ`.
pub type Vector = DVector<f64>;

/// A linear form on `Rⁿ`. Used as a hyperplane normal, `P_α = ker α`.
#[derive(Debug, Clone, PartialEq)]
pub struct Covector(pub DVector<f64>);

impl Covector {
    pub fn new(coords: DVector<f64>) -> Self {
        Self(coords)
    }

    pub fn from_slice(coords: &[f64]) -> Self {
        Self(DVector::from_column_slice(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `α(v)`.
    pub fn pair(&self, v: &DVector<f64>) -> f64 {
        self.0.dot(v)
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|c| *c == 0.0)
    }
}

/// Where a vector sits relative to a cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MembershipVerdict {
    Outside,
    Boundary,
    /// Relative interior, i.e. interior within the span of the cone.
    Interior,
}

impl MembershipVerdict {
    pub fn is_member(self) -> bool {
        !matches!(self, MembershipVerdict::Outside)
    }
}

/// The convex cone generated by a finite list of vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCone {
    n: usize,
    generators: Vec<DVector<f64>>,
}

impl GeneratedCone {
    /// Builds the cone, rescaling generators to unit length and dropping
    /// zero and duplicate generators.
    pub fn new(n: usize, generators: Vec<DVector<f64>>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("cone dimension must be at least 1".into()));
        }
        let mut kept: Vec<DVector<f64>> = Vec::with_capacity(generators.len());
        for g in generators {
            check_dim(n, g.len())?;
            if g.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidArgument("non-finite generator".into()));
            }
            let norm = g.norm();
            if norm <= f64::MIN_POSITIVE * 1e6 {
                continue;
            }
            let unit = g / norm;
            if kept.iter().all(|k| (k - &unit).amax() > 1e-12) {
                kept.push(unit);
            }
        }
        Ok(Self {
            n,
            generators: kept,
        })
    }

    /// Convenience constructor from row slices.
    pub fn from_rows(n: usize, rows: &[&[f64]]) -> Result<Self> {
        Self::new(
            n,
            rows.iter().map(|r| DVector::from_column_slice(r)).collect(),
        )
    }

    /// The cone `{0}`.
    pub fn trivial(n: usize) -> Self {
        Self {
            n,
            generators: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[DVector<f64>] {
        &self.generators
    }

    pub fn is_trivial(&self) -> bool {
        self.generators.is_empty()
    }

    /// Generators of `C₁ − C₂`: those of `C₁` together with the negated
    /// generators of `C₂`.
    pub fn difference(c1: &GeneratedCone, c2: &GeneratedCone) -> Result<GeneratedCone> {
        check_dim(c1.n, c2.n)?;
        let mut gens = c1.generators.clone();
        gens.extend(c2.generators.iter().map(|g| -g));
        GeneratedCone::new(c1.n, gens)
    }

    /// Dimension of the linear span of the generators.
    pub fn span_dim(&self) -> usize {
        span_basis(self.n, &self.generators).ncols()
    }
}

/// Orthonormal basis (as columns) of the span of `vectors`.
pub(crate) fn span_basis(n: usize, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    if vectors.is_empty() {
        return DMatrix::zeros(n, 0);
    }
    let g = DMatrix::from_columns(vectors);
    let svd = g.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > RANK_EPS * smax.max(1e-300))
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the orthogonal complement of the span of `vectors`.
pub(crate) fn complement_basis(n: usize, vectors: &[DVector<f64>]) -> DMatrix<f64> {
    let span = span_basis(n, vectors);
    if span.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    // full SVD of the span basis: trailing left singular vectors span the complement
    let mut padded = DMatrix::zeros(n, n);
    padded.columns_mut(0, span.ncols()).copy_from(&span);
    let svd = padded.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let cols: Vec<DVector<f64>> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s < 0.5)
        .map(|(i, _)| u.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// L1 distance from `v` to the cone, `min ‖v − Gλ‖₁` over `λ ≥ 0`.
pub fn distance_l1(cone: &GeneratedCone, v: &DVector<f64>) -> Result<f64> {
    check_dim(cone.n, v.len())?;
    Ok(distance_l1_raw(cone.n, &cone.generators, v))
}

pub(crate) fn distance_l1_raw(n: usize, gens: &[DVector<f64>], v: &DVector<f64>) -> f64 {
    let ng = gens.len();
    // variables: λ (ng), e⁺ (n), e⁻ (n)
    let nv = ng + 2 * n;
    let mut obj = vec![0.0; nv];
    for o in obj.iter_mut().skip(ng) {
        *o = -1.0;
    }
    let mut lp = LinearProgram::new(nv).maximize(obj);
    for row in 0..n {
        let mut coeffs = vec![0.0; nv];
        for (j, g) in gens.iter().enumerate() {
            coeffs[j] = g[row];
        }
        coeffs[ng + row] = 1.0;
        coeffs[ng + n + row] = -1.0;
        lp.constraint(coeffs, Relation::Eq, v[row]);
    }
    match lp.solve(1e-12) {
        LpStatus::Optimal { value, .. } => (-value).max(0.0),
        // always feasible and bounded below by zero
        _ => f64::INFINITY,
    }
}

/// Classifies `v` against the cone.
///
/// `Outside` when no nonnegative combination reproduces `v` within `tol`
/// (L1). `Interior` when, in addition, every vertex of a cross-polytope of
/// radius `tol·√k` around `v` inside the span (dimension `k`) stays in the
/// cone; that cross-polytope contains the `tol`-ball of the span. `Boundary`
/// otherwise.
pub fn conic_membership(
    cone: &GeneratedCone,
    v: &DVector<f64>,
    tol: f64,
) -> Result<MembershipVerdict> {
    check_dim(cone.n, v.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("membership tolerance must be positive".into()));
    }
    if distance_l1_raw(cone.n, &cone.generators, v) > tol {
        return Ok(MembershipVerdict::Outside);
    }
    let basis = span_basis(cone.n, &cone.generators);
    let k = basis.ncols();
    if k == 0 {
        return Ok(MembershipVerdict::Interior);
    }
    let delta = tol * (k as f64).sqrt();
    let inner = 1e-3 * tol;
    for j in 0..k {
        let b = basis.column(j);
        for sign in [1.0, -1.0] {
            let w = v + b * (sign * delta);
            if distance_l1_raw(cone.n, &cone.generators, &w) > inner {
                return Ok(MembershipVerdict::Boundary);
            }
        }
    }
    Ok(MembershipVerdict::Interior)
}

/// `α ∈ C*`, i.e. `α(g) ≤ 0` for every generator.
///
/// Generators are stored normalized, so the comparison allows a rounding
/// slack of `1e-12·‖α‖`.
pub fn polar_contains(cone: &GeneratedCone, alpha: &Covector) -> Result<bool> {
    check_dim(cone.n, alpha.dim())?;
    let slack = 1e-12 * alpha.0.norm();
    Ok(cone.generators.iter().all(|g| alpha.pair(g) <= slack))
}

/// A nonzero `α` with `α(g) ≤ 0` on every generator, or `None` when the
/// polar is `{0}` (the cone is all of `E`).
///
/// The first attempt maximizes the depth `t` in `α(g) + t ≤ 0` over the box
/// `‖α‖∞ ≤ 1`, which yields a central normal for pointed cones. When the
/// cone contains a line the depth is zero, and a nonzero polar element is
/// searched coordinate by coordinate.
pub fn supporting_hyperplane(cone: &GeneratedCone) -> Option<Covector> {
    supporting_hyperplane_raw(cone.n, &cone.generators)
}

pub(crate) fn supporting_hyperplane_raw(n: usize, gens: &[DVector<f64>]) -> Option<Covector> {
    if gens.is_empty() {
        let mut a = DVector::zeros(n);
        a[0] = -1.0;
        return Some(Covector(a));
    }
    // α = β − 1 with β ∈ [0, 2]ⁿ
    let add_box = |lp: &mut LinearProgram, nv: usize| {
        for j in 0..n {
            let mut c = vec![0.0; nv];
            c[j] = 1.0;
            lp.constraint(c, Relation::Le, 2.0);
        }
    };
    {
        let nv = n + 1;
        let mut obj = vec![0.0; nv];
        obj[n] = 1.0;
        let mut lp = LinearProgram::new(nv).maximize(obj);
        for g in gens {
            let mut c: Vec<f64> = g.iter().copied().collect();
            c.push(1.0);
            lp.constraint(c, Relation::Le, g.sum());
        }
        add_box(&mut lp, nv);
        let mut cap = vec![0.0; nv];
        cap[n] = 1.0;
        lp.constraint(cap, Relation::Le, 1.0);
        if let Some((x, depth)) = lp.solve(1e-12).optimal() {
            if depth > 1e-9 {
                let alpha = DVector::from_iterator(n, x[..n].iter().map(|b| b - 1.0));
                return Some(Covector(alpha.normalize()));
            }
        }
    }
    for j in 0..n {
        for sign in [1.0, -1.0] {
            let mut obj = vec![0.0; n];
            obj[j] = sign;
            let mut lp = LinearProgram::new(n).maximize(obj);
            for g in gens {
                lp.constraint(g.iter().copied().collect(), Relation::Le, g.sum());
            }
            add_box(&mut lp, n);
            if let Some((x, _)) = lp.solve(1e-12).optimal() {
                let alpha = DVector::from_iterator(n, x.iter().map(|b| b - 1.0));
                if sign * alpha[j] > 1e-9 {
                    return Some(Covector(alpha.normalize()));
                }
            }
        }
    }
    None
}

/// Outcome of [`separate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SeparationResult {
    pub separated: bool,
    /// `α` with `α(C₁) ≤ 0 ≤ α(C₂)` when separated.
    pub hyperplane: Option<Covector>,
    /// A point in the relative interior of both cones when not separated.
    pub witness: Option<DVector<f64>>,
}

/// Decides whether two cones with common vertex are separated.
///
/// Separated iff a hyperplane contains both cones, or their relative
/// interiors are disjoint. The first condition is a rank test; the second
/// is the infeasibility of `G₁λ = G₂μ` with `λ, μ ≥ 1` (relative interiors
/// of finitely generated cones are the strictly positive combinations).
/// The returned normal is a supporting hyperplane of `C₁ − C₂`.
pub fn separate(c1: &GeneratedCone, c2: &GeneratedCone) -> Result<SeparationResult> {
    check_dim(c1.n, c2.n)?;
    let n = c1.n;
    let mut all = c1.generators.clone();
    all.extend(c2.generators.iter().cloned());
    let complement = complement_basis(n, &all);
    if complement.ncols() > 0 {
        let alpha = complement.column(0).into_owned();
        return Ok(SeparationResult {
            separated: true,
            hyperplane: Some(Covector(alpha)),
            witness: None,
        });
    }

    if let Some(w) = common_relative_interior(n, &c1.generators, &c2.generators) {
        return Ok(SeparationResult {
            separated: false,
            hyperplane: None,
            witness: Some(w),
        });
    }

    let diff = GeneratedCone::difference(c1, c2)?;
    match supporting_hyperplane(&diff) {
        Some(alpha) => Ok(SeparationResult {
            separated: true,
            hyperplane: Some(alpha),
            witness: None,
        }),
        None => Err(Error::Inconsistent(
            "relative interiors are disjoint but C1 - C2 spans the space".into(),
        )),
    }
}

fn common_relative_interior(
    n: usize,
    g1: &[DVector<f64>],
    g2: &[DVector<f64>],
) -> Option<DVector<f64>> {
    let (n1, n2) = (g1.len(), g2.len());
    // λ = 1 + λ', μ = 1 + μ'
    let mut lp = LinearProgram::new(n1 + n2);
    for row in 0..n {
        let mut coeffs = Vec::with_capacity(n1 + n2);
        coeffs.extend(g1.iter().map(|g| g[row]));
        coeffs.extend(g2.iter().map(|g| -g[row]));
        let rhs = g2.iter().map(|g| g[row]).sum::<f64>() - g1.iter().map(|g| g[row]).sum::<f64>();
        lp.constraint(coeffs, Relation::Eq, rhs);
    }
    let (x, _) = lp.solve(1e-10).optimal()?;
    let mut w = DVector::zeros(n);
    for (j, g) in g1.iter().enumerate() {
        w += g * (1.0 + x[j]);
    }
    if n1 == 0 {
        return Some(w);
    }
    Some(w.normalize())
}

/// Whether `C₁ − C₂ = E`. Decided from the absence of a supporting
/// hyperplane for `C₁ − C₂`, then cross-checked against [`separate`]: the
/// two cones fail to be separated exactly when their difference spans.
pub fn difference_spans(c1: &GeneratedCone, c2: &GeneratedCone) -> Result<bool> {
    let diff = GeneratedCone::difference(c1, c2)?;
    let spans = supporting_hyperplane(&diff).is_none();
    let sep = separate(c1, c2)?;
    if spans == sep.separated {
        return Err(Error::Inconsistent(format!(
            "difference spans = {spans} but separated = {}",
            sep.separated
        )));
    }
    Ok(spans)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(c)
    }

    fn quadrant() -> GeneratedCone {
        GeneratedCone::from_rows(2, &[&[1.0, 0.0], &[0.0, 1.0]]).unwrap()
    }

    fn plane() -> GeneratedCone {
        GeneratedCone::from_rows(
            2,
            &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0], &[0.0, -1.0]],
        )
        .unwrap()
    }

    #[test]
    fn membership_verdicts() {
        let c = quadrant();
        assert_eq!(conic_membership(&c, &v(&[1.0, 1.0]), 1e-9).unwrap(), MembershipVerdict::Interior);
        assert_eq!(conic_membership(&c, &v(&[1.0, 0.0]), 1e-9).unwrap(), MembershipVerdict::Boundary);
        assert_eq!(conic_membership(&c, &v(&[-1.0, 0.0]), 1e-9).unwrap(), MembershipVerdict::Outside);
        // relative interior of a ray
        let ray = GeneratedCone::from_rows(2, &[&[1.0, 0.0]]).unwrap();
        assert_eq!(conic_membership(&ray, &v(&[2.0, 0.0]), 1e-9).unwrap(), MembershipVerdict::Interior);
        assert_eq!(conic_membership(&ray, &v(&[0.0, 0.0]), 1e-9).unwrap(), MembershipVerdict::Boundary);
        assert!(conic_membership(&c, &v(&[1.0]), 1e-9).is_err());
        assert!(conic_membership(&c, &v(&[1.0, 1.0]), 0.0).is_err());
    }

    #[test]
    fn construction_normalizes() {
        let c = GeneratedCone::from_rows(2, &[&[2.0, 0.0], &[1.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert_eq!(c.generators().len(), 1);
        assert!(GeneratedCone::from_rows(2, &[&[1.0]]).is_err());
    }

    #[test]
    fn polar_examples() {
        let c = quadrant();
        assert!(polar_contains(&c, &Covector::from_slice(&[-1.0, -1.0])).unwrap());
        assert!(!polar_contains(&c, &Covector::from_slice(&[1.0, 0.0])).unwrap());
        assert!(polar_contains(&GeneratedCone::trivial(2), &Covector::from_slice(&[3.0, -7.0])).unwrap());
    }

    #[test]
    fn supporting_examples() {
        let alpha = supporting_hyperplane(&quadrant()).unwrap();
        for g in quadrant().generators() {
            assert!(alpha.pair(g) <= 0.0);
        }
        let expected = v(&[-1.0, -1.0]).normalize();
        assert!((alpha.coords() - expected).norm() < 1e-9);
        assert!(supporting_hyperplane(&plane()).is_none());
        let a = supporting_hyperplane(&GeneratedCone::trivial(3)).unwrap();
        assert!(!a.is_zero());
        // half-plane: contains a line, depth is zero
        let half = GeneratedCone::from_rows(2, &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let a = supporting_hyperplane(&half).unwrap();
        assert!(a.coords()[0].abs() < 1e-12 && a.coords()[1] < 0.0);
    }

    #[test]
    fn separation_examples() {
        let c1 = GeneratedCone::from_rows(2, &[&[1.0, 0.0]]).unwrap();
        let c2 = GeneratedCone::from_rows(2, &[&[0.0, 1.0]]).unwrap();
        let r = separate(&c1, &c2).unwrap();
        assert!(r.separated);
        let a = r.hyperplane.unwrap();
        assert!(a.pair(&v(&[1.0, 0.0])) <= 1e-12);
        assert!(a.pair(&v(&[0.0, 1.0])) >= -1e-12);

        let r = separate(&plane(), &c1).unwrap();
        assert!(!r.separated);
        let w = r.witness.unwrap();
        assert!(w[0] > 0.0 && w[1].abs() < 1e-9);

        let r = separate(&c1, &c1).unwrap();
        assert!(r.separated);
        let a = r.hyperplane.unwrap();
        assert!(a.pair(&v(&[1.0, 0.0])).abs() < 1e-12);
    }

    #[test]
    fn difference_span_examples() {
        let c1 = GeneratedCone::from_rows(2, &[&[1.0, 0.0], &[-1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let c2 = GeneratedCone::from_rows(2, &[&[0.0, 1.0]]).unwrap();
        assert!(difference_spans(&c1, &c2).unwrap());
        let c2 = GeneratedCone::from_rows(2, &[&[-1.0, -1.0]]).unwrap();
        assert!(!difference_spans(&quadrant(), &c2).unwrap());
        assert!(!difference_spans(&GeneratedCone::trivial(2), &GeneratedCone::trivial(2)).unwrap());
    }
}
