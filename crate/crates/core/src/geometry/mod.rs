//! Convex-cone geometry.

pub mod cone;
pub mod covering;
pub(crate) mod lp;

pub use cone::{
    conic_membership, difference_spans, distance_l1, polar_contains, separate,
    supporting_hyperplane, Covector, GeneratedCone, MembershipVerdict, SeparationResult, Vector,
};
pub use covering::{covered_point_root, sphere_directions, CoveredRoot, CoveringOptions};
