pub mod csvio;
pub mod error;
pub mod flows;
pub mod geometry;
pub mod perturbations;
pub mod pmp;
pub mod reachable;
pub mod shooting;
pub mod signal;
pub mod system;
pub mod trajectory;

pub use error::{Error, Result};

/// The guide chapters under `book/src`, compiled as doc-tests.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/flows.md")]
    pub mod flows {}
    #[doc = include_str!("../../../book/src/cones.md")]
    pub mod cones {}
    #[doc = include_str!("../../../book/src/perturbations.md")]
    pub mod perturbations {}
    #[doc = include_str!("../../../book/src/pmp.md")]
    pub mod pmp {}
    #[doc = include_str!("../../../book/src/shooting.md")]
    pub mod shooting {}
    #[doc = include_str!("../../../book/src/reachable.md")]
    pub mod reachable {}
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
}
