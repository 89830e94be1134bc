//! Submanifolds, tubular neighbourhoods, cutoff profiles and fiberwise primitives.

pub mod atlas;
pub mod fmm;
pub mod homotopy;
pub mod profile;
pub mod submanifold;

pub use atlas::{build_tubular, build_tubular_with, AtlasKind, FiberModel, FiberPoint, TubularAtlas};
pub use homotopy::{homotopy_solve, pullback_along_fibers, pullback_volume_form};
pub use profile::BumpProfile;
pub use submanifold::{ExprParametrization, Parametrization, Submanifold};
