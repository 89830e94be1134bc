//! Checks of constructed pairs: closedness, comass, volume-form restriction, competitor
//! sweeps, mean curvature and geodesics.

pub mod calibration;
pub mod curvature;
pub mod cycle;
pub mod geodesic;

pub use calibration::{verify_calibration, Criterion, Tolerances, VerificationReport};
pub use curvature::{check_conformal_mc, mean_curvature, NormalField};
pub use cycle::{competitor_sweep, mass, pairing, Cycle, SweepReport};
pub use geodesic::{geodesic_distance, geodesic_shoot, GeodesicPath};
