//! Numerical calibrated geometry on structured charts.

// `!(x > 0.0)` rejects NaN on purpose; index loops mirror the tensor formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::type_complexity)]

pub mod cli;
pub mod comass;
pub mod error;
pub mod expr;
pub mod exterior;
pub mod fields;
pub mod forge;
pub mod tubular;
pub mod verify;

pub use error::{Error, Result};
