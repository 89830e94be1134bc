//! Fields on structured charts, exterior derivative, integration and field files.

pub mod chart;
pub mod deriv;
pub mod field;
pub mod io;
pub mod quadrature;
pub mod trig;

pub use chart::{Chart, Topology};
pub use deriv::d_exterior;
pub use field::{FormField, MetricField, ScalarField};
pub use io::{read_field, write_field, AnyField};
pub use quadrature::{integrate_form, period_matrix, solve_common_form, solve_dual_forms, volume};
pub use trig::TrigSeries;
