//! Constructions of calibration pairs: form gluing, the horizontal and conformal metric
//! changes, several calibrations sharing one metric, multi-level elimination and prescribed
//! mean curvature.
//!
//! All constructions need the exact atlas of a constant reference metric.

pub mod glue;
pub mod metric;
pub mod multi;
pub mod prescribe;

use serde::Serialize;
use std::fmt;
use std::sync::Arc;

use crate::comass::{comass_field, comass_point, OptimizerBudget};
use crate::error::Result;
use crate::fields::field::{FormField, MetricField, ScalarField};
use crate::fields::quadrature::pullback_density;
use crate::tubular::atlas::TubularAtlas;
use crate::tubular::submanifold::Submanifold;

pub use glue::{eliminate_on_tube, glue_form};
pub use metric::{alpha_from_sup, conformal_change, horizontal_change, select_alpha, AlphaSelection};
pub use multi::{multi_calibration, multi_level_calibration, MultiCalibration};
pub use prescribe::{prescribe_mean_curvature, NormalTarget};

/// Default gap kept below 1 by the alpha selection.
pub const DEFAULT_MARGIN: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Construction {
    GlueForm,
    Horizontal,
    Conformal,
    Multi,
    MultiLevel,
}

/// Parameters a construction used, echoed into reports.
#[derive(Clone, Debug, Serialize)]
pub struct PairParams {
    pub epsilon: f64,
    pub alpha: f64,
    pub margin: f64,
    /// Period of the glued form over the calibrated set, before normalisation.
    pub period: f64,
    /// Volume of the calibrated set under the reference metric.
    pub volume: f64,
    /// The input pair already calibrated the set and was returned unchanged.
    pub idempotent: bool,
}

/// A form and metric under which the listed submanifolds are calibrated.
#[derive(Clone)]
pub struct CalibrationPair {
    pub phi: FormField,
    pub ghat: MetricField,
    /// The metric the construction started from.
    pub reference: MetricField,
    pub calibrated: Vec<Submanifold>,
    /// Tubular atlases of the calibrated set, used to locate the equality locus.
    pub atlases: Vec<Arc<TubularAtlas>>,
    /// Every tube on which ghat may differ from the reference (a superset of `atlases`
    /// when several pairs share one metric).
    pub support: Vec<Arc<TubularAtlas>>,
    pub construction: Construction,
    pub params: PairParams,
    /// The factor c with ghat = c * reference, for conformal constructions.
    pub conformal_factor: Option<ScalarField>,
}

impl fmt::Debug for CalibrationPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.calibrated.iter().map(|m| m.name()).collect();
        write!(f, "CalibrationPair({:?}, {:?}, {:?})", self.construction, names, self.params)
    }
}

impl CalibrationPair {
    /// The same pair with the form multiplied by a constant.
    pub fn with_scaled_form(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.phi = self.phi.scaled(factor);
        out
    }
}

/// Whether (phi, g) already calibrates M: comass at most 1 everywhere and phi restricting to
/// the volume form of M.
pub(crate) fn already_calibrated(phi: &FormField, g: &MetricField, m: &Submanifold, budget: &OptimizerBudget) -> Result<bool> {
    const TOL: f64 = 1e-9;
    if g.as_constant().is_none() {
        return Ok(false);
    }
    let fc = comass_field(phi, g, budget)?;
    if fc.sup > 1.0 + TOL || !fc.flagged.is_empty() {
        return Ok(false);
    }
    for u in m.param_grid() {
        let p = m.point(&u);
        let gp = g.at(&p);
        let value = phi.at(&p);
        let density = m.orientation() * pullback_density(&value, &m.jacobian(&u));
        let vol = m.volume_element(&u, &gp);
        if (density - vol).abs() > TOL * vol.max(1.0) {
            return Ok(false);
        }
        if (comass_point(&value, &gp, budget)?.value - 1.0).abs() > TOL {
            return Ok(false);
        }
    }
    Ok(true)
}
