//! Conformal factors that prescribe the mean curvature of a submanifold.
//!
//! Under F G with F = 1 on M the mean curvature becomes H - (m/2) grad_perp F. Taking
//! F = 1 - (2/m) <xi - H, y>_G in the fiber coordinate y therefore turns H into xi. The factor
//! is blended back to 1 by the bump profile near the edge of the tube.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fields::field::{MetricField, ScalarField};
use crate::tubular::atlas::TubularAtlas;
use crate::tubular::profile::BumpProfile;
use crate::verify::curvature::{mean_curvature, NormalField};

/// The normal field the mean curvature should become.
#[derive(Clone, Debug)]
pub enum NormalTarget {
    /// Make M minimal.
    Zero,
    /// A constant multiple of the current mean curvature.
    MeanCurvature { scale: f64 },
    /// An arbitrary field along M; its tangential part is discarded.
    Field(NormalField),
}

/// Conformal factor F with F = 1 on M and outside the tube and mean curvature of M under F G
/// equal to the target. Fails with ShrinkEpsilon(min F) when F is not positive.
pub fn prescribe_mean_curvature(atlas: &Arc<TubularAtlas>, g: &MetricField, xi: &NormalTarget) -> Result<ScalarField> {
    atlas.require_exact()?;
    if g.chart() != atlas.chart().as_ref() {
        return Err(Error::ChartMismatch);
    }
    let m = atlas.base();
    let h = mean_curvature(m, g)?;
    let gp = atlas.metric().clone();
    let gram = gp.gram().clone();
    let diffs: Vec<Vec<f64>> = h
        .params
        .iter()
        .zip(&h.vectors)
        .map(|(u, hv)| match xi {
            NormalTarget::Zero => hv.iter().map(|x| -x).collect(),
            NormalTarget::MeanCurvature { scale } => hv.iter().map(|x| (scale - 1.0) * x).collect(),
            NormalTarget::Field(f) => {
                let j = m.jacobian(u);
                let v = DVector::from_vec(f.at(u));
                let gm: DMatrix<f64> = j.transpose() * &gram * &j;
                let tangential = match gm.try_inverse() {
                    Some(inv) => &j * (inv * (j.transpose() * &gram * &v)),
                    None => DVector::zeros(v.len()),
                };
                (v - tangential).iter().zip(hv).map(|(a, b)| a - b).collect()
            }
        })
        .collect();
    let chart = atlas.chart().clone();
    if diffs.iter().all(|v| v.iter().all(|&x| x == 0.0)) {
        return Ok(ScalarField::constant(chart, 1.0));
    }
    let v = NormalField::new(h.dim, h.resolution, h.params.clone(), diffs);
    let rho = BumpProfile::rho(atlas.epsilon());
    let scale = 2.0 / m.dim() as f64;
    let atlas = atlas.clone();
    let factor = ScalarField::from_fn(chart.clone(), move |x| {
        let Some(fp) = atlas.locate_within(x, rho.r2) else {
            return 1.0;
        };
        let r = rho.value(fp.dist);
        if r == 0.0 {
            return 1.0;
        }
        1.0 - r * scale * gp.inner(&v.at(&fp.param), &fp.offset)
    });
    let min = (0..chart.num_nodes()).map(|i| factor.at_node(i)).fold(f64::INFINITY, f64::min);
    if !(min > 0.0) {
        return Err(Error::ShrinkEpsilon(min));
    }
    Ok(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chart::Chart;
    use crate::tubular::atlas::build_tubular;
    use crate::tubular::submanifold::Submanifold;

    #[test]
    fn current_curvature_gives_unit_factor() {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.05*sin(2*pi*t)"], 1, 128).unwrap();
        let atlas = build_tubular(&m, &g, 0.05).unwrap();
        let f = prescribe_mean_curvature(&atlas, &g, &NormalTarget::MeanCurvature { scale: 1.0 }).unwrap();
        assert!((0..chart.num_nodes()).all(|i| f.at_node(i) == 1.0));
    }

    #[test]
    fn zero_target_makes_the_wiggly_circle_minimal() {
        let chart = Arc::new(Chart::unit_torus(2, 64).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 128).unwrap();
        let atlas = build_tubular(&m, &g, 0.05).unwrap();
        let f = prescribe_mean_curvature(&atlas, &g, &NormalTarget::Zero).unwrap();
        assert!(mean_curvature(&m, &g).unwrap().sup_norm(&m, &g) > 1.0);
        let gt = g.conformal(&f).unwrap();
        assert!(mean_curvature(&m, &gt).unwrap().sup_norm(&m, &gt) < 5e-3);
        assert_eq!(f.at(&[0.3, 0.05]), 1.0);
    }

    #[test]
    fn oversized_target_asks_to_shrink_epsilon() {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let g = MetricField::flat(chart);
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.1*sin(2*pi*t)"], 1, 128).unwrap();
        let atlas = build_tubular(&m, &g, 0.1).unwrap();
        let r = prescribe_mean_curvature(&atlas, &g, &NormalTarget::MeanCurvature { scale: 6.0 });
        assert!(matches!(r, Err(Error::ShrinkEpsilon(v)) if v <= 0.0));
    }
}
