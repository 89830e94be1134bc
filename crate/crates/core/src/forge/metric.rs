//! The metric changes that turn a glued form into a calibration: choice of the constant
//! alpha, the horizontal change and the conformal change.

use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::Arc;

use crate::comass::{comass_field, comass_value, OptimizerBudget};
use crate::error::{Error, Result};
use crate::fields::field::{FormField, MetricField, ScalarField};
use crate::forge::glue::glue_form;
use crate::forge::{already_calibrated, CalibrationPair, Construction, PairParams};
use crate::tubular::atlas::TubularAtlas;
use crate::tubular::profile::BumpProfile;

/// The constant alpha = (sup / (1 - margin))^(2/m), so that comass under alpha g is at most
/// 1 - margin.
pub fn alpha_from_sup(sup: f64, margin: f64, m: usize) -> Result<f64> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::Config(format!("margin {margin} outside (0, 1)")));
    }
    if !sup.is_finite() || sup <= 0.0 {
        return Err(Error::ComassVanishes);
    }
    Ok((sup / (1.0 - margin)).powf(2.0 / m as f64))
}

/// Outcome of the alpha selection with its rechecks.
#[derive(Clone, Debug, Serialize)]
pub struct AlphaSelection {
    pub alpha: f64,
    /// Sup of the comass under the reference metric.
    pub sup: f64,
    /// Sup of the comass under alpha times the reference metric.
    pub recheck_sup: f64,
    /// Largest comass under alpha g on {d <= 3 eps/5}, when an atlas is given.
    pub inner_sup: Option<f64>,
}

/// Selects alpha from the field comass and verifies the bound under alpha g. With an atlas,
/// also reports the bound on the inner tube where the form is the scaled volume form.
pub fn select_alpha(
    phi: &FormField,
    g: &MetricField,
    margin: f64,
    atlas: Option<&TubularAtlas>,
    budget: &OptimizerBudget,
) -> Result<AlphaSelection> {
    let fc = comass_field(phi, g, budget)?;
    if let Some((i, flag)) = fc.flagged.first() {
        return Err(Error::Unsupported(format!("comass flagged at node {i}: {flag:?}")));
    }
    let m = phi.degree();
    let alpha = alpha_from_sup(fc.sup, margin, m)?;
    let scale = alpha.powf(-(m as f64) / 2.0);
    let recheck_sup = fc.sup * scale;
    if recheck_sup > 1.0 - margin + 1e-6 {
        return Err(Error::Unsupported(format!("alpha recheck failed: {recheck_sup}")));
    }
    let inner_sup = atlas.map(|a| {
        let r = 0.6 * a.epsilon();
        (0..a.chart().num_nodes()).filter(|&i| a.dist().at_node(i) <= r).map(|i| fc.values.at_node(i) * scale).fold(0.0, f64::max)
    });
    Ok(AlphaSelection { alpha, sup: fc.sup, recheck_sup, inner_sup })
}

fn reference_metric(atlas: &TubularAtlas, g: &MetricField) -> Result<()> {
    atlas.require_exact()?;
    match g.as_constant() {
        Some(c) if (c.gram() - atlas.metric().gram()).amax() <= 1e-14 * c.gram().amax() => Ok(()),
        _ => Err(Error::Unsupported("the metric must be the constant reference metric of the atlas".into())),
    }
}

fn idempotent_pair(
    atlas: &Arc<TubularAtlas>,
    g: &MetricField,
    phi: &FormField,
    construction: Construction,
    margin: f64,
) -> Result<CalibrationPair> {
    let volume = atlas.volume();
    Ok(CalibrationPair {
        phi: phi.clone(),
        ghat: g.clone(),
        reference: g.clone(),
        calibrated: vec![atlas.base().clone()],
        atlases: vec![atlas.clone()],
        support: vec![atlas.clone()],
        construction,
        params: PairParams { epsilon: atlas.epsilon(), alpha: 1.0, margin, period: volume, volume, idempotent: true },
        conformal_factor: None,
    })
}

/// The horizontal metric change around one tube, written over `outside`, which must equal
/// the atlas reference metric on the tube:
/// g~ = sigma^(1/m) ((s/V)^(2/m) + d^2) pi^* g_M + (1 - sigma)^(1/m) alpha g^h + alpha g^v,
/// returned as g~ / alpha. Equal to `outside` wherever sigma = 0.
pub(crate) fn horizontal_metric(atlas: &Arc<TubularAtlas>, outside: &MetricField, ratio: f64, alpha: f64) -> MetricField {
    let sigma = BumpProfile::sigma(atlas.epsilon());
    let atlas = atlas.clone();
    let outside = outside.clone();
    let m = atlas.base().dim() as f64;
    let g = atlas.metric().gram().clone();
    MetricField::from_fn(atlas.chart().clone(), move |x| {
        let Some(fp) = atlas.locate_within(x, sigma.r2) else {
            return outside.raw_at(x);
        };
        let s = sigma.value(fp.dist);
        if s == 0.0 {
            return outside.raw_at(x);
        }
        let dpi = atlas.proj_derivative(&fp);
        let (f, h) = atlas.splitting(&fp);
        let gm = dpi.transpose() * &g * &dpi;
        let gh = h.transpose() * &g * &h;
        let gv = f.transpose() * &g * &f;
        let blend: DMatrix<f64> = gm * (s.powf(1.0 / m) * (ratio.powf(2.0 / m) + fp.dist * fp.dist))
            + gh * ((1.0 - s).powf(1.0 / m) * alpha)
            + gv * alpha;
        let out = blend / alpha;
        let out = (&out + out.transpose()) * 0.5;
        out.transpose().iter().cloned().collect()
    })
}

/// Horizontal change: glue phi near M, pick alpha, and rebuild the metric along the
/// horizontal directions of the tube. Returns (alpha^(-m/2) Phi, g~ / alpha). An input pair
/// that already calibrates M is returned unchanged.
pub fn horizontal_change(
    atlas: &Arc<TubularAtlas>,
    g: &MetricField,
    phi: &FormField,
    margin: f64,
    budget: &OptimizerBudget,
) -> Result<CalibrationPair> {
    reference_metric(atlas, g)?;
    if already_calibrated(phi, g, atlas.base(), budget)? {
        return idempotent_pair(atlas, g, phi, Construction::Horizontal, margin);
    }
    let (glued, s) = glue_form(phi, atlas, g)?;
    let m = atlas.base().dim();
    let sel = select_alpha(&glued, g, margin, Some(atlas), budget)?;
    let ratio = s / atlas.volume();
    let ghat = horizontal_metric(atlas, g, ratio, sel.alpha);
    Ok(CalibrationPair {
        phi: glued.scaled(sel.alpha.powf(-(m as f64) / 2.0)),
        ghat,
        reference: g.clone(),
        calibrated: vec![atlas.base().clone()],
        atlases: vec![atlas.clone()],
        support: vec![atlas.clone()],
        construction: Construction::Horizontal,
        params: PairParams {
            epsilon: atlas.epsilon(),
            alpha: sel.alpha,
            margin,
            period: s,
            volume: atlas.volume(),
            idempotent: false,
        },
        conformal_factor: None,
    })
}

/// The conformal factor around one tube:
/// c = [sigma^(1/m) (1 + d^2) k^(2/m) + alpha (1 - sigma)^(1/m)] / alpha with k the comass of
/// the glued form under g; exactly 1 where sigma = 0.
pub(crate) fn conformal_factor(
    atlas: &Arc<TubularAtlas>,
    glued: &FormField,
    alpha: f64,
    budget: &OptimizerBudget,
) -> Result<ScalarField> {
    let sigma = BumpProfile::sigma(atlas.epsilon());
    let m = atlas.base().dim();
    let g = atlas.metric().clone();
    for u in atlas.base().param_grid() {
        let p = atlas.base().point(&u);
        if comass_value(&glued.at(&p), &g, budget)? <= 1e-12 {
            return Err(Error::ComassVanishes);
        }
    }
    let atlas = atlas.clone();
    let glued = glued.clone();
    let budget = budget.clone();
    let mf = m as f64;
    Ok(ScalarField::from_fn(atlas.chart().clone(), move |x| {
        let Some(fp) = atlas.locate_within(x, sigma.r2) else {
            return 1.0;
        };
        let s = sigma.value(fp.dist);
        if s == 0.0 {
            return 1.0;
        }
        let k = comass_value(&glued.at(x), &g, &budget).unwrap_or(0.0).max(1e-300);
        (s.powf(1.0 / mf) * (1.0 + fp.dist * fp.dist) * k.powf(2.0 / mf) + alpha * (1.0 - s).powf(1.0 / mf)) / alpha
    }))
}

/// Conformal change: glue phi near M, pick alpha, and rescale the metric on the inner tube
/// so the glued form has comass one along M. Returns (alpha^(-m/2) Phi, c g).
pub fn conformal_change(
    atlas: &Arc<TubularAtlas>,
    g: &MetricField,
    phi: &FormField,
    margin: f64,
    budget: &OptimizerBudget,
) -> Result<CalibrationPair> {
    reference_metric(atlas, g)?;
    if already_calibrated(phi, g, atlas.base(), budget)? {
        return idempotent_pair(atlas, g, phi, Construction::Conformal, margin);
    }
    let (glued, s) = glue_form(phi, atlas, g)?;
    let m = atlas.base().dim();
    let sel = select_alpha(&glued, g, margin, Some(atlas), budget)?;
    let factor = conformal_factor(atlas, &glued, sel.alpha, budget)?;
    let ghat = g.conformal(&factor)?;
    Ok(CalibrationPair {
        phi: glued.scaled(sel.alpha.powf(-(m as f64) / 2.0)),
        ghat,
        reference: g.clone(),
        calibrated: vec![atlas.base().clone()],
        atlases: vec![atlas.clone()],
        support: vec![atlas.clone()],
        construction: Construction::Conformal,
        params: PairParams {
            epsilon: atlas.epsilon(),
            alpha: sel.alpha,
            margin,
            period: s,
            volume: atlas.volume(),
            idempotent: false,
        },
        conformal_factor: Some(factor),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::MultiCovector;
    use crate::fields::chart::Chart;
    use crate::tubular::atlas::build_tubular;
    use crate::tubular::submanifold::Submanifold;

    #[test]
    fn alpha_formula() {
        assert!((alpha_from_sup(1.0, 0.1, 1).unwrap() - 1.0 / 0.81).abs() < 1e-12);
        assert!((alpha_from_sup(2.0, 0.1, 2).unwrap() - 2.0 / 0.9).abs() < 1e-12);
        assert!(alpha_from_sup(1.0, 1.5, 1).is_err());
    }

    #[test]
    fn straight_circle_is_returned_unchanged() {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        let atlas = build_tubular(&m, &g, 0.1).unwrap();
        let dx = FormField::constant(chart.clone(), &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let budget = OptimizerBudget::default();
        for pair in
            [horizontal_change(&atlas, &g, &dx, 0.1, &budget).unwrap(), conformal_change(&atlas, &g, &dx, 0.1, &budget).unwrap()]
        {
            assert!(pair.params.idempotent);
            assert_eq!(pair.ghat.at(&[0.2, 0.31]).gram(), g.at(&[0.2, 0.31]).gram());
            assert_eq!(pair.phi.at(&[0.2, 0.31]).coeffs(), &[1.0, 0.0]);
        }
    }

    #[test]
    fn wiggly_conformal_factor_is_local_and_positive() {
        let chart = Arc::new(Chart::unit_torus(2, 48).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 128).unwrap();
        let atlas = build_tubular(&m, &g, 0.08).unwrap();
        let dx = FormField::constant(chart.clone(), &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let pair = conformal_change(&atlas, &g, &dx, 0.1, &OptimizerBudget::default()).unwrap();
        let c = pair.conformal_factor.as_ref().unwrap();
        for i in 0..chart.num_nodes() {
            let v = c.at_node(i);
            assert!(v > 0.0);
            if atlas.dist().at_node(i) >= 0.08 {
                assert_eq!(v, 1.0);
            }
        }
    }
}
