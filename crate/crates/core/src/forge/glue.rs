//! Gluing a closed form to a multiple of the pulled-back volume form near M, and the
//! elimination of a closed form over a tube where it is exact.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exterior::MultiCovector;
use crate::fields::field::{FormField, MetricField};
use crate::fields::quadrature::integrate_form;
use crate::tubular::atlas::TubularAtlas;
use crate::tubular::homotopy::{homotopy_solve, pullback_volume_form};
use crate::tubular::profile::BumpProfile;

/// Phi = omega* + d((1 - rho(d)) psi) where s = int_M phi, omega* = (s / Vol) pi^* vol_M and
/// d psi = phi - omega* on the tube. Phi equals omega* for d <= 3 eps/5 and phi for
/// d >= 4 eps/5. Returns the glued form and s.
pub fn glue_form(phi: &FormField, atlas: &Arc<TubularAtlas>, g: &MetricField) -> Result<(FormField, f64)> {
    atlas.require_exact()?;
    if phi.chart() != atlas.chart().as_ref() || g.chart() != phi.chart() {
        return Err(Error::ChartMismatch);
    }
    let m = atlas.base().dim();
    if phi.degree() != m {
        return Err(Error::DimensionMismatch(format!("{}-form glued around a {m}-dimensional submanifold", phi.degree())));
    }
    let s = integrate_form(phi, atlas.base())?;
    if !(s > 0.0) {
        return Err(Error::NonPositivePeriod(s));
    }
    let omega = pullback_volume_form(atlas, s)?;
    let eta = FormField::combination(&[(1.0, phi.clone()), (-1.0, omega.clone())])?;
    let psi = homotopy_solve(&eta, atlas)?;
    let rho = BumpProfile::rho(atlas.epsilon());
    let atlas = atlas.clone();
    let phi = phi.clone();
    let n = atlas.chart().dim();
    let glued = FormField::from_fn(atlas.chart().clone(), m, move |x| {
        let Some(fp) = atlas.locate_within(x, rho.r2) else {
            return phi.raw_at(x);
        };
        let r = rho.value(fp.dist);
        let w = omega.at(x);
        if r == 1.0 {
            return w.into_coeffs();
        }
        let base = &(&w * r) + &(&phi.at(x) * (1.0 - r));
        let dd = MultiCovector::new(n, 1, atlas.dist_gradient(&fp)).expect("covector");
        let corr = dd.wedge(&psi.at(x)).expect("degrees fit");
        (&base - &(&corr * rho.derivative(fp.dist))).into_coeffs()
    })?;
    Ok((glued, s))
}

/// phi - d(rho~(d) theta) with d theta = phi on the other tube, so the result vanishes on
/// {d <= 4 eps/5} and equals phi beyond eps. Needs int phi = 0 over the other submanifold.
pub fn eliminate_on_tube(phi: &FormField, atlas_other: &Arc<TubularAtlas>) -> Result<FormField> {
    atlas_other.require_exact()?;
    if phi.chart() != atlas_other.chart().as_ref() {
        return Err(Error::ChartMismatch);
    }
    let k = phi.degree();
    if k == 0 {
        return Err(Error::Unsupported("elimination of a 0-form".into()));
    }
    let theta = homotopy_solve(phi, atlas_other)?;
    let rho = BumpProfile::rho_tilde(atlas_other.epsilon());
    let atlas = atlas_other.clone();
    let phi = phi.clone();
    let n = atlas.chart().dim();
    FormField::from_fn(atlas.chart().clone(), k, move |x| {
        let Some(fp) = atlas.locate_within(x, rho.r2) else {
            return phi.raw_at(x);
        };
        let r = rho.value(fp.dist);
        if r == 1.0 {
            return vec![0.0; phi.components()];
        }
        let base = &phi.at(x) * (1.0 - r);
        let dd = MultiCovector::new(n, 1, atlas.dist_gradient(&fp)).expect("covector");
        let corr = dd.wedge(&theta.at(x)).expect("degrees fit");
        (&base - &(&corr * rho.derivative(fp.dist))).into_coeffs()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chart::Chart;
    use crate::fields::deriv::d_exterior;
    use crate::tubular::atlas::build_tubular;
    use crate::tubular::submanifold::Submanifold;

    fn dx(chart: &Arc<Chart>, axis: usize) -> FormField {
        let n = chart.dim();
        FormField::constant(chart.clone(), &MultiCovector::basis(n, &[axis]).unwrap()).unwrap()
    }

    #[test]
    fn straight_circle_glue_is_identity() {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        let atlas = build_tubular(&m, &g, 0.1).unwrap();
        let (phi, s) = glue_form(&dx(&chart, 0), &atlas, &g).unwrap();
        assert!((s - 1.0).abs() < 1e-14);
        for i in 0..chart.num_nodes() {
            let v = phi.at_node(i);
            assert!((v.coeffs()[0] - 1.0).abs() < 1e-12 && v.coeffs()[1].abs() < 1e-12);
        }
    }

    #[test]
    fn wiggly_glue_is_closed_with_the_right_period() {
        let chart = Arc::new(Chart::unit_torus(2, 64).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
        let atlas = build_tubular(&m, &g, 0.08).unwrap();
        let (phi, s) = glue_form(&dx(&chart, 0), &atlas, &g).unwrap();
        assert!((s - 1.0).abs() < 1e-10);
        assert!(d_exterior(&phi).unwrap().sup_abs() < 1e-6);
        assert!((integrate_form(&phi, &m).unwrap() - 1.0).abs() < 1e-8);
        // equal to omega* along M, dx far away
        let far = phi.at(&[0.5, 0.1]);
        assert_eq!(far.coeffs(), &[1.0, 0.0]);
    }

    #[test]
    fn elimination_vanishes_on_the_other_tube() {
        let chart = Arc::new(Chart::unit_torus(3, 16).unwrap());
        let g = MetricField::flat(chart.clone());
        let cy = Submanifold::from_exprs("Cy", &["0.7", "t", "0.7"], 1, 64).unwrap();
        let atlas = build_tubular(&cy, &g, 0.2).unwrap();
        let out = eliminate_on_tube(&dx(&chart, 0), &atlas).unwrap();
        assert!(out.at(&[0.75, 0.1, 0.72]).is_zero());
        assert_eq!(out.at(&[0.2, 0.1, 0.2]).coeffs(), &[1.0, 0.0, 0.0]);
        assert!(d_exterior(&out).unwrap().sup_abs() < 1e-6);
        let wrong = eliminate_on_tube(&dx(&chart, 1), &atlas);
        assert!(matches!(wrong, Err(Error::ClassObstruction(_))));
    }
}
