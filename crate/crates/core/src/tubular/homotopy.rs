//! Forms built from the fiber projection: the pulled-back volume form of M and the fiberwise
//! homotopy primitive.
//!
//! The fiber retraction H_t(x) = pi(x) + t (x - pi(x)) contracts the tube onto M. For a closed
//! k-form eta on the tube, eta = d(K eta) + pi^*(eta|_M) with
//! K eta (x) = int_0^1 H_t^*(i_y eta) dt, evaluated by Gauss-Legendre quadrature. When k = m
//! the remaining term pi^*(eta|_M) is exact whenever int_M eta = 0, and its primitive is found
//! by solving a Poisson equation on the parameter torus.

use nalgebra::DMatrix;
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exterior::{multi_indices, row_minor, MultiCovector};
use crate::fields::field::FormField;
use crate::fields::quadrature::pullback_density;
use crate::fields::trig::TrigSeries;
use crate::tubular::atlas::TubularAtlas;

/// Gauss-Legendre nodes and weights on [0, 1].
pub fn gauss_legendre(q: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(q);
    for i in 0..q {
        let mut x = (PI * (i as f64 + 0.75) / (q as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=q {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = q as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

const QUADRATURE_POINTS: usize = 16;

/// The form omega* = (s / Vol(M)) pi^* vol_M on the tube, zero outside.
pub fn pullback_volume_form(atlas: &Arc<TubularAtlas>, s: f64) -> Result<FormField> {
    atlas.require_exact()?;
    if !(s > 0.0) {
        return Err(Error::NonPositivePeriod(s));
    }
    let atlas = atlas.clone();
    let n = atlas.chart().dim();
    let m = atlas.base().dim();
    let scale = s / atlas.volume() * atlas.base().orientation();
    let indices = multi_indices(n, m);
    FormField::from_fn(atlas.chart().clone(), m, move |x| {
        let Some(fp) = atlas.locate_within(x, atlas.epsilon()) else {
            return vec![0.0; indices.len()];
        };
        let du = atlas.param_derivative(&fp);
        let vol = atlas.base().volume_element(&fp.param, atlas.metric());
        let dut = du.transpose();
        indices.iter().map(|idx| scale * vol * row_minor(&dut, idx)).collect()
    })
}

/// Primitive of the restriction of a top-degree form to M, on the parameter torus.
struct TorusPotential {
    m: usize,
    chi: TrigSeries,
}

impl TorusPotential {
    /// Solves Laplace(chi) = f on the unit m-torus from samples on the node-major grid.
    fn solve(f: &[f64], m: usize, res: usize) -> Self {
        let chi = TrigSeries::from_samples_with(f, m, res, |k, c| {
            let k2: f64 = k.iter().map(|v| v * v).sum();
            (k2 > 0.0).then(|| -c / (4.0 * PI * PI * k2))
        });
        Self { m, chi }
    }

    /// beta = sum_a (-1)^a d_a chi du^{[m] \ a}, an (m-1)-form on R^m with d beta = f du.
    fn beta(&self, u: &[f64]) -> MultiCovector {
        let g = self.chi.gradient(u);
        let m = self.m;
        let idx = multi_indices(m, m - 1);
        let mut coeffs = vec![0.0; idx.len()];
        for (c, set) in coeffs.iter_mut().zip(&idx) {
            let missing = (0..m).find(|a| !set.contains(a)).unwrap_or(0);
            let sign = if missing % 2 == 0 { 1.0 } else { -1.0 };
            *c = sign * g[missing];
        }
        MultiCovector::new(m, m - 1, coeffs).expect("consistent sizes")
    }
}

/// A (k-1)-form psi with d psi = eta on the tube, for eta closed with int_M eta = 0 when
/// k = m. psi vanishes outside the tube.
pub fn homotopy_solve(eta: &FormField, atlas: &Arc<TubularAtlas>) -> Result<FormField> {
    atlas.require_exact()?;
    let chart = atlas.chart().clone();
    if eta.dim() != chart.dim() {
        return Err(Error::ChartMismatch);
    }
    let n = chart.dim();
    let k = eta.degree();
    let m = atlas.base().dim();
    if k == 0 {
        return Err(Error::Unsupported("a 0-form has no primitive".into()));
    }
    if k < m {
        return Err(Error::Unsupported(format!("primitive of a {k}-form around a {m}-dimensional submanifold")));
    }
    let potential = if k == m {
        let base = atlas.base();
        let res = match m {
            1 => base.resolution(),
            2 => base.resolution().min(64),
            _ => base.resolution().min(16),
        };
        let grid = base.param_grid_at(res);
        let f: Vec<f64> = grid.iter().map(|u| pullback_density(&eta.at(&base.point(u)), &base.jacobian(u))).collect();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let peak = f.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if mean.abs() > 1e-8 * peak.max(1.0) {
            return Err(Error::ClassObstruction(mean));
        }
        if peak < 1e-14 {
            None
        } else {
            let centred: Vec<f64> = f.iter().map(|v| v - mean).collect();
            Some(TorusPotential::solve(&centred, m, res))
        }
    } else {
        None
    };
    let atlas = atlas.clone();
    let eta = eta.clone();
    let quad = gauss_legendre(QUADRATURE_POINTS);
    let ncomp = crate::exterior::binomial(n, k - 1);
    let eye = DMatrix::<f64>::identity(n, n);
    FormField::from_fn(chart, k - 1, move |x| {
        let Some(fp) = atlas.locate_within(x, atlas.epsilon()) else {
            return vec![0.0; ncomp];
        };
        let du = atlas.param_derivative(&fp);
        let dpi = atlas.base().jacobian(&fp.param) * &du;
        let mut acc = MultiCovector::zero(n, k - 1);
        for &(t, w) in &quad {
            let z: Vec<f64> = fp.base.iter().zip(&fp.offset).map(|(b, y)| b + t * y).collect();
            let contracted = eta.at(&z).contract(&fp.offset).expect("degree at least one");
            let p = &dpi * (1.0 - t) + &eye * t;
            acc = &acc + &(&contracted.pullback(&p).expect("square map") * w);
        }
        if let Some(pot) = &potential {
            let beta = pot.beta(&fp.param).pullback_rect(&du).expect("m - 1 below n");
            acc = &acc + &beta;
        }
        acc.into_coeffs()
    })
}

/// Pointwise pullback pi^* restricted to the horizontal directions: the value of a form at
/// the base point composed with the projection derivative.
pub fn pullback_along_fibers(phi: &MultiCovector, atlas: &TubularAtlas, x: &[f64]) -> Result<MultiCovector> {
    let fp = atlas.locate(x);
    phi.pullback(&atlas.proj_derivative(&fp))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chart::Chart;
    use crate::fields::deriv::d_exterior;
    use crate::fields::field::MetricField;
    use crate::fields::quadrature::integrate_form;
    use crate::tubular::atlas::build_tubular;
    use crate::tubular::submanifold::Submanifold;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let q = gauss_legendre(16);
        let s: f64 = q.iter().map(|(x, w)| w * x.powi(31)).sum();
        assert!((s - 1.0 / 32.0).abs() < 1e-15);
        assert!((q.iter().map(|p| p.1).sum::<f64>() - 1.0).abs() < 1e-15);
    }

    fn setup(res: usize, curve: &str, eps: f64) -> (Arc<Chart>, Arc<TubularAtlas>) {
        let chart = Arc::new(Chart::unit_torus(2, res).unwrap());
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("M", &["t", curve], 1, 256).unwrap();
        (chart, build_tubular(&m, &g, eps).unwrap())
    }

    #[test]
    fn straight_circle_volume_form_is_dx() {
        let (chart, atlas) = setup(32, "0.3", 0.1);
        let w = pullback_volume_form(&atlas, 2.0).unwrap();
        let v = w.at(&[0.41, 0.35]);
        assert!((v.coeffs()[0] - 2.0).abs() < 1e-13 && v.coeffs()[1].abs() < 1e-13);
        assert!(w.at(&[0.41, 0.7]).is_zero());
        assert!(pullback_volume_form(&atlas, 0.0).is_err());
        let _ = chart;
    }

    #[test]
    fn wiggly_volume_form_has_period_s() {
        let (_, atlas) = setup(64, "0.5 + 0.2*sin(2*pi*t)", 0.08);
        let w = pullback_volume_form(&atlas, 1.0).unwrap();
        assert!((integrate_form(&w, atlas.base()).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn primitive_of_dx_minus_omega_star() {
        let (chart, atlas) = setup(64, "0.5 + 0.2*sin(2*pi*t)", 0.08);
        let w = pullback_volume_form(&atlas, 1.0).unwrap();
        let dx = FormField::constant(chart.clone(), &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let eta = FormField::combination(&[(1.0, dx), (-1.0, w)]).unwrap();
        let psi = homotopy_solve(&eta, &atlas).unwrap();
        let dpsi = d_exterior(&psi).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..chart.num_nodes() {
            if atlas.dist().at_node(i) < 0.07 {
                let x = chart.node_coords(i);
                let r = &dpsi.at_node(i) - &eta.at(&x);
                worst = worst.max(r.max_abs());
            }
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn nonzero_period_is_an_obstruction() {
        let (chart, atlas) = setup(32, "0.3", 0.1);
        let dx = FormField::constant(chart, &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        assert!(matches!(homotopy_solve(&dx, &atlas), Err(Error::ClassObstruction(_))));
    }

    #[test]
    fn zero_form_has_zero_primitive() {
        let (chart, atlas) = setup(32, "0.3", 0.1);
        let z = FormField::zero(chart, 1).unwrap();
        let psi = homotopy_solve(&z, &atlas).unwrap();
        assert_eq!(psi.sup_abs(), 0.0);
    }
}
