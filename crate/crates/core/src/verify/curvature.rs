//! Mean curvature vectors of submanifolds and the conformal change law for them.
//!
//! Derivatives of the parametrisation are fourth-order differences at the parameter
//! spacing 1/N, so the discretisation error is measurable under refinement. Christoffel
//! symbols come from fourth-order differences of the metric. Mean curvature is the trace of
//! the second fundamental form (a circle of radius r has |H| = 1/r, a sphere 2/r).

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exterior::PointMetric;
use crate::fields::field::{MetricField, ScalarField};
use crate::fields::trig::TrigSeries;
use crate::tubular::submanifold::Submanifold;

/// A vector field along M sampled on its parameter grid, with trigonometric interpolation.
#[derive(Clone, Debug)]
pub struct NormalField {
    pub dim: usize,
    pub resolution: usize,
    pub params: Vec<Vec<f64>>,
    pub vectors: Vec<Vec<f64>>,
    series: Vec<TrigSeries>,
}

impl NormalField {
    pub fn new(dim: usize, resolution: usize, params: Vec<Vec<f64>>, vectors: Vec<Vec<f64>>) -> Self {
        let n = vectors.first().map_or(0, |v| v.len());
        let series = (0..n)
            .map(|k| {
                let comp: Vec<f64> = vectors.iter().map(|v| v[k]).collect();
                TrigSeries::from_samples(&comp, dim, resolution)
            })
            .collect();
        Self { dim, resolution, params, vectors, series }
    }

    /// Interpolated vector at an arbitrary parameter.
    pub fn at(&self, u: &[f64]) -> Vec<f64> {
        self.series.iter().map(|s| s.value(u)).collect()
    }

    /// Pointwise combination a * self + b * other on the same grid.
    pub fn combine(&self, a: f64, other: &NormalField, b: f64) -> Result<NormalField> {
        if other.params.len() != self.params.len() {
            return Err(Error::DimensionMismatch("normal fields on different grids".into()));
        }
        let vectors =
            self.vectors.iter().zip(&other.vectors).map(|(p, q)| p.iter().zip(q).map(|(x, y)| a * x + b * y).collect()).collect();
        Ok(NormalField::new(self.dim, self.resolution, self.params.clone(), vectors))
    }

    /// Largest G-norm over the grid, with G evaluated at the points of M.
    pub fn sup_norm(&self, m: &Submanifold, g: &MetricField) -> f64 {
        self.params.iter().zip(&self.vectors).map(|(u, v)| g.at(&m.point(u)).norm(v)).fold(0.0, f64::max)
    }
}

const D1: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// Fourth-order first derivative of a vector function along direction `axis`.
fn diff4(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], axis: usize, h: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut y = x.to_vec();
    for (s, w) in D1 {
        y[axis] = x[axis] + s * h;
        let v = f(&y);
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi / h;
        }
    }
    out
}

/// Fourth-order second derivative along one axis.
fn diff4_second(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], axis: usize, h: f64) -> Vec<f64> {
    const W: [(f64, f64); 5] = [(-2.0, -1.0), (-1.0, 16.0), (0.0, -30.0), (1.0, 16.0), (2.0, -1.0)];
    let mut out: Vec<f64> = Vec::new();
    let mut y = x.to_vec();
    for (s, w) in W {
        y[axis] = x[axis] + s * h;
        let v = f(&y);
        if out.is_empty() {
            out = vec![0.0; v.len()];
        }
        for (o, vi) in out.iter_mut().zip(v) {
            *o += w * vi / (12.0 * h * h);
        }
    }
    out
}

/// Step for differentiating a metric or scalar field: small for exact evaluators, the grid
/// spacing for sampled fields.
fn field_step(has_source: bool, h: f64) -> f64 {
    if has_source {
        1e-3f64.min(h)
    } else {
        h
    }
}

/// Christoffel symbols Gamma^k_ij at x, indexed [k][i][j].
pub fn christoffel(g: &MetricField, x: &[f64]) -> Vec<DMatrix<f64>> {
    let n = g.dim();
    let delta = field_step(g.has_source(), g.chart().h());
    let ginv = g.at(x).inverse();
    if g.as_constant().is_some() {
        return vec![DMatrix::zeros(n, n); n];
    }
    let raw = |y: &[f64]| g.raw_at(y);
    // dg[l] is the matrix of d_l g_ij
    let dg: Vec<DMatrix<f64>> = (0..n).map(|l| DMatrix::from_row_slice(n, n, &diff4(&raw, x, l, delta))).collect();
    (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |i, j| {
                0.5 * (0..n).map(|l| ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).sum::<f64>()
            })
        })
        .collect()
}

/// Mean curvature vector field of M under G on M's parameter grid.
pub fn mean_curvature(m: &Submanifold, g: &MetricField) -> Result<NormalField> {
    let res = m.resolution();
    let hu = 1.0 / res as f64;
    let dm = m.dim();
    let n = m.ambient();
    if n != g.dim() {
        return Err(Error::DimensionMismatch("submanifold and metric dimensions differ".into()));
    }
    let grid = m.param_grid();
    let point = |u: &[f64]| m.point(u);
    let vectors: Vec<Result<Vec<f64>>> = grid
        .par_iter()
        .map(|u| {
            let p = m.point(u);
            let cols: Vec<Vec<f64>> = (0..dm).map(|a| diff4(&point, u, a, hu)).collect();
            let j = DMatrix::from_fn(n, dm, |k, a| cols[a][k]);
            let gp = g.at(&p);
            let gram = gp.gram();
            let gm = j.transpose() * gram * &j;
            let gm_inv = gm
                .clone()
                .try_inverse()
                .filter(|_| gm.determinant() > 1e-14 * gm.trace().powi(dm as i32))
                .ok_or_else(|| Error::InvalidSubmanifold(format!("{}: rank-deficient Jacobian at {u:?}", m.name())))?;
            let gamma = christoffel(g, &p);
            let mut hvec = DVector::zeros(n);
            for a in 0..dm {
                for b in 0..dm {
                    let w = gm_inv[(a, b)];
                    if w == 0.0 {
                        continue;
                    }
                    let second = if a == b {
                        diff4_second(&point, u, a, hu)
                    } else {
                        let da = |v: &[f64]| diff4(&point, v, a, hu);
                        diff4(&da, u, b, hu)
                    };
                    for k in 0..n {
                        let mut v = second[k];
                        for i in 0..n {
                            for l in 0..n {
                                v += gamma[k][(i, l)] * cols[a][i] * cols[b][l];
                            }
                        }
                        hvec[k] += w * v;
                    }
                }
            }
            let tangential = &j * (&gm_inv * (j.transpose() * gram * &hvec));
            Ok((hvec - tangential).iter().cloned().collect())
        })
        .collect();
    let vectors = vectors.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(NormalField::new(dm, res, grid, vectors))
}

/// Residual of f H~ = H - (m / 2f) grad_perp f along M, with H~ the mean curvature under f G.
pub fn check_conformal_mc(m: &Submanifold, g: &MetricField, f: &ScalarField) -> Result<f64> {
    let h = mean_curvature(m, g)?;
    let ht = mean_curvature(m, &g.conformal(f)?)?;
    let dm = m.dim() as f64;
    let delta = field_step(f.has_source(), f.chart().h());
    let fval = |y: &[f64]| vec![f.at(y)];
    let mut worst: f64 = 0.0;
    for ((u, hv), htv) in h.params.iter().zip(&h.vectors).zip(&ht.vectors) {
        let p = m.point(u);
        let gp: PointMetric = g.at(&p);
        let fp = f.at(&p);
        if !(fp > 0.0) {
            return Err(Error::InvalidMetric(format!("conformal factor {fp} is not positive on M")));
        }
        let n = p.len();
        let df: Vec<f64> = (0..n).map(|a| diff4(&fval, &p, a, delta)[0]).collect();
        let grad = gp.inverse() * DVector::from_column_slice(&df);
        let j = m.jacobian(u);
        let gm = j.transpose() * gp.gram() * &j;
        let gm_inv = gm.try_inverse().unwrap_or_else(|| DMatrix::zeros(j.ncols(), j.ncols()));
        let perp = &grad - &j * (gm_inv * (j.transpose() * gp.gram() * &grad));
        let r: Vec<f64> = (0..n).map(|k| fp * htv[k] - hv[k] + dm / (2.0 * fp) * perp[k]).collect();
        worst = worst.max(gp.norm(&r));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::chart::Chart;
    use std::sync::Arc;

    fn box_chart(n: usize, res: usize) -> Arc<Chart> {
        Arc::new(Chart::boxed(vec![res; n], vec![-0.5; n], vec![1.0; n], 0.1).unwrap())
    }

    #[test]
    fn circle_curvature() {
        let g = MetricField::flat(box_chart(2, 32));
        let m = Submanifold::from_exprs("C", &["0.2*cos(2*pi*t)", "0.2*sin(2*pi*t)"], 1, 256).unwrap();
        let h = mean_curvature(&m, &g).unwrap();
        for (u, v) in h.params.iter().zip(&h.vectors) {
            let nrm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            assert!((nrm - 5.0).abs() < 5e-3);
            // points to the centre
            let p = m.point(u);
            assert!(p[0] * v[0] + p[1] * v[1] < 0.0);
        }
    }

    #[test]
    fn sphere_patch_curvature() {
        // a latitude band of the sphere of radius 0.3; curvature is computed pointwise so the
        // band need not close up
        let g = MetricField::flat(box_chart(3, 32));
        let m = Submanifold::from_exprs(
            "S",
            &["0.3*cos(2*pi*t1)*cos(0.8*pi*(t2 - 0.5))", "0.3*sin(2*pi*t1)*cos(0.8*pi*(t2 - 0.5))", "0.3*sin(0.8*pi*(t2 - 0.5))"],
            2,
            64,
        )
        .unwrap();
        let h = mean_curvature(&m, &g).unwrap();
        for v in &h.vectors {
            let nrm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((nrm - 2.0 / 0.3).abs() < 0.01 * 2.0 / 0.3, "{nrm}");
        }
    }

    #[test]
    fn constant_conformal_factor() {
        let chart = box_chart(2, 32);
        let g = MetricField::flat(chart.clone());
        let m = Submanifold::from_exprs("C", &["0.2*cos(2*pi*t)", "0.2*sin(2*pi*t)"], 1, 128).unwrap();
        let f = ScalarField::from_fn(chart, |_| 2.5);
        assert!(check_conformal_mc(&m, &g, &f).unwrap() < 1e-6);
    }

    #[test]
    fn straight_circle_is_minimal() {
        let g = MetricField::flat(Arc::new(Chart::unit_torus(2, 16).unwrap()));
        let m = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        assert!(mean_curvature(&m, &g).unwrap().sup_norm(&m, &g) < 1e-6);
    }
}
