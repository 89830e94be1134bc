//! Integrals over parametrised submanifolds and constant forms dual to a homology basis.
//!
//! Integrals use the trapezoid rule on the parameter torus, which is spectrally accurate for
//! smooth periodic integrands.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exterior::{binomial, multi_indices, row_minor, MultiCovector};
use crate::fields::chart::Chart;
use crate::fields::field::{FormField, MetricField};
use crate::tubular::submanifold::Submanifold;

fn check_ambient(chart: &Chart, m: &Submanifold) -> Result<()> {
    if chart.dim() != m.ambient() {
        return Err(Error::DimensionMismatch(format!(
            "{} lives in R^{}, chart has dimension {}",
            m.name(),
            m.ambient(),
            chart.dim()
        )));
    }
    Ok(())
}

/// Pullback phi(c(u))(d_1 c, ..., d_m c).
pub fn pullback_density(phi: &MultiCovector, jac: &DMatrix<f64>) -> f64 {
    let k = phi.degree();
    phi.coeffs().iter().zip(multi_indices(phi.dim(), k)).filter(|(c, _)| **c != 0.0).map(|(c, i)| c * row_minor(jac, &i)).sum()
}

/// Integral of a degree-m form over M with `res` parameter points per axis.
pub fn integrate_form_at(phi: &FormField, m: &Submanifold, res: usize) -> Result<f64> {
    check_ambient(phi.chart(), m)?;
    if phi.degree() != m.dim() {
        return Err(Error::DimensionMismatch(format!("degree-{} form integrated over a {}-manifold", phi.degree(), m.dim())));
    }
    let grid = m.param_grid_at(res);
    // collected before summing so the result does not depend on the thread count
    let terms: Vec<f64> = grid.par_iter().map(|u| pullback_density(&phi.at(&m.point(u)), &m.jacobian(u))).collect();
    let total: f64 = terms.iter().sum();
    Ok(m.orientation() * total / grid.len() as f64)
}

/// Integral of a degree-m form over M at its own parameter resolution.
pub fn integrate_form(phi: &FormField, m: &Submanifold) -> Result<f64> {
    integrate_form_at(phi, m, m.resolution())
}

/// Riemannian volume of M under G with `res` parameter points per axis.
pub fn volume_at(m: &Submanifold, g: &MetricField, res: usize) -> Result<f64> {
    check_ambient(g.chart(), m)?;
    let grid = m.param_grid_at(res);
    let terms: Vec<f64> = grid.par_iter().map(|u| m.volume_element(u, &g.at(&m.point(u)))).collect();
    let total: f64 = terms.iter().sum();
    Ok(total / grid.len() as f64)
}

pub fn volume(m: &Submanifold, g: &MetricField) -> Result<f64> {
    volume_at(m, g, m.resolution())
}

/// P_ij = integral over M_i of the j-th constant basis k-form dx^J (lexicographic J).
pub fn period_matrix(collection: &[Submanifold], n: usize) -> Result<DMatrix<f64>> {
    let k = collection.first().map(|m| m.dim()).ok_or_else(|| Error::SpanningHypothesis("empty collection".into()))?;
    if collection.iter().any(|m| m.dim() != k || m.ambient() != n) {
        return Err(Error::DimensionMismatch("collection mixes dimensions".into()));
    }
    let basis = multi_indices(n, k);
    let mut p = DMatrix::zeros(collection.len(), basis.len());
    for (i, m) in collection.iter().enumerate() {
        let grid = m.param_grid();
        for u in &grid {
            let j = m.jacobian(u);
            for (c, idx) in basis.iter().enumerate() {
                p[(i, c)] += row_minor(&j, idx);
            }
        }
        let scale = m.orientation() / grid.len() as f64;
        for c in 0..basis.len() {
            p[(i, c)] *= scale;
        }
    }
    Ok(p)
}

/// Minimum-norm coefficient vectors c_j with P c_j = rhs_j, or an error if P lacks full row rank.
fn solve_rows(p: &DMatrix<f64>, rhs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let ppt = p * p.transpose();
    let svd = ppt.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-10 * smax.max(1e-300)) {
        return Err(Error::SpanningHypothesis(format!(
            "period matrix is rank deficient (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    let chol = ppt.cholesky().ok_or_else(|| Error::SpanningHypothesis("period matrix is singular".into()))?;
    Ok(rhs.iter().map(|b| p.transpose() * chol.solve(b)).collect())
}

fn form_from(chart: &Arc<Chart>, k: usize, c: &DVector<f64>) -> Result<FormField> {
    let phi = MultiCovector::new(chart.dim(), k, c.iter().cloned().collect())?;
    FormField::constant(chart.clone(), &phi)
}

/// Constant closed forms phi_j with integral over M_i equal to delta_ij.
pub fn solve_dual_forms(collection: &[Submanifold], chart: &Arc<Chart>) -> Result<Vec<FormField>> {
    for m in collection {
        check_ambient(chart, m)?;
    }
    let p = period_matrix(collection, chart.dim())?;
    let s = collection.len();
    let k = collection[0].dim();
    if s > binomial(chart.dim(), k) {
        return Err(Error::SpanningHypothesis(format!("{s} classes but only C(n,k) constant forms")));
    }
    let rhs: Vec<DVector<f64>> = (0..s).map(|j| DVector::from_fn(s, |i, _| if i == j { 1.0 } else { 0.0 })).collect();
    let coeffs = solve_rows(&p, &rhs)?;
    let forms: Vec<FormField> = coeffs.iter().map(|c| form_from(chart, k, c)).collect::<Result<_>>()?;
    let check = &p * DMatrix::from_columns(&coeffs);
    let resid = (check - DMatrix::identity(s, s)).amax();
    if resid > 1e-10 {
        return Err(Error::SpanningHypothesis(format!("dual forms miss delta_ij by {resid:e}")));
    }
    Ok(forms)
}

/// A constant closed form with integral 1 over every member of the collection, which exists
/// when their classes lie on a common affine hyperplane (for instance homologous cycles).
pub fn solve_common_form(collection: &[Submanifold], chart: &Arc<Chart>) -> Result<FormField> {
    for m in collection {
        check_ambient(chart, m)?;
    }
    let p = period_matrix(collection, chart.dim())?;
    let k = collection[0].dim();
    let ones = DVector::from_element(collection.len(), 1.0);
    let svd = p.clone().svd(true, true);
    let c = svd.solve(&ones, 1e-10 * svd.singular_values.max()).map_err(|e| Error::SpanningHypothesis(e.to_string()))?;
    let resid = (&p * &c - &ones).amax();
    if resid > 1e-9 {
        return Err(Error::SpanningHypothesis(format!("no constant form has period 1 on every member (residual {resid:e})")));
    }
    form_from(chart, k, &c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus2() -> Arc<Chart> {
        Arc::new(Chart::unit_torus(2, 32).unwrap())
    }

    #[test]
    fn straight_circle_dual_is_dx() {
        let c = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        let f = solve_dual_forms(&[c], &torus2()).unwrap();
        assert!((f[0].at(&[0.1, 0.2]).coeffs()[0] - 1.0).abs() < 1e-14);
        assert!(f[0].at(&[0.1, 0.2]).coeffs()[1].abs() < 1e-14);
    }

    #[test]
    fn diagonal_circle_has_unit_period() {
        let c = Submanifold::from_exprs("D", &["t", "t"], 1, 64).unwrap();
        let f = solve_dual_forms(std::slice::from_ref(&c), &torus2()).unwrap();
        assert!((integrate_form(&f[0], &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn homologous_pair_fails_spanning() {
        let a = Submanifold::from_exprs("A", &["t", "0.2"], 1, 64).unwrap();
        let b = Submanifold::from_exprs("B", &["t", "0.6"], 1, 64).unwrap();
        assert!(matches!(solve_dual_forms(&[a.clone(), b.clone()], &torus2()), Err(Error::SpanningHypothesis(_))));
        let f = solve_common_form(&[a.clone(), b], &torus2()).unwrap();
        assert!((integrate_form(&f, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_length_of_wiggly_curve() {
        let chart = torus2();
        let c = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
        let g = MetricField::flat(chart);
        // arclength of y = 0.2 sin(2 pi x) over one period
        let reference = {
            let n = 200_000;
            (0..n)
                .map(|i| {
                    let x = (i as f64 + 0.5) / n as f64;
                    let d = 0.4 * std::f64::consts::PI * (2.0 * std::f64::consts::PI * x).cos();
                    (1.0 + d * d).sqrt() / n as f64
                })
                .sum::<f64>()
        };
        assert!((volume(&c, &g).unwrap() - reference).abs() < 1e-9);
    }
}
