//! Closed embedded submanifolds given by parametrisations of the unit parameter torus.
//!
//! A parametrisation maps R^m to R^n and is periodic up to lattice translations: on a
//! periodic chart c(u + e_a) - c(u) must be a lattice vector, on a box it must vanish.
//! Parameter grids are node-major with the last parameter running fastest.

use nalgebra::DMatrix;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{param_names, parse_with, Expr};
use crate::exterior::PointMetric;
use crate::fields::chart::Chart;

/// Smooth map from parameters to ambient coordinates with first and second derivatives.
pub trait Parametrization: Send + Sync {
    fn dim(&self) -> usize;
    fn ambient(&self) -> usize;
    fn point(&self, u: &[f64]) -> Vec<f64>;
    /// n x m Jacobian.
    fn jacobian(&self, u: &[f64]) -> DMatrix<f64>;
    /// For each ambient coordinate, the m x m Hessian in the parameters.
    fn hessian(&self, u: &[f64]) -> Vec<DMatrix<f64>>;
    fn describe(&self) -> String;
}

/// Parametrisation by symbolic coordinate expressions in `t1..tm`.
pub struct ExprParametrization {
    m: usize,
    coords: Vec<Expr>,
    first: Vec<Vec<Expr>>,
    second: Vec<Vec<Vec<Expr>>>,
    sources: Vec<String>,
}

impl ExprParametrization {
    pub fn new(coords: &[String], m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidSubmanifold("dimension must be positive".into()));
        }
        let names = param_names(m);
        let exprs: Vec<Expr> = coords.iter().map(|s| parse_with(s, &names)).collect::<Result<_>>()?;
        let first: Vec<Vec<Expr>> = exprs.iter().map(|e| (0..m).map(|a| e.diff(a)).collect()).collect();
        let second = first.iter().map(|row| row.iter().map(|e| (0..m).map(|b| e.diff(b)).collect()).collect()).collect();
        Ok(Self { m, coords: exprs, first, second, sources: coords.to_vec() })
    }
}

impl Parametrization for ExprParametrization {
    fn dim(&self) -> usize {
        self.m
    }

    fn ambient(&self) -> usize {
        self.coords.len()
    }

    fn point(&self, u: &[f64]) -> Vec<f64> {
        self.coords.iter().map(|e| e.eval(u)).collect()
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.coords.len(), self.m, |k, a| self.first[k][a].eval(u))
    }

    fn hessian(&self, u: &[f64]) -> Vec<DMatrix<f64>> {
        self.second.iter().map(|rows| DMatrix::from_fn(self.m, self.m, |a, b| rows[a][b].eval(u))).collect()
    }

    fn describe(&self) -> String {
        format!("({})", self.sources.join(", "))
    }
}

/// A closed oriented submanifold with its parameter quadrature resolution.
#[derive(Clone)]
pub struct Submanifold {
    name: String,
    param: Arc<dyn Parametrization>,
    orientation: f64,
    resolution: usize,
}

impl fmt::Debug for Submanifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Submanifold({}: {}, res={})", self.name, self.param.describe(), self.resolution)
    }
}

impl Submanifold {
    pub fn new(name: &str, param: Arc<dyn Parametrization>, resolution: usize) -> Result<Self> {
        if resolution < 8 {
            return Err(Error::InvalidSubmanifold(format!("parameter resolution {resolution} below 8")));
        }
        if param.dim() >= param.ambient() {
            return Err(Error::InvalidSubmanifold(format!("dimension {} not below ambient {}", param.dim(), param.ambient())));
        }
        Ok(Self { name: name.to_string(), param, orientation: 1.0, resolution })
    }

    /// Submanifold from coordinate expressions in `t1..tm` (or `t` when m = 1).
    pub fn from_exprs(name: &str, coords: &[&str], m: usize, resolution: usize) -> Result<Self> {
        let owned: Vec<String> = coords.iter().map(|s| s.to_string()).collect();
        Self::new(name, Arc::new(ExprParametrization::new(&owned, m)?), resolution)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.param.dim()
    }

    pub fn ambient(&self) -> usize {
        self.param.ambient()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn parametrization(&self) -> &Arc<dyn Parametrization> {
        &self.param
    }

    pub fn describe(&self) -> String {
        self.param.describe()
    }

    pub fn with_orientation(mut self, sign: f64) -> Self {
        self.orientation = if sign < 0.0 { -1.0 } else { 1.0 };
        self
    }

    pub fn with_resolution(mut self, resolution: usize) -> Self {
        self.resolution = resolution.max(8);
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        self.param.point(u)
    }

    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        self.param.jacobian(u)
    }

    pub fn hessian(&self, u: &[f64]) -> Vec<DMatrix<f64>> {
        self.param.hessian(u)
    }

    /// Parameter grid with `res` points per axis.
    pub fn param_grid_at(&self, res: usize) -> Vec<Vec<f64>> {
        let m = self.dim();
        let total = res.pow(m as u32);
        (0..total)
            .map(|mut t| {
                let mut u = vec![0.0; m];
                for a in (0..m).rev() {
                    u[a] = (t % res) as f64 / res as f64;
                    t /= res;
                }
                u
            })
            .collect()
    }

    pub fn param_grid(&self) -> Vec<Vec<f64>> {
        self.param_grid_at(self.resolution)
    }

    /// Riemannian m-volume element sqrt(det(J^T g J)) at a parameter.
    pub fn volume_element(&self, u: &[f64], g: &PointMetric) -> f64 {
        let j = self.jacobian(u);
        (j.transpose() * g.gram() * &j).determinant().max(0.0).sqrt()
    }

    /// Checks immersion, closure under the chart lattice, containment and embeddedness at
    /// grid scale.
    pub fn validate(&self, chart: &Chart) -> Result<()> {
        let n = chart.dim();
        let m = self.dim();
        if self.ambient() != n {
            return Err(Error::DimensionMismatch(format!("submanifold in R^{} on a chart of dimension {n}", self.ambient())));
        }
        let grid = self.param_grid();
        let mut points = Vec::with_capacity(grid.len());
        for u in &grid {
            let j = self.jacobian(u);
            let gram = j.transpose() * &j;
            let scale = gram.trace().max(f64::MIN_POSITIVE);
            if gram.determinant() <= 1e-12 * scale.powi(m as i32) {
                return Err(Error::InvalidSubmanifold(format!("{}: not an immersion at u = {u:?}", self.name)));
            }
            let p = self.point(u);
            if !chart.contains(&p) {
                return Err(Error::InvalidSubmanifold(format!("{}: leaves the box at u = {u:?}", self.name)));
            }
            points.push(p);
        }
        for u in grid.iter().step_by((grid.len() / 16).max(1)) {
            let p = self.point(u);
            for a in 0..m {
                let mut v = u.clone();
                v[a] += 1.0;
                let q = self.point(&v);
                let mut y: Vec<f64> = q.iter().zip(&p).map(|(x, y)| x - y).collect();
                chart.wrap_displacement(&mut y);
                if y.iter().any(|d| d.abs() > 1e-9) {
                    return Err(Error::InvalidSubmanifold(format!(
                        "{}: not closed along parameter {} (offset {y:?})",
                        self.name,
                        a + 1
                    )));
                }
            }
        }
        self.check_embedded(chart, &grid, &points)
    }

    fn check_embedded(&self, chart: &Chart, grid: &[Vec<f64>], points: &[Vec<f64>]) -> Result<()> {
        if points.len() > 4096 {
            return Ok(());
        }
        let res = self.resolution as f64;
        // Two parameter nodes far apart on the torus whose images nearly coincide
        let h = chart.h();
        let mut step_len = 0.0f64;
        for u in grid {
            let j = self.jacobian(u);
            for a in 0..self.dim() {
                step_len = step_len.max(j.column(a).norm() / res);
            }
        }
        let close = 0.25 * h.min(step_len);
        for i in 0..points.len() {
            for k in i + 1..points.len() {
                let pd: f64 = grid[i]
                    .iter()
                    .zip(&grid[k])
                    .map(|(a, b)| {
                        let d = (a - b).abs();
                        d.min(1.0 - d)
                    })
                    .fold(0.0, f64::max);
                if pd * res < 3.0 {
                    continue;
                }
                let mut y: Vec<f64> = points[i].iter().zip(&points[k]).map(|(a, b)| a - b).collect();
                chart.wrap_displacement(&mut y);
                if y.iter().map(|v| v * v).sum::<f64>().sqrt() < close {
                    return Err(Error::InvalidSubmanifold(format!(
                        "{}: self-intersection near u = {:?} and {:?}",
                        self.name, grid[i], grid[k]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wiggly_curve_is_valid_on_the_torus() {
        let chart = Chart::unit_torus(2, 32).unwrap();
        let m = Submanifold::from_exprs("M", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 128).unwrap();
        m.validate(&chart).unwrap();
        let j = m.jacobian(&[0.0]);
        assert!((j[(1, 0)] - 0.4 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn open_curve_is_rejected() {
        let chart = Chart::unit_torus(2, 32).unwrap();
        let m = Submanifold::from_exprs("M", &["0.5*t", "0.3"], 1, 64).unwrap();
        assert!(m.validate(&chart).is_err());
    }

    #[test]
    fn figure_eight_is_rejected() {
        let chart = Chart::boxed(vec![64, 64], vec![-1.0, -1.0], vec![2.0, 2.0], 0.1).unwrap();
        let m = Submanifold::from_exprs("M", &["0.5*sin(2*pi*t)", "0.5*sin(4*pi*t)"], 1, 64).unwrap();
        assert!(m.validate(&chart).is_err());
    }

    #[test]
    fn param_grid_is_node_major() {
        let m = Submanifold::from_exprs("T", &["t1", "t2", "0.25"], 2, 8).unwrap();
        let g = m.param_grid();
        assert_eq!(g.len(), 64);
        assert_eq!(g[1], vec![0.0, 0.125]);
    }
}
