//! Tubular neighbourhoods: distance to a submanifold, fiber projection and the
//! fiber/horizontal splitting.
//!
//! For a constant reference metric the nearest point is found exactly by Newton's method on
//! the parametrisation, seeded from a coarse parameter grid and, off the grid, from the
//! nearest node. Derivatives of the projection come from the implicit function theorem.
//! Non-constant metrics fall back to fast marching, which yields node fields only.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exterior::PointMetric;
use crate::fields::chart::Chart;
use crate::fields::field::{MetricField, ScalarField};
use crate::fields::quadrature::volume;
use crate::tubular::submanifold::Submanifold;

/// How fibers meet the base: orthogonally, or (for curves in the plane) at a fixed angle to
/// the tangent.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum FiberModel {
    Orthogonal,
    Sheared { angle: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AtlasKind {
    /// Exact nearest-point projection for a constant metric.
    Exact,
    /// Node-level distance and projection from fast marching.
    Marching,
}

/// Coordinates of a point relative to the tube.
#[derive(Clone, Debug)]
pub struct FiberPoint {
    /// Parameter of the fiber projection, reduced to [0, 1)^m.
    pub param: Vec<f64>,
    /// Lattice image of c(param) nearest to the point.
    pub base: Vec<f64>,
    /// Fiber vector: point minus base.
    pub offset: Vec<f64>,
    /// Distance to the submanifold under the reference metric.
    pub dist: f64,
    /// Displacement from the nearest point (equals `offset` for orthogonal fibers).
    pub normal: Vec<f64>,
}

pub struct TubularAtlas {
    base: Submanifold,
    epsilon: f64,
    chart: Arc<Chart>,
    metric: PointMetric,
    kind: AtlasKind,
    fiber: FiberModel,
    dist: ScalarField,
    node_param: Vec<f64>,
    seeds: Vec<(Vec<f64>, Vec<f64>)>,
    seed_res: usize,
    volume: f64,
}

impl std::fmt::Debug for TubularAtlas {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "TubularAtlas({}, eps={}, {:?}, {:?})", self.base.name(), self.epsilon, self.kind, self.fiber)
    }
}

/// Builds the tubular atlas of radius epsilon around M with orthogonal fibers.
pub fn build_tubular(m: &Submanifold, g: &MetricField, epsilon: f64) -> Result<Arc<TubularAtlas>> {
    build_tubular_with(m, g, epsilon, FiberModel::Orthogonal)
}

pub fn build_tubular_with(m: &Submanifold, g: &MetricField, epsilon: f64, fiber: FiberModel) -> Result<Arc<TubularAtlas>> {
    let chart = g.chart_arc();
    m.validate(&chart)?;
    if !(epsilon > 0.0) {
        return Err(Error::EpsilonTooLarge(format!("epsilon {epsilon} must be positive")));
    }
    if let FiberModel::Sheared { angle } = fiber {
        if chart.dim() != 2 || m.dim() != 1 {
            return Err(Error::Unsupported("sheared fibers are implemented for curves in two dimensions".into()));
        }
        if !(angle > 0.0 && angle < std::f64::consts::PI) {
            return Err(Error::Config(format!("fiber angle {angle} outside (0, pi)")));
        }
    }
    if let Some(periods) = chart.periods() {
        let pmin = periods.iter().cloned().fold(f64::INFINITY, f64::min);
        if 2.0 * epsilon >= pmin {
            return Err(Error::EpsilonTooLarge(format!("epsilon {epsilon} reaches half the period {pmin}")));
        }
    }
    let vol = volume(m, g)?;
    let seed_res = match m.dim() {
        1 => m.resolution().clamp(64, 512),
        2 => 32,
        _ => 12,
    };
    let seeds: Vec<(Vec<f64>, Vec<f64>)> = m
        .param_grid_at(seed_res)
        .into_iter()
        .map(|u| {
            let p = m.point(&u);
            (u, p)
        })
        .collect();
    match g.as_constant() {
        Some(metric) => {
            let mut atlas = TubularAtlas {
                base: m.clone(),
                epsilon,
                chart: chart.clone(),
                metric: metric.clone(),
                kind: AtlasKind::Exact,
                fiber,
                dist: ScalarField::constant(chart.clone(), 0.0),
                node_param: Vec::new(),
                seeds,
                seed_res,
                volume: vol,
            };
            let results: Vec<Result<(Vec<f64>, f64)>> =
                (0..chart.num_nodes()).into_par_iter().map(|i| atlas.classify_node(&chart.node_coords(i))).collect();
            let mut dist = Vec::with_capacity(chart.num_nodes());
            let mut params = Vec::with_capacity(chart.num_nodes() * m.dim());
            for r in results {
                let (u, d) = r?;
                params.extend(u);
                dist.push(d);
            }
            atlas.dist = ScalarField::from_values(chart, dist)?;
            atlas.node_param = params;
            if let FiberModel::Sheared { .. } = fiber {
                atlas.check_sheared()?;
            }
            Ok(Arc::new(atlas))
        }
        None => crate::tubular::fmm::march(m, g, epsilon, seeds, seed_res, vol, fiber).map(Arc::new),
    }
}

/// Newton iteration for the nearest point of M to x under a constant metric, from u0.
/// Returns (reduced parameter, nearest lattice image of the base, fiber vector, squared
/// distance), or None when the iteration does not reach a stationary point.
pub(crate) fn newton_nearest(
    base: &Submanifold,
    chart: &Chart,
    metric: &PointMetric,
    x: &[f64],
    u0: &[f64],
) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
    let m = base.dim();
    let g = metric.gram();
    let wrapped = |p: &[f64]| {
        let mut y: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
        chart.wrap_displacement(&mut y);
        y
    };
    let mut u = u0.to_vec();
    let mut p = base.point(&u);
    let mut y = wrapped(&p);
    let mut f = metric.inner(&y, &y);
    let xscale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for _ in 0..60 {
        let j = base.jacobian(&u);
        let gy = g * DVector::from_column_slice(&y);
        let grad = j.transpose() * &gy;
        let jj = j.transpose() * g * &j;
        let mut a = jj.clone();
        for (k, h) in base.hessian(&u).iter().enumerate() {
            a -= h * gy[k];
        }
        let step = match a.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => &grad / jj.trace().max(1e-300),
        };
        // steps far below the distance are in the quadratic regime, where roundoff in f
        // would defeat the descent test
        let tiny = (&j * &step).amax() < 1e-6 * f.sqrt();
        // absolute roundoff of f from cancellation in y = x - c(u)
        let slack = 8.0 * f64::EPSILON * xscale * g.amax() * (f.sqrt() + f64::EPSILON * xscale);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let un: Vec<f64> = (0..m).map(|a| u[a] + t * step[a]).collect();
            let pn = base.point(&un);
            let yn = wrapped(&pn);
            let fnew = metric.inner(&yn, &yn);
            if tiny || fnew <= f * (1.0 + 1e-14) + slack + 1e-300 {
                accepted = Some((un, pn, yn, fnew));
                break;
            }
            t *= 0.5;
        }
        let Some((un, pn, yn, fnew)) = accepted else { break };
        let moved = (0..m).map(|a| (un[a] - u[a]).abs()).fold(0.0, f64::max);
        u = un;
        p = pn;
        y = yn;
        f = fnew;
        if moved < 1e-14 {
            break;
        }
    }
    let j = base.jacobian(&u);
    let gy = g * DVector::from_column_slice(&y);
    let grad = j.transpose() * &gy;
    let scale = (j.transpose() * g * &j).trace().sqrt() * (f.sqrt() + 1e-7);
    if grad.amax() > 1e-8 * scale {
        return None;
    }
    let _ = p;
    let ured: Vec<f64> = u.iter().map(|v| v - v.floor()).collect();
    let b: Vec<f64> = x.iter().zip(&y).map(|(a, c)| a - c).collect();
    Some((ured, b, y, f))
}

impl TubularAtlas {
    pub(crate) fn from_parts(
        base: Submanifold,
        epsilon: f64,
        chart: Arc<Chart>,
        metric: PointMetric,
        dist: ScalarField,
        node_param: Vec<f64>,
        seeds: Vec<(Vec<f64>, Vec<f64>)>,
        seed_res: usize,
        volume: f64,
        fiber: FiberModel,
    ) -> Self {
        Self { base, epsilon, chart, metric, kind: AtlasKind::Marching, fiber, dist, node_param, seeds, seed_res, volume }
    }

    pub fn base(&self) -> &Submanifold {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    /// Reference metric (the node metric at the submanifold for marching atlases).
    pub fn metric(&self) -> &PointMetric {
        &self.metric
    }

    pub fn kind(&self) -> AtlasKind {
        self.kind
    }

    pub fn fiber_model(&self) -> FiberModel {
        self.fiber
    }

    /// Node samples of the distance to M.
    pub fn dist(&self) -> &ScalarField {
        &self.dist
    }

    /// Projection parameter of node i.
    pub fn node_param(&self, i: usize) -> &[f64] {
        let m = self.base.dim();
        &self.node_param[i * m..(i + 1) * m]
    }

    /// Volume of M under the reference metric.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub(crate) fn require_exact(&self) -> Result<()> {
        match self.kind {
            AtlasKind::Exact => Ok(()),
            AtlasKind::Marching => {
                Err(Error::Unsupported("constructions need the exact atlas of a constant reference metric".into()))
            }
        }
    }

    fn wrapped(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
        self.chart.wrap_displacement(&mut y);
        y
    }

    fn norm2(&self, y: &[f64]) -> f64 {
        self.metric.inner(y, y)
    }

    fn newton(&self, x: &[f64], u0: &[f64]) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, f64)> {
        newton_nearest(&self.base, &self.chart, &self.metric, x, u0)
    }

    fn seed_distances(&self, x: &[f64]) -> Vec<f64> {
        self.seeds.iter().map(|(_, p)| self.norm2(&self.wrapped(x, p))).collect()
    }

    fn best_seed(d2: &[f64]) -> usize {
        let mut best = 0;
        for (i, v) in d2.iter().enumerate() {
            if *v < d2[best] {
                best = i;
            }
        }
        best
    }

    /// Global nearest point by seed search plus Newton.
    fn nearest_global(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, f64) {
        let d2 = self.seed_distances(x);
        let b = Self::best_seed(&d2);
        match self.newton(x, &self.seeds[b].0) {
            Some(r) if r.3 <= d2[b] * (1.0 + 1e-12) + 1e-300 => r,
            _ => {
                let (u, p) = &self.seeds[b];
                let y = self.wrapped(x, p);
                let base: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                (u.clone(), base, y, d2[b])
            }
        }
    }

    /// Seed-grid neighbours of seed index s (periodic in each parameter).
    fn seed_neighbours(&self, s: usize) -> Vec<usize> {
        let m = self.base.dim();
        let r = self.seed_res;
        let mut multi = vec![0usize; m];
        let mut t = s;
        for a in (0..m).rev() {
            multi[a] = t % r;
            t /= r;
        }
        let mut out = Vec::with_capacity(2 * m);
        for a in 0..m {
            for delta in [1, r - 1] {
                let mut q = multi.clone();
                q[a] = (q[a] + delta) % r;
                out.push(q.iter().fold(0, |acc, &v| acc * r + v));
            }
        }
        out
    }

    /// Distance and parameter of a chart node, with collision and focal checks inside the tube.
    fn classify_node(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let d2 = self.seed_distances(x);
        let b = Self::best_seed(&d2);
        let (u, base, y, f) = match self.newton(x, &self.seeds[b].0) {
            Some(r) if r.3 <= d2[b] * (1.0 + 1e-12) + 1e-300 => r,
            _ => {
                let (u, p) = &self.seeds[b];
                let y = self.wrapped(x, p);
                let base: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                (u.clone(), base, y, d2[b])
            }
        };
        let d = f.sqrt();
        let eps2 = self.epsilon * self.epsilon;
        if d < self.epsilon {
            // other lattice images of the same nearest point
            if let Some(periods) = self.chart.periods() {
                for (a, &p) in periods.iter().enumerate() {
                    for s in [-1.0, 1.0] {
                        let mut y2 = y.clone();
                        y2[a] += s * p;
                        if self.norm2(&y2) < eps2 {
                            return Err(self.collision(x));
                        }
                    }
                }
            }
            // other local minima of the distance along M
            for s in 0..self.seeds.len() {
                if d2[s] >= 4.0 * eps2 {
                    continue;
                }
                if self.seed_neighbours(s).iter().any(|&q| d2[q] < d2[s]) {
                    continue;
                }
                if let Some((u2, base2, _, f2)) = self.newton(x, &self.seeds[s].0) {
                    let same_base = base2.iter().zip(&base).all(|(p, q)| (p - q).abs() < 1e-7);
                    let same_param = u2.iter().zip(&u).all(|(p, q)| {
                        let dd = (p - q).abs();
                        dd.min(1.0 - dd) < 1e-7
                    });
                    if f2 < eps2 && !(same_base && same_param) {
                        return Err(self.collision(x));
                    }
                }
            }
            // focal check: the Hessian of the squared distance must stay positive
            let a = self.newton_hessian(&u, &y);
            if a.cholesky().is_none() {
                return Err(Error::EpsilonTooLarge(format!(
                    "{}: a focal point of the normal exponential map lies within epsilon = {} (at {x:?})",
                    self.base.name(),
                    self.epsilon
                )));
            }
        }
        let _ = base;
        Ok((u, d))
    }

    fn collision(&self, x: &[f64]) -> Error {
        Error::EpsilonTooLarge(format!("{}: fibers of the epsilon = {} tube collide near {x:?}", self.base.name(), self.epsilon))
    }

    /// J^T G J - sum_k (G y)_k Hess c_k.
    fn newton_hessian(&self, u: &[f64], y: &[f64]) -> DMatrix<f64> {
        let g = self.metric.gram();
        let j = self.base.jacobian(u);
        let gy = g * DVector::from_column_slice(y);
        let mut a = j.transpose() * g * &j;
        for (k, h) in self.base.hessian(u).iter().enumerate() {
            a -= h * gy[k];
        }
        a
    }

    /// Locates x when its distance to M is below `radius`; None otherwise. Points whose
    /// nearest node certifies the distance bound skip the Newton solve.
    pub fn locate_within(&self, x: &[f64], radius: f64) -> Option<FiberPoint> {
        if self.kind == AtlasKind::Exact {
            let node = self.chart.nearest_node(x);
            if self.dist.at_node(node) - self.node_gap(x, node) >= radius * (1.0 + 1e-12) {
                return None;
            }
        }
        let fp = self.locate(x);
        (fp.dist < radius).then_some(fp)
    }

    /// Locates an arbitrary point, seeding Newton from the nearest chart node.
    pub fn locate(&self, x: &[f64]) -> FiberPoint {
        let node = self.chart.nearest_node(x);
        let (u, base, y, f) = match self.kind {
            AtlasKind::Exact => {
                let seed = self.node_param(node).to_vec();
                match self.newton(x, &seed) {
                    Some(r) if r.3.sqrt() <= self.dist.at_node(node) + self.node_gap(x, node) + 1e-12 => r,
                    _ => self.nearest_global(x),
                }
            }
            AtlasKind::Marching => {
                let u = self.node_param(node).to_vec();
                let p = self.base.point(&u);
                let y = self.wrapped(x, &p);
                let base: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let d = self.dist.at(x);
                (u, base, y, d * d)
            }
        };
        let dist = f.max(0.0).sqrt();
        match self.fiber {
            FiberModel::Orthogonal => FiberPoint { param: u, base, offset: y.clone(), dist, normal: y },
            FiberModel::Sheared { angle } => {
                let (us, bs, ys) = self.sheared_coords(x, &u, &base, &y, angle);
                FiberPoint { param: us, base: bs, offset: ys, dist, normal: y }
            }
        }
    }

    fn node_gap(&self, x: &[f64], node: usize) -> f64 {
        let c = self.chart.node_coords(node);
        self.metric.norm(&self.wrapped(x, &c))
    }

    /// Distance to M at an arbitrary point.
    pub fn dist_at(&self, x: &[f64]) -> f64 {
        self.locate(x).dist
    }

    /// Unit fiber direction for sheared atlases (G-unit).
    fn shear_direction(&self, u: &[f64], angle: f64) -> Vec<f64> {
        let j = self.base.jacobian(u);
        let t = vec![j[(0, 0)], j[(1, 0)]];
        let g = &self.metric;
        let tn = g.norm(&t);
        let t: Vec<f64> = t.iter().map(|v| v / tn).collect();
        let w = g.gram() * DVector::from_column_slice(&t);
        let nrm = vec![-w[1], w[0]];
        let nn = g.norm(&nrm);
        (0..2).map(|a| angle.cos() * t[a] + angle.sin() * nrm[a] / nn).collect()
    }

    /// Solves x = c(u) + shift + r f(u) for the sheared fiber through x.
    fn sheared_coords(&self, x: &[f64], u0: &[f64], base0: &[f64], y0: &[f64], angle: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let p0 = self.base.point(u0);
        let shift: Vec<f64> = base0.iter().zip(&p0).map(|(a, b)| a - b).collect();
        let mut u = u0[0];
        let fd = self.shear_direction(&[u], angle);
        let mut r = self.metric.inner(y0, &fd) / angle.sin().powi(2).max(1e-300);
        r = r.clamp(-1e3, 1e3);
        for _ in 0..50 {
            let p = self.base.point(&[u]);
            let f = self.shear_direction(&[u], angle);
            let res: Vec<f64> = (0..2).map(|a| x[a] - shift[a] - p[a] - r * f[a]).collect();
            if res.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-15 {
                break;
            }
            let mat = self.sheared_system(u, r, angle);
            let Some(inv) = mat.try_inverse() else { break };
            let du = inv[(0, 0)] * res[0] + inv[(0, 1)] * res[1];
            let dr = inv[(1, 0)] * res[0] + inv[(1, 1)] * res[1];
            u += du;
            r += dr;
            if du.abs() < 1e-15 && dr.abs() < 1e-15 {
                break;
            }
        }
        let ured = u - u.floor();
        let pl = self.base.point(&[u]);
        let base: Vec<f64> = (0..2).map(|a| pl[a] + shift[a]).collect();
        let y: Vec<f64> = (0..2).map(|a| x[a] - base[a]).collect();
        (vec![ured], base, y)
    }

    /// The 2 x 2 matrix [J + r f', f] of the sheared fiber coordinates.
    fn sheared_system(&self, u: f64, r: f64, angle: f64) -> DMatrix<f64> {
        let j = self.base.jacobian(&[u]);
        let h = 1e-6;
        let fp = self.shear_direction(&[u + h], angle);
        let fm = self.shear_direction(&[u - h], angle);
        let f = self.shear_direction(&[u], angle);
        DMatrix::from_fn(2, 2, |a, b| if b == 0 { j[(a, 0)] + r * (fp[a] - fm[a]) / (2.0 * h) } else { f[a] })
    }

    fn check_sheared(&self) -> Result<()> {
        let FiberModel::Sheared { angle } = self.fiber else { return Ok(()) };
        for i in 0..self.chart.num_nodes() {
            if self.dist.at_node(i) >= self.epsilon {
                continue;
            }
            let fp = self.locate(&self.chart.node_coords(i));
            let f = self.shear_direction(&fp.param, angle);
            let r = self.metric.inner(&fp.offset, &f);
            if self.sheared_system(fp.param[0], r, angle).determinant().abs() < 1e-9 {
                return Err(Error::EpsilonTooLarge("sheared fibers degenerate inside the tube".into()));
            }
        }
        Ok(())
    }

    /// Derivative of the projection parameter at the point base + offset (m x n).
    pub fn param_derivative(&self, fp: &FiberPoint) -> DMatrix<f64> {
        self.param_derivative_at(&fp.param, &fp.offset)
    }

    /// Derivative of the projection parameter at c(u) + y for a fiber vector y.
    pub fn param_derivative_at(&self, u: &[f64], y: &[f64]) -> DMatrix<f64> {
        let n = self.chart.dim();
        let m = self.base.dim();
        match self.fiber {
            FiberModel::Orthogonal => {
                let g = self.metric.gram();
                let j = self.base.jacobian(u);
                let a = self.newton_hessian(u, y);
                let rhs = j.transpose() * g;
                match a.clone().lu().solve(&rhs) {
                    Some(du) => du,
                    None => DMatrix::zeros(m, n),
                }
            }
            FiberModel::Sheared { angle } => {
                let f = self.shear_direction(u, angle);
                let r = self.metric.inner(y, &f);
                let inv = self.sheared_system(u[0], r, angle).try_inverse().unwrap_or_else(|| DMatrix::zeros(2, 2));
                DMatrix::from_fn(1, 2, |_, b| inv[(0, b)])
            }
        }
    }

    /// Derivative of the projection map (n x n).
    pub fn proj_derivative(&self, fp: &FiberPoint) -> DMatrix<f64> {
        self.base.jacobian(&fp.param) * self.param_derivative(fp)
    }

    /// Differential of the distance function (a covector), valid away from M.
    pub fn dist_gradient(&self, fp: &FiberPoint) -> Vec<f64> {
        let gy = self.metric.gram() * DVector::from_column_slice(&fp.normal);
        let d = fp.dist.max(1e-300);
        gy.iter().map(|v| v / d).collect()
    }

    /// Fiber and horizontal projectors (F, H) at a point, with F + H = I, G-orthogonal.
    pub fn splitting(&self, fp: &FiberPoint) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.chart.dim();
        let g = self.metric.gram();
        let eye = DMatrix::identity(n, n);
        match self.fiber {
            FiberModel::Orthogonal => {
                let j = self.base.jacobian(&fp.param);
                let jj = j.transpose() * g * &j;
                let h = &j * jj.try_inverse().unwrap_or_else(|| DMatrix::zeros(j.ncols(), j.ncols())) * j.transpose() * g;
                (&eye - &h, h)
            }
            FiberModel::Sheared { angle } => {
                let f = DVector::from_column_slice(&self.shear_direction(&fp.param, angle));
                let ff = (f.transpose() * g * &f)[(0, 0)];
                let fm = &f * (f.transpose() * g) / ff;
                let h = &eye - &fm;
                (fm, h)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(res: usize) -> MetricField {
        MetricField::flat(Arc::new(Chart::unit_torus(2, res).unwrap()))
    }

    #[test]
    fn straight_circle_distance() {
        let g = torus(32);
        let m = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        let atlas = build_tubular(&m, &g, 0.1).unwrap();
        for i in 0..g.chart().num_nodes() {
            let x = g.chart().node_coords(i);
            let dy = (x[1] - 0.3 + 0.5).rem_euclid(1.0) - 0.5;
            assert!((atlas.dist().at_node(i) - dy.abs()).abs() < 1e-12);
        }
        let fp = atlas.locate(&[0.37, 0.35]);
        assert!((fp.param[0] - 0.37).abs() < 1e-12 && (fp.dist - 0.05).abs() < 1e-12);
    }

    #[test]
    fn locate_converges_just_off_the_manifold() {
        let g = torus(128);
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
        let atlas = build_tubular(&m, &g, 0.08).unwrap();
        for i in 0..2000 {
            let u = i as f64 / 2000.0;
            let p = m.point(&[u]);
            let j = m.jacobian(&[u]);
            let l = j[(0, 0)].hypot(j[(1, 0)]);
            let off = 1e-7 * ((i % 7) as f64 - 3.0);
            let x = [p[0] - off * j[(1, 0)] / l, p[1] + off * j[(0, 0)] / l];
            let fp = atlas.locate(&x);
            assert!((fp.dist - off.abs()).abs() < 1e-12, "u = {u}: {} vs {}", fp.dist, off.abs());
        }
    }

    #[test]
    fn oversized_tube_is_rejected() {
        let g = torus(32);
        let m = Submanifold::from_exprs("C", &["t", "0.3"], 1, 64).unwrap();
        assert!(matches!(build_tubular(&m, &g, 0.6), Err(Error::EpsilonTooLarge(_))));
    }

    #[test]
    fn focal_points_are_detected() {
        let g = torus(64);
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
        assert!(build_tubular(&m, &g, 0.08).is_ok());
        assert!(matches!(build_tubular(&m, &g, 0.2), Err(Error::EpsilonTooLarge(_))));
    }

    #[test]
    fn projection_derivative_matches_differences() {
        let g = torus(64);
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
        let atlas = build_tubular(&m, &g, 0.08).unwrap();
        let x = [0.31, 0.62];
        let fp = atlas.locate(&x);
        let du = atlas.param_derivative(&fp);
        for a in 0..2 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[a] += h;
            xm[a] -= h;
            let fd = (atlas.locate(&xp).param[0] - atlas.locate(&xm).param[0]) / (2.0 * h);
            assert!((du[(0, a)] - fd).abs() < 1e-6, "{} {}", du[(0, a)], fd);
        }
    }

    #[test]
    fn splitting_projectors_are_complementary() {
        let g = torus(32);
        let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.1*sin(2*pi*t)"], 1, 128).unwrap();
        let atlas = build_tubular(&m, &g, 0.1).unwrap();
        let fp = atlas.locate(&[0.2, 0.55]);
        let (f, h) = atlas.splitting(&fp);
        assert!((&f * &f - &f).amax() < 1e-12);
        assert!((&f + &h - DMatrix::identity(2, 2)).amax() < 1e-15);
        assert!((f.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sheared_fibers_follow_the_angle() {
        let g = torus(32);
        let m = Submanifold::from_exprs("C", &["t", "0.5"], 1, 64).unwrap();
        let angle = std::f64::consts::PI / 3.0;
        let atlas = build_tubular_with(&m, &g, 0.1, FiberModel::Sheared { angle }).unwrap();
        let fp = atlas.locate(&[0.4, 0.55]);
        let expect = 0.4 - 0.05 / angle.tan();
        assert!((fp.param[0] - expect).abs() < 1e-12, "{}", fp.param[0]);
    }
}
