//! Geodesics of metric fields: shooting with a fourth-order integrator and graph distances
//! between submanifolds.
//!
//! Distances come from Dijkstra on the grid graph with all 3^n - 1 neighbours and edge
//! lengths under the averaged endpoint metric. Sources and targets are seeded with the
//! frozen-metric distance to the submanifolds, and the optimal path is shortened by a
//! relaxation pass with its endpoints sliding on the submanifolds.

use nalgebra::DVector;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::fields::chart::Chart;
use crate::fields::field::MetricField;
use crate::tubular::atlas::newton_nearest;
use crate::tubular::submanifold::Submanifold;
use crate::verify::curvature::christoffel;

/// A sampled geodesic with its speed drift.
#[derive(Clone, Debug, Serialize)]
pub struct GeodesicPath {
    pub times: Vec<f64>,
    /// Unwrapped positions.
    pub points: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// max_t | |v(t)|_G - |v(0)|_G | / |v(0)|_G.
    pub speed_drift: f64,
}

/// Drift of the G-speed above which the step is rejected.
pub const MAX_DRIFT: f64 = 1e-4;

fn acceleration(g: &MetricField, x: &[f64], v: &[f64]) -> Vec<f64> {
    let gamma = christoffel(g, x);
    let vv = DVector::from_column_slice(v);
    gamma.iter().map(|gk| -(vv.transpose() * gk * &vv)[(0, 0)]).collect()
}

fn inside(chart: &Chart, x: &[f64]) -> bool {
    chart.is_periodic() || chart.contains(x)
}

/// Integrates the geodesic equation from (x0, v0) for `time` with classical RK4 steps.
pub fn geodesic_shoot(g: &MetricField, x0: &[f64], v0: &[f64], time: f64, step: f64) -> Result<GeodesicPath> {
    let n = g.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch("initial data and metric dimensions differ".into()));
    }
    if !(step > 0.0 && time >= 0.0) {
        return Err(Error::Config("geodesic step and time must be positive".into()));
    }
    let steps = (time / step).ceil().max(1.0) as usize;
    let dt = time / steps as f64;
    let speed0 = g.at(x0).norm(v0);
    let mut x = x0.to_vec();
    let mut v = v0.to_vec();
    let mut path = GeodesicPath { times: vec![0.0], points: vec![x.clone()], velocities: vec![v.clone()], speed_drift: 0.0 };
    let add = |a: &[f64], b: &[f64], s: f64| -> Vec<f64> { a.iter().zip(b).map(|(p, q)| p + s * q).collect() };
    for k in 1..=steps {
        let a1 = acceleration(g, &x, &v);
        let x2 = add(&x, &v, 0.5 * dt);
        let v2 = add(&v, &a1, 0.5 * dt);
        let a2 = acceleration(g, &x2, &v2);
        let x3 = add(&x, &v2, 0.5 * dt);
        let v3 = add(&v, &a2, 0.5 * dt);
        let a3 = acceleration(g, &x3, &v3);
        let x4 = add(&x, &v3, dt);
        let v4 = add(&v, &a3, dt);
        let a4 = acceleration(g, &x4, &v4);
        for i in 0..n {
            x[i] += dt / 6.0 * (v[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += dt / 6.0 * (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]);
        }
        if !inside(g.chart(), &x) {
            return Err(Error::Unsupported(format!("geodesic left the chart at t = {}", k as f64 * dt)));
        }
        let speed = g.at(&x).norm(&v);
        path.speed_drift = path.speed_drift.max((speed - speed0).abs() / speed0.max(1e-300));
        if path.speed_drift > MAX_DRIFT {
            return Err(Error::StepTooLarge(path.speed_drift));
        }
        path.times.push(k as f64 * dt);
        path.points.push(x.clone());
        path.velocities.push(v.clone());
    }
    Ok(path)
}

/// Frozen-metric distance from grid nodes near M to M: node index, distance, parameter.
fn near_nodes(m: &Submanifold, g: &MetricField, reach: usize) -> Vec<(usize, f64, Vec<f64>)> {
    let chart = g.chart();
    let n = chart.dim();
    let res = chart.resolution().to_vec();
    let mut best: std::collections::HashMap<usize, (f64, Vec<f64>)> = std::collections::HashMap::new();
    let params = m.param_grid();
    for u in &params {
        let p = m.point(u);
        let centre = chart.node_multi(chart.nearest_node(&p));
        let r = reach as i64;
        let count = (2 * r + 1).pow(n as u32);
        for t in 0..count {
            let mut rem = t;
            let mut multi = vec![0usize; n];
            let mut ok = true;
            for a in 0..n {
                let off = rem % (2 * r + 1) - r;
                rem /= 2 * r + 1;
                let mut c = centre[a] as i64 + off;
                if chart.is_periodic() {
                    c = c.rem_euclid(res[a] as i64);
                } else if c < 0 || c >= res[a] as i64 {
                    ok = false;
                }
                multi[a] = c.max(0) as usize;
            }
            if !ok {
                continue;
            }
            let i = chart.node_index(&multi);
            let x = chart.node_coords(i);
            let mut y: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a - b).collect();
            chart.wrap_displacement(&mut y);
            let crude = g.at_node(i).norm(&y);
            if best.get(&i).is_none_or(|(d, _)| crude < *d) {
                best.insert(i, (crude, u.clone()));
            }
        }
    }
    let mut out: Vec<(usize, f64, Vec<f64>)> = best
        .into_iter()
        .map(|(i, (crude, u))| {
            let x = chart.node_coords(i);
            match newton_nearest(m, chart, &g.at_node(i), &x, &u) {
                Some((ured, _, _, f)) if f.sqrt() <= crude => (i, f.sqrt(), ured),
                _ => (i, crude, u),
            }
        })
        .collect();
    out.sort_by_key(|e| e.0);
    out
}

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Length of a polyline under G, with the metric taken at segment midpoints.
fn polyline_length(g: &MetricField, pts: &[Vec<f64>]) -> f64 {
    pts.windows(2)
        .map(|w| {
            let mid: Vec<f64> = w[0].iter().zip(&w[1]).map(|(a, b)| 0.5 * (a + b)).collect();
            let d: Vec<f64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            g.at(&mid).norm(&d)
        })
        .sum()
}

/// Moves an endpoint to the frozen-metric nearest point of M to its neighbour.
fn slide(m: &Submanifold, g: &MetricField, neighbour: &[f64], u: &mut Vec<f64>) -> Vec<f64> {
    let chart = g.chart();
    match newton_nearest(m, chart, &g.at(neighbour), neighbour, u) {
        Some((ured, _, y, _)) => {
            *u = ured;
            neighbour.iter().zip(&y).map(|(a, b)| a - b).collect()
        }
        None => {
            let p = m.point(u);
            let mut y: Vec<f64> = neighbour.iter().zip(&p).map(|(a, b)| a - b).collect();
            chart.wrap_displacement(&mut y);
            neighbour.iter().zip(&y).map(|(a, b)| a - b).collect()
        }
    }
}

/// Distance between two disjoint submanifolds under G; zero when they meet.
pub fn geodesic_distance(g: &MetricField, a: &Submanifold, b: &Submanifold) -> Result<f64> {
    let chart = g.chart();
    let n = chart.dim();
    if a.ambient() != n || b.ambient() != n {
        return Err(Error::DimensionMismatch("submanifolds and metric dimensions differ".into()));
    }
    // coincident sets
    let touching = a.param_grid().iter().any(|u| {
        let p = a.point(u);
        b.param_grid().iter().any(|w| {
            let mut y: Vec<f64> = p.iter().zip(b.point(w)).map(|(s, t)| s - t).collect();
            chart.wrap_displacement(&mut y);
            y.iter().all(|c| c.abs() < 1e-12)
        })
    });
    if touching {
        return Ok(0.0);
    }
    let sources = near_nodes(a, g, 2);
    let targets = near_nodes(b, g, 2);
    let total = chart.num_nodes();
    let mut dist = vec![f64::INFINITY; total];
    let mut prev = vec![usize::MAX; total];
    let mut src_param: Vec<Option<Vec<f64>>> = vec![None; total];
    let mut heap = BinaryHeap::new();
    for (i, d, u) in &sources {
        if *d < dist[*i] {
            dist[*i] = *d;
            src_param[*i] = Some(u.clone());
            heap.push(Entry(*d, *i));
        }
    }
    let res = chart.resolution().to_vec();
    let spacing = chart.spacing().to_vec();
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(n as u32))
        .map(|mut t| {
            (0..n)
                .map(|_| {
                    let o = (t % 3) as i64 - 1;
                    t /= 3;
                    o
                })
                .collect()
        })
        .filter(|o: &Vec<i64>| o.iter().any(|&c| c != 0))
        .collect();
    let target_cost: std::collections::HashMap<usize, (f64, Vec<f64>)> =
        targets.iter().map(|(i, d, u)| (*i, (*d, u.clone()))).collect();
    let mut best = (f64::INFINITY, usize::MAX);
    while let Some(Entry(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if d >= best.0 {
            break;
        }
        if let Some((dt, _)) = target_cost.get(&i) {
            if d + dt < best.0 {
                best = (d + dt, i);
            }
        }
        let multi = chart.node_multi(i);
        let gi = g.at_node(i);
        for o in &offsets {
            let mut nb = vec![0usize; n];
            let mut ok = true;
            for a in 0..n {
                let mut c = multi[a] as i64 + o[a];
                if chart.is_periodic() {
                    c = c.rem_euclid(res[a] as i64);
                } else if c < 0 || c >= res[a] as i64 {
                    ok = false;
                }
                nb[a] = c.max(0) as usize;
            }
            if !ok {
                continue;
            }
            let j = chart.node_index(&nb);
            let step: Vec<f64> = (0..n).map(|a| o[a] as f64 * spacing[a]).collect();
            let gj = g.at_node(j);
            let w = 0.5 * (gi.gram() + gj.gram());
            let sv = DVector::from_column_slice(&step);
            let len = (sv.transpose() * w * &sv)[(0, 0)].max(0.0).sqrt();
            if d + len < dist[j] {
                dist[j] = d + len;
                prev[j] = i;
                heap.push(Entry(d + len, j));
            }
        }
    }
    if best.1 == usize::MAX {
        return Err(Error::Unsupported("no grid path between the submanifolds".into()));
    }
    // backtrack into an unwrapped polyline from the source node to the target node
    let mut chain = vec![best.1];
    while prev[*chain.last().expect("nonempty")] != usize::MAX {
        chain.push(prev[*chain.last().expect("nonempty")]);
    }
    chain.reverse();
    let mut pts = vec![chart.node_coords(chain[0])];
    for w in chain.windows(2) {
        let mut y: Vec<f64> = chart.node_coords(w[1]).iter().zip(chart.node_coords(w[0])).map(|(p, q)| p - q).collect();
        chart.wrap_displacement(&mut y);
        let last = pts.last().expect("nonempty").clone();
        pts.push(last.iter().zip(&y).map(|(p, q)| p + q).collect());
    }
    let mut ua = src_param[chain[0]].clone().unwrap_or_else(|| vec![0.0; a.dim()]);
    let mut ub = target_cost[&best.1].1.clone();
    let mut poly = Vec::with_capacity(pts.len() + 2);
    poly.push(slide(a, g, &pts[0], &mut ua));
    poly.extend(pts.iter().cloned());
    poly.push(slide(b, g, pts.last().expect("nonempty"), &mut ub));
    // relaxation towards the straight path, endpoints sliding on A and B
    let k = poly.len();
    let mut smoothed = poly.clone();
    for _ in 0..4 * k {
        for i in 1..k - 1 {
            smoothed[i] = smoothed[i - 1].iter().zip(&smoothed[i + 1]).map(|(p, q)| 0.5 * (p + q)).collect();
        }
        let first = smoothed[1].clone();
        smoothed[0] = slide(a, g, &first, &mut ua);
        let last = smoothed[k - 2].clone();
        smoothed[k - 1] = slide(b, g, &last, &mut ub);
    }
    let refined = polyline_length(g, &smoothed);
    Ok(best.0.min(refined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn flat(n: usize, res: usize) -> MetricField {
        MetricField::flat(Arc::new(Chart::unit_torus(n, res).unwrap()))
    }

    #[test]
    fn flat_geodesics_are_straight() {
        let g = flat(2, 16);
        let p = geodesic_shoot(&g, &[0.1, 0.2], &[0.3, -0.7], 1.0, 1e-2).unwrap();
        let end = p.points.last().unwrap();
        assert!((end[0] - 0.4).abs() < 1e-12 && (end[1] + 0.5).abs() < 1e-12);
        assert!(p.speed_drift < 1e-12);
    }

    #[test]
    fn conformal_geodesic_conserves_speed() {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let f = crate::fields::field::ScalarField::from_fn(chart.clone(), |x| {
            1.0 + 0.3 * (2.0 * std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).cos()
        });
        let g = MetricField::flat(chart).conformal(&f).unwrap();
        let p = geodesic_shoot(&g, &[0.1, 0.2], &[0.6, 0.3], 1.0, 1e-2).unwrap();
        assert!(p.speed_drift < 1e-6, "{}", p.speed_drift);
        let coarse = geodesic_shoot(&g, &[0.1, 0.2], &[60.0, 30.0], 1.0, 0.5);
        assert!(matches!(coarse, Err(Error::StepTooLarge(_))));
    }

    #[test]
    fn distance_between_parallel_circles() {
        let g = flat(2, 32);
        let h = 1.0 / 32.0;
        let a = Submanifold::from_exprs("A", &["t", "0.2"], 1, 64).unwrap();
        let b = Submanifold::from_exprs("B", &["t", "0.6"], 1, 64).unwrap();
        let d = geodesic_distance(&g, &a, &b).unwrap();
        assert!((d - 0.4).abs() < 2.0 * h, "{d}");
        assert_eq!(geodesic_distance(&g, &a, &a.clone()).unwrap(), 0.0);
    }

    #[test]
    fn distance_across_a_diagonal() {
        // circles y = 0.2 and a tilted circle; the refined path removes the stencil bias
        let g = flat(2, 32);
        let a = Submanifold::from_exprs("A", &["t", "0.1"], 1, 64).unwrap();
        let b = Submanifold::from_exprs("B", &["t", "0.45 + 0.05*sin(2*pi*t)"], 1, 64).unwrap();
        let d = geodesic_distance(&g, &a, &b).unwrap();
        assert!((d - 0.3).abs() < 2.0 / 32.0, "{d}");
    }
}
