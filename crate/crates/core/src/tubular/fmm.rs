//! Fast marching for the distance to a submanifold under a non-constant metric.
//!
//! The metric is treated as locally isotropic with speed (det G)^(1/2n). Nodes within 1.5 grid
//! cells of M are initialised by the exact nearest-point distance under the frozen node
//! metric; the rest are reached by the first-order upwind eikonal update. Each node inherits
//! the projection parameter of its upwind neighbour.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::field::{MetricField, ScalarField};
use crate::tubular::atlas::{newton_nearest, FiberModel, TubularAtlas};
use crate::tubular::submanifold::Submanifold;

#[derive(PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.partial_cmp(&self.0).unwrap_or(Ordering::Equal).then(other.1.cmp(&self.1))
    }
}

/// Solves sum_a ((t - t_a) / h_a)^2 = w^2 over the upwind set, dropping axes that do not
/// contribute.
fn eikonal_update(mut nb: Vec<(f64, f64)>, w: f64) -> f64 {
    nb.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
    let mut best = f64::INFINITY;
    for k in 1..=nb.len() {
        let (mut qa, mut qb, mut qc) = (0.0, 0.0, -w * w);
        for &(t, h) in &nb[..k] {
            let inv = 1.0 / (h * h);
            qa += inv;
            qb -= 2.0 * t * inv;
            qc += t * t * inv;
        }
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            break;
        }
        let t = (-qb + disc.sqrt()) / (2.0 * qa);
        if k < nb.len() && t > nb[k].0 {
            best = t;
            continue;
        }
        best = t;
        break;
    }
    best
}

pub(crate) fn march(
    m: &Submanifold,
    g: &MetricField,
    epsilon: f64,
    seeds: Vec<(Vec<f64>, Vec<f64>)>,
    seed_res: usize,
    vol: f64,
    fiber: FiberModel,
) -> Result<TubularAtlas> {
    if fiber != FiberModel::Orthogonal {
        return Err(Error::Unsupported("sheared fibers need a constant metric".into()));
    }
    let chart = g.chart_arc();
    let n = chart.dim();
    let dm = m.dim();
    let nodes = chart.num_nodes();
    let speed: Vec<f64> = (0..nodes).into_par_iter().map(|i| g.at_node(i).determinant().powf(0.5 / n as f64)).collect();
    let init: Vec<Option<(Vec<f64>, f64)>> = (0..nodes)
        .into_par_iter()
        .map(|i| {
            let x = chart.node_coords(i);
            let gi = g.at_node(i);
            let mut best = (f64::INFINITY, 0);
            for (s, (_, p)) in seeds.iter().enumerate() {
                let mut y: Vec<f64> = x.iter().zip(p).map(|(a, b)| a - b).collect();
                chart.wrap_displacement(&mut y);
                let d2 = gi.inner(&y, &y);
                if d2 < best.0 {
                    best = (d2, s);
                }
            }
            let band = 1.5 * chart.h() * speed[i];
            if best.0.sqrt() > 2.0 * band {
                return None;
            }
            let (u, d2) = match newton_nearest(m, &chart, &gi, &x, &seeds[best.1].0) {
                Some((u, _, _, d2)) if d2 <= best.0 => (u, d2),
                _ => (seeds[best.1].0.clone(), best.0),
            };
            (d2.sqrt() <= band).then(|| (u, d2.sqrt()))
        })
        .collect();
    let mut t = vec![f64::INFINITY; nodes];
    let mut params = vec![0.0; nodes * dm];
    let mut known = vec![false; nodes];
    let mut heap = BinaryHeap::new();
    for (i, v) in init.into_iter().enumerate() {
        if let Some((u, d)) = v {
            t[i] = d;
            params[i * dm..(i + 1) * dm].copy_from_slice(&u);
            heap.push(Entry(d, i));
        }
    }
    if heap.is_empty() {
        return Err(Error::InvalidSubmanifold(format!("{}: no chart node lies near the submanifold", m.name())));
    }
    let res = chart.resolution().to_vec();
    let periodic = chart.is_periodic();
    let neighbour = |i: usize, a: usize, dir: isize| -> Option<usize> {
        let mut multi = chart.node_multi(i);
        let k = multi[a] as isize + dir;
        if k < 0 || k >= res[a] as isize {
            if !periodic {
                return None;
            }
            multi[a] = k.rem_euclid(res[a] as isize) as usize;
        } else {
            multi[a] = k as usize;
        }
        Some(chart.node_index(&multi))
    };
    while let Some(Entry(ti, i)) = heap.pop() {
        if known[i] || ti > t[i] {
            continue;
        }
        known[i] = true;
        for a in 0..n {
            for dir in [-1isize, 1] {
                let Some(j) = neighbour(i, a, dir) else { continue };
                if known[j] {
                    continue;
                }
                let mut nb = Vec::with_capacity(n);
                let mut donor = i;
                for b in 0..n {
                    let mut tb = f64::INFINITY;
                    for d2 in [-1isize, 1] {
                        if let Some(q) = neighbour(j, b, d2) {
                            if known[q] && t[q] < tb {
                                tb = t[q];
                                if tb < t[donor] {
                                    donor = q;
                                }
                            }
                        }
                    }
                    if tb.is_finite() {
                        nb.push((tb, chart.spacing()[b]));
                    }
                }
                let cand = eikonal_update(nb, speed[j]);
                if cand < t[j] {
                    t[j] = cand;
                    let src: Vec<f64> = params[donor * dm..(donor + 1) * dm].to_vec();
                    params[j * dm..(j + 1) * dm].copy_from_slice(&src);
                    heap.push(Entry(cand, j));
                }
            }
        }
    }
    let reference = g.at_node(chart.nearest_node(&seeds[0].1));
    let dist = ScalarField::from_values(chart.clone(), t)?;
    Ok(TubularAtlas::from_parts(m.clone(), epsilon, chart, reference, dist, params, seeds, seed_res, vol, fiber))
}
