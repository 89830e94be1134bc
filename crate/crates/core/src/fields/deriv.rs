//! Exterior derivative of form fields.
//!
//! Evaluator-backed fields are differentiated by sixth-order central differences of the
//! evaluator at a step far below the grid spacing. The constructions contain cutoff
//! profiles only a few cells wide, which spectral differentiation of node samples cannot
//! resolve. Sample-only fields use FFT derivatives on periodic charts and sixth-order
//! differences on boxes.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exterior::{binomial, index_rank, multi_indices};
use crate::fields::chart::Chart;
use crate::fields::field::FormField;

/// Step used when differentiating evaluator-backed fields.
pub const SOURCE_STEP: f64 = 1e-5;

const C6: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];

/// Sixth-order central difference of a vector-valued function along one axis.
pub fn central_diff6(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], axis: usize, delta: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut out: Vec<f64> = Vec::new();
    for (k, c) in C6.iter().enumerate() {
        let s = (k + 1) as f64 * delta;
        y[axis] = x[axis] + s;
        let plus = f(&y);
        y[axis] = x[axis] - s;
        let minus = f(&y);
        if out.is_empty() {
            out = vec![0.0; plus.len()];
        }
        for ((o, p), m) in out.iter_mut().zip(&plus).zip(&minus) {
            *o += c * (p - m);
        }
    }
    out.iter_mut().for_each(|o| *o /= delta);
    out
}

/// Assemble (d omega)_J = sum_k (-1)^k d_{j_k} omega_{J \ j_k} from partials[axis][component].
fn assemble(n: usize, k: usize, partials: &[Vec<f64>]) -> Vec<f64> {
    let out_idx = multi_indices(n, k + 1);
    let mut out = vec![0.0; out_idx.len()];
    let mut rest = Vec::with_capacity(k);
    for (o, j) in out.iter_mut().zip(&out_idx) {
        for pos in 0..=k {
            rest.clear();
            rest.extend(j.iter().enumerate().filter(|(q, _)| *q != pos).map(|(_, &v)| v));
            let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
            *o += sign * partials[j[pos]][index_rank(n, &rest)];
        }
    }
    out
}

/// d omega, a (k+1)-form field. The result holds node samples only.
pub fn d_exterior(omega: &FormField) -> Result<FormField> {
    let chart = omega.chart_arc();
    let n = chart.dim();
    let k = omega.degree();
    if k + 1 > n {
        return Err(Error::DegreeOverflow { degree: k + 1, dim: n });
    }
    let data = if let Some(src) = omega.source() {
        let src = src.clone();
        let per_node: Vec<Vec<f64>> = (0..chart.num_nodes())
            .into_par_iter()
            .map(|i| {
                let x = chart.node_coords(i);
                let partials: Vec<Vec<f64>> = (0..n).map(|a| central_diff6(&|y: &[f64]| src(y), &x, a, SOURCE_STEP)).collect();
                assemble(n, k, &partials)
            })
            .collect();
        per_node.into_iter().flatten().collect()
    } else {
        let ncomp = binomial(n, k);
        let values = omega.values();
        if !chart.is_periodic() {
            check_margin_support(&chart, values, ncomp)?;
        }
        let partials: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|a| {
                (0..ncomp)
                    .map(|c| {
                        let comp: Vec<f64> = values.iter().skip(c).step_by(ncomp).cloned().collect();
                        if chart.is_periodic() {
                            spectral_partial(&chart, &comp, a)
                        } else {
                            fd6_partial(&chart, &comp, a)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut data = Vec::with_capacity(chart.num_nodes() * binomial(n, k + 1));
        let mut local = vec![vec![0.0; ncomp]; n];
        for i in 0..chart.num_nodes() {
            for a in 0..n {
                for c in 0..ncomp {
                    local[a][c] = partials[a][c][i];
                }
            }
            data.extend(assemble(n, k, &local));
        }
        data
    };
    FormField::from_coeffs(chart, k + 1, data)
}

fn check_margin_support(chart: &Chart, values: &[f64], ncomp: usize) -> Result<()> {
    for i in 0..chart.num_nodes() {
        if chart.in_margin(i) && values[i * ncomp..(i + 1) * ncomp].iter().any(|v| v.abs() > 1e-14) {
            return Err(Error::BoundarySupport);
        }
    }
    Ok(())
}

/// FFT derivative of a periodic scalar sample array along one axis; Nyquist modes dropped.
pub fn spectral_partial(chart: &Chart, comp: &[f64], axis: usize) -> Vec<f64> {
    let r = chart.resolution()[axis];
    let stride = chart.stride(axis);
    let period = r as f64 * chart.spacing()[axis];
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(r);
    let inv = planner.plan_fft_inverse(r);
    let mut out = vec![0.0; comp.len()];
    let mut line = vec![Complex::new(0.0, 0.0); r];
    for base in 0..comp.len() {
        // base indexes the first node of a line when its axis index is zero
        if !(base / stride).is_multiple_of(r) {
            continue;
        }
        for j in 0..r {
            line[j] = Complex::new(comp[base + j * stride], 0.0);
        }
        fwd.process(&mut line);
        for (j, v) in line.iter_mut().enumerate() {
            let freq = if j < r.div_ceil(2) { j as f64 } else { j as f64 - r as f64 };
            if r.is_multiple_of(2) && j == r / 2 {
                *v = Complex::new(0.0, 0.0);
            } else {
                *v *= Complex::new(0.0, 2.0 * PI * freq / period);
            }
        }
        inv.process(&mut line);
        for j in 0..r {
            out[base + j * stride] = line[j].re / r as f64;
        }
    }
    out
}

/// Sixth-order central difference of box samples; nodes whose stencil leaves the box get 0,
/// which is exact because the support avoids the margin.
fn fd6_partial(chart: &Chart, comp: &[f64], axis: usize) -> Vec<f64> {
    let r = chart.resolution()[axis];
    let stride = chart.stride(axis);
    let h = chart.spacing()[axis];
    let mut out = vec![0.0; comp.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let k = (i / stride) % r;
        if k < 3 || k + 3 >= r {
            continue;
        }
        let mut s = 0.0;
        for (q, c) in C6.iter().enumerate() {
            let off = (q + 1) * stride;
            s += c * (comp[i + off] - comp[i - off]);
        }
        *o = s / h;
    }
    out
}
