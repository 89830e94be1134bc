//! Comass of a k-covector: the maximum of phi(V) over g-unit simple k-vectors V.
//!
//! Degrees 0, 1, n-1 and n have closed forms. For the rest the problem is reduced to the
//! Euclidean case through a Cholesky factor of g and solved by multi-start Riemannian
//! gradient ascent on the Stiefel manifold with a QR retraction. A seeded random-frame
//! oracle is always run alongside; the ascent value is flagged, never clamped, when it is
//! not stationary or falls below the oracle.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::{index_rank, multi_indices, small_det, MultiCovector, PointMetric, SimpleFrame, MAX_DIM};
use crate::fields::field::{FormField, MetricField, ScalarField};

/// Work limits and seed for the ascent and its oracle cross-check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerBudget {
    pub starts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub oracle_samples: usize,
    pub seed: u64,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        Self { starts: 32, max_iters: 4000, grad_tol: 1e-8, oracle_samples: 256, seed: 0x5eed_c0de }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComassMethod {
    Scalar,
    ExactDeg1,
    ExactHodge,
    ExactTop,
    Ascent,
    Oracle,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ComassFlag {
    NotStationary { grad_norm: f64 },
    BelowOracle { oracle: f64 },
}

#[derive(Clone, Debug)]
pub struct ComassResult {
    pub value: f64,
    /// A g-orthonormal frame with unit weight attaining `value`.
    pub maximizer: SimpleFrame,
    pub method: ComassMethod,
    pub starts_used: usize,
    pub grad_norm: f64,
    pub flag: Option<ComassFlag>,
}

/// Result of random sampling of unit simple k-vectors.
#[derive(Clone, Debug)]
pub struct OracleResult {
    pub value: f64,
    pub frame: SimpleFrame,
    pub samples: usize,
}

/// The covector moved to Euclidean coordinates, stored densely for fast evaluation.
pub(crate) struct EuclidForm {
    n: usize,
    m: usize,
    rows: Vec<[usize; MAX_DIM]>,
    coeffs: Vec<f64>,
    scale: f64,
}

impl EuclidForm {
    pub(crate) fn new(phi: &MultiCovector) -> Self {
        let n = phi.dim();
        let m = phi.degree();
        let mut rows = Vec::new();
        let mut coeffs = Vec::new();
        for (c, idx) in phi.coeffs().iter().zip(multi_indices(n, m)) {
            if *c != 0.0 {
                let mut r = [0usize; MAX_DIM];
                r[..m].copy_from_slice(&idx);
                rows.push(r);
                coeffs.push(*c);
            }
        }
        let scale = phi.max_abs();
        Self { n, m, rows, coeffs, scale }
    }

    /// phi(F) for F stored column-major (n x m).
    pub(crate) fn value(&self, f: &[f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        let mut buf = [0.0f64; MAX_DIM * MAX_DIM];
        let mut s = 0.0;
        for (r, c) in self.rows.iter().zip(&self.coeffs) {
            for i in 0..m {
                for j in 0..m {
                    buf[i * m + j] = f[j * n + r[i]];
                }
            }
            s += c * small_det(&mut buf[..m * m], m);
        }
        s
    }

    /// Value and Euclidean gradient with respect to the entries of F.
    fn value_grad(&self, f: &[f64], grad: &mut [f64]) -> f64 {
        let (n, m) = (self.n, self.m);
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut a = [0.0f64; MAX_DIM * MAX_DIM];
        let mut buf = [0.0f64; MAX_DIM * MAX_DIM];
        let mut s = 0.0;
        for (r, c) in self.rows.iter().zip(&self.coeffs) {
            for i in 0..m {
                for j in 0..m {
                    a[i * m + j] = f[j * n + r[i]];
                }
            }
            buf[..m * m].copy_from_slice(&a[..m * m]);
            s += c * small_det(&mut buf[..m * m], m);
            // cofactor (i, j): determinant with entry (i, j) set to 1 and the rest of row i zeroed
            for i in 0..m {
                for j in 0..m {
                    buf[..m * m].copy_from_slice(&a[..m * m]);
                    for q in 0..m {
                        buf[i * m + q] = 0.0;
                    }
                    buf[i * m + j] = 1.0;
                    grad[j * n + r[i]] += c * small_det(&mut buf[..m * m], m);
                }
            }
        }
        s
    }
}

/// Orthonormalise the columns of F (n x m, column-major) in place; returns false if rank-deficient.
fn qf(f: &mut [f64], n: usize, m: usize) -> bool {
    for j in 0..m {
        for _pass in 0..2 {
            for q in 0..j {
                let mut d = 0.0;
                for r in 0..n {
                    d += f[q * n + r] * f[j * n + r];
                }
                for r in 0..n {
                    f[j * n + r] -= d * f[q * n + r];
                }
            }
        }
        let nrm = (0..n).map(|r| f[j * n + r] * f[j * n + r]).sum::<f64>().sqrt();
        if nrm < 1e-300 || !nrm.is_finite() {
            return false;
        }
        for r in 0..n {
            f[j * n + r] /= nrm;
        }
    }
    true
}

/// Riemannian gradient on the Stiefel manifold: G - F sym(F^T G).
fn riemannian_grad(f: &[f64], g: &[f64], n: usize, m: usize, out: &mut [f64]) {
    let mut s = [0.0f64; MAX_DIM * MAX_DIM];
    for a in 0..m {
        for b in 0..m {
            let mut d = 0.0;
            for r in 0..n {
                d += f[a * n + r] * g[b * n + r];
            }
            s[a * m + b] = d;
        }
    }
    for j in 0..m {
        for r in 0..n {
            let mut v = g[j * n + r];
            for a in 0..m {
                v -= f[a * n + r] * 0.5 * (s[a * m + j] + s[j * m + a]);
            }
            out[j * n + r] = v;
        }
    }
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

struct AscentState {
    f: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
    rgrad: Vec<f64>,
    step: f64,
    converged: bool,
}

impl AscentState {
    fn new(form: &EuclidForm, mut f: Vec<f64>) -> Self {
        let (n, m) = (form.n, form.m);
        let mut grad = vec![0.0; n * m];
        let mut value = form.value_grad(&f, &mut grad);
        if value < 0.0 {
            for r in 0..n {
                f[r] = -f[r];
            }
            value = form.value_grad(&f, &mut grad);
        }
        let mut rgrad = vec![0.0; n * m];
        riemannian_grad(&f, &grad, n, m, &mut rgrad);
        let step = 1.0 / form.scale.max(1e-300);
        Self { f, value, grad, rgrad, step, converged: false }
    }

    fn grad_norm(&self) -> f64 {
        norm2(&self.rgrad).sqrt()
    }

    fn run(&mut self, form: &EuclidForm, iters: usize, tol: f64) {
        let (n, m) = (form.n, form.m);
        let mut trial = vec![0.0; n * m];
        let mut tgrad = vec![0.0; n * m];
        let mut trgrad = vec![0.0; n * m];
        for _ in 0..iters {
            let gn2 = norm2(&self.rgrad);
            if gn2.sqrt() <= tol {
                self.converged = true;
                return;
            }
            let mut t = self.step;
            let mut accepted = false;
            for _ in 0..60 {
                for i in 0..n * m {
                    trial[i] = self.f[i] + t * self.rgrad[i];
                }
                if qf(&mut trial, n, m) {
                    let v = form.value(&trial);
                    if v >= self.value + 1e-4 * t * gn2 {
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // no ascent along the gradient at working precision
                self.converged = gn2.sqrt() <= tol * 1e3;
                return;
            }
            let v = form.value_grad(&trial, &mut tgrad);
            riemannian_grad(&trial, &tgrad, n, m, &mut trgrad);
            let mut ss = 0.0;
            let mut sy = 0.0;
            for i in 0..n * m {
                let s = trial[i] - self.f[i];
                let y = trgrad[i] - self.rgrad[i];
                ss += s * s;
                sy += s * y;
            }
            let base = 1.0 / form.scale.max(1e-300);
            self.step = if sy.abs() > 1e-300 { (ss / sy.abs()).clamp(1e-6 * base, 1e6 * base) } else { 2.0 * t };
            std::mem::swap(&mut self.f, &mut trial);
            std::mem::swap(&mut self.grad, &mut tgrad);
            std::mem::swap(&mut self.rgrad, &mut trgrad);
            self.value = v;
        }
        self.converged = self.grad_norm() <= tol;
    }
}

fn frame_from_columns(a: &DMatrix<f64>, f: &[f64], n: usize, m: usize) -> SimpleFrame {
    let fm = DMatrix::from_column_slice(n, m, f);
    SimpleFrame::new(a * fm, 1.0)
}

fn check_shapes(phi: &MultiCovector, g: &PointMetric) -> Result<()> {
    if phi.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!("covector on R^{} against metric on R^{}", phi.dim(), g.dim())));
    }
    Ok(())
}

/// The linear map A = L^{-T} carrying Euclidean orthonormal frames to g-orthonormal ones.
fn whitening(g: &PointMetric) -> DMatrix<f64> {
    let l = g.cholesky_lower();
    l.transpose().try_inverse().unwrap_or_else(|| DMatrix::identity(g.dim(), g.dim()))
}

/// Comass of phi under g.
pub fn comass_point(phi: &MultiCovector, g: &PointMetric, budget: &OptimizerBudget) -> Result<ComassResult> {
    check_shapes(phi, g)?;
    let n = phi.dim();
    let m = phi.degree();
    if m == 0 {
        let c = phi.coeffs()[0];
        let w = if c < 0.0 { -1.0 } else { 1.0 };
        return Ok(ComassResult {
            value: c.abs(),
            maximizer: SimpleFrame::new(DMatrix::zeros(n, 0), w),
            method: ComassMethod::Scalar,
            starts_used: 0,
            grad_norm: 0.0,
            flag: None,
        });
    }
    let a = whitening(g);
    let euclid = phi.pullback(&a)?;
    let exact = |value: f64, f: Vec<f64>, method| ComassResult {
        value,
        maximizer: frame_from_columns(&a, &f, n, m),
        method,
        starts_used: 0,
        grad_norm: 0.0,
        flag: None,
    };
    if m == 1 {
        let w = euclid.coeffs();
        let nrm = norm2(w).sqrt();
        let f: Vec<f64> = if nrm > 0.0 { w.iter().map(|x| x / nrm).collect() } else { unit(n, 0) };
        return Ok(exact(nrm, f, ComassMethod::ExactDeg1));
    }
    if m == n {
        let c = euclid.coeffs()[0];
        let mut f = identity_cols(n, n);
        if c < 0.0 {
            for r in 0..n {
                f[r] = -f[r];
            }
        }
        return Ok(exact(c.abs(), f, ComassMethod::ExactTop));
    }
    if m == n - 1 {
        let mut w = vec![0.0; n];
        let mut rest = Vec::with_capacity(n - 1);
        for (i, wi) in w.iter_mut().enumerate() {
            rest.clear();
            rest.extend((0..n).filter(|&j| j != i));
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            *wi = sign * euclid.coeffs()[index_rank(n, &rest)];
        }
        let nrm = norm2(&w).sqrt();
        let f = hodge_frame(&w, nrm, n);
        return Ok(exact(nrm, f, ComassMethod::ExactHodge));
    }
    ascent(&euclid, &a, budget)
}

/// Value-only convenience wrapper.
pub fn comass_value(phi: &MultiCovector, g: &PointMetric, budget: &OptimizerBudget) -> Result<f64> {
    Ok(comass_point(phi, g, budget)?.value)
}

fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn identity_cols(n: usize, m: usize) -> Vec<f64> {
    let mut f = vec![0.0; n * m];
    for j in 0..m {
        f[j * n + j] = 1.0;
    }
    f
}

/// Orthonormal basis of w^perp oriented so that det(w/|w|, F) = +1.
fn hodge_frame(w: &[f64], nrm: f64, n: usize) -> Vec<f64> {
    let mut full = vec![0.0; n * (n + 1)];
    if nrm > 0.0 {
        for r in 0..n {
            full[r] = w[r] / nrm;
        }
    } else {
        full[0] = 1.0;
    }
    for j in 0..n {
        full[(j + 1) * n + j] = 1.0;
    }
    // Gram-Schmidt over [w, e_1..e_n], dropping the dependent column
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    for j in 0..=n {
        let mut v: Vec<f64> = full[j * n..(j + 1) * n].to_vec();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = b.iter().zip(&v).map(|(x, y)| x * y).sum();
                for r in 0..n {
                    v[r] -= d * b[r];
                }
            }
        }
        let vn = norm2(&v).sqrt();
        if vn > 1e-8 && basis.len() < n {
            basis.push(v.iter().map(|x| x / vn).collect());
        }
    }
    let mut mat = DMatrix::zeros(n, n);
    for (j, b) in basis.iter().enumerate() {
        for r in 0..n {
            mat[(r, j)] = b[r];
        }
    }
    if mat.determinant() < 0.0 {
        for r in 0..n {
            basis[1][r] = -basis[1][r];
        }
    }
    let mut f = Vec::with_capacity(n * (n - 1));
    for b in &basis[1..] {
        f.extend_from_slice(b);
    }
    f
}

fn random_frame(rng: &mut ChaCha8Rng, n: usize, m: usize, out: &mut [f64]) -> bool {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
    qf(out, n, m)
}

const PHASE_ONE_ITERS: usize = 60;
const SURVIVORS: usize = 4;

fn ascent(euclid: &MultiCovector, a: &DMatrix<f64>, budget: &OptimizerBudget) -> Result<ComassResult> {
    let n = euclid.dim();
    let m = euclid.degree();
    let form = EuclidForm::new(euclid);
    let tol = budget.grad_tol * form.scale.max(1.0);
    let starts = budget.starts.max(1);
    if form.coeffs.is_empty() {
        return Ok(ComassResult {
            value: 0.0,
            maximizer: frame_from_columns(a, &identity_cols(n, m), n, m),
            method: ComassMethod::Ascent,
            starts_used: 0,
            grad_norm: 0.0,
            flag: None,
        });
    }
    // coordinate planes of the largest coefficients, then seeded random frames
    let mut order: Vec<usize> = (0..form.coeffs.len()).collect();
    order.sort_by(|&i, &j| form.coeffs[j].abs().total_cmp(&form.coeffs[i].abs()));
    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(starts);
    for &k in order.iter().take(SURVIVORS.min(starts)) {
        let mut f = vec![0.0; n * m];
        for j in 0..m {
            f[j * n + form.rows[k][j]] = 1.0;
        }
        initial.push(f);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    while initial.len() < starts {
        let mut f = vec![0.0; n * m];
        if random_frame(&mut rng, n, m, &mut f) {
            initial.push(f);
        }
    }
    let mut states: Vec<AscentState> = initial.into_iter().map(|f| AscentState::new(&form, f)).collect();
    for s in states.iter_mut() {
        s.run(&form, PHASE_ONE_ITERS.min(budget.max_iters), tol);
    }
    states.sort_by(|x, y| y.value.total_cmp(&x.value));
    states.truncate(SURVIVORS);
    let remaining = budget.max_iters.saturating_sub(PHASE_ONE_ITERS);
    for s in states.iter_mut() {
        if !s.converged {
            s.run(&form, remaining, tol);
        }
    }
    let best = states
        .iter()
        .filter(|s| s.converged)
        .max_by(|x, y| x.value.total_cmp(&y.value))
        .or_else(|| states.iter().max_by(|x, y| x.value.total_cmp(&y.value)))
        .expect("at least one start");
    let grad_norm = best.grad_norm();
    let oracle = sample_max(&form, budget.oracle_samples, budget.seed ^ 0x0bac_1e5e);
    let flag = if !best.converged {
        Some(ComassFlag::NotStationary { grad_norm })
    } else if oracle.0 > best.value + 1e-9 * form.scale.max(1.0) {
        Some(ComassFlag::BelowOracle { oracle: oracle.0 })
    } else {
        None
    };
    Ok(ComassResult {
        value: best.value,
        maximizer: frame_from_columns(a, &best.f, n, m),
        method: ComassMethod::Ascent,
        starts_used: starts,
        grad_norm,
        flag,
    })
}

const ORACLE_CHUNK: usize = 4096;

/// Max of |phi(F)| over seeded random orthonormal frames; chunk c draws from stream c so a
/// shorter run is always a prefix of a longer one.
fn sample_max(form: &EuclidForm, samples: usize, seed: u64) -> (f64, Vec<f64>) {
    let (n, m) = (form.n, form.m);
    let chunks = samples.div_ceil(ORACLE_CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = ORACLE_CHUNK.min(samples - c * ORACLE_CHUNK);
            let mut f = vec![0.0; n * m];
            let mut best = (f64::NEG_INFINITY, vec![0.0; n * m]);
            for _ in 0..count {
                if !random_frame(&mut rng, n, m, &mut f) {
                    continue;
                }
                let v = form.value(&f);
                if v.abs() > best.0 {
                    best.0 = v.abs();
                    best.1.copy_from_slice(&f);
                    if v < 0.0 {
                        for r in 0..n {
                            best.1[r] = -best.1[r];
                        }
                    }
                }
            }
            best
        })
        .reduce(|| (f64::NEG_INFINITY, vec![0.0; n * m]), |x, y| if y.0 > x.0 { y } else { x });
    (best.0.max(0.0), best.1)
}

/// Random-frame lower bound for the comass using `samples` seeded frames.
pub fn oracle_comass(phi: &MultiCovector, g: &PointMetric, samples: usize, seed: u64) -> Result<OracleResult> {
    check_shapes(phi, g)?;
    let n = phi.dim();
    let m = phi.degree();
    if m == 0 {
        let c = phi.coeffs()[0];
        return Ok(OracleResult {
            value: c.abs(),
            frame: SimpleFrame::new(DMatrix::zeros(n, 0), if c < 0.0 { -1.0 } else { 1.0 }),
            samples,
        });
    }
    let a = whitening(g);
    let euclid = phi.pullback(&a)?;
    let form = EuclidForm::new(&euclid);
    if form.coeffs.is_empty() || samples == 0 {
        return Ok(OracleResult { value: 0.0, frame: frame_from_columns(&a, &identity_cols(n, m), n, m), samples });
    }
    let (value, f) = sample_max(&form, samples, seed);
    Ok(OracleResult { value, frame: frame_from_columns(&a, &f, n, m), samples })
}

/// Per-node comass of a form field under a metric field.
#[derive(Clone, Debug)]
pub struct FieldComass {
    pub values: ScalarField,
    pub sup: f64,
    pub argsup: usize,
    pub argsup_coords: Vec<f64>,
    /// Nodes whose ascent result was flagged, with the flag.
    pub flagged: Vec<(usize, ComassFlag)>,
}

/// Comass of phi under g at every node, with the supremum and its location. Ties keep the
/// lowest node index so the result does not depend on scheduling.
pub fn comass_field(phi: &FormField, g: &MetricField, budget: &OptimizerBudget) -> Result<FieldComass> {
    if phi.chart() != g.chart() {
        return Err(Error::ChartMismatch);
    }
    let chart = phi.chart_arc();
    phi.values();
    g.values();
    let results: Vec<Result<ComassResult>> =
        (0..chart.num_nodes()).into_par_iter().map(|i| comass_point(&phi.at_node(i), &g.at_node(i), budget)).collect();
    let mut values = Vec::with_capacity(results.len());
    let mut flagged = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        let r = r?;
        if let Some(f) = r.flag {
            flagged.push((i, f));
        }
        values.push(r.value);
    }
    let mut argsup = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[argsup] {
            argsup = i;
        }
    }
    let sup = values[argsup];
    Ok(FieldComass {
        values: ScalarField::from_values(chart.clone(), values)?,
        sup,
        argsup,
        argsup_coords: chart.node_coords(argsup),
        flagged,
    })
}

/// Two sides of a comass law evaluated on one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LawCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl LawCheck {
    /// |lhs - rhs| <= tol * max(1, |rhs|).
    pub fn equal(&self, tol: f64) -> bool {
        (self.lhs - self.rhs).abs() <= tol * self.rhs.abs().max(1.0)
    }

    /// lhs <= rhs + tol.
    pub fn at_most(&self, tol: f64) -> bool {
        self.lhs <= self.rhs + tol
    }
}

/// Scaling law: the comass under f g equals f^(-m/2) times the comass under g.
pub fn scaling_law(phi: &MultiCovector, g: &PointMetric, f: f64, budget: &OptimizerBudget) -> Result<LawCheck> {
    if !(f > 0.0) {
        return Err(Error::InvalidMetric(format!("scale factor {f} must be positive")));
    }
    let lhs = comass_value(phi, &g.scaled(f), budget)?;
    let rhs = f.powf(-(phi.degree() as f64) / 2.0) * comass_value(phi, g, budget)?;
    Ok(LawCheck { lhs, rhs })
}

/// Monotonicity: a larger metric has no larger comass. Requires g' - g positive semidefinite.
pub fn monotonicity(phi: &MultiCovector, g: &PointMetric, g_big: &PointMetric, budget: &OptimizerBudget) -> Result<LawCheck> {
    let diff = g_big.gram() - g.gram();
    let scale = g_big.gram().amax().max(1.0);
    if diff.symmetric_eigenvalues().min() < -1e-12 * scale {
        return Err(Error::InvalidMetric("second metric does not dominate the first".into()));
    }
    Ok(LawCheck { lhs: comass_value(phi, g_big, budget)?, rhs: comass_value(phi, g, budget)? })
}

/// Gluing bound for a g1 + b g2: comass <= 1 / sqrt(a^m / c1^2 + b^m / c2^2), c_i the comass
/// under g_i.
pub fn gluing_bound(
    phi: &MultiCovector,
    a: f64,
    g1: &PointMetric,
    b: f64,
    g2: &PointMetric,
    budget: &OptimizerBudget,
) -> Result<LawCheck> {
    if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
        return Err(Error::InvalidMetric("gluing weights must be nonnegative and not both zero".into()));
    }
    let m = phi.degree() as i32;
    let c1 = comass_value(phi, g1, budget)?;
    let c2 = comass_value(phi, g2, budget)?;
    let glued = PointMetric::new(g1.gram() * a + g2.gram() * b)?;
    let lhs = comass_value(phi, &glued, budget)?;
    let inv = |w: f64, c: f64| {
        if w == 0.0 {
            0.0
        } else if c == 0.0 {
            f64::INFINITY
        } else {
            w.powi(m) / (c * c)
        }
    };
    let rhs = 1.0 / (inv(a, c1) + inv(b, c2)).sqrt();
    Ok(LawCheck { lhs, rhs })
}
