//! Scalar, form and metric fields on a chart.
//!
//! A field always has node samples. Fields produced by the constructions also carry an
//! exact pointwise evaluator (the "source"); node samples of such fields are computed on
//! first use. Sample-only fields are evaluated off-grid by local degree-5 Lagrange
//! interpolation (periodic wrap on tori, clamped stencils on boxes).

use nalgebra::DMatrix;
use rayon::prelude::*;
use std::fmt;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::exterior::{binomial, MultiCovector, PointMetric};
use crate::fields::chart::Chart;

/// Pointwise evaluator returning the node-major component vector at a point.
pub type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

const STENCIL: usize = 6;

#[derive(Clone)]
struct Samples {
    chart: Arc<Chart>,
    ncomp: usize,
    data: Arc<OnceLock<Vec<f64>>>,
    source: Option<PointFn>,
}

impl Samples {
    fn from_data(chart: Arc<Chart>, ncomp: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != chart.num_nodes() * ncomp {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for {} nodes x {ncomp} components",
                data.len(),
                chart.num_nodes()
            )));
        }
        let cell = OnceLock::new();
        let _ = cell.set(data);
        Ok(Self { chart, ncomp, data: Arc::new(cell), source: None })
    }

    fn from_source(chart: Arc<Chart>, ncomp: usize, source: PointFn) -> Self {
        Self { chart, ncomp, data: Arc::new(OnceLock::new()), source: Some(source) }
    }

    fn data(&self) -> &[f64] {
        self.data.get_or_init(|| {
            let src = self.source.as_ref().expect("field without samples has a source");
            let chart = &self.chart;
            let per_node: Vec<Vec<f64>> = (0..chart.num_nodes()).into_par_iter().map(|i| src(&chart.node_coords(i))).collect();
            let mut out = Vec::with_capacity(chart.num_nodes() * self.ncomp);
            for v in per_node {
                debug_assert_eq!(v.len(), self.ncomp);
                out.extend(v);
            }
            out
        })
    }

    fn node(&self, i: usize) -> &[f64] {
        &self.data()[i * self.ncomp..(i + 1) * self.ncomp]
    }

    fn at(&self, x: &[f64]) -> Vec<f64> {
        match &self.source {
            Some(src) => src(x),
            None => interpolate(&self.chart, self.data(), self.ncomp, x),
        }
    }

    fn map(&self, ncomp: usize, f: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>) -> Self {
        match &self.source {
            Some(src) => {
                let src = src.clone();
                Self::from_source(self.chart.clone(), ncomp, Arc::new(move |x: &[f64]| f(&src(x))))
            }
            None => {
                let data: Vec<f64> = self.data().chunks(self.ncomp).flat_map(|c| f(c)).collect();
                Self::from_data(self.chart.clone(), ncomp, data).expect("mapped sample count")
            }
        }
    }
}

/// Lagrange weights for nodes k0..k0+5 at fractional position t (in node units from k0).
fn lagrange_weights(t: f64) -> [f64; STENCIL] {
    let mut w = [1.0; STENCIL];
    for (j, wj) in w.iter_mut().enumerate() {
        for k in 0..STENCIL {
            if k != j {
                *wj *= (t - k as f64) / (j as f64 - k as f64);
            }
        }
    }
    w
}

pub(crate) fn interpolate(chart: &Chart, data: &[f64], ncomp: usize, x: &[f64]) -> Vec<f64> {
    let n = chart.dim();
    let mut starts = vec![0i64; n];
    let mut weights = vec![[0.0; STENCIL]; n];
    for a in 0..n {
        let r = chart.resolution()[a] as i64;
        let s = (x[a] - chart.origin()[a]) / chart.spacing()[a];
        let mut k0 = s.floor() as i64 - (STENCIL as i64 / 2 - 1);
        if !chart.is_periodic() {
            k0 = k0.clamp(0, r - STENCIL as i64);
        }
        starts[a] = k0;
        weights[a] = lagrange_weights(s - k0 as f64);
    }
    let mut out = vec![0.0; ncomp];
    let total = STENCIL.pow(n as u32);
    let mut multi = vec![0usize; n];
    for t in 0..total {
        let mut rem = t;
        let mut w = 1.0;
        for a in (0..n).rev() {
            let j = rem % STENCIL;
            rem /= STENCIL;
            w *= weights[a][j];
            let r = chart.resolution()[a] as i64;
            multi[a] = (starts[a] + j as i64).rem_euclid(r) as usize;
        }
        if w == 0.0 {
            continue;
        }
        let i = chart.node_index(&multi);
        for c in 0..ncomp {
            out[c] += w * data[i * ncomp + c];
        }
    }
    out
}

macro_rules! common_field_api {
    () => {
        pub fn chart(&self) -> &Chart {
            &self.inner.chart
        }

        pub fn chart_arc(&self) -> Arc<Chart> {
            self.inner.chart.clone()
        }

        /// Whether an exact pointwise evaluator backs this field.
        pub fn has_source(&self) -> bool {
            self.inner.source.is_some()
        }

        /// Node-major samples.
        pub fn values(&self) -> &[f64] {
            self.inner.data()
        }

        pub fn components(&self) -> usize {
            self.inner.ncomp
        }

        /// Raw component vector at an arbitrary point.
        pub fn raw_at(&self, x: &[f64]) -> Vec<f64> {
            self.inner.at(x)
        }

        /// The exact pointwise evaluator, if any.
        pub fn source(&self) -> Option<&PointFn> {
            self.inner.source.as_ref()
        }

        /// A copy holding only node samples, dropping the evaluator.
        pub fn to_sampled(&self) -> Self {
            let mut out = self.clone();
            let data = self.values().to_vec();
            out.inner = Samples::from_data(self.inner.chart.clone(), self.inner.ncomp, data).expect("same shape");
            out
        }
    };
}

#[derive(Clone)]
pub struct ScalarField {
    inner: Samples,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField(nodes={}, source={})", self.inner.chart.num_nodes(), self.has_source())
    }
}

impl ScalarField {
    common_field_api!();

    pub fn from_values(chart: Arc<Chart>, values: Vec<f64>) -> Result<Self> {
        Ok(Self { inner: Samples::from_data(chart, 1, values)? })
    }

    pub fn from_fn(chart: Arc<Chart>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { inner: Samples::from_source(chart, 1, Arc::new(move |x: &[f64]| vec![f(x)])) }
    }

    pub fn constant(chart: Arc<Chart>, v: f64) -> Self {
        Self::from_fn(chart, move |_| v)
    }

    pub fn at(&self, x: &[f64]) -> f64 {
        self.inner.at(x)[0]
    }

    pub fn at_node(&self, i: usize) -> f64 {
        self.values()[i]
    }
}

#[derive(Clone)]
pub struct FormField {
    inner: Samples,
    degree: usize,
}

impl fmt::Debug for FormField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FormField(degree={}, nodes={}, source={})", self.degree, self.inner.chart.num_nodes(), self.has_source())
    }
}

impl FormField {
    common_field_api!();

    pub fn from_coeffs(chart: Arc<Chart>, degree: usize, data: Vec<f64>) -> Result<Self> {
        let n = chart.dim();
        if degree > n {
            return Err(Error::DegreeOverflow { degree, dim: n });
        }
        Ok(Self { inner: Samples::from_data(chart, binomial(n, degree), data)?, degree })
    }

    /// Field backed by an evaluator returning the C(n, degree) coefficients at a point.
    pub fn from_fn(chart: Arc<Chart>, degree: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Result<Self> {
        let n = chart.dim();
        if degree > n {
            return Err(Error::DegreeOverflow { degree, dim: n });
        }
        Ok(Self { inner: Samples::from_source(chart, binomial(n, degree), Arc::new(f)), degree })
    }

    pub fn constant(chart: Arc<Chart>, phi: &MultiCovector) -> Result<Self> {
        if phi.dim() != chart.dim() {
            return Err(Error::DimensionMismatch("constant form and chart dimensions differ".into()));
        }
        let c = phi.coeffs().to_vec();
        Self::from_fn(chart, phi.degree(), move |_| c.clone())
    }

    pub fn zero(chart: Arc<Chart>, degree: usize) -> Result<Self> {
        let len = binomial(chart.dim(), degree);
        Self::from_fn(chart, degree, move |_| vec![0.0; len])
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dim(&self) -> usize {
        self.inner.chart.dim()
    }

    pub fn at(&self, x: &[f64]) -> MultiCovector {
        MultiCovector::new(self.dim(), self.degree, self.inner.at(x)).expect("component count")
    }

    pub fn at_node(&self, i: usize) -> MultiCovector {
        MultiCovector::new(self.dim(), self.degree, self.inner.node(i).to_vec()).expect("component count")
    }

    /// The field multiplied by a constant.
    pub fn scaled(&self, f: f64) -> Self {
        Self {
            inner: self.inner.map(self.inner.ncomp, Arc::new(move |c: &[f64]| c.iter().map(|v| v * f).collect())),
            degree: self.degree,
        }
    }

    /// Linear combination sum_i w_i phi_i of fields of equal degree on one chart.
    pub fn combination(terms: &[(f64, FormField)]) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::DimensionMismatch("empty combination".into()))?;
        let chart = first.1.chart_arc();
        let degree = first.1.degree;
        for (_, t) in terms {
            if t.chart() != chart.as_ref() {
                return Err(Error::ChartMismatch);
            }
            if t.degree != degree {
                return Err(Error::DimensionMismatch("degrees differ in combination".into()));
            }
        }
        if terms.iter().all(|(_, t)| t.has_source()) {
            let terms: Vec<(f64, FormField)> = terms.to_vec();
            let len = first.1.components();
            Self::from_fn(chart, degree, move |x| {
                let mut out = vec![0.0; len];
                for (w, t) in &terms {
                    for (o, v) in out.iter_mut().zip(t.raw_at(x)) {
                        *o += w * v;
                    }
                }
                out
            })
        } else {
            let mut data = vec![0.0; first.1.values().len()];
            for (w, t) in terms {
                for (o, v) in data.iter_mut().zip(t.values()) {
                    *o += w * v;
                }
            }
            Self::from_coeffs(chart, degree, data)
        }
    }

    /// Largest coefficient magnitude over the nodes.
    pub fn sup_abs(&self) -> f64 {
        self.values().iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

#[derive(Clone)]
pub struct MetricField {
    inner: Samples,
    constant: Option<PointMetric>,
}

impl fmt::Debug for MetricField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MetricField(nodes={}, source={}, constant={})",
            self.inner.chart.num_nodes(),
            self.has_source(),
            self.constant.is_some()
        )
    }
}

impl MetricField {
    common_field_api!();

    pub fn constant(chart: Arc<Chart>, g: &PointMetric) -> Result<Self> {
        if g.dim() != chart.dim() {
            return Err(Error::DimensionMismatch("metric and chart dimensions differ".into()));
        }
        let entries: Vec<f64> = g.gram().transpose().iter().cloned().collect();
        let n = chart.dim();
        Ok(Self { inner: Samples::from_source(chart, n * n, Arc::new(move |_| entries.clone())), constant: Some(g.clone()) })
    }

    pub fn flat(chart: Arc<Chart>) -> Self {
        let n = chart.dim();
        Self::constant(chart, &PointMetric::identity(n)).expect("identity metric")
    }

    /// Field backed by an evaluator returning the row-major n x n gram matrix.
    pub fn from_fn(chart: Arc<Chart>, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        let n = chart.dim();
        Self { inner: Samples::from_source(chart, n * n, Arc::new(f)), constant: None }
    }

    /// Sample-only field; every node must hold a symmetric positive definite matrix.
    pub fn from_values(chart: Arc<Chart>, data: Vec<f64>) -> Result<Self> {
        let n = chart.dim();
        let inner = Samples::from_data(chart, n * n, data)?;
        for c in inner.data().chunks(n * n) {
            PointMetric::new(DMatrix::from_row_slice(n, n, c))?;
        }
        Ok(Self { inner, constant: None })
    }

    pub fn dim(&self) -> usize {
        self.inner.chart.dim()
    }

    /// The constant value, when the field was built as a constant metric.
    pub fn as_constant(&self) -> Option<&PointMetric> {
        self.constant.as_ref()
    }

    pub fn at(&self, x: &[f64]) -> PointMetric {
        if let Some(g) = &self.constant {
            return g.clone();
        }
        let n = self.dim();
        PointMetric::from_trusted(DMatrix::from_row_slice(n, n, &self.inner.at(x)))
    }

    pub fn at_node(&self, i: usize) -> PointMetric {
        if let Some(g) = &self.constant {
            return g.clone();
        }
        let n = self.dim();
        PointMetric::from_trusted(DMatrix::from_row_slice(n, n, self.inner.node(i)))
    }

    /// The conformally scaled metric f * g.
    pub fn conformal(&self, f: &ScalarField) -> Result<Self> {
        if f.chart() != self.chart() {
            return Err(Error::ChartMismatch);
        }
        let n = self.dim();
        if self.has_source() && f.has_source() {
            let g = self.clone();
            let f = f.clone();
            Ok(Self::from_fn(self.chart_arc(), move |x| {
                let s = f.at(x);
                g.raw_at(x).iter().map(|v| v * s).collect()
            }))
        } else {
            let data: Vec<f64> = self
                .values()
                .chunks(n * n)
                .zip(f.values())
                .flat_map(|(c, s)| c.iter().map(move |v| v * s).collect::<Vec<_>>())
                .collect();
            Self::from_values(self.chart_arc(), data)
        }
    }

    /// Largest second difference of the samples along any axis, a smoothness indicator.
    pub fn second_difference_bound(&self) -> f64 {
        let chart = self.chart();
        let nc = self.components();
        let data = self.values();
        let mut worst = 0.0f64;
        for i in 0..chart.num_nodes() {
            let multi = chart.node_multi(i);
            for a in 0..chart.dim() {
                let r = chart.resolution()[a];
                if !chart.is_periodic() && (multi[a] == 0 || multi[a] + 1 == r) {
                    continue;
                }
                let mut lo = multi.clone();
                let mut hi = multi.clone();
                lo[a] = (multi[a] + r - 1) % r;
                hi[a] = (multi[a] + 1) % r;
                let (il, ih) = (chart.node_index(&lo), chart.node_index(&hi));
                for c in 0..nc {
                    let d = data[il * nc + c] - 2.0 * data[i * nc + c] + data[ih * nc + c];
                    worst = worst.max(d.abs());
                }
            }
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_reproduces_smooth_periodic_fields() {
        let chart = Arc::new(Chart::unit_torus(2, 64).unwrap());
        let f = |x: &[f64]| (2.0 * std::f64::consts::PI * x[0]).sin() * (2.0 * std::f64::consts::PI * x[1]).cos();
        let sampled = ScalarField::from_fn(chart, f).to_sampled();
        for x in [[0.013, 0.77], [0.5, 0.5], [0.999, 0.001]] {
            assert!((sampled.at(&x) - f(&x)).abs() < 1e-7);
        }
    }

    #[test]
    fn interpolation_on_boxes_clamps_stencils() {
        let chart = Arc::new(Chart::boxed(vec![40, 40], vec![-1.0, -1.0], vec![2.0, 2.0], 0.1).unwrap());
        let f = |x: &[f64]| x[0] * x[0] - 0.5 * x[1];
        let sampled = ScalarField::from_fn(chart, f).to_sampled();
        assert!((sampled.at(&[0.99, -0.97]) - f(&[0.99, -0.97])).abs() < 1e-12);
    }

    #[test]
    fn sampled_metric_must_be_positive() {
        let chart = Arc::new(Chart::unit_torus(1, 16).unwrap());
        let mut data = vec![1.0; 16];
        data[3] = -1.0;
        assert!(MetricField::from_values(chart, data).is_err());
    }

    #[test]
    fn combination_of_sourced_fields_stays_sourced() {
        let chart = Arc::new(Chart::unit_torus(2, 16).unwrap());
        let a = FormField::constant(chart.clone(), &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let b = FormField::constant(chart, &MultiCovector::basis(2, &[1]).unwrap()).unwrap();
        let c = FormField::combination(&[(2.0, a), (-1.0, b)]).unwrap();
        assert!(c.has_source());
        assert_eq!(c.at(&[0.3, 0.1]).coeffs(), &[2.0, -1.0]);
    }
}
