//! Pointwise exterior algebra: constant metrics, k-covectors and simple k-vectors.
//!
//! A k-covector on R^n stores one coefficient per strictly increasing multi-index,
//! listed in lexicographic order, so `dx^0 ^ dx^2` in R^3 is entry 1 of degree 2.

use nalgebra::DMatrix;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Largest ambient dimension supported by the dense multi-index code.
pub const MAX_DIM: usize = 8;

/// Binomial coefficient C(n, k), zero when k > n.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// All strictly increasing k-tuples of 0..n in lexicographic order.
pub fn multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(binomial(n, k));
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Lexicographic rank of a strictly increasing tuple among `multi_indices(n, idx.len())`.
pub fn index_rank(n: usize, idx: &[usize]) -> usize {
    let k = idx.len();
    let mut rank = 0;
    let mut prev = 0usize;
    for (i, &a) in idx.iter().enumerate() {
        for v in prev..a {
            rank += binomial(n - v - 1, k - i - 1);
        }
        prev = a + 1;
    }
    rank
}

/// Determinant of a small dense matrix stored row-major, by partial-pivot elimination.
/// The buffer is overwritten.
pub fn small_det(a: &mut [f64], m: usize) -> f64 {
    let mut det = 1.0;
    for c in 0..m {
        let mut p = c;
        let mut best = a[c * m + c].abs();
        for r in c + 1..m {
            let v = a[r * m + c].abs();
            if v > best {
                best = v;
                p = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if p != c {
            for j in 0..m {
                a.swap(c * m + j, p * m + j);
            }
            det = -det;
        }
        let piv = a[c * m + c];
        det *= piv;
        for r in c + 1..m {
            let f = a[r * m + c] / piv;
            if f != 0.0 {
                for j in c + 1..m {
                    a[r * m + j] -= f * a[c * m + j];
                }
            }
        }
    }
    det
}

/// Determinant of the m x m submatrix of `v` (n x m) on the given rows.
pub fn row_minor(v: &DMatrix<f64>, rows: &[usize]) -> f64 {
    let m = rows.len();
    if m == 0 {
        return 1.0;
    }
    let mut buf = [0.0f64; MAX_DIM * MAX_DIM];
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..m {
            buf[i * m + j] = v[(r, j)];
        }
    }
    small_det(&mut buf[..m * m], m)
}

/// A symmetric positive definite bilinear form on R^n.
#[derive(Clone, Debug, PartialEq)]
pub struct PointMetric {
    gram: DMatrix<f64>,
}

impl PointMetric {
    /// Validates symmetry (relative 1e-10) and positive definiteness.
    pub fn new(gram: DMatrix<f64>) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(Error::InvalidMetric(format!("gram matrix is {}x{}", gram.nrows(), gram.ncols())));
        }
        if n > MAX_DIM {
            return Err(Error::DimensionMismatch(format!("dimension {n} above {MAX_DIM}")));
        }
        let scale = gram.amax().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..i {
                if (gram[(i, j)] - gram[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidMetric("not symmetric".into()));
                }
            }
        }
        if !gram.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidMetric("non-finite entry".into()));
        }
        let sym = (&gram + gram.transpose()) * 0.5;
        if sym.clone().cholesky().is_none() {
            return Err(Error::InvalidMetric("not positive definite".into()));
        }
        Ok(Self { gram: sym })
    }

    /// Metric from a gram matrix already known to be SPD; only symmetrises.
    pub(crate) fn from_trusted(gram: DMatrix<f64>) -> Self {
        let sym = (&gram + gram.transpose()) * 0.5;
        Self { gram: sym }
    }

    pub fn identity(n: usize) -> Self {
        Self { gram: DMatrix::identity(n, n) }
    }

    pub fn dim(&self) -> usize {
        self.gram.nrows()
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self { gram: &self.gram * f }
    }

    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * self.gram[(i, j)] * b[j];
            }
        }
        s
    }

    pub fn norm(&self, a: &[f64]) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Lower Cholesky factor L with g = L L^T.
    pub fn cholesky_lower(&self) -> DMatrix<f64> {
        self.gram.clone().cholesky().map(|c| c.l()).unwrap_or_else(|| DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.gram.clone().cholesky().map(|c| c.inverse()).unwrap_or_else(|| DMatrix::identity(self.dim(), self.dim()))
    }

    pub fn determinant(&self) -> f64 {
        self.gram.determinant()
    }
}

/// An element of Lambda^k (R^n)^* in the coordinate basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiCovector {
    dim: usize,
    degree: usize,
    coeffs: Vec<f64>,
}

impl MultiCovector {
    pub fn new(dim: usize, degree: usize, coeffs: Vec<f64>) -> Result<Self> {
        if degree > dim {
            return Err(Error::DegreeOverflow { degree, dim });
        }
        if dim > MAX_DIM {
            return Err(Error::DimensionMismatch(format!("dimension {dim} above {MAX_DIM}")));
        }
        let len = binomial(dim, degree);
        if coeffs.len() != len {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients given, C({dim},{degree}) = {len} expected",
                coeffs.len()
            )));
        }
        Ok(Self { dim, degree, coeffs })
    }

    pub fn zero(dim: usize, degree: usize) -> Self {
        Self { dim, degree, coeffs: vec![0.0; binomial(dim, degree)] }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        Self { dim, degree: 0, coeffs: vec![value] }
    }

    /// The basis covector dx^{i_1} ^ ... ^ dx^{i_k}; the indices need not be sorted.
    pub fn basis(dim: usize, indices: &[usize]) -> Result<Self> {
        let mut out = Self::scalar(dim, 1.0);
        for &i in indices {
            if i >= dim {
                return Err(Error::DimensionMismatch(format!("index {i} in dimension {dim}")));
            }
            let mut c = Self::zero(dim, 1);
            c.coeffs[i] = 1.0;
            out = out.wedge(&c)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.degree != other.degree {
            return Err(Error::DimensionMismatch(format!(
                "degree {} in R^{} against degree {} in R^{}",
                self.degree, self.dim, other.degree, other.dim
            )));
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_same(other)?;
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(Self { coeffs, ..*self })
    }

    /// Exterior product with the shuffle sign.
    pub fn wedge(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch(format!("R^{} against R^{}", self.dim, other.dim)));
        }
        let n = self.dim;
        let k = self.degree + other.degree;
        if k > n {
            return Err(Error::DegreeOverflow { degree: k, dim: n });
        }
        let mut out = Self::zero(n, k);
        let ia = multi_indices(n, self.degree);
        let ib = multi_indices(n, other.degree);
        let mut merged = Vec::with_capacity(k);
        for (a, ca) in ia.iter().zip(&self.coeffs) {
            if *ca == 0.0 {
                continue;
            }
            for (b, cb) in ib.iter().zip(&other.coeffs) {
                if *cb == 0.0 {
                    continue;
                }
                if a.iter().any(|x| b.contains(x)) {
                    continue;
                }
                let mut inversions = 0usize;
                for x in a {
                    inversions += b.iter().filter(|y| *y < x).count();
                }
                merged.clear();
                merged.extend_from_slice(a);
                merged.extend_from_slice(b);
                merged.sort_unstable();
                let sign = if inversions.is_multiple_of(2) { 1.0 } else { -1.0 };
                out.coeffs[index_rank(n, &merged)] += sign * ca * cb;
            }
        }
        Ok(out)
    }

    /// Pullback under the linear map P (n x n): (P^* phi)(v..) = phi(P v, ..).
    pub fn pullback(&self, p: &DMatrix<f64>) -> Result<Self> {
        let n = self.dim;
        if p.nrows() != n || p.ncols() != n {
            return Err(Error::DimensionMismatch("pullback map must be n x n".into()));
        }
        let k = self.degree;
        if k == 0 {
            return Ok(self.clone());
        }
        let idx = multi_indices(n, k);
        let mut out = Self::zero(n, k);
        let mut buf = [0.0f64; MAX_DIM * MAX_DIM];
        for (cj, j) in out.coeffs.iter_mut().zip(&idx) {
            let mut s = 0.0;
            for (ci, i) in self.coeffs.iter().zip(&idx) {
                if *ci == 0.0 {
                    continue;
                }
                for (r, &ri) in i.iter().enumerate() {
                    for (c, &cc) in j.iter().enumerate() {
                        buf[r * k + c] = p[(ri, cc)];
                    }
                }
                s += ci * small_det(&mut buf[..k * k], k);
            }
            *cj = s;
        }
        Ok(out)
    }

    /// Pullback along a linear map whose matrix is `map` (rows: target coords, cols: source
    /// coords), producing a covector on the source space of dimension `map.ncols()`.
    pub fn pullback_rect(&self, map: &DMatrix<f64>) -> Result<Self> {
        if map.nrows() != self.dim {
            return Err(Error::DimensionMismatch("pullback map rows must equal dimension".into()));
        }
        let src = map.ncols();
        let k = self.degree;
        if k > src {
            return Err(Error::DegreeOverflow { degree: k, dim: src });
        }
        if k == 0 {
            return Ok(Self::scalar(src, self.coeffs[0]));
        }
        let idx = multi_indices(self.dim, k);
        let jdx = multi_indices(src, k);
        let mut out = Self::zero(src, k);
        let mut buf = [0.0f64; MAX_DIM * MAX_DIM];
        for (cj, j) in out.coeffs.iter_mut().zip(&jdx) {
            let mut s = 0.0;
            for (ci, i) in self.coeffs.iter().zip(&idx) {
                if *ci == 0.0 {
                    continue;
                }
                for (r, &ri) in i.iter().enumerate() {
                    for (c, &cc) in j.iter().enumerate() {
                        buf[r * k + c] = map[(ri, cc)];
                    }
                }
                s += ci * small_det(&mut buf[..k * k], k);
            }
            *cj = s;
        }
        Ok(out)
    }

    /// Interior product with a vector: (iota_v phi)(w..) = phi(v, w..).
    pub fn contract(&self, v: &[f64]) -> Result<Self> {
        let n = self.dim;
        if v.len() != n {
            return Err(Error::DimensionMismatch("contraction vector length".into()));
        }
        if self.degree == 0 {
            return Err(Error::DegreeOverflow { degree: 0, dim: n });
        }
        let k = self.degree;
        let mut out = Self::zero(n, k - 1);
        for (c, i) in self.coeffs.iter().zip(multi_indices(n, k)) {
            if *c == 0.0 {
                continue;
            }
            for pos in 0..k {
                let vi = v[i[pos]];
                if vi == 0.0 {
                    continue;
                }
                let rest: Vec<usize> = i.iter().enumerate().filter(|(q, _)| *q != pos).map(|(_, &x)| x).collect();
                let sign = if pos % 2 == 0 { 1.0 } else { -1.0 };
                out.coeffs[index_rank(n, &rest)] += sign * vi * c;
            }
        }
        Ok(out)
    }
}

impl Add for &MultiCovector {
    type Output = MultiCovector;
    fn add(self, rhs: &MultiCovector) -> MultiCovector {
        self.try_add(rhs).expect("covector addition requires matching shapes")
    }
}

impl Sub for &MultiCovector {
    type Output = MultiCovector;
    fn sub(self, rhs: &MultiCovector) -> MultiCovector {
        self.try_add(&(-rhs)).expect("covector subtraction requires matching shapes")
    }
}

impl Neg for &MultiCovector {
    type Output = MultiCovector;
    fn neg(self) -> MultiCovector {
        self * -1.0
    }
}

impl Mul<f64> for &MultiCovector {
    type Output = MultiCovector;
    fn mul(self, f: f64) -> MultiCovector {
        MultiCovector { dim: self.dim, degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * f).collect() }
    }
}

/// A simple m-vector w * v_1 ^ ... ^ v_m stored as the n x m matrix of its factors.
#[derive(Clone, Debug, PartialEq)]
pub struct SimpleFrame {
    pub vectors: DMatrix<f64>,
    pub weight: f64,
}

impl SimpleFrame {
    pub fn new(vectors: DMatrix<f64>, weight: f64) -> Self {
        Self { vectors, weight }
    }

    pub fn degree(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }
}

/// phi(V) = w * sum_I phi_I det(V[I, :]).
pub fn evaluate(phi: &MultiCovector, v: &SimpleFrame) -> Result<f64> {
    if v.dim() != phi.dim || v.degree() != phi.degree {
        return Err(Error::DimensionMismatch(format!(
            "degree-{} covector in R^{} against {}-frame in R^{}",
            phi.degree,
            phi.dim,
            v.degree(),
            v.dim()
        )));
    }
    if phi.degree == 0 {
        return Ok(v.weight * phi.coeffs[0]);
    }
    let mut s = 0.0;
    for (c, i) in phi.coeffs.iter().zip(multi_indices(phi.dim, phi.degree)) {
        if *c != 0.0 {
            s += c * row_minor(&v.vectors, &i);
        }
    }
    Ok(v.weight * s)
}

/// |w| * sqrt(det(V^T g V)).
pub fn simple_norm(v: &SimpleFrame, g: &PointMetric) -> Result<f64> {
    if v.dim() != g.dim() {
        return Err(Error::DimensionMismatch("frame and metric dimensions differ".into()));
    }
    if v.degree() == 0 {
        return Ok(v.weight.abs());
    }
    let gram = v.vectors.transpose() * g.gram() * &v.vectors;
    Ok(v.weight.abs() * gram.determinant().max(0.0).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dx(n: usize, i: &[usize]) -> MultiCovector {
        MultiCovector::basis(n, i).unwrap()
    }

    #[test]
    fn ranks_follow_lexicographic_order() {
        for n in 1..=6 {
            for k in 0..=n {
                for (r, idx) in multi_indices(n, k).iter().enumerate() {
                    assert_eq!(index_rank(n, idx), r);
                }
            }
        }
    }

    #[test]
    fn wedge_of_coordinate_covectors() {
        let w = dx(3, &[0]).wedge(&dx(3, &[1])).unwrap();
        assert_eq!(w.coeffs(), &[1.0, 0.0, 0.0]);
        let w = dx(3, &[1]).wedge(&dx(3, &[0])).unwrap();
        assert_eq!(w.coeffs(), &[-1.0, 0.0, 0.0]);
    }

    #[test]
    fn wedge_with_itself_vanishes() {
        let a = MultiCovector::new(4, 1, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(a.wedge(&a).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn degree_overflow_is_reported() {
        let a = dx(2, &[0, 1]);
        assert!(matches!(a.wedge(&dx(2, &[0])), Err(Error::DegreeOverflow { .. })));
    }

    #[test]
    fn evaluate_on_coordinate_plane() {
        let phi = dx(3, &[0, 1]);
        let v = SimpleFrame::new(DMatrix::from_column_slice(3, 2, &[1., 0., 0., 0., 1., 0.]), 2.0);
        assert_eq!(evaluate(&phi, &v).unwrap(), 2.0);
    }

    #[test]
    fn simple_norm_scales_with_metric() {
        let v = SimpleFrame::new(DMatrix::from_column_slice(2, 1, &[1., 0.]), 1.0);
        let g = PointMetric::identity(2).scaled(4.0);
        assert!((simple_norm(&v, &g).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_indefinite_metric() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(PointMetric::new(g).is_err());
    }

    #[test]
    fn contraction_matches_definition() {
        let phi = dx(3, &[0, 2]);
        let c = phi.contract(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(c.coeffs(), &[-1.0, 0.0, 0.0]);
    }

    #[test]
    fn pullback_by_identity_is_identity() {
        let phi = MultiCovector::new(4, 2, (0..6).map(|i| i as f64 - 2.5).collect()).unwrap();
        let p = DMatrix::identity(4, 4);
        assert_eq!(phi.pullback(&p).unwrap(), phi);
    }

    #[test]
    fn pullback_is_multiplicative_on_wedges() {
        let a = MultiCovector::new(3, 1, vec![1.0, 2.0, -1.0]).unwrap();
        let b = MultiCovector::new(3, 1, vec![0.5, -1.0, 3.0]).unwrap();
        let p = DMatrix::from_row_slice(3, 3, &[1., 2., 0., 0., 1., 1., 3., 0., 1.]);
        let lhs = a.wedge(&b).unwrap().pullback(&p).unwrap();
        let rhs = a.pullback(&p).unwrap().wedge(&b.pullback(&p).unwrap()).unwrap();
        for (x, y) in lhs.coeffs().iter().zip(rhs.coeffs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
