//! Binary field files.
//!
//! Layout, all integers and floats little-endian:
//!
//! - magic `b"CALFIELD"`, then format version `u32` (currently 1)
//! - kind `u8` (0 scalar, 1 form, 2 metric), dimension `u8`, topology `u8` (0 periodic,
//!   1 box), form degree `u8` (0 unless kind is form)
//! - box margin `f64` (0 on periodic charts)
//! - per axis: resolution `u64`; then per axis spacing `f64`; then per axis origin `f64`
//! - components per node `u64`, node count `u64`
//! - node-major samples `f64`; metrics store the full row-major n x n matrix
//!
//! Evaluators are not stored; a file always loads as a sample-only field.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::chart::{Chart, Topology};
use crate::fields::field::{FormField, MetricField, ScalarField};

const MAGIC: &[u8; 8] = b"CALFIELD";
const VERSION: u32 = 1;

/// Any field kind, as read back from a file.
#[derive(Clone, Debug)]
pub enum AnyField {
    Scalar(ScalarField),
    Form(FormField),
    Metric(MetricField),
}

fn header(chart: &Chart, kind: u8, degree: u8, ncomp: usize) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    let (topo, margin) = match chart.topology() {
        Topology::Periodic => (0u8, 0.0),
        Topology::Box { margin } => (1u8, *margin),
    };
    b.extend_from_slice(&[kind, chart.dim() as u8, topo, degree]);
    b.extend_from_slice(&margin.to_le_bytes());
    for &r in chart.resolution() {
        b.extend_from_slice(&(r as u64).to_le_bytes());
    }
    for &h in chart.spacing() {
        b.extend_from_slice(&h.to_le_bytes());
    }
    for &o in chart.origin() {
        b.extend_from_slice(&o.to_le_bytes());
    }
    b.extend_from_slice(&(ncomp as u64).to_le_bytes());
    b.extend_from_slice(&(chart.num_nodes() as u64).to_le_bytes());
    b
}

fn encode(chart: &Chart, kind: u8, degree: u8, ncomp: usize, values: &[f64]) -> Vec<u8> {
    let mut b = header(chart, kind, degree, ncomp);
    b.reserve(values.len() * 8);
    for v in values {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

pub fn encode_field(field: &AnyField) -> Vec<u8> {
    match field {
        AnyField::Scalar(f) => encode(f.chart(), 0, 0, 1, f.values()),
        AnyField::Form(f) => encode(f.chart(), 1, f.degree() as u8, f.components(), f.values()),
        AnyField::Metric(f) => encode(f.chart(), 2, 0, f.components(), f.values()),
    }
}

pub fn write_field(path: &Path, field: &AnyField) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&encode_field(field))?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<AnyField> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let kind = c.u8()?;
    let dim = c.u8()? as usize;
    let topo = c.u8()?;
    let degree = c.u8()? as usize;
    let margin = c.f64()?;
    if dim == 0 || dim > crate::exterior::MAX_DIM {
        return Err(Error::Format(format!("dimension {dim}")));
    }
    let mut resolution = Vec::with_capacity(dim);
    for _ in 0..dim {
        resolution.push(c.u64()? as usize);
    }
    let spacing: Vec<f64> = (0..dim).map(|_| c.f64()).collect::<Result<_>>()?;
    let origin: Vec<f64> = (0..dim).map(|_| c.f64()).collect::<Result<_>>()?;
    let ncomp = c.u64()? as usize;
    let nodes = c.u64()? as usize;
    let chart = match topo {
        0 => {
            let extent = resolution.iter().zip(&spacing).map(|(&r, &h)| r as f64 * h).collect();
            Chart::periodic(resolution, extent)?
        }
        1 => {
            let extent = resolution.iter().zip(&spacing).map(|(&r, &h)| (r - 1) as f64 * h).collect();
            Chart::boxed(resolution, origin.clone(), extent, margin)?
        }
        t => return Err(Error::Format(format!("topology tag {t}"))),
    };
    if nodes != chart.num_nodes() {
        return Err(Error::Format("node count disagrees with resolution".into()));
    }
    let count = nodes.checked_mul(ncomp).ok_or_else(|| Error::Format("sample count overflows".into()))?;
    let raw = c.take(count.checked_mul(8).ok_or_else(|| Error::Format("sample count overflows".into()))?)?;
    let values: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes".into()));
    }
    let chart = Arc::new(chart);
    if topo == 0 && origin.iter().any(|&o| o != 0.0) {
        return Err(Error::Format("periodic charts have zero origin".into()));
    }
    match kind {
        0 => Ok(AnyField::Scalar(ScalarField::from_values(chart, values)?)),
        1 => Ok(AnyField::Form(FormField::from_coeffs(chart, degree, values)?)),
        2 => Ok(AnyField::Metric(MetricField::from_values(chart, values)?)),
        k => Err(Error::Format(format!("kind tag {k}"))),
    }
}

pub fn read_field(path: &Path) -> Result<AnyField> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_field(&bytes)
}
