//! Structured charts: uniform node grids on a flat torus or a box.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exterior::MAX_DIM;

/// Minimum number of nodes per axis.
pub const MIN_RESOLUTION: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Topology {
    /// Flat torus; node i sits at origin + i * spacing and the period is resolution * spacing.
    Periodic,
    /// Closed box; nodes cover [origin, origin + (resolution - 1) * spacing]. Fields must have
    /// support away from the outer `margin` fraction of each axis.
    Box { margin: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Chart {
    dim: usize,
    topology: Topology,
    resolution: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
}

impl Chart {
    fn validated(self) -> Result<Self> {
        if self.dim == 0 || self.dim > MAX_DIM {
            return Err(Error::DimensionMismatch(format!("chart dimension {}", self.dim)));
        }
        if self.resolution.len() != self.dim || self.spacing.len() != self.dim || self.origin.len() != self.dim {
            return Err(Error::DimensionMismatch("chart axis lists differ in length".into()));
        }
        if let Some(r) = self.resolution.iter().find(|&&r| r < MIN_RESOLUTION) {
            return Err(Error::Config(format!("resolution {r} below {MIN_RESOLUTION}")));
        }
        if self.spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(Error::Config("spacing must be positive".into()));
        }
        if let Topology::Box { margin } = self.topology {
            if !(0.0..0.5).contains(&margin) {
                return Err(Error::Config(format!("box margin {margin} outside [0, 0.5)")));
            }
            for &r in &self.resolution {
                if (margin * r as f64).floor() < 3.0 {
                    return Err(Error::Config(format!("box margin {margin} leaves fewer than 3 nodes at resolution {r}")));
                }
            }
        }
        Ok(self)
    }

    /// Flat torus R^n / (extent_1 Z x ... x extent_n Z).
    pub fn periodic(resolution: Vec<usize>, extent: Vec<f64>) -> Result<Self> {
        let dim = resolution.len();
        let spacing = resolution.iter().zip(&extent).map(|(&r, &e)| e / r as f64).collect();
        Self { dim, topology: Topology::Periodic, resolution, spacing, origin: vec![0.0; dim] }.validated()
    }

    /// Unit flat torus with equal resolution on each axis.
    pub fn unit_torus(dim: usize, resolution: usize) -> Result<Self> {
        Self::periodic(vec![resolution; dim], vec![1.0; dim])
    }

    /// Box [origin, origin + extent] sampled with `resolution` nodes per axis (endpoints included).
    pub fn boxed(resolution: Vec<usize>, origin: Vec<f64>, extent: Vec<f64>, margin: f64) -> Result<Self> {
        let dim = resolution.len();
        let spacing = resolution.iter().zip(&extent).map(|(&r, &e)| e / (r.max(2) - 1) as f64).collect();
        Self { dim, topology: Topology::Box { margin }, resolution, spacing, origin }.validated()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.topology, Topology::Periodic)
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    /// Largest grid spacing, the "h" of the tolerances.
    pub fn h(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn num_nodes(&self) -> usize {
        self.resolution.iter().product()
    }

    /// Periods of a periodic chart.
    pub fn periods(&self) -> Option<Vec<f64>> {
        match self.topology {
            Topology::Periodic => Some(self.resolution.iter().zip(&self.spacing).map(|(&r, &h)| r as f64 * h).collect()),
            Topology::Box { .. } => None,
        }
    }

    /// Multi-index of node i; the last axis runs fastest.
    pub fn node_multi(&self, mut i: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for a in (0..self.dim).rev() {
            out[a] = i % self.resolution[a];
            i /= self.resolution[a];
        }
        out
    }

    pub fn node_index(&self, multi: &[usize]) -> usize {
        let mut i = 0;
        for a in 0..self.dim {
            i = i * self.resolution[a] + multi[a];
        }
        i
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.resolution[axis + 1..].iter().product()
    }

    pub fn node_coords(&self, i: usize) -> Vec<f64> {
        self.node_multi(i).iter().enumerate().map(|(a, &k)| self.origin[a] + k as f64 * self.spacing[a]).collect()
    }

    /// Nearest node to x (wrapping on periodic charts, clamping on boxes).
    pub fn nearest_node(&self, x: &[f64]) -> usize {
        let mut multi = vec![0usize; self.dim];
        for a in 0..self.dim {
            let r = self.resolution[a] as i64;
            let k = ((x[a] - self.origin[a]) / self.spacing[a]).round() as i64;
            multi[a] = if self.is_periodic() { k.rem_euclid(r) as usize } else { k.clamp(0, r - 1) as usize };
        }
        self.node_index(&multi)
    }

    /// Replace a displacement by its shortest lattice representative, componentwise.
    pub fn wrap_displacement(&self, y: &mut [f64]) {
        if let Some(p) = self.periods() {
            for a in 0..self.dim {
                y[a] -= p[a] * (y[a] / p[a]).round();
            }
        }
    }

    /// Whether node i lies in the boundary margin of a box chart.
    pub fn in_margin(&self, i: usize) -> bool {
        match self.topology {
            Topology::Periodic => false,
            Topology::Box { margin } => self.node_multi(i).iter().zip(&self.resolution).any(|(&k, &r)| {
                let band = (margin * r as f64).floor() as usize;
                k < band || k + band >= r
            }),
        }
    }

    /// Whether x lies inside the box (always true on periodic charts).
    pub fn contains(&self, x: &[f64]) -> bool {
        match self.topology {
            Topology::Periodic => true,
            Topology::Box { .. } => (0..self.dim).all(|a| {
                let hi = self.origin[a] + (self.resolution[a] - 1) as f64 * self.spacing[a];
                x[a] >= self.origin[a] - 1e-12 && x[a] <= hi + 1e-12
            }),
        }
    }

    /// Whether x lies inside the box and outside its margin band.
    pub fn in_interior(&self, x: &[f64]) -> bool {
        match self.topology {
            Topology::Periodic => true,
            Topology::Box { margin } => (0..self.dim).all(|a| {
                let len = (self.resolution[a] - 1) as f64 * self.spacing[a];
                x[a] >= self.origin[a] + margin * len && x[a] <= self.origin[a] + (1.0 - margin) * len
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_indexing_round_trips() {
        let c = Chart::periodic(vec![16, 20, 18], vec![1.0, 2.0, 1.0]).unwrap();
        for i in [0, 1, 17, 555, c.num_nodes() - 1] {
            assert_eq!(c.node_index(&c.node_multi(i)), i);
            assert_eq!(c.nearest_node(&c.node_coords(i)), i);
        }
        assert_eq!(c.stride(2), 1);
        assert_eq!(c.stride(0), 20 * 18);
    }

    #[test]
    fn nearest_node_wraps() {
        let c = Chart::unit_torus(2, 16).unwrap();
        assert_eq!(c.nearest_node(&[1.0, -0.001]), 0);
        let mut y = [0.9, -0.6];
        c.wrap_displacement(&mut y);
        assert!((y[0] + 0.1).abs() < 1e-15 && (y[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_coarse_grids_and_thin_margins() {
        assert!(Chart::unit_torus(2, 8).is_err());
        assert!(Chart::boxed(vec![20, 20], vec![0.0; 2], vec![1.0; 2], 0.1).is_err());
        assert!(Chart::boxed(vec![40, 40], vec![0.0; 2], vec![1.0; 2], 0.1).is_ok());
    }
}
