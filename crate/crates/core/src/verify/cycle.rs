//! Weighted cycles, their mass and pairing with forms, and the randomized competitor sweep.
//!
//! Competitors are normal graphs over each component: the base plus a random trigonometric
//! perturbation of at most 8 modes and total amplitude at most epsilon. Curves in the plane
//! move along their rotated tangent; other components move in their height coordinates,
//! those along which the parametrisation does not wind. Every competitor is homologous to the
//! base, so a calibration bounds its mass from below by the common pairing.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fields::field::{FormField, MetricField};
use crate::fields::quadrature::{integrate_form_at, volume_at};
use crate::tubular::submanifold::{Parametrization, Submanifold};

/// A current of integration sum t_i [M_i].
#[derive(Clone, Debug)]
pub struct Cycle {
    pub components: Vec<(Submanifold, f64)>,
}

impl Cycle {
    pub fn new(components: Vec<(Submanifold, f64)>) -> Result<Self> {
        let Some((first, _)) = components.first() else {
            return Err(Error::InvalidSubmanifold("empty cycle".into()));
        };
        let m = first.dim();
        if components.iter().any(|(c, t)| c.dim() != m || !t.is_finite()) {
            return Err(Error::InvalidSubmanifold("cycle components of mixed dimension or non-finite weight".into()));
        }
        Ok(Self { components })
    }

    pub fn single(m: Submanifold) -> Self {
        Self { components: vec![(m, 1.0)] }
    }

    pub fn degree(&self) -> usize {
        self.components[0].0.dim()
    }
}

/// Quadrature resolution used for cycles: finer than the parameter grid for curves.
fn quadrature_res(m: &Submanifold) -> usize {
    match m.dim() {
        1 => (4 * m.resolution()).max(1024),
        2 => 2 * m.resolution(),
        _ => m.resolution(),
    }
}

/// Mass sum |t_i| Vol_G(M_i).
pub fn mass(t: &Cycle, g: &MetricField) -> Result<f64> {
    t.components.iter().map(|(m, w)| Ok(w.abs() * volume_at(m, g, quadrature_res(m))?)).sum()
}

/// T(phi) = sum t_i int_{M_i} phi.
pub fn pairing(t: &Cycle, phi: &FormField) -> Result<f64> {
    if phi.degree() != t.degree() {
        return Err(Error::DimensionMismatch(format!("{}-form paired with a {}-cycle", phi.degree(), t.degree())));
    }
    t.components.iter().map(|(m, w)| Ok(w * integrate_form_at(phi, m, quadrature_res(m))?)).sum()
}

/// One trigonometric mode a cos(2 pi k.u + phase) along a direction.
#[derive(Clone, Debug, Serialize)]
pub struct Mode {
    pub frequency: Vec<i32>,
    pub amplitude: f64,
    pub phase: f64,
    /// Ambient weights of the displacement; ignored for plane curves.
    pub direction: Vec<f64>,
}

impl Mode {
    fn arg(&self, u: &[f64]) -> f64 {
        2.0 * std::f64::consts::PI * self.frequency.iter().zip(u).map(|(k, x)| *k as f64 * x).sum::<f64>() + self.phase
    }
}

/// The base parametrisation displaced by a sum of modes.
struct Perturbed {
    base: Arc<dyn Parametrization>,
    modes: Vec<Mode>,
    plane_curve: bool,
}

impl Perturbed {
    /// Scalar profile p(u) = sum a cos(arg) and its parameter gradient, per mode direction.
    fn displacement(&self, u: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let n = self.base.ambient();
        let m = self.base.dim();
        let mut disp = vec![0.0; n];
        let mut jac = DMatrix::zeros(n, m);
        if self.plane_curve {
            let j = self.base.jacobian(u);
            let hs = self.base.hessian(u);
            let normal = [-j[(1, 0)], j[(0, 0)]];
            let dnormal = [-hs[1][(0, 0)], hs[0][(0, 0)]];
            let (mut p, mut dp) = (0.0, 0.0);
            for mode in &self.modes {
                let a = mode.arg(u);
                p += mode.amplitude * a.cos();
                dp -= mode.amplitude * a.sin() * 2.0 * std::f64::consts::PI * mode.frequency[0] as f64;
            }
            for k in 0..2 {
                disp[k] = p * normal[k];
                jac[(k, 0)] = dp * normal[k] + p * dnormal[k];
            }
            return (disp, jac);
        }
        for mode in &self.modes {
            let a = mode.arg(u);
            for k in 0..n {
                disp[k] += mode.amplitude * a.cos() * mode.direction[k];
                for b in 0..m {
                    jac[(k, b)] -=
                        mode.amplitude * a.sin() * 2.0 * std::f64::consts::PI * mode.frequency[b] as f64 * mode.direction[k];
                }
            }
        }
        (disp, jac)
    }
}

impl Parametrization for Perturbed {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn ambient(&self) -> usize {
        self.base.ambient()
    }

    fn point(&self, u: &[f64]) -> Vec<f64> {
        let (d, _) = self.displacement(u);
        self.base.point(u).iter().zip(d).map(|(a, b)| a + b).collect()
    }

    fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        self.base.jacobian(u) + self.displacement(u).1
    }

    fn hessian(&self, u: &[f64]) -> Vec<DMatrix<f64>> {
        // central differences of the analytic Jacobian
        let m = self.dim();
        let n = self.ambient();
        let h = 1e-5;
        let mut out = vec![DMatrix::zeros(m, m); n];
        for b in 0..m {
            let mut up = u.to_vec();
            let mut dn = u.to_vec();
            up[b] += h;
            dn[b] -= h;
            let d = (self.jacobian(&up) - self.jacobian(&dn)) / (2.0 * h);
            for k in 0..n {
                for a in 0..m {
                    out[k][(a, b)] = d[(k, a)];
                }
            }
        }
        out
    }

    fn describe(&self) -> String {
        format!("{} + {} modes", self.base.describe(), self.modes.len())
    }
}

/// Coordinates along which the parametrisation does not wind.
fn height_coordinates(m: &Submanifold) -> Vec<usize> {
    let zero = vec![0.0; m.dim()];
    let p0 = m.point(&zero);
    (0..m.ambient())
        .filter(|&k| {
            (0..m.dim()).all(|a| {
                let mut e = zero.clone();
                e[a] = 1.0;
                (m.point(&e)[k] - p0[k]).abs() < 1e-9
            })
        })
        .collect()
}

/// A random normal graph over `m` with at most 8 modes and displacement uniformly sized up
/// to `amplitude`.
pub fn random_competitor(m: &Submanifold, amplitude: f64, rng: &mut ChaCha8Rng) -> (Submanifold, Vec<Mode>) {
    let plane_curve = m.dim() == 1 && m.ambient() == 2;
    let heights = height_coordinates(m);
    let n = m.ambient();
    let count = rng.random_range(1..=8usize);
    let mut modes: Vec<Mode> = (0..count)
        .map(|_| {
            let frequency: Vec<i32> = (0..m.dim()).map(|_| rng.random_range(-4..=4)).collect();
            let mut direction = vec![0.0; n];
            if !plane_curve {
                if heights.is_empty() {
                    direction[rng.random_range(0..n)] = 1.0;
                } else {
                    direction[heights[rng.random_range(0..heights.len())]] = 1.0;
                }
            }
            Mode {
                frequency,
                amplitude: rng.random_range(-1.0..1.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                direction,
            }
        })
        .collect();
    // normalise so that the displacement never exceeds the amplitude
    let scale = if plane_curve {
        let peak = m
            .param_grid_at(256)
            .iter()
            .map(|u| {
                let j = m.jacobian(u);
                (j[(0, 0)].powi(2) + j[(1, 0)].powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        peak.max(1e-300)
    } else {
        1.0
    };
    let total: f64 = modes.iter().map(|md| md.amplitude.abs()).sum::<f64>() * scale;
    let size = amplitude * rng.random::<f64>();
    for md in &mut modes {
        md.amplitude *= size / total.max(1e-300);
    }
    let param = Perturbed { base: m.parametrization().clone(), modes: modes.clone(), plane_curve };
    let sub = Submanifold::new(&format!("{}~", m.name()), Arc::new(param), m.resolution())
        .expect("same dimensions as the base")
        .with_orientation(m.orientation());
    (sub, modes)
}

/// A competitor of the whole base cycle with its masses and pairings.
#[derive(Clone, Debug, Serialize)]
pub struct CompetitorRecord {
    pub index: usize,
    pub mass: f64,
    pub pairing: f64,
    /// Largest displacement from the base over the components.
    pub displacement: f64,
    pub modes: Vec<Vec<Mode>>,
    #[serde(skip)]
    pub cycle: Option<Cycle>,
}

/// Outcome of a competitor sweep.
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub count: usize,
    pub base_mass: f64,
    pub base_pairing: f64,
    pub sup_comass: f64,
    /// The base itself satisfies pairing <= mass.
    pub base_certificate: bool,
    /// min over competitors of mass(competitor) - mass(base).
    pub min_margin: f64,
    /// Competitors lighter than the base beyond the tolerance.
    pub mass_violations: Vec<usize>,
    /// Competitors whose pairing exceeds their mass, impossible under a calibration.
    pub certificate_violations: Vec<usize>,
    /// Competitors whose pairing differs from the base pairing.
    pub homology_violations: Vec<usize>,
    /// Near-minimal competitors (mass within 1e-4) further than 3h from the base.
    pub uniqueness_violations: Vec<usize>,
    pub tolerance: f64,
    pub passed: bool,
    #[serde(skip)]
    pub competitors: Vec<CompetitorRecord>,
}

impl SweepReport {
    /// Indices of all offending competitors, sorted and deduplicated.
    pub fn offenders(&self) -> Vec<usize> {
        let mut all: Vec<usize> =
            self.mass_violations.iter().chain(&self.certificate_violations).chain(&self.homology_violations).cloned().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Displacement size of a competitor, sampled on its parameter grid.
fn max_displacement(base: &Submanifold, comp: &Submanifold) -> f64 {
    base.param_grid()
        .iter()
        .map(|u| base.point(u).iter().zip(comp.point(u)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Generates `count` competitors of the base (seeded per index) and checks the calibration
/// inequalities mass(base) <= mass(competitor), pairing <= mass and equal pairings across
/// the homology class. `sup_comass` is echoed into the report.
pub fn competitor_sweep(
    phi: &FormField,
    g: &MetricField,
    sup_comass: f64,
    base: &Cycle,
    amplitude: f64,
    count: usize,
    seed: u64,
    tol: f64,
) -> Result<SweepReport> {
    let base_mass = mass(base, g)?;
    let base_pairing = pairing(base, phi)?;
    let h = g.chart().h();
    let records: Vec<Result<CompetitorRecord>> = (0..count)
        .into_par_iter()
        .map(|index| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(index as u64);
            let mut components = Vec::new();
            let mut all_modes = Vec::new();
            let mut displacement: f64 = 0.0;
            for (m, w) in &base.components {
                let (c, modes) = random_competitor(m, amplitude, &mut rng);
                displacement = displacement.max(max_displacement(m, &c));
                components.push((c, *w));
                all_modes.push(modes);
            }
            let cycle = Cycle { components };
            Ok(CompetitorRecord {
                index,
                mass: mass(&cycle, g)?,
                pairing: pairing(&cycle, phi)?,
                displacement,
                modes: all_modes,
                cycle: Some(cycle),
            })
        })
        .collect();
    let competitors = records.into_iter().collect::<Result<Vec<_>>>()?;
    let mut report = SweepReport {
        seed,
        count,
        base_mass,
        base_pairing,
        sup_comass,
        base_certificate: base_pairing <= base_mass + tol,
        min_margin: f64::INFINITY,
        mass_violations: Vec::new(),
        certificate_violations: Vec::new(),
        homology_violations: Vec::new(),
        uniqueness_violations: Vec::new(),
        tolerance: tol,
        passed: true,
        competitors: Vec::new(),
    };
    for c in &competitors {
        report.min_margin = report.min_margin.min(c.mass - base_mass);
        if base_mass > c.mass + tol {
            report.mass_violations.push(c.index);
        }
        if c.pairing > c.mass + tol {
            report.certificate_violations.push(c.index);
        }
        if (c.pairing - base_pairing).abs() > tol * base_pairing.abs().max(1.0) {
            report.homology_violations.push(c.index);
        }
        if c.mass - base_mass < 1e-4 && c.displacement > 3.0 * h {
            report.uniqueness_violations.push(c.index);
        }
    }
    report.passed = report.base_certificate && report.offenders().is_empty();
    report.competitors = competitors;
    Ok(report)
}

/// CSV of a competitor: one row per parameter sample with the component index, the
/// parameters and the ambient coordinates.
pub fn competitor_csv(record: &CompetitorRecord) -> String {
    let mut out = String::new();
    let Some(cycle) = &record.cycle else { return out };
    let m = cycle.degree();
    let n = cycle.components[0].0.ambient();
    let mut header = vec!["component".to_string()];
    header.extend((1..=m).map(|a| format!("t{a}")));
    header.extend((1..=n).map(|k| format!("x{k}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (ci, (c, _)) in cycle.components.iter().enumerate() {
        for u in c.param_grid() {
            let mut row = vec![ci.to_string()];
            row.extend(u.iter().map(|v| format!("{v:.17e}")));
            row.extend(c.point(&u).iter().map(|v| format!("{v:.17e}")));
            out.push_str(&row.join(","));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::MultiCovector;
    use crate::fields::chart::Chart;

    fn torus() -> (Arc<Chart>, MetricField) {
        let chart = Arc::new(Chart::unit_torus(2, 32).unwrap());
        let g = MetricField::flat(chart.clone());
        (chart, g)
    }

    #[test]
    fn masses_of_weighted_circles() {
        let (_, g) = torus();
        let a = Submanifold::from_exprs("A", &["t", "0.2"], 1, 64).unwrap();
        let b = Submanifold::from_exprs("B", &["t", "0.6"], 1, 64).unwrap();
        assert!((mass(&Cycle::single(a.clone()), &g).unwrap() - 1.0).abs() < 1e-14);
        let t = Cycle::new(vec![(a.clone(), 2.0), (b, 3.0)]).unwrap();
        assert!((mass(&t, &g).unwrap() - 5.0).abs() < 1e-13);
        let neg = Cycle::new(vec![(a, -1.0)]).unwrap();
        assert!((mass(&neg, &g).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pairing_is_a_homology_invariant() {
        let (chart, _) = torus();
        let dx = FormField::constant(chart, &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let straight = Submanifold::from_exprs("S", &["t", "0.3"], 1, 64).unwrap();
        let wiggly = Submanifold::from_exprs("W", &["t", "0.3 + 0.1*sin(2*pi*t)"], 1, 64).unwrap();
        let a = pairing(&Cycle::single(straight), &dx).unwrap();
        let b = pairing(&Cycle::single(wiggly), &dx).unwrap();
        assert!((a - 1.0).abs() < 1e-14 && (a - b).abs() < 1e-8);
    }

    #[test]
    fn straight_circle_competitors_are_not_shorter() {
        let (chart, g) = torus();
        let dx = FormField::constant(chart, &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
        let base = Cycle::single(Submanifold::from_exprs("S", &["t", "0.3"], 1, 64).unwrap());
        let r = competitor_sweep(&dx, &g, 1.0, &base, 0.1, 20, 7, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.min_margin >= -1e-12);
        // translates carry no extra length, so uniqueness is not expected here
        let again = competitor_sweep(&dx, &g, 1.0, &base, 0.1, 20, 7, 1e-6).unwrap();
        let masses: Vec<f64> = r.competitors.iter().map(|c| c.mass).collect();
        let masses2: Vec<f64> = again.competitors.iter().map(|c| c.mass).collect();
        assert_eq!(masses, masses2);
        assert!(competitor_csv(&r.competitors[0]).starts_with("component,t1,x1,x2\n"));
    }

    #[test]
    fn scaled_form_breaks_the_certificate() {
        let (chart, g) = torus();
        let dx = FormField::constant(chart, &MultiCovector::basis(2, &[0]).unwrap()).unwrap().scaled(1.01);
        let base = Cycle::single(Submanifold::from_exprs("S", &["t", "0.3"], 1, 64).unwrap());
        let r = competitor_sweep(&dx, &g, 1.01, &base, 0.1, 10, 7, 1e-6).unwrap();
        assert!(!r.passed && !r.base_certificate && !r.certificate_violations.is_empty());
    }
}
