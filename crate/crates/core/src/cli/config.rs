//! Scenario files: a TOML description of the chart, metric, submanifolds, construction and
//! verification plan, resolved into library objects.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::comass::OptimizerBudget;
use crate::error::{Error, Result};
use crate::expr::{coord_names, parse_with};
use crate::exterior::PointMetric;
use crate::fields::chart::Chart;
use crate::fields::field::{MetricField, ScalarField};
use crate::fields::io::{read_field, AnyField};
use crate::forge::DEFAULT_MARGIN;
use crate::tubular::submanifold::Submanifold;

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub chart: ChartSpec,
    #[serde(default)]
    pub metric: MetricSpec,
    #[serde(rename = "submanifold")]
    pub submanifolds: Vec<SubmanifoldSpec>,
    pub construction: ConstructionSpec,
    #[serde(default)]
    pub verify: VerifySpec,
    #[serde(default)]
    pub budget: BudgetSpec,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    Torus,
    Box,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub kind: ChartKind,
    pub dim: usize,
    /// Nodes per axis.
    pub resolution: usize,
    /// Side lengths; the unit cube by default.
    pub extent: Option<Vec<f64>>,
    /// Lower corner of a box chart; -extent/2 by default.
    pub origin: Option<Vec<f64>>,
    /// Width of the boundary margin of a box chart.
    pub margin: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum MetricSpec {
    #[default]
    Flat,
    /// A constant Gram matrix, row by row.
    Constant { gram: Vec<Vec<f64>> },
    /// f times the flat metric, with f an expression in x1..xn.
    Conformal { factor: String },
    /// A metric field file written by the library.
    File { path: PathBuf },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SubmanifoldSpec {
    pub name: String,
    /// Coordinate expressions in t (curves) or t1..tm.
    pub coords: Vec<String>,
    pub dim: usize,
    pub resolution: usize,
    #[serde(default = "one")]
    pub orientation: f64,
    /// Cycle weight used by mass checks and sweeps.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ConstructionKind {
    /// The pulled-back volume form of the tube, checked along M only.
    PullbackVolume,
    /// The glued form with the metric left unchanged; checks closedness, period and the
    /// two plateaus.
    GlueForm,
    Horizontal,
    Conformal,
    Multi,
    MultiLevel,
    PrescribeMc,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "kebab-case")]
pub enum TargetSpec {
    Zero,
    Scale { factor: f64 },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ConstructionSpec {
    pub kind: ConstructionKind,
    pub epsilon: f64,
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Multiplies the final form; values other than 1 make a negative control.
    #[serde(default = "one")]
    pub form_scale: f64,
    /// Angle between fibers and M for the pullback-volume construction (radians).
    pub fiber_angle: Option<f64>,
    /// Mean-curvature target of the prescribe-mc construction.
    pub target: Option<TargetSpec>,
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySpec {
    #[serde(default = "default_competitors")]
    pub competitors: usize,
    /// Competitor amplitude; epsilon by default.
    pub amplitude: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Geodesic checks of the horizontal construction.
    #[serde(default)]
    pub geodesics: bool,
    /// Distance preservation between components.
    #[serde(default)]
    pub distances: bool,
    /// Signed sums of several calibrations.
    #[serde(default = "yes")]
    pub sign_combinations: bool,
    /// Write the constructed form and metric as field files.
    #[serde(default)]
    pub dump_fields: bool,
}

fn default_competitors() -> usize {
    100
}

fn default_seed() -> u64 {
    7
}

fn yes() -> bool {
    true
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            competitors: default_competitors(),
            amplitude: None,
            seed: default_seed(),
            geodesics: false,
            distances: false,
            sign_combinations: true,
            dump_fields: false,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetSpec {
    pub starts: Option<usize>,
    pub max_iters: Option<usize>,
    pub oracle_samples: Option<usize>,
    pub seed: Option<u64>,
}

impl BudgetSpec {
    pub fn resolve(&self) -> OptimizerBudget {
        let d = OptimizerBudget::default();
        OptimizerBudget {
            starts: self.starts.unwrap_or(d.starts),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            grad_tol: d.grad_tol,
            oracle_samples: self.oracle_samples.unwrap_or(d.oracle_samples),
            seed: self.seed.unwrap_or(d.seed),
        }
    }
}

impl Scenario {
    /// Parses a scenario; errors carry the line and column of the problem.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(format!("{}: {e}", origin.display())))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: cannot read: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    fn validate(&self) -> Result<()> {
        let n = self.chart.dim;
        let bad = |msg: String| Err(Error::Config(format!("scenario {}: {msg}", self.name)));
        if !(1..=crate::exterior::MAX_DIM).contains(&n) {
            return bad(format!("chart.dim = {n} outside 1..={}", crate::exterior::MAX_DIM));
        }
        for (key, v) in [("extent", &self.chart.extent), ("origin", &self.chart.origin)] {
            if let Some(v) = v {
                if v.len() != n {
                    return bad(format!("chart.{key} has {} entries, expected {n}", v.len()));
                }
            }
        }
        if self.submanifolds.is_empty() {
            return bad("at least one [[submanifold]] is required".into());
        }
        for (i, s) in self.submanifolds.iter().enumerate() {
            if s.coords.len() != n {
                return bad(format!("submanifold[{i}] ({}) has {} coordinates, expected {n}", s.name, s.coords.len()));
            }
            if s.dim == 0 || s.dim >= n {
                return bad(format!("submanifold[{i}] ({}) has dimension {} outside 1..{n}", s.name, s.dim));
            }
        }
        let c = &self.construction;
        if !(c.epsilon > 0.0) {
            return bad(format!("construction.epsilon = {} must be positive", c.epsilon));
        }
        if !(c.margin > 0.0 && c.margin < 1.0) {
            return bad(format!("construction.margin = {} outside (0, 1)", c.margin));
        }
        let single = matches!(
            c.kind,
            ConstructionKind::PullbackVolume
                | ConstructionKind::GlueForm
                | ConstructionKind::Horizontal
                | ConstructionKind::Conformal
                | ConstructionKind::PrescribeMc
        );
        if single && self.submanifolds.len() != 1 {
            return bad(format!("{:?} takes exactly one submanifold", c.kind));
        }
        if c.kind == ConstructionKind::Multi && self.submanifolds.iter().any(|s| s.dim != self.submanifolds[0].dim) {
            return bad("multi needs submanifolds of one dimension; use multi-level".into());
        }
        if c.kind == ConstructionKind::PrescribeMc && c.target.is_none() {
            return bad("prescribe-mc needs construction.target".into());
        }
        if c.fiber_angle.is_some() && c.kind != ConstructionKind::PullbackVolume {
            return bad("construction.fiber_angle only applies to pullback-volume".into());
        }
        Ok(())
    }

    pub fn build_chart(&self) -> Result<Arc<Chart>> {
        let c = &self.chart;
        let n = c.dim;
        let extent = c.extent.clone().unwrap_or(vec![1.0; n]);
        let chart = match c.kind {
            ChartKind::Torus => Chart::periodic(vec![c.resolution; n], extent)?,
            ChartKind::Box => {
                let origin = c.origin.clone().unwrap_or_else(|| extent.iter().map(|e| -0.5 * e).collect());
                Chart::boxed(vec![c.resolution; n], origin, extent, c.margin.unwrap_or(0.1))?
            }
        };
        Ok(Arc::new(chart))
    }

    pub fn build_metric(&self, chart: &Arc<Chart>) -> Result<MetricField> {
        let n = chart.dim();
        match &self.metric {
            MetricSpec::Flat => Ok(MetricField::flat(chart.clone())),
            MetricSpec::Constant { gram } => {
                if gram.len() != n || gram.iter().any(|r| r.len() != n) {
                    return Err(Error::Config(format!("metric.gram must be {n} x {n}")));
                }
                let flat: Vec<f64> = gram.iter().flatten().cloned().collect();
                let g = PointMetric::new(nalgebra::DMatrix::from_row_slice(n, n, &flat))?;
                MetricField::constant(chart.clone(), &g)
            }
            MetricSpec::Conformal { factor } => {
                let e = parse_with(factor, &coord_names(n))?;
                let f = ScalarField::from_fn(chart.clone(), move |x| e.eval(x));
                MetricField::flat(chart.clone()).conformal(&f)
            }
            MetricSpec::File { path } => match read_field(path)? {
                AnyField::Metric(g) if g.chart() == chart.as_ref() => Ok(g),
                AnyField::Metric(_) => {
                    Err(Error::Config(format!("{}: metric chart differs from the scenario chart", path.display())))
                }
                _ => Err(Error::Config(format!("{}: not a metric field", path.display()))),
            },
        }
    }

    pub fn build_submanifolds(&self) -> Result<Vec<Submanifold>> {
        self.submanifolds
            .iter()
            .map(|s| {
                let coords: Vec<&str> = s.coords.iter().map(|c| c.as_str()).collect();
                Ok(Submanifold::from_exprs(&s.name, &coords, s.dim, s.resolution)?.with_orientation(s.orientation))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[chart]
kind = "torus"
dim = 2
resolution = 16
[[submanifold]]
name = "C"
coords = ["t", "0.3"]
dim = 1
resolution = 32
[construction]
kind = "conformal"
epsilon = 0.1
"#;

    #[test]
    fn minimal_scenario_resolves_defaults() {
        let s = Scenario::parse(MINIMAL, Path::new("inline")).unwrap();
        assert_eq!(s.construction.margin, DEFAULT_MARGIN);
        assert_eq!(s.verify.competitors, 100);
        assert!(matches!(s.metric, MetricSpec::Flat));
        assert_eq!(s.build_chart().unwrap().num_nodes(), 256);
    }

    #[test]
    fn unknown_keys_are_rejected_with_a_location() {
        let text = MINIMAL.replace("epsilon = 0.1", "epsilon = 0.1\nepsilom = 2");
        let err = Scenario::parse(&text, Path::new("inline")).unwrap_err().to_string();
        assert!(err.contains("epsilom") && err.contains("line"), "{err}");
    }

    #[test]
    fn inconsistent_dimensions_are_rejected() {
        let text = MINIMAL.replace("coords = [\"t\", \"0.3\"]", "coords = [\"t\"]");
        assert!(Scenario::parse(&text, Path::new("inline")).is_err());
    }
}
