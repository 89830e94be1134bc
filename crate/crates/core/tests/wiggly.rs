//! End-to-end constructions around the wiggly circle on the flat 2-torus.

use std::sync::Arc;

use calibra::comass::OptimizerBudget;
use calibra::exterior::MultiCovector;
use calibra::fields::chart::Chart;
use calibra::fields::field::{FormField, MetricField};
use calibra::forge::{conformal_change, horizontal_change};
use calibra::tubular::{build_tubular, Submanifold};
use calibra::verify::{competitor_sweep, verify_calibration, Cycle, Tolerances};

fn setup() -> (Arc<Chart>, MetricField, Submanifold, FormField) {
    let chart = Arc::new(Chart::unit_torus(2, 128).unwrap());
    let g = MetricField::flat(chart.clone());
    let m = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, 256).unwrap();
    let dx = FormField::constant(chart.clone(), &MultiCovector::basis(2, &[0]).unwrap()).unwrap();
    (chart, g, m, dx)
}

#[test]
fn conformal_pair_verifies() {
    let (_, g, m, dx) = setup();
    let budget = OptimizerBudget::default();
    let atlas = build_tubular(&m, &g, 0.08).unwrap();
    let pair = conformal_change(&atlas, &g, &dx, 0.1, &budget).unwrap();
    let report = verify_calibration(&pair, &Tolerances::default(), &budget).unwrap();
    assert!(report.passed, "{:?}", report.failures());
    // strongly calibrated: the comass drops below 1 away from M
    assert!(report.strong_support.iter().all(|s| s.gap > 1e-3));
    let sweep = competitor_sweep(&pair.phi, &pair.ghat, report.sup_comass, &Cycle::single(m), 0.08, 20, 3, 1e-6).unwrap();
    assert!(sweep.passed && sweep.mass_violations.is_empty());
}

#[test]
fn horizontal_pair_verifies() {
    let (_, g, m, dx) = setup();
    let budget = OptimizerBudget::default();
    let atlas = build_tubular(&m, &g, 0.08).unwrap();
    let pair = horizontal_change(&atlas, &g, &dx, 0.1, &budget).unwrap();
    let report = verify_calibration(&pair, &Tolerances::default(), &budget).unwrap();
    assert!(report.passed, "{:?}", report.failures());
}
