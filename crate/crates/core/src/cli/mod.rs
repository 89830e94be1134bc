//! Scenario runner behind the `calibra` binary: configuration, execution and plan display.

pub mod config;
pub mod run;

use std::fmt::Write;
use std::path::Path;

use crate::error::Result;
use crate::tubular::profile::BumpProfile;

pub use config::Scenario;
pub use run::{exit_code, run_path, run_scenario, RunOptions, RunSummary};

/// Human-readable plan of a scenario: resolved parameters and defaults, no numerics.
pub fn describe(s: &Scenario) -> String {
    let mut o = String::new();
    let c = &s.chart;
    let eps = s.construction.epsilon;
    let _ = writeln!(o, "scenario: {}", s.name);
    if !s.description.is_empty() {
        let _ = writeln!(o, "description: {}", s.description);
    }
    let extent = c.extent.clone().unwrap_or(vec![1.0; c.dim]);
    let _ = writeln!(o, "chart: {:?} dim={} resolution={} extent={:?}", c.kind, c.dim, c.resolution, extent);
    if c.kind == config::ChartKind::Box {
        let origin = c.origin.clone().unwrap_or_else(|| extent.iter().map(|e| -0.5 * e).collect());
        let _ = writeln!(o, "  origin={:?} margin={}", origin, c.margin.unwrap_or(0.1));
    }
    let _ = writeln!(o, "metric: {}", serde_json::to_string(&s.metric).unwrap_or_default());
    for m in &s.submanifolds {
        let _ = writeln!(
            o,
            "submanifold {}: dim={} resolution={} orientation={} weight={} coords=[{}]",
            m.name,
            m.dim,
            m.resolution,
            m.orientation,
            m.weight,
            m.coords.join(", ")
        );
    }
    let k = &s.construction;
    let _ = writeln!(o, "construction: {:?} epsilon={} margin={} form_scale={}", k.kind, eps, k.margin, k.form_scale);
    if let Some(a) = k.fiber_angle {
        let _ = writeln!(o, "  fiber_angle={a} (predicted comass on M {:.6})", 1.0 / a.sin());
    }
    if let Some(t) = &k.target {
        let _ = writeln!(o, "  target={}", serde_json::to_string(t).unwrap_or_default());
    }
    for (name, p) in
        [("rho", BumpProfile::rho(eps)), ("sigma", BumpProfile::sigma(eps)), ("rho_tilde", BumpProfile::rho_tilde(eps))]
    {
        let _ = writeln!(o, "  profile {name}: 1 on [0, {}], 0 beyond {}", p.r1, p.r2);
    }
    let v = &s.verify;
    let _ = writeln!(
        o,
        "verify: competitors={} amplitude={} seed={} geodesics={} distances={} sign_combinations={} dump_fields={}",
        v.competitors,
        v.amplitude.unwrap_or(eps),
        v.seed,
        v.geodesics,
        v.distances,
        v.sign_combinations,
        v.dump_fields
    );
    let b = s.budget.resolve();
    let _ = writeln!(
        o,
        "budget: starts={} max_iters={} grad_tol={:e} oracle_samples={} seed={}",
        b.starts, b.max_iters, b.grad_tol, b.oracle_samples, b.seed
    );
    o
}

/// Loads a scenario file and describes it.
pub fn describe_path(path: &Path) -> Result<String> {
    Ok(describe(&Scenario::load(path)?))
}
