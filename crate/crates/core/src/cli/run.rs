//! Executes a scenario: constructs the pair, verifies it and writes the artifacts.

use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::cli::config::{ConstructionKind, Scenario, TargetSpec};
use crate::comass::{comass_point, comass_value, OptimizerBudget};
use crate::error::{Error, Result};
use crate::exterior::MultiCovector;
use crate::fields::deriv::d_exterior;
use crate::fields::field::{FormField, MetricField};
use crate::fields::io::{write_field, AnyField};
use crate::fields::quadrature::{integrate_form, solve_dual_forms};
use crate::forge::{conformal_change, horizontal_change, multi_calibration, multi_level_calibration, prescribe_mean_curvature};
use crate::forge::{glue_form, CalibrationPair, NormalTarget};
use crate::tubular::atlas::{build_tubular, build_tubular_with, FiberModel, TubularAtlas};
use crate::tubular::homotopy::pullback_volume_form;
use crate::tubular::profile::BumpProfile;
use crate::tubular::submanifold::Submanifold;
use crate::verify::calibration::{verify_calibration, Criterion, Tolerances, VerificationReport};
use crate::verify::curvature::{check_conformal_mc, mean_curvature};
use crate::verify::cycle::{competitor_csv, competitor_sweep, mass, pairing, Cycle, SweepReport};
use crate::verify::geodesic::{geodesic_distance, geodesic_shoot};

/// Command-line overrides of a run.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub tol_scale: f64,
}

/// What a run produced.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub report: Value,
    pub passed: bool,
    /// Names of the failed required criteria.
    pub failures: Vec<String>,
    pub report_path: PathBuf,
}

/// Exit status for an error: 2 for configuration and validation problems, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_)
        | Error::Expr(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::InvalidSubmanifold(_)
        | Error::DimensionMismatch(_)
        | Error::DegreeOverflow { .. }
        | Error::InvalidMetric(_)
        | Error::ChartMismatch
        | Error::EpsilonTooLarge(_)
        | Error::TubeOverlap(_)
        | Error::SpanningHypothesis(_) => 2,
        _ => 1,
    }
}

/// Collects criteria and sections of the report.
struct Ledger {
    criteria: Vec<Criterion>,
    pairs: Vec<VerificationReport>,
    sweeps: Vec<SweepReport>,
    sections: serde_json::Map<String, Value>,
}

impl Ledger {
    fn section<T: Serialize>(&mut self, key: &str, value: &T) {
        self.sections.insert(key.into(), serde_json::to_value(value).expect("serialisable"));
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serialisable")
}

/// Runs a parsed scenario and writes report.json (plus CSVs and field dumps) into the output
/// directory.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<RunSummary> {
    let chart = s.build_chart()?;
    let g = s.build_metric(&chart)?;
    let subs = s.build_submanifolds()?;
    for m in &subs {
        m.validate(&chart)?;
    }
    let tol = Tolerances::default().scaled(opts.tol_scale);
    let budget = s.budget.resolve();
    let seed = opts.seed.unwrap_or(s.verify.seed);
    let c = &s.construction;
    let eps = c.epsilon;
    let amplitude = s.verify.amplitude.unwrap_or(eps);
    std::fs::create_dir_all(&opts.out)?;
    let mut led = Ledger { criteria: Vec::new(), pairs: Vec::new(), sweeps: Vec::new(), sections: Default::default() };
    let mut dumps: Vec<(String, AnyField)> = Vec::new();
    match c.kind {
        ConstructionKind::PullbackVolume => {
            let fiber = match c.fiber_angle {
                Some(angle) => FiberModel::Sheared { angle },
                None => FiberModel::Orthogonal,
            };
            let atlas = build_tubular_with(&subs[0], &g, eps, fiber)?;
            fperp_check(&atlas, &g, c.form_scale, &tol, &budget, &mut led)?;
        }
        ConstructionKind::GlueForm => {
            let m = &subs[0];
            let atlas = build_tubular(m, &g, eps)?;
            let phi = solve_dual_forms(std::slice::from_ref(m), &chart)?.remove(0).scaled(c.form_scale);
            let (glued, period) = glue_form(&phi, &atlas, &g)?;
            glue_checks(&glued, &phi, period, &atlas, &tol, &mut led)?;
            dumps.push(("phi".into(), AnyField::Form(glued)));
        }
        ConstructionKind::Horizontal | ConstructionKind::Conformal => {
            let m = &subs[0];
            let atlas = build_tubular(m, &g, eps)?;
            let phi = solve_dual_forms(std::slice::from_ref(m), &chart)?.remove(0);
            let pair = if c.kind == ConstructionKind::Horizontal {
                horizontal_change(&atlas, &g, &phi, c.margin, &budget)?
            } else {
                conformal_change(&atlas, &g, &phi, c.margin, &budget)?
            };
            let pair = pair.with_scaled_form(c.form_scale);
            check_pair(&pair, &tol, &budget, &mut led)?;
            sweep(&pair.phi, &pair.ghat, &Cycle::single(m.clone()), amplitude, s.verify.competitors, seed, &tol, &mut led)?;
            if s.verify.geodesics {
                geodesic_checks(&pair, &atlas, &mut led)?;
            }
            dumps.push(("phi".into(), AnyField::Form(pair.phi.clone())));
            dumps.push(("ghat".into(), AnyField::Metric(pair.ghat.clone())));
        }
        ConstructionKind::Multi => {
            let mc = multi_calibration(&subs, &g, eps, c.margin, &budget)?;
            let pairs: Vec<CalibrationPair> = mc.pairs.iter().map(|p| p.with_scaled_form(c.form_scale)).collect();
            let identity_err = (&mc.period_matrix - nalgebra::DMatrix::identity(subs.len(), subs.len())).amax();
            led.criteria.push(Criterion::at_most("dual-periods", identity_err, 1e-10, true));
            led.section(
                "period_matrix",
                &mc.period_matrix.row_iter().map(|r| r.iter().cloned().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            );
            led.section("alpha", &mc.alpha);
            for p in &pairs {
                check_pair(p, &tol, &budget, &mut led)?;
            }
            if s.verify.sign_combinations && pairs.len() > 1 {
                sign_combinations(&pairs, &mc.ghat, &tol, &budget, &mut led)?;
            }
            let weights: Vec<f64> = s.submanifolds.iter().map(|m| m.weight).collect();
            let cycle = Cycle::new(subs.iter().cloned().zip(weights.iter().cloned()).collect())?;
            let terms: Vec<(f64, FormField)> = pairs.iter().zip(&weights).map(|(p, w)| (w.signum(), p.phi.clone())).collect();
            let signed = FormField::combination(&terms)?;
            let mass_t = mass(&cycle, &mc.ghat)?;
            let pair_t = pairing(&cycle, &signed)?;
            led.criteria.push(Criterion::at_most("weighted-mass", (mass_t - pair_t).abs(), tol.mass * mass_t.max(1.0), true));
            led.section("weighted_cycle", &json!({ "weights": weights, "mass": mass_t, "pairing": pair_t }));
            sweep(&signed, &mc.ghat, &cycle, amplitude, s.verify.competitors, seed, &tol, &mut led)?;
            for (i, p) in pairs.iter().enumerate() {
                dumps.push((format!("phi_{i}"), AnyField::Form(p.phi.clone())));
            }
            dumps.push(("ghat".into(), AnyField::Metric(mc.ghat.clone())));
        }
        ConstructionKind::MultiLevel => {
            let mut dims: Vec<usize> = subs.iter().map(|m| m.dim()).collect();
            dims.sort_unstable_by(|a, b| b.cmp(a));
            dims.dedup();
            let levels: Vec<Vec<Submanifold>> =
                dims.iter().map(|&d| subs.iter().filter(|m| m.dim() == d).cloned().collect()).collect();
            let mc = multi_level_calibration(&levels, &g, eps, c.margin, &budget)?;
            led.section("alpha", &mc.alpha);
            for (i, p) in mc.pairs.iter().enumerate() {
                let p = p.with_scaled_form(c.form_scale);
                check_pair(&p, &tol, &budget, &mut led)?;
                let cycle = Cycle::new(p.calibrated.iter().map(|m| (m.clone(), 1.0)).collect())?;
                sweep(&p.phi, &p.ghat, &cycle, amplitude, s.verify.competitors, seed, &tol, &mut led)?;
                dumps.push((format!("phi_{i}"), AnyField::Form(p.phi.clone())));
            }
            if s.verify.distances {
                distance_checks(&subs, &g, &mc.ghat, &mut led)?;
            }
            dumps.push(("ghat".into(), AnyField::Metric(mc.ghat.clone())));
        }
        ConstructionKind::PrescribeMc => {
            let m = &subs[0];
            let atlas = build_tubular(m, &g, eps)?;
            let target = match c.target.as_ref().expect("validated") {
                TargetSpec::Zero => NormalTarget::Zero,
                TargetSpec::Scale { factor } => NormalTarget::MeanCurvature { scale: *factor },
            };
            let f = prescribe_mean_curvature(&atlas, &g, &target)?;
            let gt = g.conformal(&f)?;
            let h = mean_curvature(m, &g)?;
            let ht = mean_curvature(m, &gt)?;
            let scale = match target {
                NormalTarget::Zero => 0.0,
                NormalTarget::MeanCurvature { scale } => scale,
                NormalTarget::Field(_) => unreachable!("not configurable"),
            };
            let goal = h.combine(scale, &h, 0.0)?;
            let miss = ht.combine(1.0, &goal, -1.0)?.sup_norm(m, &g);
            let size = goal.sup_norm(m, &g);
            let (value, bound) = if size > 0.0 { (miss / size, 2.0 * tol.curvature) } else { (miss, tol.curvature) };
            led.criteria.push(Criterion::at_most("prescribed-curvature", value, bound, true));
            let law = check_conformal_mc(m, &g, &f)?;
            led.criteria.push(Criterion::at_most("conformal-mc-law", law, tol.curvature, true));
            let far = (0..chart.num_nodes()).filter(|&i| atlas.dist().at_node(i) >= eps && f.at_node(i) != 1.0).count();
            led.criteria.push(Criterion::at_most("factor-locality", far as f64, 0.0, true));
            led.section(
                "curvature",
                &json!({ "initial_sup": h.sup_norm(m, &g), "target_sup": size, "achieved_miss": miss, "law_residual": law }),
            );
            dumps.push(("factor".into(), AnyField::Scalar(f)));
        }
    }
    if s.verify.dump_fields {
        for (name, field) in &dumps {
            write_field(&opts.out.join(format!("{name}.field")), field)?;
        }
    }
    for (k, sw) in led.sweeps.iter().enumerate() {
        for idx in sw.offenders() {
            let rec = &sw.competitors[idx];
            std::fs::write(opts.out.join(format!("competitor_{k}_{idx}.csv")), competitor_csv(rec))?;
        }
    }
    let mut failures: Vec<String> = Vec::new();
    for (k, p) in led.pairs.iter().enumerate() {
        failures.extend(p.failures().iter().map(|f| format!("pair{k}:{f}")));
    }
    for (k, sw) in led.sweeps.iter().enumerate() {
        if !sw.passed {
            failures.push(format!("sweep{k}:competitors"));
        }
    }
    failures.extend(led.criteria.iter().filter(|c| c.required && !c.passed).map(|c| c.name.clone()));
    let passed = failures.is_empty();
    let mut report = serde_json::Map::new();
    report.insert("scenario".into(), json!(s.name));
    report.insert("construction".into(), to_value(&c.kind));
    report.insert("timestamp".into(), Value::Null);
    report.insert("seed".into(), json!(seed));
    report.insert("tol_scale".into(), json!(opts.tol_scale));
    report.insert("tolerances".into(), to_value(&tol));
    report.insert("budget".into(), to_value(&budget));
    report.insert("config".into(), to_value(s));
    report.insert("pairs".into(), to_value(&led.pairs));
    report.insert("sweeps".into(), to_value(&led.sweeps));
    report.insert("criteria".into(), to_value(&led.criteria));
    for (k, v) in std::mem::take(&mut led.sections) {
        report.insert(k, v);
    }
    report.insert("failures".into(), json!(failures));
    report.insert("passed".into(), json!(passed));
    let report = Value::Object(report);
    let report_path = opts.out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(&report_path, text)?;
    Ok(RunSummary { report, passed, failures, report_path })
}

/// Loads and runs a scenario file.
pub fn run_path(path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    run_scenario(&Scenario::load(path)?, opts)
}

fn check_pair(pair: &CalibrationPair, tol: &Tolerances, budget: &OptimizerBudget, led: &mut Ledger) -> Result<()> {
    led.pairs.push(verify_calibration(pair, tol, budget)?);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    phi: &FormField,
    g: &MetricField,
    base: &Cycle,
    amplitude: f64,
    count: usize,
    seed: u64,
    tol: &Tolerances,
    led: &mut Ledger,
) -> Result<()> {
    if count == 0 {
        return Ok(());
    }
    let sup = led.pairs.last().map_or(f64::NAN, |p| p.sup_comass);
    led.sweeps.push(competitor_sweep(phi, g, sup, base, amplitude, count, seed, tol.mass)?);
    Ok(())
}

/// Comass of the pulled-back volume form along M, against the prediction 1 / sin(angle).
fn fperp_check(
    atlas: &Arc<TubularAtlas>,
    g: &MetricField,
    scale: f64,
    tol: &Tolerances,
    budget: &OptimizerBudget,
    led: &mut Ledger,
) -> Result<()> {
    let m = atlas.base();
    let omega = pullback_volume_form(atlas, atlas.volume())?.scaled(scale);
    let mut values = Vec::new();
    for u in m.param_grid() {
        let p = m.point(&u);
        values.push(comass_point(&omega.at(&p), &g.at(&p), budget)?.value);
    }
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let predicted = match atlas.fiber_model() {
        FiberModel::Orthogonal => 1.0,
        FiberModel::Sheared { angle } => 1.0 / angle.sin(),
    } * scale;
    led.criteria.push(Criterion::at_most("fperp-comass-on-manifold-max", max, 1.0 + tol.comass, true));
    led.criteria.push(Criterion::at_least("fperp-comass-on-manifold-min", min, 1.0 - tol.comass, true));
    led.section("fperp", &json!({ "fiber": to_value(&atlas.fiber_model()), "min": min, "max": max, "predicted": predicted }));
    Ok(())
}

/// Sup comass of every nonzero signed sum of the forms, from node samples.
fn sign_combinations(
    pairs: &[CalibrationPair],
    ghat: &MetricField,
    tol: &Tolerances,
    budget: &OptimizerBudget,
    led: &mut Ledger,
) -> Result<()> {
    use rayon::prelude::*;
    let s = pairs.len();
    let chart = ghat.chart_arc();
    let n = chart.dim();
    let k = pairs[0].phi.degree();
    let samples: Vec<&[f64]> = pairs.iter().map(|p| p.phi.values()).collect();
    ghat.values();
    let ncomp = pairs[0].phi.components();
    let combos: Vec<Vec<i32>> = (0..3usize.pow(s as u32))
        .map(|mut t| {
            (0..s)
                .map(|_| {
                    let e = (t % 3) as i32 - 1;
                    t /= 3;
                    e
                })
                .collect()
        })
        .filter(|e: &Vec<i32>| e.iter().any(|&x| x != 0))
        .collect();
    let sups: Vec<Result<f64>> = combos
        .par_iter()
        .map(|e| {
            let mut sup: f64 = 0.0;
            for i in 0..chart.num_nodes() {
                let mut coeffs = vec![0.0; ncomp];
                for (j, sm) in samples.iter().enumerate() {
                    if e[j] != 0 {
                        for c in 0..ncomp {
                            coeffs[c] += e[j] as f64 * sm[i * ncomp + c];
                        }
                    }
                }
                let phi = MultiCovector::new(n, k, coeffs)?;
                sup = sup.max(comass_value(&phi, &ghat.at_node(i), budget)?);
            }
            Ok(sup)
        })
        .collect();
    let sups = sups.into_iter().collect::<Result<Vec<f64>>>()?;
    let worst = sups.iter().cloned().fold(0.0, f64::max);
    led.criteria.push(Criterion::at_most("sign-combinations", worst, 1.0 + tol.comass, true));
    led.section("sign_combinations", &json!({ "count": combos.len(), "signs": combos, "sup_comass": sups }));
    Ok(())
}

/// Shoots over unit time, halving the step from 2e-3 while the speed drifts too much.
fn shoot_refined(g: &MetricField, x0: &[f64], v0: &[f64]) -> Result<crate::verify::geodesic::GeodesicPath> {
    let mut step = 2e-3;
    loop {
        match geodesic_shoot(g, x0, v0, 1.0, step) {
            Err(Error::StepTooLarge(_)) if step > 1e-4 => step *= 0.5,
            other => return other,
        }
    }
}

/// Geodesics of ghat tangent to M stay on M; geodesics along a fiber stay on the fiber.
fn geodesic_checks(pair: &CalibrationPair, atlas: &Arc<TubularAtlas>, led: &mut Ledger) -> Result<()> {
    let m = atlas.base();
    let h = atlas.chart().h();
    let eps = atlas.epsilon();
    let mut tangent_dev: f64 = 0.0;
    let mut fiber_dev: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for k in 0..4 {
        let u = vec![k as f64 / 4.0 + 0.1; m.dim()];
        let x0 = m.point(&u);
        let j = m.jacobian(&u);
        let v0: Vec<f64> = j.column(0).iter().cloned().collect();
        let path = shoot_refined(&pair.ghat, &x0, &v0)?;
        drift = drift.max(path.speed_drift);
        for p in &path.points {
            tangent_dev = tangent_dev.max(atlas.dist_at(p));
        }
        let fp = atlas.locate(&x0);
        let normal = normal_direction(atlas, &u);
        let len = atlas.metric().norm(&normal);
        let v: Vec<f64> = normal.iter().map(|c| 0.5 * eps * c / len).collect();
        let path = shoot_refined(&pair.ghat, &x0, &v)?;
        drift = drift.max(path.speed_drift);
        let b0 = m.point(&fp.param);
        for p in &path.points {
            let q = atlas.locate(p);
            let mut y: Vec<f64> = q.base.iter().zip(&b0).map(|(a, b)| a - b).collect();
            atlas.chart().wrap_displacement(&mut y);
            fiber_dev = fiber_dev.max(y.iter().map(|c| c * c).sum::<f64>().sqrt());
        }
    }
    led.criteria.push(Criterion::at_most("totally-geodesic", tangent_dev, 2.0 * h, true));
    led.criteria.push(Criterion::at_most("fiber-geodesic", fiber_dev, 2.0 * h, true));
    led.criteria.push(Criterion::at_most("geodesic-speed-drift", drift, 1e-6, true));
    led.section("geodesics", &json!({ "tangent_deviation": tangent_dev, "fiber_deviation": fiber_dev, "speed_drift": drift }));
    Ok(())
}

/// A G-normal vector at c(u): the largest normal projection of a coordinate axis.
fn normal_direction(atlas: &TubularAtlas, u: &[f64]) -> Vec<f64> {
    let m = atlas.base();
    let j = m.jacobian(u);
    let gram = atlas.metric().gram();
    let gm = (j.transpose() * gram * &j).try_inverse().unwrap_or_else(|| nalgebra::DMatrix::zeros(j.ncols(), j.ncols()));
    let proj = nalgebra::DMatrix::identity(m.ambient(), m.ambient()) - &j * gm * j.transpose() * gram;
    (0..m.ambient())
        .map(|k| proj.column(k).iter().cloned().collect::<Vec<f64>>())
        .max_by(|a, b| atlas.metric().norm(a).total_cmp(&atlas.metric().norm(b)))
        .expect("ambient dimension is positive")
}

/// Distances between components under the reference and the constructed metric.
/// Closedness, period and plateaus of a glued form: omega* = (s / Vol) pi^* vol_M near M,
/// the input form beyond the outer profile radius.
fn glue_checks(
    glued: &FormField,
    phi: &FormField,
    period: f64,
    atlas: &Arc<TubularAtlas>,
    tol: &Tolerances,
    led: &mut Ledger,
) -> Result<()> {
    let chart = glued.chart();
    let rho = BumpProfile::rho(atlas.epsilon());
    let omega = pullback_volume_form(atlas, period)?;
    let closedness = d_exterior(glued)?.sup_abs();
    let glued_period = integrate_form(glued, atlas.base())?;
    let mut inner: f64 = 0.0;
    let mut outer: f64 = 0.0;
    for i in 0..chart.num_nodes() {
        let d = atlas.dist().at_node(i);
        let v = glued.at_node(i);
        if d <= rho.r1 {
            inner = inner.max((&v - &omega.at_node(i)).max_abs());
        } else if d >= rho.r2 {
            outer = outer.max((&v - &phi.at_node(i)).max_abs());
        }
    }
    led.criteria.push(Criterion::at_most("closedness", closedness, tol.closedness, true));
    led.criteria.push(Criterion::at_most("period", (glued_period - period).abs(), 1e-10 * period.abs().max(1.0), true));
    led.criteria.push(Criterion::at_most("inner-plateau", inner, 1e-12, true));
    led.criteria.push(Criterion::at_most("outer-plateau", outer, 1e-12, true));
    led.section("glue", &json!({ "period": period, "glued_period": glued_period, "closedness": closedness }));
    Ok(())
}

fn distance_checks(subs: &[Submanifold], g: &MetricField, ghat: &MetricField, led: &mut Ledger) -> Result<()> {
    let h = g.chart().h();
    let mut rows = Vec::new();
    for i in 0..subs.len() {
        for j in i + 1..subs.len() {
            let d = geodesic_distance(g, &subs[i], &subs[j])?;
            let dh = geodesic_distance(ghat, &subs[i], &subs[j])?;
            led.criteria.push(Criterion::at_most(
                &format!("distance-{}-{}", subs[i].name(), subs[j].name()),
                (d - dh).abs(),
                5.0 * h,
                true,
            ));
            rows.push(json!({ "a": subs[i].name(), "b": subs[j].name(), "reference": d, "constructed": dh }));
        }
    }
    led.section("distances", &rows);
    Ok(())
}
