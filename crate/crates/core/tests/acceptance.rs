//! Acceptance suite: one line per criterion, every check at its stated tolerance.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

use calibra::cli::{run_path, RunOptions};
use calibra::comass::{comass_point, gluing_bound, monotonicity, oracle_comass, scaling_law, OptimizerBudget};
use calibra::exterior::{multi_indices, MultiCovector, PointMetric};
use calibra::fields::chart::Chart;
use calibra::fields::field::{MetricField, ScalarField};
use calibra::tubular::Submanifold;
use calibra::verify::{check_conformal_mc, mean_curvature};

type Outcome = (bool, String);
type Case<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.toml"))
}

/// Runs a bundled scenario into a scratch directory and returns (passed, report).
fn run(name: &str, out: &Path) -> (bool, Value) {
    let opts = RunOptions { out: out.join(name), seed: None, tol_scale: 1.0 };
    let s = run_path(&scenario(name), &opts).unwrap_or_else(|e| panic!("{name}: {e}"));
    (s.passed, s.report)
}

fn criterion<'a>(report: &'a Value, name: &str) -> Option<&'a Value> {
    let top = report["criteria"].as_array().into_iter().flatten();
    let pairs = report["pairs"].as_array().into_iter().flatten().flat_map(|p| p["criteria"].as_array().into_iter().flatten());
    top.chain(pairs).find(|c| c["name"] == name)
}

fn value(report: &Value, name: &str) -> f64 {
    criterion(report, name).and_then(|c| c["value"].as_f64()).unwrap_or(f64::NAN)
}

fn failures(report: &Value) -> Vec<String> {
    report["failures"].as_array().into_iter().flatten().filter_map(|v| v.as_str().map(str::to_string)).collect()
}

fn spd(n: usize, rng: &mut ChaCha8Rng) -> PointMetric {
    let b = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
    PointMetric::new(&b * b.transpose() + DMatrix::identity(n, n) * 0.5).unwrap()
}

fn random_form(n: usize, m: usize, rng: &mut ChaCha8Rng) -> MultiCovector {
    let len = multi_indices(n, m).len();
    MultiCovector::new(n, m, (0..len).map(|_| StandardNormal.sample(rng)).collect()).unwrap()
}

/// phi(V) / |V|_g from minors and the Gram determinant, written independently of the engine.
fn ratio(phi: &MultiCovector, g: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    let (n, m) = (v.nrows(), v.ncols());
    let num: f64 = multi_indices(n, m)
        .iter()
        .zip(phi.coeffs())
        .map(|(idx, c)| c * DMatrix::from_fn(m, m, |i, j| v[(idx[i], j)]).determinant())
        .sum();
    let gram = v.transpose() * g * v;
    num / gram.determinant().max(1e-300).sqrt()
}

/// Pattern-search polish of a frame: coordinate moves with a shrinking step.
fn polish(phi: &MultiCovector, g: &PointMetric, start: &DMatrix<f64>) -> f64 {
    let g = g.gram().clone();
    let mut v = start.clone();
    let mut best = ratio(phi, &g, &v);
    if best < 0.0 {
        v.column_mut(0).neg_mut();
        best = -best;
    }
    let mut step = 0.05;
    while step > 1e-10 {
        let mut improved = false;
        for k in 0..v.len() {
            for s in [step, -step] {
                let mut w = v.clone();
                w[k] += s;
                let r = ratio(phi, &g, &w);
                if r > best {
                    best = r;
                    v = w;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    best
}

fn comass_laws() -> Outcome {
    let t = Instant::now();
    let budget = OptimizerBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut scale_fail = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=n);
        let (phi, g) = (random_form(n, m, &mut rng), spd(n, &mut rng));
        let f = (rng.random::<f64>() * 4.0 - 2.0).exp();
        scale_fail += usize::from(!scaling_law(&phi, &g, f, &budget).unwrap().equal(1e-6));
    }
    let mut mono_fail = 0;
    for _ in 0..200 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=n);
        let (phi, g) = (random_form(n, m, &mut rng), spd(n, &mut rng));
        let noise = spd(n, &mut rng).gram() * rng.random::<f64>();
        let big = PointMetric::new(g.gram() + noise).unwrap();
        mono_fail += usize::from(!monotonicity(&phi, &g, &big, &budget).unwrap().at_most(1e-6));
    }
    let mut glue_fail = 0;
    for _ in 0..500 {
        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..=n);
        let phi = random_form(n, m, &mut rng);
        let (g1, g2) = (spd(n, &mut rng), spd(n, &mut rng));
        let (a, b) = (rng.random::<f64>() * 2.0, rng.random::<f64>() * 2.0 + 1e-3);
        glue_fail += usize::from(!gluing_bound(&phi, a, &g1, b, &g2, &budget).unwrap().at_most(1e-6));
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = scale_fail + mono_fail + glue_fail == 0 && secs <= 60.0;
    (ok, format!("scaling {scale_fail}/200, monotonicity {mono_fail}/200, gluing {glue_fail}/500 failures in {secs:.1} s"))
}

fn engine_vs_oracle() -> Outcome {
    let budget = OptimizerBudget::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut below = 0;
    let mut flagged = 0;
    for case in 0..50 {
        let n = rng.random_range(4..=6);
        let m = rng.random_range(2..=n - 2);
        let (phi, g) = (random_form(n, m, &mut rng), spd(n, &mut rng));
        let r = comass_point(&phi, &g, &budget).unwrap();
        flagged += usize::from(r.flag.is_some());
        let o = oracle_comass(&phi, &g, 1_000_000, 100 + case).unwrap();
        below += usize::from(r.value < o.value - 1e-6);
        let polished = polish(&phi, &g, &o.frame.vectors).max(o.value);
        worst = worst.max((r.value - polished).abs());
    }
    let w = &MultiCovector::basis(4, &[0, 1]).unwrap() + &MultiCovector::basis(4, &[2, 3]).unwrap();
    let wv = comass_point(&w, &PointMetric::identity(4), &budget).unwrap().value;
    let ok = worst <= 1e-4 && below == 0 && flagged == 0 && (wv - 1.0).abs() <= 1e-6;
    (
        ok,
        format!(
            "50 cases: max |ascent - polished oracle| = {worst:.2e}, below oracle {below}, flagged {flagged}; Wirtinger {wv:.12}"
        ),
    )
}

fn fiber_models(out: &Path) -> Outcome {
    let (orth_ok, orth) = run("t2_orthogonal_fibers", out);
    let (_, sheared) = run("t2_sheared_fibers", out);
    let lo = value(&orth, "fperp-comass-on-manifold-min");
    let hi = value(&orth, "fperp-comass-on-manifold-max");
    let measured = value(&sheared, "fperp-comass-on-manifold-max");
    let predicted = 1.0 / (std::f64::consts::PI / 3.0).sin();
    let ok = orth_ok && (lo - 1.0).abs() <= 1e-6 && (hi - 1.0).abs() <= 1e-6 && (measured - predicted).abs() <= 1e-3;
    (ok, format!("orthogonal comass on M in [{lo:.9}, {hi:.9}]; sheared 60 deg {measured:.6} vs 1/sin = {predicted:.6}"))
}

/// Shared checks of a single-pair T^2 scenario.
fn pair_checks(report: &Value) -> (bool, String) {
    let p = &report["pairs"][0];
    let sweep = &report["sweeps"][0];
    let locus = value(report, "equality-locus");
    let ok = p["closedness"].as_f64().unwrap_or(f64::NAN) <= 1e-6
        && p["sup_comass"].as_f64().unwrap_or(f64::NAN) <= 1.0 + 1e-6
        && criterion(report, "equality-locus").is_some_and(|c| c["passed"] == true)
        && p["locality_mismatches"] == 0
        && sweep["passed"] == true
        && sweep["count"] == 100;
    let text = format!(
        "d = {:.1e}, sup comass - 1 = {:.1e}, equality locus {:.4}, locality mismatches {}, sweep {} competitors min margin {:.2e}",
        p["closedness"].as_f64().unwrap_or(f64::NAN),
        p["sup_comass"].as_f64().unwrap_or(f64::NAN) - 1.0,
        locus,
        p["locality_mismatches"],
        sweep["count"],
        sweep["min_margin"].as_f64().unwrap_or(f64::NAN)
    );
    (ok, text)
}

fn conformal(out: &Path) -> Outcome {
    let t = Instant::now();
    let (passed, report) = run("t2_wiggly_conformal", out);
    let secs = t.elapsed().as_secs_f64();
    let (ok, text) = pair_checks(&report);
    (passed && ok && secs <= 600.0, format!("{text}; {secs:.1} s"))
}

fn horizontal(out: &Path) -> Outcome {
    let (passed, report) = run("t2_wiggly_horizontal", out);
    let (ok, text) = pair_checks(&report);
    let tg = value(&report, "totally-geodesic");
    let fg = value(&report, "fiber-geodesic");
    let geo = criterion(&report, "totally-geodesic").is_some_and(|c| c["passed"] == true)
        && criterion(&report, "fiber-geodesic").is_some_and(|c| c["passed"] == true);
    (passed && ok && geo, format!("{text}; tangent geodesic offset {tg:.1e}, fiber geodesic offset {fg:.1e}"))
}

fn several(out: &Path) -> Outcome {
    let t = Instant::now();
    let (passed, report) = run("t3_several_calibrations", out);
    let secs = t.elapsed().as_secs_f64();
    let periods = value(&report, "dual-periods");
    let signs = &report["sign_combinations"];
    let sup = value(&report, "sign-combinations");
    let mass = value(&report, "weighted-mass");
    let ok = passed && periods <= 1e-10 && signs["count"] == 26 && sup <= 1.0 + 1e-6 && mass <= 1e-6 && secs <= 1800.0;
    (
        ok,
        format!(
            "period residual {periods:.1e}, {} sign combinations sup {sup:.9}, weighted mass residual {mass:.1e}; {secs:.1} s",
            signs["count"]
        ),
    )
}

fn multi_level(out: &Path) -> Outcome {
    let (passed, report) = run("t3_multilevel", out);
    let pairs: Vec<bool> = report["pairs"].as_array().into_iter().flatten().map(|p| p["passed"] == true).collect();
    let dist = value(&report, "distance-T-C");
    let bound = criterion(&report, "distance-T-C").and_then(|c| c["bound"].as_f64()).unwrap_or(0.0);
    let ok = passed && pairs.len() == 2 && pairs.iter().all(|&p| p) && dist <= bound;
    (ok, format!("level pairs passed {pairs:?}; |dist change| {dist:.1e} <= {bound:.4}"))
}

fn curvature(out: &Path) -> Outcome {
    let boxed = |res: usize| Arc::new(Chart::boxed(vec![res; 2], vec![-0.5; 2], vec![1.0; 2], 0.1).unwrap());
    let circle = Submanifold::from_exprs("C", &["0.2*cos(2*pi*t)", "0.2*sin(2*pi*t)"], 1, 256).unwrap();
    let h = mean_curvature(&circle, &MetricField::flat(boxed(256))).unwrap();
    let worst_h = h.vectors.iter().map(|v| ((v[0] * v[0] + v[1] * v[1]).sqrt() / 5.0 - 1.0).abs()).fold(0.0, f64::max);

    // conformal law along ever finer samplings of a wiggly curve
    let chart = Arc::new(Chart::unit_torus(2, 64).unwrap());
    let f = ScalarField::from_fn(chart.clone(), |x| {
        use std::f64::consts::TAU;
        1.0 + 0.3 * (TAU * x[0]).sin() * (TAU * x[1]).cos()
    });
    let g = MetricField::flat(chart);
    let residuals: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&res| {
            let wiggly = Submanifold::from_exprs("W", &["t", "0.5 + 0.2*sin(2*pi*t)"], 1, res).unwrap();
            check_conformal_mc(&wiggly, &g, &f).unwrap()
        })
        .collect();
    let order = (residuals[1] / residuals[2]).log2();
    let (minimal_ok, minimal) = run("t2_wiggly_minimal", out);
    let ht = value(&minimal, "prescribed-curvature");
    let ok = worst_h <= 5e-3 && residuals[2] <= 5e-3 && order >= 1.8 && minimal_ok && ht <= 5e-3;
    let text = format!(
        "|H| rel error {worst_h:.1e}; MC residuals {:.1e}/{:.1e}/{:.1e} order {order:.2}; xi = 0 gives |H~| {ht:.1e}",
        residuals[0], residuals[1], residuals[2]
    );
    (ok, text)
}

fn negative_controls(out: &Path) -> Outcome {
    let (scaled_ok, scaled) = run("t2_scaled_phi", out);
    let (sheared_ok, sheared) = run("t2_sheared_fibers", out);
    let sf = failures(&scaled);
    let shf = failures(&sheared);
    let designed = sf.iter().any(|f| f.ends_with("sup-comass")) && shf.iter().any(|f| f == "fperp-comass-on-manifold-max");
    (
        !scaled_ok && !sheared_ok && designed,
        format!("scaled form fails [{}]; sheared fibers fail [{}]", sf.join(", "), shf.join(", ")),
    )
}

#[test]
fn acceptance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cases: Vec<Case<'_>> = vec![
        ("comass laws", Box::new(comass_laws)),
        ("engine vs oracle", Box::new(engine_vs_oracle)),
        ("fiber models", Box::new(|| fiber_models(out))),
        ("conformal construction", Box::new(|| conformal(out))),
        ("horizontal construction", Box::new(|| horizontal(out))),
        ("several calibrations", Box::new(|| several(out))),
        ("multi-level elimination", Box::new(|| multi_level(out))),
        ("mean curvature", Box::new(|| curvature(out))),
        ("negative controls", Box::new(|| negative_controls(out))),
    ];
    let mut failed = Vec::new();
    println!();
    for (k, (name, check)) in cases.iter().enumerate() {
        let (ok, detail) = check();
        println!("criterion {} {} {name}: {detail}", k + 1, if ok { "PASS" } else { "FAIL" });
        if !ok {
            failed.push(k + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
