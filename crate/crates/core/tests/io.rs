//! Field files: exact round trips and rejection of damaged input.

use std::sync::Arc;

use calibra::exterior::{MultiCovector, PointMetric};
use calibra::fields::chart::Chart;
use calibra::fields::field::{FormField, MetricField, ScalarField};
use calibra::fields::io::{decode_field, encode_field, read_field, write_field, AnyField};
use nalgebra::DMatrix;

fn charts() -> Vec<Arc<Chart>> {
    vec![
        Arc::new(Chart::unit_torus(2, 16).unwrap()),
        Arc::new(Chart::periodic(vec![16, 20, 16], vec![1.0, 2.0, 0.5]).unwrap()),
        Arc::new(Chart::boxed(vec![16, 24], vec![-0.5, -1.0], vec![1.0, 2.0], 0.2).unwrap()),
    ]
}

fn samples(field: &AnyField) -> Vec<f64> {
    match field {
        AnyField::Scalar(f) => f.values().to_vec(),
        AnyField::Form(f) => f.values().to_vec(),
        AnyField::Metric(f) => f.values().to_vec(),
    }
}

fn fields(chart: &Arc<Chart>) -> Vec<AnyField> {
    let n = chart.dim();
    let scalar = ScalarField::from_fn(chart.clone(), |x| x.iter().map(|v| (3.0 * v).sin()).sum::<f64>() + 0.1);
    let form = FormField::from_fn(chart.clone(), 2, move |x| {
        (0..n * (n - 1) / 2).map(|k| (k as f64 + 1.0) * x[k % x.len()].cos()).collect()
    })
    .unwrap();
    let metric = MetricField::from_fn(chart.clone(), move |x| {
        let mut g = DMatrix::<f64>::identity(n, n) * (2.0 + x[0].sin());
        g[(0, n - 1)] += 0.1;
        g[(n - 1, 0)] += 0.1;
        g.iter().cloned().collect()
    });
    let constant = MetricField::constant(chart.clone(), &PointMetric::identity(n).scaled(3.0)).unwrap();
    let one = FormField::constant(chart.clone(), &MultiCovector::basis(n, &[0]).unwrap()).unwrap();
    vec![
        AnyField::Scalar(scalar),
        AnyField::Form(form),
        AnyField::Metric(metric),
        AnyField::Metric(constant),
        AnyField::Form(one),
    ]
}

#[test]
fn files_round_trip_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    for (c, chart) in charts().iter().enumerate() {
        for (k, field) in fields(chart).iter().enumerate() {
            let path = dir.path().join(format!("f{c}_{k}.field"));
            write_field(&path, field).unwrap();
            let back = read_field(&path).unwrap();
            assert_eq!(std::mem::discriminant(field), std::mem::discriminant(&back));
            let (a, b) = (samples(field), samples(&back));
            assert_eq!(a.len(), b.len());
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
            assert_eq!(encode_field(field), encode_field(&back));
        }
    }
}

#[test]
fn charts_survive_the_round_trip() {
    for chart in charts() {
        let f = AnyField::Scalar(ScalarField::constant(chart.clone(), 1.5));
        let AnyField::Scalar(back) = decode_field(&encode_field(&f)).unwrap() else { panic!("kind changed") };
        assert_eq!(back.chart(), chart.as_ref());
    }
}

#[test]
fn damaged_files_are_rejected() {
    let chart = Arc::new(Chart::unit_torus(2, 16).unwrap());
    let bytes = encode_field(&AnyField::Scalar(ScalarField::constant(chart, 1.0)));
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(decode_field(&bad_magic).is_err());
    assert!(decode_field(&bytes[..bytes.len() - 3]).is_err());
    let mut longer = bytes.clone();
    longer.extend_from_slice(&[0u8; 8]);
    assert!(decode_field(&longer).is_err());
    assert!(read_field(std::path::Path::new("/nonexistent/field")).is_err());
}
