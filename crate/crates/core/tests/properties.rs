//! Randomized algebraic properties of covectors, frames, comass and cutoff profiles.

use nalgebra::DMatrix;
use proptest::prelude::*;

use calibra::comass::{comass_point, scaling_law, OptimizerBudget};
use calibra::exterior::{binomial, evaluate, simple_norm, MultiCovector, PointMetric, SimpleFrame};
use calibra::tubular::profile::BumpProfile;

fn coeffs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, len)
}

/// A pair of covectors on a common R^n whose degrees sum to at most n.
fn form_pair() -> impl Strategy<Value = (MultiCovector, MultiCovector)> {
    (2usize..=5)
        .prop_flat_map(|n| (Just(n), 0..=n))
        .prop_flat_map(|(n, p)| (Just(n), Just(p), 0..=n - p))
        .prop_flat_map(|(n, p, q)| (Just(n), Just(p), Just(q), coeffs(binomial(n, p)), coeffs(binomial(n, q))))
        .prop_map(|(n, p, q, a, b)| (MultiCovector::new(n, p, a).unwrap(), MultiCovector::new(n, q, b).unwrap()))
}

fn matrix(n: usize, m: usize) -> impl Strategy<Value = DMatrix<f64>> {
    coeffs(n * m).prop_map(move |c| DMatrix::from_vec(n, m, c))
}

fn metric(n: usize) -> impl Strategy<Value = PointMetric> {
    matrix(n, n).prop_map(move |b| PointMetric::new(&b * b.transpose() + DMatrix::identity(n, n) * 0.3).unwrap())
}

fn close(a: &MultiCovector, b: &MultiCovector, tol: f64) -> bool {
    let scale = 1.0 + a.max_abs().max(b.max_abs());
    a.coeffs().iter().zip(b.coeffs()).all(|(x, y)| (x - y).abs() <= tol * scale)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn wedge_is_graded_commutative((a, b) in form_pair()) {
        let ab = a.wedge(&b).unwrap();
        let ba = b.wedge(&a).unwrap();
        let sign = if (a.degree() * b.degree()) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!(close(&ab, &(&ba * sign), 1e-12));
    }

    #[test]
    fn pullback_commutes_with_wedge((a, b) in form_pair(), seed in coeffs(25)) {
        let n = a.dim();
        let p = DMatrix::from_fn(n, n, |i, j| seed[i * 5 + j]);
        let lhs = a.wedge(&b).unwrap().pullback(&p).unwrap();
        let rhs = a.pullback(&p).unwrap().wedge(&b.pullback(&p).unwrap()).unwrap();
        prop_assert!(close(&lhs, &rhs, 1e-10));
    }

    #[test]
    fn evaluation_and_norm_are_homogeneous(v in matrix(4, 2), f in coeffs(6), w in -3.0..3.0f64, g in metric(4)) {
        let phi = MultiCovector::new(4, 2, f).unwrap();
        let unit = SimpleFrame::new(v.clone(), 1.0);
        let weighted = SimpleFrame::new(v, w);
        let e1 = evaluate(&phi, &unit).unwrap();
        let ew = evaluate(&phi, &weighted).unwrap();
        prop_assert!((ew - w * e1).abs() <= 1e-12 * (1.0 + e1.abs() * w.abs()));
        let n1 = simple_norm(&unit, &g).unwrap();
        let nw = simple_norm(&weighted, &g).unwrap();
        prop_assert!((nw - w.abs() * n1).abs() <= 1e-12 * (1.0 + n1 * w.abs()));
    }

    #[test]
    fn hypersurface_covectors_bound_every_frame(f in coeffs(4), v in matrix(4, 3), g in metric(4)) {
        // Degree n - 1 has an exact comass, so |phi(V)| <= comass * |V|_g without slack from the optimizer.
        let phi = MultiCovector::new(4, 3, f).unwrap();
        let c = comass_point(&phi, &g, &OptimizerBudget::default()).unwrap().value;
        let frame = SimpleFrame::new(v, 1.0);
        let lhs = evaluate(&phi, &frame).unwrap().abs();
        let rhs = c * simple_norm(&frame, &g).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-10) + 1e-12);
    }

    #[test]
    fn comass_scales_with_the_metric(f in coeffs(10), g in metric(5), s in 0.1..10.0f64) {
        let phi = MultiCovector::new(5, 2, f).unwrap();
        let law = scaling_law(&phi, &g, s, &OptimizerBudget::default()).unwrap();
        prop_assert!(law.equal(1e-6), "lhs {} rhs {}", law.lhs, law.rhs);
    }

    #[test]
    fn profiles_are_monotone_cutoffs(eps in 0.01..1.0f64, t in 0.0..1.5f64, dt in 0.0..0.5f64) {
        for p in [BumpProfile::rho(eps), BumpProfile::sigma(eps), BumpProfile::rho_tilde(eps)] {
            let (a, b) = (p.value(t * eps), p.value((t + dt) * eps));
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert!(b <= a);
            prop_assert!(p.derivative(t * eps) <= 0.0);
            if t * eps <= p.r1 {
                prop_assert_eq!(a, 1.0);
            }
            if t * eps >= p.r2 {
                prop_assert_eq!(a, 0.0);
            }
        }
    }
}
