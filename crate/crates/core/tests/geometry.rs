use nosb::boundary::{ConstantBoundary, FnBoundary};
use nosb::geometry::{gap, gap_distance, in_stop_region, phase_indicator, stops, Branch};
use nosb::{CoordinateSystem, FuzzyWidth, Orientation};
use proptest::prelude::*;

const EPI: Orientation = Orientation::Epigraph;

#[test]
fn coordinate_examples() {
    let mc = CoordinateSystem::MaxCall(2);
    assert_eq!(mc.xi(&[100.0, 80.0]).unwrap(), vec![1.0, 0.8]);
    assert_eq!(mc.xi(&[50.0, 50.0]).unwrap(), vec![1.0, 1.0]);
    assert_eq!(mc.alpha(&[100.0, 80.0]).unwrap(), 100.0);
    let min = CoordinateSystem::MinCall2d;
    assert_eq!(min.xi(&[100.0, 80.0]).unwrap(), vec![1.25]);
    assert_eq!(min.alpha(&[100.0, 80.0]).unwrap(), 80.0);
    assert_eq!(min.alpha(&[7.0, 7.0]).unwrap(), 7.0);
    assert_eq!(mc.alpha(&[7.0, 7.0]).unwrap(), 7.0);
    assert!(mc.xi(&[0.0, 1.0]).is_err());
    assert!(min.alpha(&[-1.0, 1.0]).is_err());
}

#[test]
fn inverse_examples() {
    let mc = CoordinateSystem::MaxCall(2);
    assert_eq!(mc.a_inverse(&[1.0, 0.8], 100.0, Branch::default()).unwrap(), vec![100.0, 80.0]);
    assert_eq!(mc.a_inverse(&[1.0, 1.0], 50.0, Branch::default()).unwrap(), vec![50.0, 50.0]);
    let min = CoordinateSystem::MinCall2d;
    assert_eq!(min.a_inverse(&[1.25], 80.0, Branch::FirstLarger).unwrap(), vec![100.0, 80.0]);
    assert_eq!(min.a_inverse(&[1.25], 80.0, Branch::SecondLarger).unwrap(), vec![80.0, 100.0]);
    assert!(mc.a_inverse(&[0.9, 0.8], 1.0, Branch::default()).is_err());
    assert!(min.a_inverse(&[0.5], 1.0, Branch::default()).is_err());
}

#[test]
fn gap_examples() {
    let cs = CoordinateSystem::MaxCall(1);
    assert!((gap_distance(&ConstantBoundary(1.2), 0, &[1.0], &cs, EPI) - 0.2).abs() < 1e-15);
    assert_eq!(gap_distance(&ConstantBoundary(1.2), 0, &[1.5], &cs, EPI), 0.0);
    assert_eq!(gap_distance(&ConstantBoundary(f64::INFINITY), 0, &[1e9], &cs, EPI), f64::INFINITY);
    assert_eq!(gap(1.2, 1.5, Orientation::Hypograph), 0.30000000000000004);
    assert!(in_stop_region(&ConstantBoundary(0.0), 3, &[1e-9], &cs, EPI));
    assert!(!in_stop_region(&ConstantBoundary(f64::INFINITY), 0, &[1e300], &cs, EPI));
    assert!(in_stop_region(&ConstantBoundary(100.0), 0, &[100.0], &cs, EPI));
    assert!(in_stop_region(&ConstantBoundary(100.0), 0, &[100.0], &cs, Orientation::Hypograph));
}

#[test]
fn phase_indicator_examples() {
    let w = FuzzyWidth::new(0.1).unwrap();
    assert_eq!(phase_indicator(0.0, w), 1.0);
    assert!((phase_indicator(0.05, w) - 0.5).abs() < 1e-15);
    assert_eq!(phase_indicator(0.2, w), 0.0);
    assert!(FuzzyWidth::new(0.0).is_err());
    assert!(FuzzyWidth::new(-1.0).is_err());
}

fn state(m: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-3f64..1e4, m)
}

proptest! {
    #[test]
    fn max_call_round_trip(x in (1usize..6).prop_flat_map(state)) {
        let cs = CoordinateSystem::MaxCall(x.len());
        let back = cs.a_inverse(&cs.xi(&x).unwrap(), cs.alpha(&x).unwrap(), Branch::default()).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
        prop_assert!(cs.alpha(&x).unwrap() > 0.0);
    }

    #[test]
    fn min_call_round_trip(x in state(2)) {
        let cs = CoordinateSystem::MinCall2d;
        let branch = if x[0] >= x[1] { Branch::FirstLarger } else { Branch::SecondLarger };
        let back = cs.a_inverse(&cs.xi(&x).unwrap(), cs.alpha(&x).unwrap(), branch).unwrap();
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn raising_the_boundary_shrinks_the_region(x in state(3), c in 0.0f64..1e4, lift in 0.0f64..100.0) {
        let cs = CoordinateSystem::MaxCall(3);
        let low = FnBoundary(|_: usize, xi: &[f64]| c * xi[1]);
        let high = FnBoundary(|_: usize, xi: &[f64]| c * xi[1] + lift);
        if in_stop_region(&high, 0, &x, &cs, EPI) {
            prop_assert!(in_stop_region(&low, 0, &x, &cs, EPI));
        }
    }

    #[test]
    fn phase_indicator_shape(d in -10.0f64..10.0, e in -10.0f64..10.0, eps in 1e-3f64..5.0) {
        let w = FuzzyWidth::new(eps).unwrap();
        let (pd, pe) = (phase_indicator(d, w), phase_indicator(e, w));
        prop_assert!((0.0..=1.0).contains(&pd));
        if d <= 0.0 { prop_assert_eq!(pd, 1.0); }
        if d >= eps { prop_assert_eq!(pd, 0.0); }
        if d > 0.0 && d < eps { prop_assert!((pd - (1.0 - d / eps)).abs() < 1e-12); }
        prop_assert!((pd - pe).abs() <= (d - e).abs() / eps + 1e-12);
    }

    #[test]
    fn fuzzy_band_is_a_set_difference(x in state(2), c in 1.0f64..1e4, eps in 1e-3f64..100.0) {
        let cs = CoordinateSystem::MaxCall(2);
        let f = FnBoundary(|_: usize, xi: &[f64]| c * (0.5 + 0.5 * xi[0]));
        let lowered = FnBoundary(|_: usize, xi: &[f64]| c * (0.5 + 0.5 * xi[0]) - eps);
        let d = gap_distance(&f, 0, &x, &cs, EPI);
        let in_band = in_stop_region(&lowered, 0, &x, &cs, EPI) && !in_stop_region(&f, 0, &x, &cs, EPI);
        // rounding of f - eps can move a point sitting exactly on the band edge
        let a = cs.alpha(&x).unwrap();
        let fv = c * (0.5 + 0.5 * x[0] / a);
        if ((fv - eps) - a).abs() > 1e-9 * fv {
            prop_assert_eq!(d > 0.0 && d <= eps, in_band);
        }
        prop_assert_eq!(d == 0.0, stops(fv, a, EPI));
    }
}
