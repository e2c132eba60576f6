use nosb::market::{
    build_lattice, build_time_grid, payoff_eval, simulate_paths, MarketParams, Payoff, PayoffKind, PathSimulator,
    TimeGrid,
};
use nosb::oracle::lattice_european;
use nosb::rng::{Purpose, StreamKey};
use nosb::{CoordinateSystem, Error};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn desk(m: usize) -> MarketParams {
    MarketParams::symmetric(m, 100.0, 0.05, 0.1, 0.2)
}

#[test]
fn time_grid_spacing() {
    assert_eq!(build_time_grid(1.0, 2).unwrap().dates(), &[0.0, 1.0]);
    assert_eq!(build_time_grid(0.75, 4).unwrap().dates(), &[0.0, 0.25, 0.5, 0.75]);
    assert_eq!(build_time_grid(1.0, 1).unwrap().dates(), &[0.0]);
    assert!(build_time_grid(0.0, 3).is_err());
    assert!(build_time_grid(-1.0, 3).is_err());
    assert!(build_time_grid(1.0, 0).is_err());
    assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
    assert!(TimeGrid::new(vec![0.0, 0.5, 0.5]).is_err());
}

#[test]
fn zero_vol_paths_follow_the_forward_curve() {
    let mut m = desk(2);
    m.vol = vec![0.0, 0.0];
    let grid = TimeGrid::uniform(1.0, 5).unwrap();
    let batch = simulate_paths(&m, &grid, 16, 3).unwrap();
    for b in 0..batch.n_paths {
        for (d, t) in grid.dates().iter().enumerate() {
            let expected = 100.0 * ((0.05 - 0.1) * t).exp();
            for x in batch.state(b, d) {
                assert!((x - expected).abs() <= 1e-12 * expected);
            }
        }
    }
}

#[test]
fn same_seed_gives_identical_batches() {
    let grid = TimeGrid::uniform(1.0, 6).unwrap();
    let a = simulate_paths(&desk(3), &grid, 3000, 11).unwrap();
    let b = simulate_paths(&desk(3), &grid, 3000, 11).unwrap();
    assert_eq!(a.values, b.values);
    let c = simulate_paths(&desk(3), &grid, 3000, 12).unwrap();
    assert_ne!(a.values, c.values);
}

#[test]
fn single_paths_match_batch_regardless_of_order() {
    let grid = TimeGrid::uniform(1.0, 4).unwrap();
    let sim = PathSimulator::new(&desk(2), &grid).unwrap();
    let key = StreamKey::new(5, Purpose::Simulation, 0);
    let batch = sim.batch(key, 2500).unwrap();
    let mut buf = vec![0.0; sim.path_len()];
    for b in (0..2500).rev().step_by(7) {
        sim.fill_path(key, b as u64, &mut buf);
        assert_eq!(&buf[..], &batch.values[b * sim.path_len()..(b + 1) * sim.path_len()]);
    }
}

#[test]
fn first_date_is_the_spot() {
    let mut m = desk(2);
    m.spot = vec![97.3, 101.9];
    let batch = simulate_paths(&m, &TimeGrid::uniform(2.0, 3).unwrap(), 500, 1).unwrap();
    for b in 0..batch.n_paths {
        assert_eq!(batch.state(b, 0), &[97.3, 101.9]);
    }
}

#[test]
fn driftless_terminal_mean_is_the_spot() {
    let m = MarketParams::symmetric(1, 100.0, 0.0, 0.0, 0.2);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let n = 200_000;
    let batch = simulate_paths(&m, &grid, n, 2024).unwrap();
    let xs: Vec<f64> = (0..n).map(|b| batch.state(b, 1)[0]).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    assert!((mean - 100.0).abs() < 3.0 * se, "mean {mean} se {se}");
}

#[test]
fn sample_correlation_of_log_returns() {
    let mut m = desk(2);
    m.correlation = Some(vec![vec![1.0, -0.6], vec![-0.6, 1.0]]);
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let n = 100_000;
    let batch = simulate_paths(&m, &grid, n, 9).unwrap();
    let r: Vec<(f64, f64)> = (0..n)
        .map(|b| {
            let x = batch.state(b, 1);
            ((x[0] / 100.0).ln(), (x[1] / 100.0).ln())
        })
        .collect();
    let (ma, mb) = r.iter().fold((0.0, 0.0), |s, v| (s.0 + v.0 / n as f64, s.1 + v.1 / n as f64));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in &r {
        sab += (a - ma) * (b - mb);
        saa += (a - ma).powi(2);
        sbb += (b - mb).powi(2);
    }
    let rho = sab / (saa * sbb).sqrt();
    // stderr of a sample correlation is about (1 - rho^2) / sqrt(n)
    assert!((rho + 0.6).abs() < 5.0 * 0.64 / (n as f64).sqrt(), "rho {rho}");
    let drift = (0.05 - 0.1 - 0.02) * 1.0;
    assert!((ma - drift).abs() < 5.0 * 0.2 / (n as f64).sqrt());
}

#[test]
fn rejects_invalid_markets() {
    let grid = TimeGrid::uniform(1.0, 3).unwrap();
    let mut m = desk(2);
    m.correlation = Some(vec![vec![1.0, 1.5], vec![1.5, 1.0]]);
    assert!(matches!(PathSimulator::new(&m, &grid), Err(Error::NotPositiveSemidefinite { .. })));
    let mut m = desk(1);
    m.vol = vec![-0.1];
    assert!(PathSimulator::new(&m, &grid).is_err());
    let mut m = desk(1);
    m.spot = vec![0.0];
    assert!(PathSimulator::new(&m, &grid).is_err());
}

#[test]
fn payoff_examples() {
    let p0 = Payoff::new(PayoffKind::MaxCall, 100.0, 0.0).unwrap();
    assert_eq!(payoff_eval(&p0, 110.0, 0.0), 10.0);
    let p = Payoff::new(PayoffKind::MaxCall, 100.0, 0.05).unwrap();
    assert_eq!(payoff_eval(&p, 90.0, 1.0), 0.0);
    assert!((payoff_eval(&p, 110.0, 1.0) - 10.0 * (-0.05f64).exp()).abs() < 1e-12);
    assert!((payoff_eval(&p, 110.0, 1.0) - 9.5123).abs() < 1e-4);
    let min = Payoff::new(PayoffKind::MinCall, 70.0, 0.0).unwrap();
    assert_eq!(min.eval(0.0, &[100.0, 80.0]), 10.0);
    assert!(Payoff::new(PayoffKind::MaxCall, 0.0, 0.0).is_err());
}

#[test]
fn zero_vol_lattice_is_the_forward_curve() {
    let mut m = desk(1);
    m.vol = vec![0.0];
    let grid = TimeGrid::uniform(1.0, 3).unwrap();
    let lat = build_lattice(&m, &grid, 4).unwrap();
    let mut x = [0.0];
    let k = lat.n_steps();
    for j in 0..lat.layer_size(k) {
        lat.node_state(k, j, &mut x);
        assert!((x[0] - 100.0 * (-0.05f64).exp()).abs() < 1e-10);
    }
}

#[test]
fn crr_identities() {
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let lat = build_lattice(&desk(1), &grid, 1).unwrap();
    let f = lat.factors[0];
    assert!((f.up * f.down - 1.0).abs() < 1e-14);
    let growth = ((0.05 - 0.1) * lat.dt).exp();
    assert!((f.prob * f.up + (1.0 - f.prob) * f.down - growth).abs() < 1e-14);
    assert!(f.prob > 0.0 && f.prob < 1.0);
}

#[test]
fn lattice_rejects_unsupported_markets() {
    let grid = TimeGrid::uniform(1.0, 3).unwrap();
    let mut m = desk(2);
    m.correlation = Some(vec![vec![1.0, 0.2], vec![0.2, 1.0]]);
    assert!(matches!(build_lattice(&m, &grid, 10), Err(Error::Unsupported(_))));
    assert!(matches!(build_lattice(&desk(4), &grid, 10), Err(Error::Unsupported(_))));
    assert!(build_lattice(&desk(1), &grid, 0).is_err());
}

/// `E[e^{-rT} (X_T - K)^+]` by Simpson quadrature over the normal density.
fn european_call_quadrature(x0: f64, k: f64, r: f64, q: f64, sigma: f64, t: f64) -> f64 {
    let n = 20_000;
    let (lo, hi) = (-12.0, 12.0);
    let h = (hi - lo) / n as f64;
    let f = |z: f64| {
        let x = x0 * ((r - q - 0.5 * sigma * sigma) * t + sigma * t.sqrt() * z).exp();
        (x - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    (-r * t).exp() * s * h / 3.0
}

#[test]
fn european_lattice_matches_quadrature() {
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let lat = build_lattice(&desk(1), &grid, 500).unwrap();
    let payoff = Payoff::new(PayoffKind::MaxCall, 100.0, 0.05).unwrap();
    let v = lattice_european(&lat, &payoff, &CoordinateSystem::MaxCall(1)).unwrap();
    let exact = european_call_quadrature(100.0, 100.0, 0.05, 0.1, 0.2, 1.0);
    assert!((v / exact - 1.0).abs() < 1e-3, "lattice {v} quadrature {exact}");
}

#[test]
fn two_asset_european_max_call_matches_quadrature() {
    // independent assets: P(max <= y) = F(y)^2, so the call is the integral
    // of 1 - F(y)^2 above the strike
    let (r, q, s, t, k) = (0.05, 0.1, 0.2, 1.0, 100.0);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let cdf = |y: f64| normal.cdf(((y / 100.0).ln() - (r - q - 0.5 * s * s) * t) / (s * t.sqrt()));
    let (n, hi) = (200_000, 1000.0);
    let h = (hi - k) / n as f64;
    let g = |y: f64| 1.0 - cdf(y).powi(2);
    let mut acc = g(k) + g(hi);
    for i in 1..n {
        acc += g(k + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let exact = (-r * t).exp() * acc * h / 3.0;
    let grid = TimeGrid::uniform(1.0, 2).unwrap();
    let lat = build_lattice(&desk(2), &grid, 400).unwrap();
    let payoff = Payoff::new(PayoffKind::MaxCall, k, r).unwrap();
    let v = lattice_european(&lat, &payoff, &CoordinateSystem::MaxCall(2)).unwrap();
    assert!((v / exact - 1.0).abs() < 2e-3, "lattice {v} quadrature {exact}");
}

#[test]
fn mirrored_batch_swaps_assets() {
    let grid = TimeGrid::uniform(1.0, 3).unwrap();
    let batch = simulate_paths(&desk(2), &grid, 10, 4).unwrap();
    let both = batch.with_mirrored_assets();
    assert_eq!(both.n_paths, 20);
    for b in 0..10 {
        for d in 0..3 {
            let (x, y) = (both.state(b, d), both.state(b + 10, d));
            assert_eq!(x, batch.state(b, d));
            assert_eq!((x[0], x[1]), (y[1], y[0]));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn prices_are_positive(seed in any::<u64>(), vol in 0.0f64..1.5, rate in -0.1f64..0.2, m in 1usize..4) {
        let market = MarketParams::symmetric(m, 50.0, rate, 0.02, vol);
        let grid = TimeGrid::uniform(3.0, 7).unwrap();
        let batch = simulate_paths(&market, &grid, 64, seed).unwrap();
        prop_assert!(batch.values.iter().all(|v| *v > 0.0 && v.is_finite()));
    }

    #[test]
    fn path_depends_only_on_seed_and_index(seed in any::<u64>(), b in 0usize..300) {
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let sim = PathSimulator::new(&desk(2), &grid).unwrap();
        let key = StreamKey::new(seed, Purpose::Simulation, 0);
        let batch = sim.batch(key, 300).unwrap();
        let mut buf = vec![0.0; sim.path_len()];
        sim.fill_path(key, b as u64, &mut buf);
        prop_assert_eq!(&buf[..], &batch.values[b * sim.path_len()..(b + 1) * sim.path_len()]);
    }

    #[test]
    fn lattice_is_a_martingale(vol in 0.0f64..0.8, rate in -0.05f64..0.15, q in 0.0f64..0.1, steps in 1usize..60) {
        let market = MarketParams::symmetric(1, 100.0, rate, q, vol);
        let lat = build_lattice(&market, &TimeGrid::uniform(1.0, 4).unwrap(), steps).unwrap();
        prop_assert!(lat.martingale_defect() < 1e-10);
    }

    #[test]
    fn payoff_is_monotone(a in 0.0f64..300.0, da in 0.0f64..50.0, k in 1.0f64..200.0, dk in 0.0f64..50.0, t in 0.0f64..3.0) {
        let p = Payoff::new(PayoffKind::MaxCall, k, 0.03).unwrap();
        let p2 = Payoff::new(PayoffKind::MaxCall, k + dk, 0.03).unwrap();
        prop_assert!(p.eval_stat(a + da, t) >= p.eval_stat(a, t));
        prop_assert!(p2.eval_stat(a, t) <= p.eval_stat(a, t));
        prop_assert!(p.eval_stat(a, t) >= 0.0);
        prop_assert_eq!(p.eval_stat(k, t), 0.0);
    }
}
