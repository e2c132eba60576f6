//! Monte Carlo error of a fixed boundary's value as the path count grows.

use nosb::boundary::DateBoundary;
use nosb::market::PathSimulator;
use nosb::rng::{Purpose, StreamKey};
use nosb::{CoordinateSystem, MarketParams, Orientation, Payoff, PayoffKind, StoppingProblem, TimeGrid};

pub fn run_example() -> nosb::Result<()> {
    let market = MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2);
    let grid = TimeGrid::uniform(1.0, 10)?;
    let payoff = Payoff::new(PayoffKind::MaxCall, 100.0, market.rate)?;
    let problem = StoppingProblem::new(payoff, CoordinateSystem::MaxCall(1), Orientation::Epigraph, true);
    let f = DateBoundary((0..grid.len()).map(|d| 118.0 - 1.2 * d as f64).collect());
    let sim = PathSimulator::new(&market, &grid)?;

    println!("paths     value     stderr    stderr*sqrt(J)");
    for (k, n) in [10_000usize, 40_000, 160_000].into_iter().enumerate() {
        let est = problem.value_strict_streamed(&f, &sim, StreamKey::new(3, Purpose::Evaluation, k as u64), n);
        println!("{n:<8}  {:.5}  {:.5}   {:.3}", est.mean, est.stderr, est.stderr * (n as f64).sqrt());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
