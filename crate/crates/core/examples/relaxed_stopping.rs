//! Compares the hitting time of a boundary with its relaxed counterpart for
//! several fuzzy widths.

use nosb::boundary::DateBoundary;
use nosb::market::{simulate_paths, MarketParams, Payoff, PayoffKind, TimeGrid};
use nosb::metrics::relaxation_sweep;
use nosb::{CoordinateSystem, Orientation, StoppingProblem};

pub fn run_example() -> nosb::Result<()> {
    let market = MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2);
    let grid = TimeGrid::uniform(1.0, 10)?;
    let payoff = Payoff::new(PayoffKind::MaxCall, 100.0, market.rate)?;
    let problem = StoppingProblem::new(payoff, CoordinateSystem::MaxCall(1), Orientation::Epigraph, true);

    // a boundary that decreases linearly towards the strike
    let f = DateBoundary((0..grid.len()).map(|d| 118.0 - 1.2 * d as f64).collect());
    let paths = simulate_paths(&market, &grid, 50_000, 7)?;

    let first = paths.path(0);
    println!("path 0 stops at date {:?}", problem.hitting_time(&f, first));
    let rule = problem.relaxed_weights(&f, nosb::FuzzyWidth::new(2.0)?, first);
    println!("relaxed weights (eps = 2): {:?}", rule.weights);

    println!("eps     relaxed   strict    gap       bound");
    for r in relaxation_sweep(&problem, &f, &paths, &[2.0, 0.5, 0.1, 0.02])? {
        println!(
            "{:<6}  {:.5}  {:.5}  {:.5}  {:.4}",
            r.eps, r.relaxed.mean, r.strict.mean, r.gap, r.bound
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
