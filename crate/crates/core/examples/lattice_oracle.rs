//! Prices a one-asset Bermudan call on a binomial lattice and extracts the
//! optimal exercise boundary.

use nosb::boundary::LatentGrid;
use nosb::market::{build_lattice, MarketParams, Payoff, PayoffKind, TimeGrid};
use nosb::oracle::{lattice_dp, lattice_european, optimal_boundary_from_dp};
use nosb::{CoordinateSystem, Orientation};

pub fn run_example() -> nosb::Result<()> {
    let market = MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2);
    let grid = TimeGrid::uniform(1.0, 10)?;
    let payoff = Payoff::new(PayoffKind::MaxCall, 100.0, market.rate)?;
    let cs = CoordinateSystem::MaxCall(1);

    let lattice = build_lattice(&market, &grid, 200)?;
    let dp = lattice_dp(&lattice, &payoff, &cs)?;
    println!("bermudan {:.5}", dp.root_value);
    println!("european {:.5}", lattice_european(&lattice, &payoff, &cs)?);

    let levels: Vec<f64> = (0..=4000).map(|k| k as f64 * 0.1).collect();
    let f = optimal_boundary_from_dp(&dp, &cs, &LatentGrid::point(&[1.0]), &levels, Orientation::Epigraph)?;
    for (d, t) in grid.dates().iter().enumerate() {
        println!("t = {t:.3}  exercise when x >= {:.1}", f.at(d, 0));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
