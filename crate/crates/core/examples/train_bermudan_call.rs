//! Trains a neural stopping boundary for a one-asset Bermudan call and
//! compares it with the lattice price.

use nosb::boundary::Boundary;
use nosb::market::{build_lattice, PathSimulator};
use nosb::oracle::lattice_price;
use nosb::train::{evaluate_trained, train_nosb, LearningRate, TrainConfig};
use nosb::{CoordinateSystem, MarketParams, Orientation, Payoff, PayoffKind, StoppingProblem, TimeGrid};

pub fn run_example() -> nosb::Result<()> {
    let market = MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2);
    let grid = TimeGrid::uniform(1.0, 10)?;
    let payoff = Payoff::new(PayoffKind::MaxCall, 100.0, market.rate)?;
    let problem = StoppingProblem::new(payoff, CoordinateSystem::MaxCall(1), Orientation::Epigraph, true);

    let cfg = TrainConfig {
        iterations: 400,
        batch_size: 4096,
        eps: 0.5,
        learning_rate: LearningRate::Decay { rate: 1e-3, decay_iters: 200.0 },
        clip_norm: Some(5.0),
        hidden: vec![32, 32],
        ..TrainConfig::default()
    };
    let (b, log) = train_nosb(&cfg, &market, &grid, &problem)?;
    let last = log.records.last().expect("at least one iteration");
    println!("final batch value {:.4}", last.value);

    let sim = PathSimulator::new(&market, &grid)?;
    let est = evaluate_trained(&b, 200_000, 1, &sim, &problem)?;
    let oracle = lattice_price(&build_lattice(&market, &grid, 200)?, &payoff, &problem.coords)?;
    println!("trained {:.4} +- {:.4}, lattice {:.4}", est.mean, est.stderr, oracle);
    for d in 1..grid.len() {
        println!("date {d}: boundary {:.2}", b.value(d, &[1.0]));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
