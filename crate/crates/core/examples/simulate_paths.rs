//! Simulates correlated Black-Scholes paths and prints per-date statistics.

use nosb::market::{simulate_paths, MarketParams, TimeGrid};

pub fn run_example() -> nosb::Result<()> {
    let mut market = MarketParams::symmetric(2, 100.0, 0.05, 0.1, 0.2);
    market.correlation = Some(vec![vec![1.0, 0.3], vec![0.3, 1.0]]);
    let grid = TimeGrid::uniform(1.0, 5)?;
    let batch = simulate_paths(&market, &grid, 20_000, 42)?;

    println!("date  time   mean(x1)  mean(x2)  mean(max)");
    for d in 0..grid.len() {
        let (mut s1, mut s2, mut smax) = (0.0, 0.0, 0.0);
        for b in 0..batch.n_paths {
            let x = batch.state(b, d);
            s1 += x[0];
            s2 += x[1];
            smax += x[0].max(x[1]);
        }
        let n = batch.n_paths as f64;
        println!("{d:>4}  {:.3}  {:>8.3}  {:>8.3}  {:>9.3}", grid.dates()[d], s1 / n, s2 / n, smax / n);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
