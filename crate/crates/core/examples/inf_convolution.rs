//! Regularizes a lower semicontinuous step boundary by inf-convolution.

use nosb::boundary::{inf_convolution, FnBoundary, LatentGrid};
use nosb::market::TimeGrid;

pub fn run_example() -> nosb::Result<()> {
    let grid = LatentGrid::uniform_1d(0.0, 1.0, 11)?;
    let dates = TimeGrid::new(vec![0.0])?;
    let step = FnBoundary(|_: usize, xi: &[f64]| if xi[0] <= 0.5 { 0.0 } else { 1.0 });

    for delta in [0.2, 0.05, 0.01] {
        let env = inf_convolution(&step, delta, &grid, &dates)?;
        let row: Vec<String> = env.boundary.date_values(0).iter().map(|v| format!("{v:.2}")).collect();
        println!("delta {delta:<5} {}", row.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
