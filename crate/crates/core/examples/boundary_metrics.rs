//! Distances between two tabular boundaries: sup norm, relaxed sup norm and
//! Hausdorff distance of the epigraphs.

use nosb::boundary::{Interpolation, LatentGrid, TabularBoundary};
use nosb::metrics::{hausdorff_epigraph, relaxed_linf_profile, sup_distance};

pub fn run_example() -> nosb::Result<()> {
    let grid = LatentGrid::uniform_1d(0.0, 1.0, 21)?;
    let xs = grid.axes()[0].clone();
    let smooth: Vec<f64> = xs.iter().map(|x| 1.0 + x).collect();
    let shifted: Vec<f64> = xs.iter().map(|x| if *x < 0.5 { 1.0 + x } else { 1.25 + x }).collect();

    let f = TabularBoundary::new(grid.clone(), vec![0.0], smooth.clone(), Interpolation::Multilinear)?;
    let g = TabularBoundary::new(grid.clone(), vec![0.0], shifted.clone(), Interpolation::Multilinear)?;
    println!("sup distance      {:.3}", sup_distance(&f, &g, 1, &grid));

    let levels: Vec<f64> = (0..=300).map(|k| k as f64 * 0.01).collect();
    println!("hausdorff         {:.3}", hausdorff_epigraph(&smooth, &shifted, &grid, &levels)?);

    let profile = relaxed_linf_profile(&smooth, &shifted, &grid, &[0.6, 0.4, 0.2, 0.05])?;
    for (r, v) in profile.radii.iter().zip(&profile.values) {
        println!("relaxed r = {r:<4}  {v:.3}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> nosb::Result<()> {
    run_example()
}
