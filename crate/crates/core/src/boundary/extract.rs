use super::{Interpolation, LatentGrid, TabularBoundary};
use crate::error::{invalid, Result};
use crate::geometry::{Branch, CoordinateSystem, Orientation};
use crate::market::TimeGrid;

/// Tabulates `inf {a : A^{-1}(xi, a) in S_t}` (epigraph) or the matching `sup`
/// (hypograph) over the levels in `a_grid`, for every date and latent node.
///
/// Levels are searched only up to the last entry of `a_grid`; an epigraph
/// section with no member up to that cap is recorded as `+inf`, an empty
/// hypograph section as `0`.
pub fn extract_boundary<P>(
    member: P,
    cs: &CoordinateSystem,
    grid: &LatentGrid,
    a_grid: &[f64],
    orientation: Orientation,
    dates: &TimeGrid,
) -> Result<TabularBoundary>
where
    P: Fn(usize, &[f64]) -> bool,
{
    if a_grid.is_empty() || a_grid.windows(2).any(|w| !(w[1] > w[0])) || a_grid[0] < 0.0 {
        return Err(invalid("level grid must be nonempty, nonnegative and increasing"));
    }
    let n = grid.n_nodes();
    let mut values = Vec::with_capacity(n * dates.len());
    let mut xi = vec![0.0; grid.dim()];
    for date in 0..dates.len() {
        for node in 0..n {
            grid.node_into(node, &mut xi);
            let mut hit = None;
            let levels: Box<dyn Iterator<Item = &f64>> = match orientation {
                Orientation::Epigraph => Box::new(a_grid.iter()),
                Orientation::Hypograph => Box::new(a_grid.iter().rev()),
            };
            for &a in levels {
                let x = cs.a_inverse(&xi, a, Branch::default())?;
                if member(date, &x) {
                    hit = Some(a);
                    break;
                }
            }
            values.push(match (hit, orientation) {
                (Some(a), _) => a,
                (None, Orientation::Epigraph) => f64::INFINITY,
                (None, Orientation::Hypograph) => 0.0,
            });
        }
    }
    TabularBoundary::new(grid.clone(), dates.dates().to_vec(), values, Interpolation::Nearest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::tabular::linspace;

    #[test]
    fn level_set_region_recovers_its_level() {
        let cs = CoordinateSystem::MaxCall(2);
        let grid = LatentGrid::new(vec![vec![1.0], vec![0.2, 0.6, 1.0]]).unwrap();
        let a_grid = linspace(0.0, 200.0, 2001).unwrap();
        let dates = TimeGrid::uniform(1.0, 3).unwrap();
        let f = extract_boundary(
            |_, x: &[f64]| x.iter().copied().fold(0.0, f64::max) >= 123.45,
            &cs,
            &grid,
            &a_grid,
            Orientation::Epigraph,
            &dates,
        )
        .unwrap();
        for v in f.values() {
            assert!(*v >= 123.45 && *v - 123.45 <= 0.1 + 1e-12, "{v}");
        }
    }

    #[test]
    fn empty_region_is_infinite() {
        let cs = CoordinateSystem::MaxCall(1);
        let grid = LatentGrid::point(&[1.0]);
        let a_grid = linspace(0.0, 10.0, 11).unwrap();
        let dates = TimeGrid::uniform(1.0, 2).unwrap();
        let f = extract_boundary(|_, _: &[f64]| false, &cs, &grid, &a_grid, Orientation::Epigraph, &dates).unwrap();
        assert!(f.values().iter().all(|v| *v == f64::INFINITY));
        let g = extract_boundary(|_, _: &[f64]| false, &cs, &grid, &a_grid, Orientation::Hypograph, &dates).unwrap();
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hypograph_takes_the_largest_member() {
        let cs = CoordinateSystem::MinCall2d;
        let grid = LatentGrid::uniform_1d(1.0, 2.0, 3).unwrap();
        let a_grid = linspace(0.0, 10.0, 101).unwrap();
        let dates = TimeGrid::new(vec![0.0]).unwrap();
        let f = extract_boundary(
            |_, x: &[f64]| x[0].min(x[1]) <= 4.0,
            &cs,
            &grid,
            &a_grid,
            Orientation::Hypograph,
            &dates,
        )
        .unwrap();
        assert!(f.values().iter().all(|v| (*v - 4.0).abs() < 1e-9));
    }
}
