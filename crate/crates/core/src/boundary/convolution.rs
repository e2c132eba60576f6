//! Inf- and sup-convolutions on a latent grid by direct minimization over
//! grid nodes.

use super::{Boundary, Interpolation, LatentGrid, TabularBoundary};
use crate::error::{invalid, Result};
use crate::market::TimeGrid;

/// A regularized boundary together with the node achieving the optimum for
/// every `(date, node)`, date-major.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub boundary: TabularBoundary,
    pub minimizers: Vec<usize>,
}

impl Envelope {
    pub fn minimizer(&self, date: usize, node: usize) -> usize {
        self.minimizers[date * self.boundary.grid().n_nodes() + node]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `h_delta(xi) = min_{xi' in K} h(xi') + |xi' - xi|^2 / delta`. Infinite
/// values never attain the minimum and are skipped.
pub fn inf_convolution(b: &dyn Boundary, delta: f64, grid: &LatentGrid, dates: &TimeGrid) -> Result<Envelope> {
    convolve(b, delta, grid, dates, false)
}

/// Same result as [`inf_convolution`], restricting candidates to the ball of
/// radius `sqrt(delta * (max h - min h))` around each node, which contains
/// every minimizer.
pub fn inf_convolution_pruned(b: &dyn Boundary, delta: f64, grid: &LatentGrid, dates: &TimeGrid) -> Result<Envelope> {
    convolve(b, delta, grid, dates, true)
}

/// `h^delta(xi) = max_{xi' in K} h(xi') - |xi' - xi|^2 / delta`, computed as
/// `-inf_convolution(-h)`.
pub fn sup_convolution(b: &dyn Boundary, delta: f64, grid: &LatentGrid, dates: &TimeGrid) -> Result<Envelope> {
    let neg = super::FnBoundary(|d: usize, xi: &[f64]| -b.value(d, xi));
    let env = convolve(&neg, delta, grid, dates, false)?;
    Ok(Envelope {
        boundary: env.boundary.map(|v| -v),
        minimizers: env.minimizers,
    })
}

fn convolve(b: &dyn Boundary, delta: f64, grid: &LatentGrid, dates: &TimeGrid, prune: bool) -> Result<Envelope> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(invalid(format!("convolution parameter must be positive, got {delta}")));
    }
    let n = grid.n_nodes();
    let nodes = grid.nodes();
    let mut values = Vec::with_capacity(n * dates.len());
    let mut minimizers = Vec::with_capacity(n * dates.len());
    for date in 0..dates.len() {
        let h: Vec<f64> = nodes.iter().map(|xi| b.value(date, xi)).collect();
        let finite: Vec<usize> = (0..n).filter(|&i| h[i] < f64::INFINITY).collect();
        if finite.is_empty() {
            return Err(invalid(format!("boundary has no finite value on K at date {date}")));
        }
        if h.iter().any(|v| v.is_nan() || *v == f64::NEG_INFINITY) {
            return Err(invalid("boundary must be finite or +inf on K"));
        }
        let (lo, hi) = finite
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(h[i]), hi.max(h[i])));
        let radius2 = delta * (hi - lo);
        for xi in &nodes {
            let mut best = f64::INFINITY;
            let mut arg = finite[0];
            for &j in &finite {
                let d2 = sq_dist(&nodes[j], xi);
                if prune && d2 > radius2 * (1.0 + 1e-12) + 1e-300 {
                    continue;
                }
                let v = h[j] + d2 / delta;
                if v < best {
                    best = v;
                    arg = j;
                }
            }
            values.push(best);
            minimizers.push(arg);
        }
    }
    Ok(Envelope {
        boundary: TabularBoundary::new(grid.clone(), dates.dates().to_vec(), values, Interpolation::Multilinear)?,
        minimizers,
    })
}
