//! Distances between boundaries on a latent grid and the empirical modulus of
//! continuity of the statistic's distribution.

use std::io::Write;

use crate::boundary::{Boundary, LatentGrid};
use crate::error::{check_len, invalid, Result};
use crate::geometry::FuzzyWidth;
use crate::market::PathBatch;
use crate::stopping::{StoppingProblem, ValueEstimate};
use serde::Serialize;

/// Smallest sample count per date accepted by [`empirical_modulus`].
pub const MIN_MODULUS_SAMPLES: usize = 1000;

/// `|a - b|` with `|inf - inf| = 0` and `|inf - finite| = inf`.
#[inline]
pub fn abs_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Values of `f` on every grid node, date-major.
pub fn tabulate_values(f: &dyn Boundary, n_dates: usize, grid: &LatentGrid) -> Vec<Vec<f64>> {
    let nodes = grid.nodes();
    (0..n_dates)
        .map(|d| nodes.iter().map(|xi| f.value(d, xi)).collect())
        .collect()
}

/// `max_{t, xi in K} |f - f'|`.
pub fn sup_distance(f: &dyn Boundary, g: &dyn Boundary, n_dates: usize, grid: &LatentGrid) -> f64 {
    let nodes = grid.nodes();
    let mut worst: f64 = 0.0;
    for d in 0..n_dates {
        for xi in &nodes {
            worst = worst.max(abs_gap(f.value(d, xi), g.value(d, xi)));
        }
    }
    worst
}

/// The relaxed distance as a function of the ball radius `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedDistanceProfile {
    /// Decreasing radii.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl RelaxedDistanceProfile {
    /// The value at the smallest radius, i.e. the supremum over the list.
    pub fn sup_value(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn at(&self, r: f64) -> Option<f64> {
        self.radii.iter().position(|x| *x == r).map(|i| self.values[i])
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["r", "value"])?;
        for (r, v) in self.radii.iter().zip(&self.values) {
            w.write_record([r.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(invalid("empty radius list"));
    }
    if radii.iter().any(|r| !(*r > 0.0)) || radii.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("radii must be positive and strictly decreasing"));
    }
    Ok(())
}

fn within(d2: f64, r: f64) -> bool {
    d2.sqrt() <= r * (1.0 + 1e-9) + 1e-12
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `inf over maps psi with |psi(xi) - xi| <= r of max_xi |h - h'|(psi(xi))`,
/// for each radius. Maps are unconstrained otherwise, so the infimum splits
/// into an independent minimum over the ball around each node.
pub fn relaxed_linf_profile(h: &[f64], g: &[f64], grid: &LatentGrid, radii: &[f64]) -> Result<RelaxedDistanceProfile> {
    check_radii(radii)?;
    check_len(grid.n_nodes(), h.len())?;
    check_len(grid.n_nodes(), g.len())?;
    let nodes = grid.nodes();
    let diff: Vec<f64> = h.iter().zip(g).map(|(a, b)| abs_gap(*a, *b)).collect();
    let values = radii
        .iter()
        .map(|&r| {
            nodes
                .iter()
                .map(|xi| {
                    nodes
                        .iter()
                        .zip(&diff)
                        .filter(|(z, _)| within(sq_dist(z, xi), r))
                        .map(|(_, d)| *d)
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        })
        .collect();
    Ok(RelaxedDistanceProfile {
        radii: radii.to_vec(),
        values,
    })
}

/// Per radius, the maximum over dates of the per-date profile.
pub fn relaxed_linf_tk(
    f: &dyn Boundary,
    g: &dyn Boundary,
    n_dates: usize,
    grid: &LatentGrid,
    radii: &[f64],
) -> Result<RelaxedDistanceProfile> {
    check_radii(radii)?;
    let (hf, hg) = (tabulate_values(f, n_dates, grid), tabulate_values(g, n_dates, grid));
    let mut values = vec![0.0f64; radii.len()];
    for d in 0..n_dates {
        let p = relaxed_linf_profile(&hf[d], &hg[d], grid, radii)?;
        for (v, x) in values.iter_mut().zip(p.values) {
            *v = v.max(x);
        }
    }
    Ok(RelaxedDistanceProfile {
        radii: radii.to_vec(),
        values,
    })
}

/// Epigraph of one date's boundary on `K x a_grid`, stored as the first
/// level index of each column (`a_grid.len()` for an empty column).
#[derive(Clone, Debug, PartialEq)]
pub struct EpigraphGrid {
    pub grid: LatentGrid,
    pub a_grid: Vec<f64>,
    pub starts: Vec<usize>,
}

impl EpigraphGrid {
    pub fn new(values: &[f64], grid: &LatentGrid, a_grid: &[f64]) -> Result<Self> {
        check_len(grid.n_nodes(), values.len())?;
        if a_grid.is_empty() || a_grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("level grid must be nonempty and increasing"));
        }
        let starts = values.iter().map(|v| a_grid.partition_point(|a| a < v)).collect();
        Ok(Self {
            grid: grid.clone(),
            a_grid: a_grid.to_vec(),
            starts,
        })
    }

    pub fn contains(&self, node: usize, level: usize) -> bool {
        level >= self.starts[node]
    }

    pub fn n_levels(&self) -> usize {
        self.a_grid.len()
    }

    /// Largest distance from a cell of `self` to the nearest cell of `other`.
    pub fn directed(&self, other: &Self) -> f64 {
        let nodes = self.grid.nodes();
        let n_a = self.n_levels();
        let mut worst: f64 = 0.0;
        for (i, &s) in self.starts.iter().enumerate() {
            if s == n_a {
                continue;
            }
            let mut best = f64::INFINITY;
            for (j, &t) in other.starts.iter().enumerate() {
                if t == n_a {
                    continue;
                }
                let dxi = sq_dist(&nodes[i], &nodes[j]).sqrt();
                let da = (other.a_grid[t] - self.a_grid[s]).max(0.0);
                best = best.min(dxi.max(da));
            }
            worst = worst.max(best);
        }
        worst
    }
}

/// Hausdorff distance between the truncated epigraphs of `f(t, .)` and
/// `g(t, .)` under `max(|xi - xi'|, |a - a'|)`. Levels above the last entry
/// of `a_grid` are cut off; a node where one boundary is finite but above
/// the cap while the other is finite is an error.
pub fn hausdorff_epigraph(f: &[f64], g: &[f64], grid: &LatentGrid, a_grid: &[f64]) -> Result<f64> {
    let cap = *a_grid.last().ok_or_else(|| invalid("empty level grid"))?;
    for (a, b) in f.iter().zip(g) {
        let over = |v: &f64| v.is_finite() && *v > cap;
        if (over(a) && b.is_finite()) || (over(b) && a.is_finite()) {
            return Err(invalid(format!("level cap {cap} is below a finite boundary value ({a}, {b})")));
        }
    }
    let (ef, eg) = (EpigraphGrid::new(f, grid, a_grid)?, EpigraphGrid::new(g, grid, a_grid)?);
    Ok(ef.directed(&eg).max(eg.directed(&ef)))
}

/// Empirical moduli `rho_t(iota) = sup_a F_t(a + iota) - F_t(a)` and their sum.
#[derive(Clone, Debug, PartialEq)]
pub struct ModulusTable {
    pub iotas: Vec<f64>,
    /// `per_date[k][t]` for `iotas[k]`.
    pub per_date: Vec<Vec<f64>>,
}

impl ModulusTable {
    pub fn total(&self, k: usize) -> f64 {
        self.per_date[k].iter().sum()
    }

    pub fn totals(&self) -> Vec<f64> {
        (0..self.iotas.len()).map(|k| self.total(k)).collect()
    }

    /// Rows `iota,date,rho`, plus one `iota,sum,rho` row per width.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iota", "date", "rho"])?;
        for (k, iota) in self.iotas.iter().enumerate() {
            for (t, r) in self.per_date[k].iter().enumerate() {
                w.write_record([iota.to_string(), t.to_string(), r.to_string()])?;
            }
            w.write_record([iota.to_string(), "sum".into(), self.total(k).to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Largest fraction of samples in a closed window of width `iota`; `sorted`
/// must be ascending. Infinite samples never fall in a window.
pub fn window_fraction(sorted: &[f64], iota: f64) -> f64 {
    if iota <= 0.0 || sorted.is_empty() {
        return 0.0;
    }
    let finite: &[f64] = {
        let lo = sorted.partition_point(|v| *v == f64::NEG_INFINITY);
        let hi = sorted.partition_point(|v| *v < f64::INFINITY);
        &sorted[lo..hi.max(lo)]
    };
    let mut best = 0;
    let mut hi = 0;
    for lo in 0..finite.len() {
        hi = hi.max(lo);
        while hi < finite.len() && finite[hi] <= finite[lo] + iota {
            hi += 1;
        }
        best = best.max(hi - lo);
    }
    best as f64 / sorted.len() as f64
}

/// `samples[t]` holds draws of the statistic at date `t`.
pub fn empirical_modulus(samples: &[Vec<f64>], iotas: &[f64]) -> Result<ModulusTable> {
    if iotas.iter().any(|i| !(*i >= 0.0)) {
        return Err(invalid("widths must be nonnegative"));
    }
    let mut sorted = Vec::with_capacity(samples.len());
    for (t, s) in samples.iter().enumerate() {
        if s.len() < MIN_MODULUS_SAMPLES {
            return Err(invalid(format!(
                "date {t} has {} samples, need at least {MIN_MODULUS_SAMPLES}",
                s.len()
            )));
        }
        let mut v = s.clone();
        v.sort_by(f64::total_cmp);
        sorted.push(v);
    }
    Ok(ModulusTable {
        iotas: iotas.to_vec(),
        per_date: iotas
            .iter()
            .map(|&i| sorted.iter().map(|s| window_fraction(s, i)).collect())
            .collect(),
    })
}

/// One row of a relaxed-versus-strict comparison at fuzzy width `eps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RelaxationGap {
    pub eps: f64,
    pub relaxed: ValueEstimate,
    pub strict: ValueEstimate,
    /// `|relaxed - strict|`.
    pub gap: f64,
    /// `sqrt(se_relaxed^2 + se_strict^2)`.
    pub stderr: f64,
    pub constant: f64,
    /// Summed modulus of the signed gaps at width `eps`.
    pub modulus: f64,
    /// `constant * sqrt(modulus)`.
    pub bound: f64,
}

/// Relaxed and strict values of `f` on one batch for each width, with the
/// bound `C sqrt(rho(eps))` built from the batch.
pub fn relaxation_sweep(
    problem: &StoppingProblem,
    f: &dyn Boundary,
    paths: &PathBatch,
    widths: &[f64],
) -> Result<Vec<RelaxationGap>> {
    let strict = problem.value_strict(f, paths);
    let constant = problem.lemma_constant(paths);
    let moduli = empirical_modulus(&problem.gap_samples(f, paths), widths)?;
    widths
        .iter()
        .enumerate()
        .map(|(k, &eps)| {
            let relaxed = problem.value_relaxed(f, FuzzyWidth::new(eps)?, paths);
            let modulus = moduli.total(k);
            Ok(RelaxationGap {
                eps,
                relaxed,
                strict,
                gap: (relaxed.mean - strict.mean).abs(),
                stderr: relaxed.stderr.hypot(strict.stderr),
                constant,
                modulus,
                bound: constant * modulus.sqrt(),
            })
        })
        .collect()
}

pub fn write_relaxation_csv<W: Write>(rows: &[RelaxationGap], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eps", "relaxed", "relaxed_stderr", "strict", "strict_stderr", "gap", "stderr", "constant", "modulus", "bound"])?;
    for r in rows {
        w.write_record(
            [r.eps, r.relaxed.mean, r.relaxed.stderr, r.strict.mean, r.strict.stderr, r.gap, r.stderr, r.constant, r.modulus, r.bound]
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}
