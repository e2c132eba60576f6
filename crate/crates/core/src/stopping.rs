//! Hitting times, boundary-induced relaxed stopping rules and their values.

use std::io::Write;

use rayon::prelude::*;

use crate::boundary::Boundary;
use crate::error::{check_len, invalid, Result};
use crate::geometry::{gap, phase_indicator, stops, CoordinateSystem, FuzzyWidth, Orientation};
use crate::market::{PathBatch, PathSimulator, PathView, Payoff};
use crate::rng::StreamKey;

/// Paths per work unit in parallel reductions. Fixed so that results do not
/// depend on the number of worker threads.
pub(crate) const CHUNK: usize = 1024;

/// Mean, standard error and sample count of a Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Running mean and sum of squared deviations, mergeable across chunks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MeanAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * self.n as f64 * other.n as f64 / n as f64;
        self.n = n;
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn estimate(&self) -> ValueEstimate {
        let var = if self.n > 1 { self.m2 / (self.n - 1) as f64 } else { 0.0 };
        ValueEstimate {
            mean: self.mean,
            stderr: if self.n > 0 { (var / self.n as f64).sqrt() } else { 0.0 },
            n: self.n,
        }
    }
}

impl FromIterator<f64> for MeanAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// Maps each fixed-size chunk of `0..n` in parallel and merges the partial
/// results in chunk order.
pub(crate) fn chunked_mean<F>(n: usize, f: F) -> MeanAccumulator
where
    F: Fn(std::ops::Range<usize>) -> MeanAccumulator + Sync,
{
    let parts: Vec<MeanAccumulator> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| f(c * CHUNK..((c + 1) * CHUNK).min(n)))
        .collect();
    let mut acc = MeanAccumulator::default();
    parts.iter().for_each(|p| acc.merge(p));
    acc
}

/// Per-path stopping weights over the exercise dates.
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedRule {
    pub weights: Vec<f64>,
}

impl RelaxedRule {
    pub fn dirac(n_dates: usize, date: usize) -> Self {
        let mut weights = vec![0.0; n_dates];
        weights[date] = 1.0;
        Self { weights }
    }

    /// The rule of a hitting time; a path that never stops carries no mass.
    pub fn from_hitting(n_dates: usize, tau: Option<usize>) -> Self {
        match tau {
            Some(d) => Self::dirac(n_dates, d),
            None => Self {
                weights: vec![0.0; n_dates],
            },
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_t P_t * rewards[t]`.
    pub fn value(&self, rewards: &[f64]) -> f64 {
        self.weights.iter().zip(rewards).map(|(p, r)| p * r).sum()
    }
}

/// `P_t = p_t * (1 - sum_{s<t} P_s)`; with `force_terminal` the last intensity
/// is taken as 1.
pub fn relaxed_weights_from_intensities(intensities: &[f64], force_terminal: bool) -> RelaxedRule {
    let n = intensities.len();
    let mut remaining = 1.0;
    let mut weights = Vec::with_capacity(n);
    for (t, &p) in intensities.iter().enumerate() {
        let p = if force_terminal && t + 1 == n { 1.0 } else { p };
        let w = p * remaining;
        weights.push(w);
        remaining -= w;
    }
    RelaxedRule { weights }
}

pub fn tv_distance(a: &RelaxedRule, b: &RelaxedRule) -> Result<f64> {
    check_len(a.weights.len(), b.weights.len())?;
    Ok(0.5 * a.weights.iter().zip(&b.weights).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Root mean square of the per-path total variation distances.
pub fn tv_bar2(rules: &[RelaxedRule], others: &[RelaxedRule]) -> Result<f64> {
    check_len(rules.len(), others.len())?;
    if rules.is_empty() {
        return Err(invalid("empty rule batch"));
    }
    let mut s = 0.0;
    for (a, b) in rules.iter().zip(others) {
        let tv = tv_distance(a, b)?;
        s += tv * tv;
    }
    Ok((s / rules.len() as f64).sqrt())
}

/// Writes `path,date,weight` rows.
pub fn write_rules_csv<W: Write>(rules: &[RelaxedRule], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["path", "date", "weight"])?;
    for (b, r) in rules.iter().enumerate() {
        for (d, p) in r.weights.iter().enumerate() {
            w.write_record([b.to_string(), d.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Payoff, coordinates, orientation and the terminal-absorption convention.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoppingProblem {
    pub payoff: Payoff,
    pub coords: CoordinateSystem,
    pub orientation: Orientation,
    /// Stop at the last date when the region was never entered.
    pub force_terminal: bool,
}

impl StoppingProblem {
    pub fn new(payoff: Payoff, coords: CoordinateSystem, orientation: Orientation, force_terminal: bool) -> Self {
        Self {
            payoff,
            coords,
            orientation,
            force_terminal,
        }
    }

    /// Discounted rewards `phi(t, X_t)` along a path.
    pub fn rewards(&self, path: PathView<'_>) -> Vec<f64> {
        (0..path.n_dates())
            .map(|d| self.payoff.eval_stat(self.coords.alpha_of(path.state(d)), path.time(d)))
            .collect()
    }

    /// `(alpha, boundary value)` at each date.
    fn levels<'a>(&'a self, f: &'a dyn Boundary, path: PathView<'a>) -> impl Iterator<Item = (f64, f64)> + 'a {
        let mut xi = vec![0.0; self.coords.latent_dim()];
        (0..path.n_dates()).map(move |d| {
            let a = self.coords.project(path.state(d), &mut xi);
            (a, f.value(d, &xi))
        })
    }

    /// First date at which the path is in the stopping region of `f`.
    pub fn hitting_time(&self, f: &dyn Boundary, path: PathView<'_>) -> Option<usize> {
        let n = path.n_dates();
        for (d, (a, g)) in self.levels(f, path).enumerate() {
            if stops(g, a, self.orientation) {
                return Some(d);
            }
        }
        self.force_terminal.then_some(n - 1)
    }

    /// Discounted reward collected by the hitting time (0 if it never stops).
    pub fn strict_reward(&self, f: &dyn Boundary, path: PathView<'_>) -> f64 {
        match self.hitting_time(f, path) {
            Some(d) => self.payoff.eval_stat(self.coords.alpha_of(path.state(d)), path.time(d)),
            None => 0.0,
        }
    }

    /// Stopping intensities `chi(gap)` along a path, before terminal forcing.
    pub fn intensities(&self, f: &dyn Boundary, eps: FuzzyWidth, path: PathView<'_>) -> Vec<f64> {
        self.levels(f, path)
            .map(|(a, g)| phase_indicator(gap(g, a, self.orientation), eps))
            .collect()
    }

    pub fn relaxed_weights(&self, f: &dyn Boundary, eps: FuzzyWidth, path: PathView<'_>) -> RelaxedRule {
        relaxed_weights_from_intensities(&self.intensities(f, eps, path), self.force_terminal)
    }

    /// Relaxed reward `sum_t P_t phi_t`, stopping the scan once all mass is
    /// absorbed.
    pub fn relaxed_reward(&self, f: &dyn Boundary, eps: FuzzyWidth, path: PathView<'_>) -> f64 {
        let n = path.n_dates();
        let mut remaining = 1.0;
        let mut total = 0.0;
        for (d, (a, g)) in self.levels(f, path).enumerate() {
            let p = if self.force_terminal && d + 1 == n {
                1.0
            } else {
                phase_indicator(gap(g, a, self.orientation), eps)
            };
            if p > 0.0 {
                let w = p * remaining;
                total += w * self.payoff.eval_stat(a, path.time(d));
                remaining -= w;
                if remaining <= 0.0 {
                    break;
                }
            }
        }
        total
    }

    pub fn value_strict(&self, f: &dyn Boundary, paths: &PathBatch) -> ValueEstimate {
        chunked_mean(paths.n_paths, |r| r.map(|b| self.strict_reward(f, paths.path(b))).collect()).estimate()
    }

    pub fn value_relaxed(&self, f: &dyn Boundary, eps: FuzzyWidth, paths: &PathBatch) -> ValueEstimate {
        chunked_mean(paths.n_paths, |r| {
            r.map(|b| self.relaxed_reward(f, eps, paths.path(b))).collect()
        })
        .estimate()
    }

    /// Strict value over `n_paths` paths simulated on the fly, so that large
    /// evaluations never hold the whole batch in memory.
    pub fn value_strict_streamed(
        &self,
        f: &dyn Boundary,
        sim: &PathSimulator,
        key: StreamKey,
        n_paths: usize,
    ) -> ValueEstimate {
        chunked_mean(n_paths, |r| {
            let mut buf = vec![0.0; sim.path_len()];
            r.map(|b| {
                sim.fill_path(key, b as u64, &mut buf);
                self.strict_reward(f, PathView::new(&buf, sim.n_assets(), sim.grid()))
            })
            .collect()
        })
        .estimate()
    }

    /// Signed gaps `eta (f - alpha)` per date across the batch; `samples[t][b]`
    /// is `+inf` where an epigraph boundary is infinite.
    pub fn gap_samples(&self, f: &dyn Boundary, paths: &PathBatch) -> Vec<Vec<f64>> {
        let eta = self.orientation.sign();
        let mut out = vec![Vec::with_capacity(paths.n_paths); paths.n_dates()];
        for path in paths.paths() {
            for (d, (a, g)) in self.levels(f, path).enumerate() {
                out[d].push(eta * (g - a));
            }
        }
        out
    }

    /// `2 ||sum_t |phi(t, X_t)| ||_{L2}` estimated on the batch.
    pub fn lemma_constant(&self, paths: &PathBatch) -> f64 {
        let acc = chunked_mean(paths.n_paths, |r| {
            r.map(|b| {
                let s: f64 = self.rewards(paths.path(b)).iter().map(|v| v.abs()).sum();
                s * s
            })
            .collect()
        });
        2.0 * acc.estimate().mean.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{ConstantBoundary, DateBoundary};
    use crate::market::{simulate_paths, MarketParams, PayoffKind, TimeGrid};

    fn problem(force_terminal: bool) -> StoppingProblem {
        StoppingProblem::new(
            Payoff::new(PayoffKind::MaxCall, 100.0, 0.05).unwrap(),
            CoordinateSystem::MaxCall(1),
            Orientation::Epigraph,
            force_terminal,
        )
    }

    fn batch(n: usize) -> PathBatch {
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        simulate_paths(&MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2), &grid, n, 7).unwrap()
    }

    #[test]
    fn intensity_recursion() {
        let r = relaxed_weights_from_intensities(&[0.5, 0.5, 0.0], true);
        assert_eq!(r.weights, vec![0.5, 0.25, 0.25]);
        let r = relaxed_weights_from_intensities(&[1.0, 0.3, 0.7], false);
        assert_eq!(r.weights, vec![1.0, 0.0, 0.0]);
        let r = relaxed_weights_from_intensities(&[0.0, 0.0], false);
        assert_eq!(r.total(), 0.0);
    }

    #[test]
    fn tv_examples() {
        let a = RelaxedRule {
            weights: vec![0.5, 0.5, 0.0],
        };
        let b = RelaxedRule {
            weights: vec![0.0, 0.5, 0.5],
        };
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(tv_distance(&a, &b).unwrap(), 0.5);
        assert_eq!(tv_distance(&RelaxedRule::dirac(3, 0), &RelaxedRule::dirac(3, 2)).unwrap(), 1.0);
        assert!(tv_distance(&a, &RelaxedRule::dirac(2, 0)).is_err());
        let d: Vec<_> = (0..4).map(|i| RelaxedRule::dirac(3, i % 2)).collect();
        let e: Vec<_> = (0..4).map(|i| RelaxedRule::dirac(3, if i < 2 { 2 } else { i % 2 })).collect();
        assert!((tv_bar2(&d, &e).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_boundary_stops_at_once() {
        let p = problem(false);
        let paths = batch(100);
        let v = p.value_strict(&ConstantBoundary(0.0), &paths);
        assert_eq!(v.mean, 0.0);
        assert_eq!(v.stderr, 0.0);
        for path in paths.paths() {
            assert_eq!(p.hitting_time(&ConstantBoundary(0.0), path), Some(0));
        }
    }

    #[test]
    fn infinite_boundary_and_terminal_forcing() {
        let paths = batch(200);
        let inf = ConstantBoundary(f64::INFINITY);
        let eps = FuzzyWidth::new(1.0).unwrap();
        for path in paths.paths() {
            assert_eq!(problem(true).hitting_time(&inf, path), Some(4));
            assert_eq!(problem(false).hitting_time(&inf, path), None);
            assert_eq!(problem(true).relaxed_weights(&inf, eps, path).weights, vec![0., 0., 0., 0., 1.]);
        }
        let v = problem(false).value_strict(&inf, &paths);
        assert_eq!(v.mean, 0.0);
        let european = paths
            .paths()
            .map(|p| problem(true).payoff.eval(p.time(4), p.state(4)))
            .collect::<MeanAccumulator>();
        assert!((problem(true).value_strict(&inf, &paths).mean - european.estimate().mean).abs() < 1e-12);
    }

    #[test]
    fn tiny_width_matches_strict() {
        let p = problem(true);
        let paths = batch(500);
        let f = DateBoundary(vec![130.0, 125.0, 120.0, 115.0, 0.0]);
        let eps = FuzzyWidth::new(1e-9).unwrap();
        let strict = p.value_strict(&f, &paths);
        let relaxed = p.value_relaxed(&f, eps, &paths);
        assert_eq!(strict.mean, relaxed.mean);
    }

    #[test]
    fn relaxed_reward_agrees_with_weights() {
        let p = problem(true);
        let paths = batch(300);
        let f = DateBoundary(vec![110.0, 108.0, 106.0, 104.0, 102.0]);
        let eps = FuzzyWidth::new(8.0).unwrap();
        for path in paths.paths() {
            let rule = p.relaxed_weights(&f, eps, path);
            assert!((rule.total() - 1.0).abs() < 1e-12);
            let direct = rule.value(&p.rewards(path));
            assert!((direct - p.relaxed_reward(&f, eps, path)).abs() < 1e-12);
        }
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.3).collect();
        let whole: MeanAccumulator = xs.iter().copied().collect();
        let mut a: MeanAccumulator = xs[..333].iter().copied().collect();
        let b: MeanAccumulator = xs[333..].iter().copied().collect();
        a.merge(&b);
        assert!((a.estimate().mean - whole.estimate().mean).abs() < 1e-12);
        assert!((a.estimate().stderr - whole.estimate().stderr).abs() < 1e-12);
    }

    #[test]
    fn streamed_matches_stored() {
        let p = problem(true);
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let params = MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2);
        let sim = PathSimulator::new(&params, &grid).unwrap();
        let key = StreamKey::new(7, crate::rng::Purpose::Simulation, 0);
        let f = DateBoundary(vec![120.0; 5]);
        let stored = p.value_strict(&f, &sim.batch(key, 3000).unwrap());
        let streamed = p.value_strict_streamed(&f, &sim, key, 3000);
        assert_eq!(stored, streamed);
    }
}
