//! Exercise dates, multi-asset geometric Brownian motion, payoffs and the
//! recombining binomial lattice used by the exact oracles.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{Purpose, StreamKey};

/// Finite, strictly increasing set of exercise dates starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid {
    dates: Vec<f64>,
}

impl TimeGrid {
    pub fn new(dates: Vec<f64>) -> Result<Self> {
        if dates.is_empty() {
            return Err(invalid("time grid needs at least one date"));
        }
        if dates[0] != 0.0 {
            return Err(invalid("time grid must start at 0"));
        }
        if dates.windows(2).any(|w| !(w[1] > w[0])) || dates.iter().any(|d| !d.is_finite()) {
            return Err(invalid("time grid must be finite and strictly increasing"));
        }
        Ok(Self { dates })
    }

    /// `n_dates` equally spaced dates on `[0, horizon]`.
    pub fn uniform(horizon: f64, n_dates: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_dates == 0 {
            return Err(invalid("time grid needs at least one date"));
        }
        if n_dates == 1 {
            return Ok(Self { dates: vec![0.0] });
        }
        let last = (n_dates - 1) as f64;
        let mut dates: Vec<f64> = (0..n_dates).map(|i| i as f64 * horizon / last).collect();
        dates[n_dates - 1] = horizon;
        Ok(Self { dates })
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.dates[self.dates.len() - 1]
    }

    /// Dates rescaled to `[0, 1]` (all zero for a single-date grid).
    pub fn normalized(&self) -> Vec<f64> {
        let h = self.horizon();
        if h > 0.0 {
            self.dates.iter().map(|t| t / h).collect()
        } else {
            vec![0.0; self.dates.len()]
        }
    }

    pub(crate) fn is_uniform(&self) -> bool {
        if self.dates.len() <= 2 {
            return true;
        }
        let h = self.dates[1];
        self.dates
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * self.horizon())
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(dates: Vec<f64>) -> Result<Self> {
        Self::new(dates)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(grid: TimeGrid) -> Self {
        grid.dates
    }
}

pub fn build_time_grid(horizon: f64, n_dates: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, n_dates)
}

/// Multi-asset Black-Scholes market under the pricing measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub spot: Vec<f64>,
    pub rate: f64,
    pub dividend: Vec<f64>,
    pub vol: Vec<f64>,
    /// Row-major `m x m` correlation matrix; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
}

impl MarketParams {
    /// Independent assets sharing one spot, dividend yield and volatility.
    pub fn symmetric(n_assets: usize, spot: f64, rate: f64, dividend: f64, vol: f64) -> Self {
        Self {
            spot: vec![spot; n_assets],
            rate,
            dividend: vec![dividend; n_assets],
            vol: vec![vol; n_assets],
            correlation: None,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.spot.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.spot.len();
        if m == 0 {
            return Err(invalid("market needs at least one asset"));
        }
        check_len(m, self.dividend.len())?;
        check_len(m, self.vol.len())?;
        if self.spot.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(invalid("spot prices must be positive"));
        }
        if self.vol.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(invalid("volatilities must be nonnegative"));
        }
        if !self.rate.is_finite() || self.dividend.iter().any(|q| !q.is_finite()) {
            return Err(invalid("rates must be finite"));
        }
        self.correlation_factor().map(|_| ())
    }

    pub fn correlation_matrix(&self) -> Vec<f64> {
        let m = self.n_assets();
        match &self.correlation {
            Some(rows) => rows.iter().flatten().copied().collect(),
            None => (0..m * m)
                .map(|k| if k / m == k % m { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn is_independent(&self) -> bool {
        let m = self.n_assets();
        let c = self.correlation_matrix();
        (0..m).all(|i| (0..m).all(|j| i == j || c[i * m + j] == 0.0))
    }

    /// Lower-triangular `L` with `L L^T = correlation`, row-major.
    pub fn correlation_factor(&self) -> Result<Vec<f64>> {
        let m = self.n_assets();
        if let Some(rows) = &self.correlation {
            check_len(m, rows.len())?;
            for row in rows {
                check_len(m, row.len())?;
            }
        }
        let c = self.correlation_matrix();
        for i in 0..m {
            if (c[i * m + i] - 1.0).abs() > 1e-12 {
                return Err(invalid("correlation diagonal must be 1"));
            }
            for j in 0..m {
                if (c[i * m + j] - c[j * m + i]).abs() > 1e-12 {
                    return Err(invalid("correlation matrix must be symmetric"));
                }
            }
        }
        psd_cholesky(&c, m)
    }
}

/// Cholesky factorization that tolerates singular (semidefinite) input.
fn psd_cholesky(c: &[f64], m: usize) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-10;
    let mut l = vec![0.0; m * m];
    for j in 0..m {
        let d = c[j * m + j] - (0..j).map(|k| l[j * m + k] * l[j * m + k]).sum::<f64>();
        if d < -TOL {
            return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
        }
        let piv = d.max(0.0).sqrt();
        l[j * m + j] = piv;
        for i in j + 1..m {
            let s = c[i * m + j] - (0..j).map(|k| l[i * m + k] * l[j * m + k]).sum::<f64>();
            if piv > TOL.sqrt() {
                l[i * m + j] = s / piv;
            } else if s.abs() > 1e-8 {
                return Err(Error::NotPositiveSemidefinite { pivot: j, value: d });
            }
        }
    }
    Ok(l)
}

/// Exact lognormal stepping of correlated geometric Brownian motion.
#[derive(Clone, Debug)]
pub struct PathSimulator {
    grid: TimeGrid,
    m: usize,
    spot: Vec<f64>,
    log_spot: Vec<f64>,
    /// per interval, per asset: (r - q - sigma^2/2) dt
    drift: Vec<f64>,
    /// per interval, per asset: sigma sqrt(dt)
    diffusion: Vec<f64>,
    chol: Vec<f64>,
}

impl PathSimulator {
    pub fn new(params: &MarketParams, grid: &TimeGrid) -> Result<Self> {
        params.validate()?;
        let m = params.n_assets();
        let chol = params.correlation_factor()?;
        let mut drift = Vec::with_capacity(m * grid.len());
        let mut diffusion = Vec::with_capacity(m * grid.len());
        for w in grid.dates().windows(2) {
            let dt = w[1] - w[0];
            for i in 0..m {
                let s = params.vol[i];
                drift.push((params.rate - params.dividend[i] - 0.5 * s * s) * dt);
                diffusion.push(s * dt.sqrt());
            }
        }
        Ok(Self {
            grid: grid.clone(),
            m,
            spot: params.spot.clone(),
            log_spot: params.spot.iter().map(|x| x.ln()).collect(),
            drift,
            diffusion,
            chol,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_assets(&self) -> usize {
        self.m
    }

    pub fn path_len(&self) -> usize {
        self.m * self.grid.len()
    }

    /// Writes path `index` of stream `key` into `out` (`|T| x m`, date-major).
    pub fn fill_path(&self, key: StreamKey, index: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.path_len());
        let m = self.m;
        let mut rng = key.rng(index);
        let mut logx = self.log_spot.clone();
        let mut z = vec![0.0; m];
        out[..m].copy_from_slice(&logx);
        for k in 0..self.grid.len() - 1 {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            for i in 0..m {
                let mut w = 0.0;
                for j in 0..=i {
                    w += self.chol[i * m + j] * z[j];
                }
                logx[i] += self.drift[k * m + i] + self.diffusion[k * m + i] * w;
            }
            out[(k + 1) * m..(k + 2) * m].copy_from_slice(&logx);
        }
        for v in out[m..].iter_mut() {
            *v = v.exp();
        }
        out[..m].copy_from_slice(&self.spot);
    }

    pub fn batch(&self, key: StreamKey, n_paths: usize) -> Result<PathBatch> {
        if n_paths == 0 {
            return Err(invalid("need at least one path"));
        }
        let len = self.path_len();
        let mut values = vec![0.0; n_paths * len];
        values
            .par_chunks_mut(len)
            .enumerate()
            .for_each(|(b, out)| self.fill_path(key, b as u64, out));
        Ok(PathBatch {
            grid: self.grid.clone(),
            n_assets: self.m,
            n_paths,
            seed: key.seed,
            values,
        })
    }
}

/// Simulated asset paths, `B x |T| x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub n_assets: usize,
    pub n_paths: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

/// Borrowed view of one path.
#[derive(Clone, Copy, Debug)]
pub struct PathView<'a> {
    pub states: &'a [f64],
    pub n_assets: usize,
    pub grid: &'a TimeGrid,
}

impl<'a> PathView<'a> {
    pub fn new(states: &'a [f64], n_assets: usize, grid: &'a TimeGrid) -> Self {
        debug_assert_eq!(states.len(), n_assets * grid.len());
        Self {
            states,
            n_assets,
            grid,
        }
    }

    pub fn n_dates(&self) -> usize {
        self.grid.len()
    }

    pub fn state(&self, date: usize) -> &'a [f64] {
        &self.states[date * self.n_assets..(date + 1) * self.n_assets]
    }

    pub fn time(&self, date: usize) -> f64 {
        self.grid.dates()[date]
    }
}

impl PathBatch {
    pub fn from_values(grid: TimeGrid, n_assets: usize, values: Vec<f64>, seed: u64) -> Result<Self> {
        let len = n_assets * grid.len();
        if len == 0 || values.len() % len != 0 || values.is_empty() {
            return Err(invalid("path values do not match grid and asset count"));
        }
        Ok(Self {
            n_paths: values.len() / len,
            grid,
            n_assets,
            seed,
            values,
        })
    }

    pub fn n_dates(&self) -> usize {
        self.grid.len()
    }

    pub fn path_len(&self) -> usize {
        self.n_assets * self.grid.len()
    }

    pub fn path(&self, b: usize) -> PathView<'_> {
        let len = self.path_len();
        PathView::new(&self.values[b * len..(b + 1) * len], self.n_assets, &self.grid)
    }

    pub fn state(&self, b: usize, date: usize) -> &[f64] {
        let len = self.path_len();
        let off = b * len + date * self.n_assets;
        &self.values[off..off + self.n_assets]
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> + '_ {
        (0..self.n_paths).map(move |b| self.path(b))
    }

    /// Appends a copy of every path with the asset order reversed.
    pub fn with_mirrored_assets(&self) -> Self {
        let m = self.n_assets;
        let mut values = self.values.clone();
        values.reserve(self.values.len());
        for state in self.values.chunks(m) {
            values.extend(state.iter().rev());
        }
        Self {
            grid: self.grid.clone(),
            n_assets: m,
            n_paths: 2 * self.n_paths,
            seed: self.seed,
            values,
        }
    }
}

/// Simulates `n_paths` paths; path `b` depends only on `(seed, b)`.
pub fn simulate_paths(
    params: &MarketParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathBatch> {
    PathSimulator::new(params, grid)?.batch(StreamKey::new(seed, Purpose::Simulation, 0), n_paths)
}

/// The statistic `alpha(x)` a payoff is written on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayoffKind {
    MaxCall,
    MinCall,
}

/// Discounted call on a statistic: `exp(-r t) (alpha(x) - strike)^+`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payoff {
    pub kind: PayoffKind,
    pub strike: f64,
    pub rate: f64,
}

impl Payoff {
    pub fn new(kind: PayoffKind, strike: f64, rate: f64) -> Result<Self> {
        if !(strike > 0.0) || !strike.is_finite() {
            return Err(invalid("strike must be positive"));
        }
        if !rate.is_finite() {
            return Err(invalid("rate must be finite"));
        }
        Ok(Self { kind, strike, rate })
    }

    pub fn statistic(&self, x: &[f64]) -> f64 {
        match self.kind {
            PayoffKind::MaxCall => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PayoffKind::MinCall => x.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Reward for a given value of the statistic.
    #[inline]
    pub fn eval_stat(&self, alpha: f64, t: f64) -> f64 {
        (-self.rate * t).exp() * (alpha - self.strike).max(0.0)
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.eval_stat(self.statistic(x), t)
    }
}

pub fn payoff_eval(payoff: &Payoff, alpha: f64, t: f64) -> f64 {
    payoff.eval_stat(alpha, t)
}

/// One-step CRR factors of one asset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BinomialFactors {
    pub up: f64,
    pub down: f64,
    pub prob: f64,
}

/// Product of independent per-asset recombining binomial trees.
///
/// Node `(k, j_1..j_m)` at step `k` holds `x_i = x0_i up_i^{j_i} down_i^{k - j_i}`;
/// exercise date `d` sits at step `d * steps_per_interval`.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub grid: TimeGrid,
    pub steps_per_interval: usize,
    pub spot: Vec<f64>,
    pub factors: Vec<BinomialFactors>,
    pub dt: f64,
    /// Per-asset one-step growth `exp((r - q) dt)`.
    pub growth: Vec<f64>,
}

impl Lattice {
    pub fn n_assets(&self) -> usize {
        self.spot.len()
    }

    pub fn n_steps(&self) -> usize {
        (self.grid.len() - 1) * self.steps_per_interval
    }

    /// Number of nodes at step `k`.
    pub fn layer_size(&self, k: usize) -> usize {
        (k + 1).pow(self.n_assets() as u32)
    }

    pub fn node_state(&self, k: usize, flat: usize, out: &mut [f64]) {
        let m = self.n_assets();
        let mut rest = flat;
        for i in (0..m).rev() {
            let j = rest % (k + 1);
            rest /= k + 1;
            let f = &self.factors[i];
            out[i] = self.spot[i] * f.up.powi(j as i32) * f.down.powi((k - j) as i32);
        }
    }

    /// Largest relative deviation, over all nodes, between a node's value and
    /// the discounted one-step expectation of its children.
    pub fn martingale_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, f) in self.factors.iter().enumerate() {
            for k in 0..self.n_steps() {
                for j in 0..=k {
                    let x = self.spot[i] * f.up.powi(j as i32) * f.down.powi((k - j) as i32);
                    let next = f.prob * x * f.up + (1.0 - f.prob) * x * f.down;
                    worst = worst.max((next / self.growth[i] - x).abs() / x);
                }
            }
        }
        worst
    }
}

pub fn build_lattice(params: &MarketParams, grid: &TimeGrid, steps_per_interval: usize) -> Result<Lattice> {
    params.validate()?;
    let m = params.n_assets();
    if m > 3 {
        return Err(Error::Unsupported(format!("lattice supports at most 3 assets, got {m}")));
    }
    if m > 1 && !params.is_independent() {
        return Err(Error::Unsupported("lattice requires independent assets".into()));
    }
    if steps_per_interval == 0 {
        return Err(invalid("steps_per_interval must be positive"));
    }
    if !grid.is_uniform() {
        return Err(Error::Unsupported("lattice requires equally spaced dates".into()));
    }
    let dt = if grid.len() > 1 {
        grid.dates()[1] / steps_per_interval as f64
    } else {
        0.0
    };
    let mut factors = Vec::with_capacity(m);
    let mut growth = Vec::with_capacity(m);
    for i in 0..m {
        let g = ((params.rate - params.dividend[i]) * dt).exp();
        growth.push(g);
        let s = params.vol[i];
        let f = if s == 0.0 || dt == 0.0 {
            BinomialFactors {
                up: g,
                down: g,
                prob: 1.0,
            }
        } else {
            let up = (s * dt.sqrt()).exp();
            let down = 1.0 / up;
            let prob = (g - down) / (up - down);
            if !(0.0..=1.0).contains(&prob) {
                return Err(invalid(format!(
                    "lattice step too coarse: risk-neutral probability {prob} for asset {i}"
                )));
            }
            BinomialFactors { up, down, prob }
        };
        factors.push(f);
    }
    Ok(Lattice {
        grid: grid.clone(),
        steps_per_interval,
        spot: params.spot.clone(),
        factors,
        dt,
        growth,
    })
}
