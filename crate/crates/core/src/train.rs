//! Stochastic gradient ascent on the relaxed value over the parameters of a
//! neural boundary, out-of-sample evaluation and a heuristic optimality check.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary::{AdTape, Boundary, DateBoundary, MlpBoundary};
use crate::error::{invalid, Error, Result};
use crate::geometry::{gap, phase_indicator, CoordinateSystem, FuzzyWidth, Orientation};
use crate::market::{MarketParams, PathBatch, PathSimulator, TimeGrid};
use crate::rng::{Purpose, StreamKey};
use crate::stopping::{StoppingProblem, ValueEstimate};

/// Rows per work unit in the parallel backward pass.
const GRAD_CHUNK: usize = 256;

/// Step size `zeta_i` at iteration `i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearningRate {
    Constant { rate: f64 },
    /// `rate / (1 + i / decay_iters)`.
    Decay { rate: f64, decay_iters: f64 },
}

impl LearningRate {
    pub fn at(&self, i: usize) -> f64 {
        match *self {
            LearningRate::Constant { rate } => rate,
            LearningRate::Decay { rate, decay_iters } => rate / (1.0 + i as f64 / decay_iters),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            LearningRate::Constant { rate } => rate > 0.0 && rate.is_finite(),
            LearningRate::Decay { rate, decay_iters } => rate > 0.0 && rate.is_finite() && decay_iters > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid("learning rate must be positive"))
        }
    }
}

/// Multiplies the fuzzy width by `factor` every `every` iterations, never
/// going below `floor`. Experimental and off by default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annealing {
    pub factor: f64,
    pub every: usize,
    pub floor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    /// Fuzzy width, in units of the statistic.
    pub eps: f64,
    pub learning_rate: LearningRate,
    /// Heavy-ball coefficient; 0 is plain gradient ascent.
    pub momentum: f64,
    /// Rescale any gradient whose norm exceeds this before stepping.
    pub clip_norm: Option<f64>,
    pub hidden: Vec<usize>,
    /// Initial boundary level; defaults to 1.2 times the strike.
    pub init_level: Option<f64>,
    /// Train on each batch together with its asset-swapped copy.
    pub mirror_assets: bool,
    pub seed: u64,
    pub eval_paths: usize,
    pub eval_seed: u64,
    pub gamma: f64,
    pub probe_paths: usize,
    pub anneal: Option<Annealing>,
    pub divergence_threshold: f64,
    pub divergence_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            batch_size: 4096,
            eps: 0.05,
            learning_rate: LearningRate::Decay {
                rate: 1e-3,
                decay_iters: 200.0,
            },
            momentum: 0.0,
            clip_norm: None,
            hidden: vec![64, 64],
            init_level: None,
            mirror_assets: false,
            seed: 0,
            eval_paths: 2_000_000,
            eval_seed: 1,
            gamma: 0.05,
            probe_paths: 65_536,
            anneal: None,
            divergence_threshold: 1e6,
            divergence_patience: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.eval_paths == 0 || self.probe_paths == 0 {
            return Err(invalid("batch, evaluation and probe sizes must be positive"));
        }
        FuzzyWidth::new(self.eps)?;
        self.learning_rate.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(invalid("momentum must lie in [0, 1)"));
        }
        if self.clip_norm.is_some_and(|c| !(c > 0.0 && c.is_finite())) {
            return Err(invalid("clip norm must be positive and finite"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(invalid("hidden layers must be nonempty"));
        }
        if let Some(a) = self.anneal {
            if !(a.factor > 0.0 && a.factor <= 1.0) || a.every == 0 || !(a.floor > 0.0) {
                return Err(invalid("annealing needs factor in (0, 1], positive period and floor"));
            }
        }
        if self.divergence_patience == 0 || !(self.divergence_threshold > 0.0) {
            return Err(invalid("divergence guard must be positive"));
        }
        Ok(())
    }

    pub fn eps_at(&self, i: usize) -> f64 {
        match self.anneal {
            Some(a) => (self.eps * a.factor.powi((i / a.every) as i32)).max(a.floor.min(self.eps)),
            None => self.eps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub iteration: usize,
    /// Relaxed batch value before the step.
    pub value: f64,
    pub grad_norm: f64,
    pub learning_rate: f64,
    pub eps: f64,
    pub best_value: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
    /// Seconds since the start of training, per iteration.
    pub wall_clock: Vec<f64>,
}

impl PartialEq for TrainLog {
    /// Timing is not part of the result.
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl TrainLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of trailing iterations with an exactly zero gradient.
    pub fn stalled_tail(&self) -> usize {
        self.records.iter().rev().take_while(|r| r.grad_norm == 0.0).count()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timing_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "seconds"])?;
        for (i, s) in self.wall_clock.iter().enumerate() {
            w.write_record([i.to_string(), format!("{s:.6}")])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Deduplicated network inputs of one sweep.
#[derive(Default)]
struct Rows {
    data: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
    width: usize,
}

impl Rows {
    fn new(width: usize) -> Self {
        Self {
            width,
            ..Self::default()
        }
    }

    fn insert(&mut self, row: &[f64]) -> usize {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let n = self.data.len() / self.width;
        *self.index.entry(key).or_insert_with(|| {
            self.data.extend_from_slice(row);
            n
        })
    }

    fn len(&self) -> usize {
        self.data.len() / self.width
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

/// Relaxed batch value and its exact gradient with respect to the network
/// parameters.
///
/// The derivative of the phase indicator is taken as `-1/eps` strictly inside
/// the band `0 < gap < eps` and 0 elsewhere, including both kinks. Paths are
/// not evaluated past the date where all their mass is absorbed.
pub fn grad_relaxed_value(
    b: &MlpBoundary,
    batch: &PathBatch,
    eps: FuzzyWidth,
    problem: &StoppingProblem,
) -> Result<(f64, Vec<f64>)> {
    let cs = &problem.coords;
    if batch.n_assets != cs.n_assets() || b.latent_dim() != cs.latent_dim() || b.n_dates() != batch.n_dates() {
        return Err(invalid("boundary, batch and coordinates disagree"));
    }
    let (n, n_dates, dim) = (batch.n_paths, batch.n_dates(), cs.latent_dim());
    let cell = |p: usize, d: usize| p * n_dates + d;
    let mut alpha = vec![0.0; n * n_dates];
    let mut reward = vec![0.0; n * n_dates];
    let mut prob = vec![0.0; n * n_dates];
    let mut mass = vec![0.0; n * n_dates];
    let mut row_of = vec![usize::MAX; n * n_dates];
    let mut last = vec![0usize; n];
    let mut remaining = vec![1.0; n];
    let mut rows = Rows::new(1 + dim);
    let mut outputs: Vec<f64> = Vec::new();
    let mut feat = vec![0.0; 1 + dim];
    let mut active = Vec::with_capacity(n);
    for d in 0..n_dates {
        let t = batch.grid.dates()[d];
        let forced = problem.force_terminal && d + 1 == n_dates;
        active.clear();
        active.extend((0..n).filter(|&p| remaining[p] > 0.0));
        if active.is_empty() {
            break;
        }
        let first_new = rows.len();
        for &p in &active {
            let a = cs.project(batch.state(p, d), &mut feat[1..]);
            feat[0] = b.times[d];
            alpha[cell(p, d)] = a;
            reward[cell(p, d)] = problem.payoff.eval_stat(a, t);
            if !reward[cell(p, d)].is_finite() {
                return Err(Error::NonFinite { what: "reward", path: p, date: d });
            }
            if !forced {
                row_of[cell(p, d)] = rows.insert(&feat);
            }
        }
        let fresh = b.net.forward_batch(&rows.data[first_new * rows.width..]);
        outputs.extend(fresh);
        for &p in &active {
            let c = cell(p, d);
            let q = if forced {
                1.0
            } else {
                let g = b.output(outputs[row_of[c]]);
                if !g.is_finite() {
                    return Err(Error::NonFinite { what: "boundary value", path: p, date: d });
                }
                phase_indicator(gap(g, alpha[c], problem.orientation), eps)
            };
            prob[c] = q;
            mass[c] = remaining[p];
            last[p] = d;
            remaining[p] -= q * remaining[p];
        }
    }

    let sign = problem.orientation.sign();
    let scale = 1.0 / n as f64;
    let mut adjoint = vec![0.0; rows.len()];
    let mut total = 0.0;
    for p in 0..n {
        let mut to_go = 0.0;
        for d in (0..=last[p]).rev() {
            let c = cell(p, d);
            let next = to_go;
            to_go = prob[c] * reward[c] + (1.0 - prob[c]) * next;
            let r = row_of[c];
            if r != usize::MAX {
                let gp = gap(b.output(outputs[r]), alpha[c], problem.orientation);
                if gp > 0.0 && gp < eps.get() {
                    // dV/dp * dp/dgap * dgap/dg
                    adjoint[r] += scale * mass[c] * (reward[c] - next) * (-1.0 / eps.get()) * sign;
                }
            }
        }
        total += to_go;
    }

    let band: Vec<usize> = (0..rows.len()).filter(|&r| adjoint[r] != 0.0).collect();
    let partials: Vec<Result<Vec<f64>>> = band
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut input = Vec::with_capacity(chunk.len() * rows.width);
            let mut dz = Vec::with_capacity(chunk.len());
            for &r in chunk {
                input.extend_from_slice(rows.row(r));
                dz.push(adjoint[r] * b.output_slope(outputs[r]));
            }
            let mut tape = AdTape::default();
            b.net.forward_tape(&input, &mut tape)?;
            let mut g = vec![0.0; b.n_params()];
            b.net.backward(&tape, &dz, &mut g)?;
            Ok(g)
        })
        .collect();
    let mut grad = vec![0.0; b.n_params()];
    for part in partials {
        for (g, x) in grad.iter_mut().zip(part?) {
            *g += x;
        }
    }
    Ok((total * scale, grad))
}

/// A boundary equivalent to `b` that is cheap to evaluate: with a single
/// asset the latent point is always 1, so the network is tabulated per date.
pub fn evaluation_boundary<'a>(b: &'a MlpBoundary, cs: &CoordinateSystem) -> Box<dyn Boundary + 'a> {
    if *cs == CoordinateSystem::MaxCall(1) {
        Box::new(DateBoundary((0..b.n_dates()).map(|d| b.value(d, &[1.0])).collect()))
    } else {
        Box::new(b)
    }
}

fn init_boundary(cfg: &TrainConfig, grid: &TimeGrid, problem: &StoppingProblem, seed: u64) -> Result<MlpBoundary> {
    let strike = problem.payoff.strike;
    MlpBoundary::init(
        &cfg.hidden,
        problem.coords.latent_dim(),
        grid,
        strike,
        cfg.init_level.unwrap_or(1.2 * strike),
        seed,
    )
}

/// Runs `cfg.iterations` ascent steps, each on a freshly simulated batch.
pub fn train_nosb(
    cfg: &TrainConfig,
    market: &MarketParams,
    grid: &TimeGrid,
    problem: &StoppingProblem,
) -> Result<(MlpBoundary, TrainLog)> {
    cfg.validate()?;
    let sim = PathSimulator::new(market, grid)?;
    let b = init_boundary(cfg, grid, problem, cfg.seed)?;
    train_from(b, cfg, &sim, problem)
}

/// Continues training from a given boundary.
pub fn train_from(
    mut b: MlpBoundary,
    cfg: &TrainConfig,
    sim: &PathSimulator,
    problem: &StoppingProblem,
) -> Result<(MlpBoundary, TrainLog)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut velocity = vec![0.0; b.n_params()];
    let mut best = f64::NEG_INFINITY;
    let mut over = 0;
    for i in 0..cfg.iterations {
        let key = StreamKey::new(cfg.seed, Purpose::Training, i as u64);
        let mut batch = sim.batch(key, cfg.batch_size)?;
        if cfg.mirror_assets {
            batch = batch.with_mirrored_assets();
        }
        let eps = cfg.eps_at(i);
        let (value, grad) = grad_relaxed_value(&b, &batch, FuzzyWidth::new(eps)?, problem)?;
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > cfg.divergence_threshold {
            over += 1;
            if over >= cfg.divergence_patience || !norm.is_finite() {
                return Err(Error::Divergence(format!(
                    "gradient norm {norm:e} above {:e} for {over} consecutive iterations (last at iteration {i}, batch value {value})",
                    cfg.divergence_threshold
                )));
            }
        } else {
            over = 0;
        }
        let rate = cfg.learning_rate.at(i);
        let shrink = match cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        for ((theta, v), g) in b.params_mut().iter_mut().zip(&mut velocity).zip(&grad) {
            *v = cfg.momentum * *v + shrink * g;
            *theta += rate * *v;
        }
        best = best.max(value);
        log.records.push(TrainRecord {
            iteration: i,
            value,
            grad_norm: norm,
            learning_rate: rate,
            eps,
            best_value: best,
        });
        log.wall_clock.push(start.elapsed().as_secs_f64());
    }
    Ok((b, log))
}

/// Strict value of the hitting time of `b` on `n_paths` evaluation paths.
/// The evaluation stream is disjoint from every training stream.
pub fn evaluate_trained(
    b: &MlpBoundary,
    n_paths: usize,
    seed: u64,
    sim: &PathSimulator,
    problem: &StoppingProblem,
) -> Result<ValueEstimate> {
    if n_paths == 0 {
        return Err(invalid("need at least one evaluation path"));
    }
    let f = evaluation_boundary(b, &problem.coords);
    Ok(problem.value_strict_streamed(f.as_ref(), sim, StreamKey::new(seed, Purpose::Evaluation, 0), n_paths))
}

/// A competitor boundary for [`certify_gamma_maximizer`].
#[derive(Clone, Debug)]
pub struct Probe {
    pub label: String,
    pub boundary: MlpBoundary,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProbeValue {
    pub label: String,
    pub value: ValueEstimate,
}

/// Relaxed value of the trained boundary against the best probe, on common
/// paths. `gap = trained - best probe`; the check passes when `gap >= -gamma`.
/// It is only as strong as the probe set.
#[derive(Clone, Debug, Serialize)]
pub struct GammaReport {
    pub trained: ValueEstimate,
    pub probes: Vec<ProbeValue>,
    pub best_probe: Option<String>,
    pub gap: f64,
    pub gamma: f64,
    pub satisfied: bool,
    pub vacuous: bool,
}

pub fn certify_gamma_maximizer(
    b: &MlpBoundary,
    cfg: &TrainConfig,
    sim: &PathSimulator,
    problem: &StoppingProblem,
    probes: &[Probe],
) -> Result<GammaReport> {
    let eps = FuzzyWidth::new(cfg.eps)?;
    let batch = sim.batch(StreamKey::new(cfg.seed, Purpose::Probe, 0), cfg.probe_paths)?;
    let relaxed = |x: &MlpBoundary| problem.value_relaxed(evaluation_boundary(x, &problem.coords).as_ref(), eps, &batch);
    let trained = relaxed(b);
    let values: Vec<ProbeValue> = probes
        .iter()
        .map(|p| ProbeValue {
            label: p.label.clone(),
            value: relaxed(&p.boundary),
        })
        .collect();
    let best = values.iter().max_by(|a, b| a.value.mean.total_cmp(&b.value.mean));
    let gap = best.map_or(0.0, |p| trained.mean - p.value.mean);
    Ok(GammaReport {
        trained,
        best_probe: best.map(|p| p.label.clone()),
        gap,
        gamma: cfg.gamma,
        satisfied: gap >= -cfg.gamma,
        vacuous: probes.is_empty(),
        probes: values,
    })
}

/// Independently initialized networks, each trained for `iterations` steps
/// on its own seed.
pub fn restart_probes(
    cfg: &TrainConfig,
    market: &MarketParams,
    grid: &TimeGrid,
    problem: &StoppingProblem,
    n: usize,
    iterations: usize,
) -> Result<Vec<Probe>> {
    let sim = PathSimulator::new(market, grid)?;
    (0..n)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(1000 + k as u64);
            c.iterations = iterations;
            let init = init_boundary(&c, grid, problem, c.seed)?;
            let (b, _) = train_from(init, &c, &sim, problem)?;
            Ok(Probe {
                label: format!("restart-{k}"),
                boundary: b,
            })
        })
        .collect()
}

/// Gaussian perturbations of the parameters with standard deviation `scale`.
pub fn perturbation_probes(b: &MlpBoundary, n: usize, scale: f64, seed: u64) -> Vec<Probe> {
    let key = StreamKey::new(seed, Purpose::Probe, 1);
    (0..n)
        .map(|k| {
            let mut rng = key.rng(k as u64);
            let mut p = b.clone();
            for theta in p.params_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *theta += scale * z;
            }
            Probe {
                label: format!("perturb-{k}"),
                boundary: p,
            }
        })
        .collect()
}

/// Least-squares fit of a network to `target` at the given `(date, xi)`
/// points with Adam, targets clipped to `[0, cap]`.
pub fn fit_mlp_to_boundary(
    target: &dyn Boundary,
    start: &MlpBoundary,
    points: &[(usize, Vec<f64>)],
    cap: f64,
    iterations: usize,
    rate: f64,
) -> Result<MlpBoundary> {
    if points.is_empty() {
        return Err(invalid("no fitting points"));
    }
    let mut b = start.clone();
    let width = 1 + b.latent_dim();
    let mut features = vec![0.0; points.len() * width];
    let mut y = Vec::with_capacity(points.len());
    for (k, (d, xi)) in points.iter().enumerate() {
        b.features_into(*d, xi, &mut features[k * width..(k + 1) * width]);
        y.push(target.value(*d, xi).clamp(0.0, cap));
    }
    let (beta1, beta2) = (0.9f64, 0.999f64);
    let mut m1 = vec![0.0; b.n_params()];
    let mut m2 = vec![0.0; b.n_params()];
    let norm = 1.0 / (points.len() as f64 * cap * cap);
    for i in 1..=iterations {
        let values: Vec<f64> = b.net.forward_batch(&features).into_iter().map(|z| b.output(z)).collect();
        // descend on the squared error: ascend on its negative
        let adj: Vec<f64> = values.iter().zip(&y).map(|(v, t)| -2.0 * (v - t) * norm).collect();
        let (_, grad) = crate::boundary::mlp_value_and_grad(&b, &features, &adj)?;
        let (c1, c2) = (1.0 - beta1.powi(i as i32), 1.0 - beta2.powi(i as i32));
        for (k, theta) in b.params_mut().iter_mut().enumerate() {
            m1[k] = beta1 * m1[k] + (1.0 - beta1) * grad[k];
            m2[k] = beta2 * m2[k] + (1.0 - beta2) * grad[k] * grad[k];
            *theta += rate * (m1[k] / c1) / ((m2[k] / c2).sqrt() + 1e-12);
        }
    }
    Ok(b)
}

/// Fuzzy-band crossings are the only source of gradient; this reports the
/// fraction of path-dates of a batch that fall strictly inside the band.
pub fn band_fraction(b: &dyn Boundary, batch: &PathBatch, eps: f64, cs: &CoordinateSystem, o: Orientation) -> f64 {
    let mut xi = vec![0.0; cs.latent_dim()];
    let mut hits = 0usize;
    for p in 0..batch.n_paths {
        for d in 0..batch.n_dates() {
            let a = cs.project(batch.state(p, d), &mut xi);
            let g = gap(b.value(d, &xi), a, o);
            if g > 0.0 && g < eps {
                hits += 1;
            }
        }
    }
    hits as f64 / (batch.n_paths * batch.n_dates()) as f64
}
