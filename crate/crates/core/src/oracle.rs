//! Exact small-scale ground truth: dynamic programming on lattices and
//! scenario trees, brute-force policy enumeration and randomized rules.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::boundary::{extract_boundary, LatentGrid, TabularBoundary};
use crate::error::{check_len, invalid, Error, Result};
use crate::geometry::{CoordinateSystem, Orientation};
use crate::market::{Lattice, Payoff, TimeGrid};
use crate::rng::{Purpose, StreamKey};
use crate::stopping::{relaxed_weights_from_intensities, RelaxedRule};

/// Largest number of policies [`brute_force_policies`] will enumerate.
pub const POLICY_GUARD: u64 = 1 << 20;

/// Largest number of nodes an unfolded or path-enumerated tree may have.
const NODE_GUARD: usize = 1 << 20;

const PROB_TOL: f64 = 1e-12;

/// A finite scenario tree (or recombining DAG) over the exercise dates.
///
/// Layer `d` holds the nodes at date `d`; every non-terminal node lists its
/// children with conditional probabilities. Policies are stop bits per node.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioTree {
    grid: TimeGrid,
    n_assets: usize,
    /// `states[d]` is `n_nodes(d) x m`.
    states: Vec<Vec<f64>>,
    /// `children[d][node]` for `d < n_dates - 1`.
    children: Vec<Vec<Vec<(usize, f64)>>>,
}

impl ScenarioTree {
    pub fn new(
        grid: TimeGrid,
        n_assets: usize,
        states: Vec<Vec<f64>>,
        children: Vec<Vec<Vec<(usize, f64)>>>,
    ) -> Result<Self> {
        let n = grid.len();
        check_len(n, states.len())?;
        check_len(n - 1, children.len())?;
        if n_assets == 0 || states.iter().any(|s| s.is_empty() || s.len() % n_assets != 0) {
            return Err(invalid("every layer needs at least one node of the right width"));
        }
        if states[0].len() != n_assets {
            return Err(invalid("tree must have a single root"));
        }
        for (d, layer) in children.iter().enumerate() {
            check_len(states[d].len() / n_assets, layer.len())?;
            let next = states[d + 1].len() / n_assets;
            for kids in layer {
                let total: f64 = kids.iter().map(|c| c.1).sum();
                if kids.is_empty() || (total - 1.0).abs() > PROB_TOL {
                    return Err(invalid(format!("children probabilities at date {d} sum to {total}")));
                }
                if kids.iter().any(|&(c, p)| c >= next || !(0.0..=1.0).contains(&p)) {
                    return Err(invalid(format!("bad child at date {d}")));
                }
            }
        }
        Ok(Self {
            grid,
            n_assets,
            states,
            children,
        })
    }

    /// The recombining tree of lattice nodes sitting on exercise dates, with
    /// multi-step binomial transition probabilities between them.
    pub fn from_lattice(lat: &Lattice) -> Result<Self> {
        let m = lat.n_assets();
        let s = lat.steps_per_interval;
        let n = lat.grid.len();
        let last_k = (n - 1) * s;
        if (last_k + 1).pow(m as u32) > NODE_GUARD {
            return Err(Error::Guard(format!("lattice too large for a scenario tree ({last_k} steps)")));
        }
        let mut states = Vec::with_capacity(n);
        let mut x = vec![0.0; m];
        for d in 0..n {
            let k = d * s;
            let mut layer = Vec::with_capacity(lat.layer_size(k) * m);
            for flat in 0..lat.layer_size(k) {
                lat.node_state(k, flat, &mut x);
                layer.extend_from_slice(&x);
            }
            states.push(layer);
        }
        // per-asset distribution of the number of up moves over one interval
        let moves: Vec<Vec<f64>> = lat.factors.iter().map(|f| binomial_pmf(s, f.prob)).collect();
        let mut children = Vec::with_capacity(n - 1);
        for d in 0..n - 1 {
            let k = d * s;
            let layer: Vec<Vec<(usize, f64)>> = (0..lat.layer_size(k))
                .map(|flat| {
                    let idx = unflatten(flat, k + 1, m);
                    let mut kids = Vec::new();
                    for combo in 0..(s + 1).pow(m as u32) {
                        let ups = unflatten(combo, s + 1, m);
                        let p: f64 = (0..m).map(|i| moves[i][ups[i]]).product();
                        if p > 0.0 {
                            let child: Vec<usize> = idx.iter().zip(&ups).map(|(j, u)| j + u).collect();
                            kids.push((flatten(&child, k + s + 1), p));
                        }
                    }
                    kids
                })
                .collect();
            children.push(layer);
        }
        Self::new(lat.grid.clone(), m, states, children)
    }

    /// The equivalent non-recombining tree: every node has a unique history.
    pub fn unfold(&self) -> Result<Self> {
        let m = self.n_assets;
        let mut states = vec![self.states[0].clone()];
        let mut origin = vec![0usize];
        let mut children = Vec::new();
        for d in 0..self.n_dates() - 1 {
            let mut layer_kids = Vec::with_capacity(origin.len());
            let mut next_states = Vec::new();
            let mut next_origin = Vec::new();
            for &o in &origin {
                let mut kids = Vec::new();
                for &(c, p) in &self.children[d][o] {
                    kids.push((next_origin.len(), p));
                    next_origin.push(c);
                    next_states.extend_from_slice(&self.states[d + 1][c * m..(c + 1) * m]);
                }
                layer_kids.push(kids);
            }
            if next_origin.len() > NODE_GUARD {
                return Err(Error::Guard("unfolded tree too large".into()));
            }
            children.push(layer_kids);
            states.push(next_states);
            origin = next_origin;
        }
        Self::new(self.grid.clone(), m, states, children)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_dates(&self) -> usize {
        self.grid.len()
    }

    pub fn n_nodes(&self, date: usize) -> usize {
        self.states[date].len() / self.n_assets
    }

    pub fn state(&self, date: usize, node: usize) -> &[f64] {
        &self.states[date][node * self.n_assets..(node + 1) * self.n_assets]
    }

    pub fn children(&self, date: usize, node: usize) -> &[(usize, f64)] {
        &self.children[date][node]
    }

    /// Nodes at which a stop/continue decision is made (all but the last date).
    pub fn n_decision_nodes(&self) -> usize {
        (0..self.n_dates() - 1).map(|d| self.n_nodes(d)).sum()
    }

    /// Unconditional probability of reaching each node.
    pub fn reach_probabilities(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![1.0]];
        for d in 0..self.n_dates() - 1 {
            let mut next = vec![0.0; self.n_nodes(d + 1)];
            for (i, kids) in self.children[d].iter().enumerate() {
                for &(c, p) in kids {
                    next[c] += out[d][i] * p;
                }
            }
            out.push(next);
        }
        out
    }

    /// Every root-to-leaf node sequence with its probability.
    pub fn paths(&self) -> Result<Vec<(f64, Vec<usize>)>> {
        let mut paths = vec![(1.0, vec![0usize])];
        for d in 0..self.n_dates() - 1 {
            let mut next = Vec::new();
            for (p, nodes) in &paths {
                for &(c, q) in &self.children[d][*nodes.last().unwrap()] {
                    let mut n = nodes.clone();
                    n.push(c);
                    next.push((p * q, n));
                }
            }
            if next.len() > NODE_GUARD {
                return Err(Error::Guard("too many tree paths".into()));
            }
            paths = next;
        }
        Ok(paths)
    }

    /// Discounted rewards per node.
    pub fn rewards(&self, payoff: &Payoff, cs: &CoordinateSystem) -> Vec<Vec<f64>> {
        (0..self.n_dates())
            .map(|d| {
                let t = self.grid.dates()[d];
                (0..self.n_nodes(d))
                    .map(|i| payoff.eval_stat(cs.alpha_of(self.state(d, i)), t))
                    .collect()
            })
            .collect()
    }
}

fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut pmf = vec![0.0; n + 1];
    pmf[0] = 1.0;
    for _ in 0..n {
        for i in (0..pmf.len()).rev() {
            pmf[i] = pmf[i] * (1.0 - p) + if i > 0 { pmf[i - 1] * p } else { 0.0 };
        }
    }
    pmf
}

/// Row-major multi-index with the last coordinate fastest.
fn unflatten(mut flat: usize, base: usize, m: usize) -> Vec<usize> {
    let mut idx = vec![0; m];
    for i in (0..m).rev() {
        idx[i] = flat % base;
        flat /= base;
    }
    idx
}

fn flatten(idx: &[usize], base: usize) -> usize {
    idx.iter().fold(0, |acc, j| acc * base + j)
}

/// Where DP node states come from.
#[derive(Clone, Debug)]
pub enum NodeStates {
    /// `states[d]` flattened `n_nodes x m`.
    Explicit(Vec<Vec<f64>>),
    /// Lattice nodes at exercise steps, computed on demand.
    Lattice(Lattice),
}

impl NodeStates {
    fn state_into(&self, date: usize, node: usize, m: usize, out: &mut [f64]) {
        match self {
            NodeStates::Explicit(s) => out.copy_from_slice(&s[date][node * m..(node + 1) * m]),
            NodeStates::Lattice(l) => l.node_state(date * l.steps_per_interval, node, out),
        }
    }

    /// Node of layer `date` closest to `x` in log coordinates.
    fn nearest(&self, date: usize, x: &[f64], m: usize) -> usize {
        match self {
            NodeStates::Lattice(l) => {
                let k = date * l.steps_per_interval;
                let mut idx = vec![0usize; m];
                for i in 0..m {
                    let f = &l.factors[i];
                    let span = (f.up / f.down).ln();
                    idx[i] = if span > 0.0 && k > 0 {
                        let j = ((x[i] / l.spot[i]).ln() - k as f64 * f.down.ln()) / span;
                        j.round().clamp(0.0, k as f64) as usize
                    } else {
                        0
                    };
                }
                flatten(&idx, k + 1)
            }
            NodeStates::Explicit(s) => {
                let layer = &s[date];
                let dist = |node: usize| -> f64 {
                    layer[node * m..(node + 1) * m]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| {
                            let d = (a / b).ln();
                            if d.is_nan() { f64::INFINITY } else { d * d }
                        })
                        .sum()
                };
                (0..layer.len() / m)
                    .min_by(|a, b| dist(*a).total_cmp(&dist(*b)))
                    .unwrap_or(0)
            }
        }
    }
}

/// DP tables at one exercise date.
#[derive(Clone, Debug, PartialEq)]
pub struct DpLayer {
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub exercise: Vec<bool>,
}

/// Value and exercise tables of backward induction.
///
/// A node is marked as exercise when its reward is positive and at least the
/// continuation value; on the last date every node is. Nodes where reward and
/// continuation are both zero are left as continue, so that every section of
/// the exercise set is an epigraph in the statistic.
#[derive(Clone, Debug)]
pub struct DpResult {
    pub grid: TimeGrid,
    pub n_assets: usize,
    pub layers: Vec<DpLayer>,
    pub states: NodeStates,
    pub root_value: f64,
}

impl DpResult {
    pub fn n_nodes(&self, date: usize) -> usize {
        self.layers[date].values.len()
    }

    pub fn state(&self, date: usize, node: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_assets];
        self.states.state_into(date, node, self.n_assets, &mut x);
        x
    }

    pub fn nearest_node(&self, date: usize, x: &[f64]) -> usize {
        self.states.nearest(date, x, self.n_assets)
    }

    /// Exercise flag of the node nearest to `x`.
    pub fn exercises(&self, date: usize, x: &[f64]) -> bool {
        self.layers[date].exercise[self.nearest_node(date, x)]
    }

    /// The optimal stopping date along a tree path of node indices.
    pub fn stop_date(&self, nodes: &[usize]) -> usize {
        nodes
            .iter()
            .enumerate()
            .find(|(d, n)| self.layers[*d].exercise[**n])
            .map(|(d, _)| d)
            .unwrap_or(nodes.len() - 1)
    }

    /// Writes `date,node,x0..,value,reward,exercise` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "node".to_string()];
        header.extend((0..self.n_assets).map(|i| format!("x{i}")));
        header.extend(["value", "reward", "exercise"].map(String::from));
        w.write_record(&header)?;
        let mut x = vec![0.0; self.n_assets];
        for (d, layer) in self.layers.iter().enumerate() {
            for i in 0..layer.values.len() {
                self.states.state_into(d, i, self.n_assets, &mut x);
                let mut row = vec![d.to_string(), i.to_string()];
                row.extend(x.iter().map(f64::to_string));
                row.push(layer.values[i].to_string());
                row.push(layer.rewards[i].to_string());
                row.push(u8::from(layer.exercise[i]).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn exercise_flag(reward: f64, continuation: f64, last: bool) -> bool {
    last || (reward > 0.0 && reward >= continuation)
}

fn check_coords(payoff: &Payoff, cs: &CoordinateSystem, m: usize) -> Result<()> {
    if cs.payoff_kind() != payoff.kind || cs.n_assets() != m {
        return Err(invalid("coordinate system does not match the payoff and asset count"));
    }
    Ok(())
}

/// Backward induction on a scenario tree.
pub fn tree_dp(tree: &ScenarioTree, payoff: &Payoff, cs: &CoordinateSystem) -> Result<DpResult> {
    check_coords(payoff, cs, tree.n_assets())?;
    let rewards = tree.rewards(payoff, cs);
    let n = tree.n_dates();
    let mut layers: Vec<DpLayer> = Vec::with_capacity(n);
    let last = &rewards[n - 1];
    layers.push(DpLayer {
        values: last.clone(),
        rewards: last.clone(),
        exercise: vec![true; last.len()],
    });
    for d in (0..n - 1).rev() {
        let next = &layers.last().unwrap().values;
        let mut values = Vec::with_capacity(tree.n_nodes(d));
        let mut exercise = Vec::with_capacity(tree.n_nodes(d));
        for (i, r) in rewards[d].iter().enumerate() {
            let cont: f64 = tree.children(d, i).iter().map(|&(c, p)| p * next[c]).sum();
            values.push(r.max(cont));
            exercise.push(exercise_flag(*r, cont, false));
        }
        layers.push(DpLayer {
            values,
            rewards: rewards[d].clone(),
            exercise,
        });
    }
    layers.reverse();
    Ok(DpResult {
        grid: tree.grid().clone(),
        n_assets: tree.n_assets(),
        root_value: layers[0].values[0],
        layers,
        states: NodeStates::Explicit(tree.states.clone()),
    })
}

/// Averages out the last step along every axis: the one-step risk-neutral
/// expectation on a product lattice, from layer `k + 1` to layer `k`.
fn expect_one_step(next: &[f64], k: usize, m: usize, probs: &[f64]) -> Vec<f64> {
    // dims shrink one axis at a time from (k+2)^m to (k+1)^m
    let mut data = next.to_vec();
    let mut dims = vec![k + 2; m];
    for axis in 0..m {
        let inner: usize = dims[axis + 1..].iter().product();
        let outer: usize = dims[..axis].iter().product();
        let n_in = dims[axis];
        let p = probs[axis];
        let mut out = Vec::with_capacity(outer * (n_in - 1) * inner);
        for o in 0..outer {
            let base = o * n_in * inner;
            for j in 0..n_in - 1 {
                let lo = &data[base + j * inner..base + (j + 1) * inner];
                let hi = &data[base + (j + 1) * inner..base + (j + 2) * inner];
                out.extend(lo.iter().zip(hi).map(|(a, b)| (1.0 - p) * a + p * b));
            }
        }
        dims[axis] = n_in - 1;
        data = out;
    }
    data
}

/// Discounted rewards at the nodes of lattice step `k`, which sits at time `t`.
fn lattice_rewards(lat: &Lattice, k: usize, t: f64, payoff: &Payoff, cs: &CoordinateSystem) -> Vec<f64> {
    let m = lat.n_assets();
    let mut x = vec![0.0; m];
    (0..lat.layer_size(k))
        .map(|flat| {
            lat.node_state(k, flat, &mut x);
            payoff.eval_stat(cs.alpha_of(&x), t)
        })
        .collect()
}

fn lattice_backward(
    lat: &Lattice,
    payoff: &Payoff,
    cs: &CoordinateSystem,
    early: bool,
    record: bool,
) -> Result<(f64, Vec<DpLayer>)> {
    let m = lat.n_assets();
    check_coords(payoff, cs, m)?;
    let s = lat.steps_per_interval;
    let n = lat.grid.len();
    let dates = lat.grid.dates();
    let probs: Vec<f64> = lat.factors.iter().map(|f| f.prob).collect();
    let last_k = lat.n_steps();
    let mut values = lattice_rewards(lat, last_k, dates[n - 1], payoff, cs);
    let mut layers = Vec::new();
    if record {
        layers.push(DpLayer {
            values: values.clone(),
            rewards: values.clone(),
            exercise: vec![true; values.len()],
        });
    }
    for k in (0..last_k).rev() {
        values = expect_one_step(&values, k, m, &probs);
        if k % s == 0 && early {
            let d = k / s;
            let rewards = lattice_rewards(lat, k, dates[d], payoff, cs);
            let mut exercise = Vec::new();
            if record {
                exercise = values.iter().zip(&rewards).map(|(c, r)| exercise_flag(*r, *c, false)).collect();
            }
            for (v, r) in values.iter_mut().zip(&rewards) {
                *v = v.max(*r);
            }
            if record {
                layers.push(DpLayer {
                    values: values.clone(),
                    rewards,
                    exercise,
                });
            }
        }
    }
    layers.reverse();
    Ok((values[0], layers))
}

/// Backward induction on a lattice, recording tables at every exercise date.
pub fn lattice_dp(lat: &Lattice, payoff: &Payoff, cs: &CoordinateSystem) -> Result<DpResult> {
    let (root, layers) = lattice_backward(lat, payoff, cs, true, true)?;
    Ok(DpResult {
        grid: lat.grid.clone(),
        n_assets: lat.n_assets(),
        layers,
        states: NodeStates::Lattice(lat.clone()),
        root_value: root,
    })
}

/// Root value of [`lattice_dp`] without storing any table.
pub fn lattice_price(lat: &Lattice, payoff: &Payoff, cs: &CoordinateSystem) -> Result<f64> {
    Ok(lattice_backward(lat, payoff, cs, true, false)?.0)
}

/// Value of exercising only at the last date.
pub fn lattice_european(lat: &Lattice, payoff: &Payoff, cs: &CoordinateSystem) -> Result<f64> {
    Ok(lattice_backward(lat, payoff, cs, false, false)?.0)
}

/// Exact value of the policy given by one stop bit per node.
fn policy_value(tree: &ScenarioTree, rewards: &[Vec<f64>], stop: impl Fn(usize, usize) -> f64) -> f64 {
    let n = tree.n_dates();
    let mut mass = vec![1.0];
    let mut value = 0.0;
    for d in 0..n {
        let mut next = if d + 1 < n { vec![0.0; tree.n_nodes(d + 1)] } else { Vec::new() };
        for (i, &w) in mass.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let p = if d + 1 == n { 1.0 } else { stop(d, i) };
            value += p * w * rewards[d][i];
            let rest = (1.0 - p) * w;
            if rest > 0.0 {
                for &(c, q) in tree.children(d, i) {
                    next[c] += rest * q;
                }
            }
        }
        mass = next;
    }
    value
}

/// Best value over all policies with a stop bit per decision node, and the
/// maximizing bits (`bits[d][node]`). Ties go to the lowest policy index.
pub fn brute_force_policies(tree: &ScenarioTree, payoff: &Payoff, cs: &CoordinateSystem) -> Result<(f64, Vec<Vec<bool>>)> {
    check_coords(payoff, cs, tree.n_assets())?;
    let k = tree.n_decision_nodes();
    if k >= 64 || (1u64 << k) > POLICY_GUARD {
        return Err(Error::Guard(format!("{k} decision nodes exceed the policy guard of {POLICY_GUARD}")));
    }
    let rewards = tree.rewards(payoff, cs);
    let offsets: Vec<usize> = (0..tree.n_dates())
        .scan(0, |acc, d| {
            let o = *acc;
            *acc += tree.n_nodes(d);
            Some(o)
        })
        .collect();
    let (best, mask) = (0..1u64 << k)
        .into_par_iter()
        .map(|mask| {
            let v = policy_value(tree, &rewards, |d, i| ((mask >> (offsets[d] + i)) & 1) as f64);
            (v, mask)
        })
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a },
        );
    let bits = (0..tree.n_dates())
        .map(|d| {
            (0..tree.n_nodes(d))
                .map(|i| d + 1 == tree.n_dates() || (mask >> (offsets[d] + i)) & 1 == 1)
                .collect()
        })
        .collect();
    Ok((best, bits))
}

/// A randomized policy: a stopping intensity per tree node, with the last
/// date's intensity fixed at 1. It is adapted because each intensity depends
/// only on the node reached.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeRule {
    pub intensities: Vec<Vec<f64>>,
}

impl TreeRule {
    pub fn from_bits(bits: &[Vec<bool>]) -> Self {
        Self {
            intensities: bits.iter().map(|l| l.iter().map(|b| f64::from(u8::from(*b))).collect()).collect(),
        }
    }

    pub fn value(&self, tree: &ScenarioTree, payoff: &Payoff, cs: &CoordinateSystem) -> f64 {
        policy_value(tree, &tree.rewards(payoff, cs), |d, i| self.intensities[d][i])
    }

    /// The stopping weights along every tree path, with the path probability.
    pub fn path_weights(&self, tree: &ScenarioTree) -> Result<Vec<(f64, RelaxedRule)>> {
        Ok(tree
            .paths()?
            .into_iter()
            .map(|(p, nodes)| {
                let q: Vec<f64> = nodes.iter().enumerate().map(|(d, n)| self.intensities[d][*n]).collect();
                (p, relaxed_weights_from_intensities(&q, true))
            })
            .collect())
    }
}

fn terminal_forced(tree: &ScenarioTree, mut f: impl FnMut(usize, usize) -> f64) -> TreeRule {
    let n = tree.n_dates();
    TreeRule {
        intensities: (0..n)
            .map(|d| (0..tree.n_nodes(d)).map(|i| if d + 1 == n { 1.0 } else { f(d, i) }).collect())
            .collect(),
    }
}

/// `n` rules with independent uniform intensities; rule `k` depends only on
/// `(seed, k)`.
pub fn random_relaxed_rules(tree: &ScenarioTree, n: usize, seed: u64) -> Vec<TreeRule> {
    let key = StreamKey::new(seed, Purpose::Rules, 0);
    (0..n)
        .map(|k| {
            let mut rng = key.rng(k as u64);
            terminal_forced(tree, |_, _| rng.random::<f64>())
        })
        .collect()
}

/// Rules concentrated near a given policy: each node keeps its bit with
/// probability `keep_prob` and otherwise draws a uniform intensity.
pub fn near_policy_rules(tree: &ScenarioTree, bits: &[Vec<bool>], n: usize, keep_prob: f64, seed: u64) -> Vec<TreeRule> {
    let key = StreamKey::new(seed, Purpose::Rules, 1);
    (0..n)
        .map(|k| {
            let mut rng = key.rng(k as u64);
            terminal_forced(tree, |d, i| {
                if rng.random::<f64>() < keep_prob {
                    f64::from(u8::from(bits[d][i]))
                } else {
                    rng.random::<f64>()
                }
            })
        })
        .collect()
}

/// The boundary of the DP exercise set, looked up at the nearest node.
pub fn optimal_boundary_from_dp(
    dp: &DpResult,
    cs: &CoordinateSystem,
    grid: &LatentGrid,
    a_grid: &[f64],
    orientation: Orientation,
) -> Result<TabularBoundary> {
    if cs.n_assets() != dp.n_assets {
        return Err(invalid("coordinate system does not match the DP asset count"));
    }
    extract_boundary(|d, x: &[f64]| dp.exercises(d, x), cs, grid, a_grid, orientation, &dp.grid)
}
