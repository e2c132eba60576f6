use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use super::Boundary;
use crate::error::{check_len, invalid, Error, Result};
use crate::market::TimeGrid;
use crate::rng::{Purpose, StreamKey};

/// Fully connected network with `tanh` hidden layers and a scalar linear output.
///
/// Parameters are one flat vector; layer `l` stores its weights input-major
/// (`w[j * out + k]` connects input `j` to output `k`) followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn new(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(invalid("network needs an input and an output layer"));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(invalid("network output must be scalar"));
        }
        check_len(param_count(&sizes), params.len())?;
        Ok(Self { sizes, params })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn glorot(sizes: Vec<usize>, seed: u64) -> Result<Self> {
        let mut net = Self::new(sizes.clone(), vec![0.0; param_count(&sizes)])?;
        let mut rng = StreamKey::new(seed, Purpose::Init, 0).rng(0);
        let mut off = 0;
        for w in sizes.windows(2) {
            let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
            for p in &mut net.params[off..off + w[0] * w[1]] {
                *p = rng.random_range(-limit..limit);
            }
            off += w[0] * w[1] + w[1];
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Offset of layer `l`'s weights.
    fn offset(&self, l: usize) -> usize {
        param_count(&self.sizes[..=l])
    }

    fn widest(&self) -> usize {
        *self.sizes.iter().max().unwrap()
    }

    fn affine(&self, l: usize, input: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offset(l);
        let w = &self.params[off..off + n_in * n_out];
        out[..n_out].copy_from_slice(&self.params[off + n_in * n_out..off + n_in * n_out + n_out]);
        for (j, x) in input.iter().enumerate() {
            let row = &w[j * n_out..(j + 1) * n_out];
            for (o, wk) in out[..n_out].iter_mut().zip(row) {
                *o += x * wk;
            }
        }
    }

    /// Raw scalar output for one input row.
    pub fn forward(&self, input: &[f64]) -> f64 {
        let width = self.widest();
        let mut a = vec![0.0; width];
        let mut b = vec![0.0; width];
        a[..input.len()].copy_from_slice(input);
        let mut n = input.len();
        for l in 0..self.n_layers() {
            self.affine(l, &a[..n], &mut b);
            n = self.sizes[l + 1];
            if l + 1 < self.n_layers() {
                for v in &mut b[..n] {
                    *v = v.tanh();
                }
            }
            std::mem::swap(&mut a, &mut b);
        }
        a[0]
    }

    /// Raw outputs for a batch of input rows, evaluated in parallel.
    pub fn forward_batch(&self, inputs: &[f64]) -> Vec<f64> {
        let n_in = self.n_inputs();
        let mut out = vec![0.0; inputs.len() / n_in];
        out.par_chunks_mut(256)
            .zip(inputs.par_chunks(256 * n_in))
            .for_each(|(o, rows)| {
                for (v, row) in o.iter_mut().zip(rows.chunks(n_in)) {
                    *v = self.forward(row);
                }
            });
        out
    }

    /// Forward pass over a batch of input rows, recording activations.
    pub fn forward_tape(&self, inputs: &[f64], tape: &mut AdTape) -> Result<()> {
        let n_in = self.n_inputs();
        if inputs.len() % n_in != 0 {
            return Err(Error::LengthMismatch {
                expected: n_in,
                found: inputs.len(),
            });
        }
        let batch = inputs.len() / n_in;
        tape.batch = batch;
        tape.acts.resize(self.n_layers(), Vec::new());
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(inputs);
        tape.outputs.clear();
        let mut buf = vec![0.0; self.widest()];
        for l in 0..self.n_layers() {
            let (wi, wo) = (self.sizes[l], self.sizes[l + 1]);
            let last = l + 1 == self.n_layers();
            let mut next = Vec::with_capacity(if last { 0 } else { batch * wo });
            for s in 0..batch {
                let input = &tape.acts[l][s * wi..(s + 1) * wi];
                self.affine(l, input, &mut buf);
                if last {
                    tape.outputs.push(buf[0]);
                } else {
                    next.extend(buf[..wo].iter().map(|v| v.tanh()));
                }
            }
            if !last {
                tape.acts[l + 1] = next;
            }
        }
        Ok(())
    }

    /// Accumulates `sum_s adjoints[s] * d(output_s)/d(params)` into `grad`.
    pub fn backward(&self, tape: &AdTape, adjoints: &[f64], grad: &mut [f64]) -> Result<()> {
        check_len(tape.batch, adjoints.len())?;
        check_len(self.n_params(), grad.len())?;
        let width = self.widest();
        let mut delta = vec![0.0; width];
        let mut prev = vec![0.0; width];
        for (s, &adj) in adjoints.iter().enumerate() {
            if adj == 0.0 {
                continue;
            }
            delta[0] = adj;
            for l in (0..self.n_layers()).rev() {
                let (wi, wo) = (self.sizes[l], self.sizes[l + 1]);
                let off = self.offset(l);
                let act = &tape.acts[l][s * wi..(s + 1) * wi];
                for (j, a) in act.iter().enumerate() {
                    let g = &mut grad[off + j * wo..off + (j + 1) * wo];
                    for (gk, dk) in g.iter_mut().zip(&delta[..wo]) {
                        *gk += a * dk;
                    }
                }
                for (gb, dk) in grad[off + wi * wo..off + wi * wo + wo].iter_mut().zip(&delta[..wo]) {
                    *gb += dk;
                }
                if l > 0 {
                    let w = &self.params[off..off + wi * wo];
                    for (j, a) in act.iter().enumerate() {
                        let row = &w[j * wo..(j + 1) * wo];
                        let back: f64 = row.iter().zip(&delta[..wo]).map(|(x, y)| x * y).sum();
                        prev[j] = back * (1.0 - a * a);
                    }
                    std::mem::swap(&mut delta, &mut prev);
                }
            }
        }
        Ok(())
    }
}

/// Recorded activations of one batch evaluation, replayed by [`Mlp::backward`].
#[derive(Clone, Debug, Default)]
pub struct AdTape {
    batch: usize,
    /// `acts[l]` is the input of layer `l`, `batch x sizes[l]`.
    acts: Vec<Vec<f64>>,
    outputs: Vec<f64>,
}

impl AdTape {
    pub fn outputs(&self) -> &[f64] {
        &self.outputs
    }

    pub fn batch(&self) -> usize {
        self.batch
    }
}

#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Neural boundary `g(t, xi) = scale * softplus(net(t / horizon, xi))`.
///
/// `scale` is fixed (not trained); it puts the output on the price scale of
/// the statistic.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpBoundary {
    pub net: Mlp,
    /// Normalized exercise dates fed to the network.
    pub times: Vec<f64>,
    pub scale: f64,
}

impl MlpBoundary {
    pub fn new(net: Mlp, times: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(invalid("output scale must be positive"));
        }
        if times.is_empty() {
            return Err(invalid("neural boundary needs at least one date"));
        }
        if net.n_inputs() < 2 {
            return Err(invalid("network needs a time input and at least one latent input"));
        }
        Ok(Self { net, times, scale })
    }

    /// Glorot initialization with the output layer shrunk tenfold and its bias
    /// set so the initial boundary sits near `init_level`.
    pub fn init(
        hidden: &[usize],
        latent_dim: usize,
        grid: &TimeGrid,
        scale: f64,
        init_level: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(init_level > 0.0) {
            return Err(invalid("initial boundary level must be positive"));
        }
        let mut sizes = vec![1 + latent_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let mut net = Mlp::glorot(sizes, seed)?;
        spread_first_layer(&mut net, seed);
        let n = net.n_params();
        let last_in = net.sizes[net.sizes.len() - 2];
        for p in &mut net.params[n - 1 - last_in..n - 1] {
            *p *= 0.1;
        }
        let y = init_level / scale;
        net.params[n - 1] = if y > 30.0 { y } else { y.exp_m1().ln() };
        Self::new(net, grid.normalized(), scale)
    }

    pub fn latent_dim(&self) -> usize {
        self.net.n_inputs() - 1
    }

    pub fn n_dates(&self) -> usize {
        self.times.len()
    }

    /// Network input row for `(date, xi)`.
    #[inline]
    pub fn features_into(&self, date: usize, xi: &[f64], out: &mut [f64]) {
        out[0] = self.times[date];
        out[1..].copy_from_slice(xi);
    }

    #[inline]
    pub fn output(&self, z: f64) -> f64 {
        self.scale * softplus(z)
    }

    /// Derivative of the boundary value with respect to the raw output.
    #[inline]
    pub fn output_slope(&self, z: f64) -> f64 {
        self.scale * sigmoid(z)
    }

    pub fn eval_features(&self, features: &[f64]) -> f64 {
        self.output(self.net.forward(features))
    }

    pub fn n_params(&self) -> usize {
        self.net.n_params()
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    /// Plain-text format: header lines, then one parameter per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        writeln!(s, "nosb-mlp 1").unwrap();
        writeln!(
            s,
            "layers {}",
            self.net.sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
        )
        .unwrap();
        writeln!(s, "activation tanh softplus").unwrap();
        writeln!(s, "scale {}", self.scale).unwrap();
        writeln!(s, "times {}", join(&self.times)).unwrap();
        writeln!(s, "params {}", self.net.n_params()).unwrap();
        for p in self.net.params() {
            writeln!(s, "{p}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Format(format!("neural boundary file: {m}"));
        let mut lines = text.lines();
        let mut field = |name: &str| -> Result<Vec<String>> {
            let line = lines.next().ok_or_else(|| bad(&format!("missing {name}")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(name) {
                return Err(bad(&format!("expected {name} line, found {line:?}")));
            }
            Ok(parts.map(str::to_string).collect())
        };
        if field("nosb-mlp")? != ["1"] {
            return Err(bad("unsupported version"));
        }
        let sizes = field("layers")?
            .iter()
            .map(|s| s.parse::<usize>().map_err(|_| bad("layer size")))
            .collect::<Result<Vec<_>>>()?;
        if field("activation")? != ["tanh", "softplus"] {
            return Err(bad("unsupported activation tags"));
        }
        let num = |s: &String| s.parse::<f64>().map_err(|_| bad("number"));
        let scale = field("scale")?.first().ok_or_else(|| bad("scale")).and_then(num)?;
        let times = field("times")?.iter().map(num).collect::<Result<Vec<_>>>()?;
        let count: usize = field("params")?
            .first()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("parameter count"))?;
        let params = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse::<f64>().map_err(|_| bad("parameter")))
            .collect::<Result<Vec<_>>>()?;
        check_len(count, params.len())?;
        Self::new(Mlp::new(sizes, params)?, times, scale)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

impl Boundary for MlpBoundary {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        let mut f = vec![0.0; self.net.n_inputs()];
        self.features_into(date, xi, &mut f);
        self.eval_features(&f)
    }
}

/// Steepness of first-layer units at initialization.
pub const FIRST_LAYER_SPREAD: f64 = 4.0;

/// Redraws the first layer so that every hidden unit has its tanh transition
/// at a uniformly drawn point of the unit input box.
fn spread_first_layer(net: &mut Mlp, seed: u64) {
    let (n_in, n_out) = (net.sizes[0], net.sizes[1]);
    let mut rng = StreamKey::new(seed, Purpose::Init, 1).rng(0);
    let (weights, rest) = net.params.split_at_mut(n_in * n_out);
    let bias = &mut rest[..n_out];
    bias.fill(0.0);
    for i in 0..n_in {
        for j in 0..n_out {
            let w = rng.random_range(-FIRST_LAYER_SPREAD..FIRST_LAYER_SPREAD);
            let centre: f64 = rng.random_range(0.0..1.0);
            weights[i * n_out + j] = w;
            bias[j] -= w * centre;
        }
    }
}

/// Boundary values on a batch of feature rows and the reverse-mode gradient of
/// `sum_k adjoints[k] * g(row_k)` with respect to the parameters.
pub fn mlp_value_and_grad(b: &MlpBoundary, features: &[f64], adjoints: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(k) = adjoints.iter().position(|a| !a.is_finite()) {
        return Err(Error::NonFinite {
            what: "adjoint",
            path: k,
            date: 0,
        });
    }
    let mut tape = AdTape::default();
    b.net.forward_tape(features, &mut tape)?;
    check_len(tape.batch(), adjoints.len())?;
    let values: Vec<f64> = tape.outputs().iter().map(|z| b.output(*z)).collect();
    let dz: Vec<f64> = tape
        .outputs()
        .iter()
        .zip(adjoints)
        .map(|(z, a)| a * b.output_slope(*z))
        .collect();
    let mut grad = vec![0.0; b.n_params()];
    b.net.backward(&tape, &dz, &mut grad)?;
    Ok((values, grad))
}
