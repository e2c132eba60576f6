use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Boundary;
use crate::error::{check_len, invalid, Error, Result};

/// Cartesian product of sorted axes covering a compact box `K` of latent space.
/// Nodes are numbered row-major, last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentGrid {
    axes: Vec<Vec<f64>>,
}

impl LatentGrid {
    pub fn new(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() || axes.iter().any(|a| a.is_empty()) {
            return Err(invalid("latent grid axes must be nonempty"));
        }
        for a in &axes {
            if a.windows(2).any(|w| !(w[1] > w[0])) || a.iter().any(|v| !v.is_finite()) {
                return Err(invalid("latent grid axes must be finite and strictly increasing"));
            }
        }
        Ok(Self { axes })
    }

    /// `n` equally spaced nodes on `[lo, hi]`.
    pub fn uniform_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(vec![linspace(lo, hi, n)?])
    }

    /// The single latent point of the one-asset max-call coordinates.
    pub fn point(xi: &[f64]) -> Self {
        Self {
            axes: xi.iter().map(|v| vec![*v]).collect(),
        }
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn node_into(&self, mut index: usize, out: &mut [f64]) {
        for (k, axis) in self.axes.iter().enumerate().rev() {
            out[k] = axis[index % axis.len()];
            index /= axis.len();
        }
    }

    pub fn node(&self, index: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.node_into(index, &mut out);
        out
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes()).map(|i| self.node(i)).collect()
    }

    /// Largest spacing between neighbouring nodes along any axis.
    pub fn step(&self) -> f64 {
        self.axes
            .iter()
            .flat_map(|a| a.windows(2).map(|w| w[1] - w[0]))
            .fold(0.0, f64::max)
    }

    fn flat(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.axes)
            .fold(0, |acc, (i, a)| acc * a.len() + i)
    }

    /// Index of the nearest node, clamping to the box.
    pub fn nearest(&self, xi: &[f64]) -> usize {
        let idx: Vec<usize> = self
            .axes
            .iter()
            .zip(xi)
            .map(|(a, &x)| nearest_on_axis(a, x))
            .collect();
        self.flat(&idx)
    }
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid("linspace needs n >= 1 and lo <= hi"));
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    if hi == lo {
        return Err(invalid("linspace with n > 1 needs lo < hi"));
    }
    let mut v: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    v[n - 1] = hi;
    Ok(v)
}

fn nearest_on_axis(axis: &[f64], x: f64) -> usize {
    let pos = axis.partition_point(|v| *v < x);
    if pos == 0 {
        0
    } else if pos == axis.len() {
        axis.len() - 1
    } else if x - axis[pos - 1] <= axis[pos] - x {
        pos - 1
    } else {
        pos
    }
}

/// Lower cell index and weight of the upper neighbour, clamped to the axis.
fn cell_on_axis(axis: &[f64], x: f64) -> (usize, f64) {
    let n = axis.len();
    if n == 1 || x <= axis[0] {
        return (0, 0.0);
    }
    if x >= axis[n - 1] {
        return (n - 2, 1.0);
    }
    let pos = axis.partition_point(|v| *v <= x);
    let i = pos - 1;
    (i, (x - axis[i]) / (axis[i + 1] - axis[i]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Nearest,
    Multilinear,
}

/// Boundary tabulated on `dates x LatentGrid`. Queries outside the box are
/// clamped to its edge. `+inf` entries are allowed.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularBoundary {
    grid: LatentGrid,
    times: Vec<f64>,
    values: Vec<f64>,
    mode: Interpolation,
}

impl TabularBoundary {
    pub fn new(grid: LatentGrid, times: Vec<f64>, values: Vec<f64>, mode: Interpolation) -> Result<Self> {
        check_len(times.len() * grid.n_nodes(), values.len())?;
        if times.is_empty() {
            return Err(invalid("tabular boundary needs at least one date"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("tabular boundary values must not be NaN"));
        }
        Ok(Self {
            grid,
            times,
            values,
            mode,
        })
    }

    pub fn tabulate(b: &dyn Boundary, grid: &LatentGrid, times: &[f64], mode: Interpolation) -> Result<Self> {
        let n = grid.n_nodes();
        let mut values = Vec::with_capacity(n * times.len());
        let mut xi = vec![0.0; grid.dim()];
        for date in 0..times.len() {
            for i in 0..n {
                grid.node_into(i, &mut xi);
                values.push(b.value(date, &xi));
            }
        }
        Self::new(grid.clone(), times.to_vec(), values, mode)
    }

    pub fn grid(&self) -> &LatentGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_dates(&self) -> usize {
        self.times.len()
    }

    pub fn mode(&self) -> Interpolation {
        self.mode
    }

    pub fn with_mode(mut self, mode: Interpolation) -> Self {
        self.mode = mode;
        self
    }

    pub fn at(&self, date: usize, node: usize) -> f64 {
        self.values[date * self.grid.n_nodes() + node]
    }

    pub fn date_values(&self, date: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.values[date * n..(date + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            times: self.times.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
            mode: self.mode,
        }
    }

    fn multilinear(&self, date: usize, xi: &[f64]) -> f64 {
        let axes = self.grid.axes();
        let d = axes.len();
        let cells: Vec<(usize, f64)> = axes.iter().zip(xi).map(|(a, &x)| cell_on_axis(a, x)).collect();
        let base = date * self.grid.n_nodes();
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            for k in 0..d {
                let (i, t) = cells[k];
                if axes[k].len() == 1 {
                    if corner >> k & 1 == 1 {
                        w = 0.0;
                    }
                    idx[k] = 0;
                } else if corner >> k & 1 == 1 {
                    w *= t;
                    idx[k] = i + 1;
                } else {
                    w *= 1.0 - t;
                    idx[k] = i;
                }
            }
            if w == 0.0 {
                continue;
            }
            let v = self.values[base + self.grid.flat(&idx)];
            if v.is_infinite() {
                return v;
            }
            acc += w * v;
        }
        acc
    }

    /// Writes `date,t,xi0,..,value` rows; `+inf` is written as `inf`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "t".to_string()];
        header.extend((0..self.grid.dim()).map(|k| format!("xi{k}")));
        header.push("value".into());
        w.write_record(&header)?;
        let mut xi = vec![0.0; self.grid.dim()];
        for (date, t) in self.times.iter().enumerate() {
            for node in 0..self.grid.n_nodes() {
                self.grid.node_into(node, &mut xi);
                let mut row = vec![date.to_string(), t.to_string()];
                row.extend(xi.iter().map(f64::to_string));
                row.push(self.at(date, node).to_string());
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, mode: Interpolation) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let dim = header
            .len()
            .checked_sub(3)
            .filter(|d| *d >= 1)
            .ok_or_else(|| Error::Format("boundary CSV needs date,t,xi...,value columns".into()))?;
        let parse = |s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Format(format!("not a number: {s:?}")))
        };
        let mut rows: Vec<(usize, f64, Vec<f64>, f64)> = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if rec.len() != dim + 3 {
                return Err(Error::Format("ragged boundary CSV".into()));
            }
            let date: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad date index {:?}", &rec[0])))?;
            let t = parse(&rec[1])?;
            let xi = (0..dim).map(|k| parse(&rec[2 + k])).collect::<Result<Vec<_>>>()?;
            rows.push((date, t, xi, parse(&rec[dim + 2])?));
        }
        if rows.is_empty() {
            return Err(Error::Format("empty boundary CSV".into()));
        }
        let n_dates = rows.iter().map(|r| r.0).max().unwrap_or(0) + 1;
        let mut axes: Vec<Vec<f64>> = vec![Vec::new(); dim];
        for (_, _, xi, _) in &rows {
            for (k, v) in xi.iter().enumerate() {
                axes[k].push(*v);
            }
        }
        for a in axes.iter_mut() {
            a.sort_by(f64::total_cmp);
            a.dedup();
        }
        let grid = LatentGrid::new(axes)?;
        let n = grid.n_nodes();
        if rows.len() != n * n_dates {
            return Err(Error::Format(format!(
                "expected {} rows for {n_dates} dates x {n} nodes, found {}",
                n * n_dates,
                rows.len()
            )));
        }
        let mut values = vec![f64::NAN; n * n_dates];
        let mut times = vec![f64::NAN; n_dates];
        for (date, t, xi, v) in rows {
            let idx: Vec<usize> = grid
                .axes()
                .iter()
                .zip(&xi)
                .map(|(a, x)| a.binary_search_by(|p| p.total_cmp(x)).unwrap())
                .collect();
            values[date * n + grid.flat(&idx)] = v;
            times[date] = t;
        }
        if values.iter().any(|v| v.is_nan()) || times.iter().any(|t| t.is_nan()) {
            return Err(Error::Format("boundary CSV does not cover the full grid".into()));
        }
        Self::new(grid, times, values, mode)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>, mode: Interpolation) -> Result<Self> {
        Self::read_csv(BufReader::new(File::open(path)?), mode)
    }
}

impl Boundary for TabularBoundary {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        match self.mode {
            Interpolation::Nearest => self.at(date, self.grid.nearest(xi)),
            Interpolation::Multilinear => self.multilinear(date, xi),
        }
    }
}
