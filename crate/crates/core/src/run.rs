//! Experiment runner: one TOML config per run, CSV artifacts, a resolved copy
//! of the config and a JSON summary in the output directory.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::{
    inf_convolution, Boundary, Interpolation, LatentGrid, MlpBoundary, TabularBoundary,
};
use crate::error::{Error, Result};
use crate::geometry::{CoordinateSystem, Orientation};
use crate::market::{
    build_lattice, simulate_paths, MarketParams, Payoff, PayoffKind, PathSimulator, TimeGrid,
};
use crate::metrics::{
    empirical_modulus, hausdorff_epigraph, relaxation_sweep, relaxed_linf_profile, sup_distance,
    tabulate_values, write_relaxation_csv,
};
use crate::oracle::{
    brute_force_policies, lattice_dp, lattice_european, lattice_price, optimal_boundary_from_dp,
    ScenarioTree,
};
use crate::rng::{Purpose, StreamKey};
use crate::stopping::StoppingProblem;
use crate::train::{
    certify_gamma_maximizer, evaluate_trained, fit_mlp_to_boundary, perturbation_probes,
    restart_probes, train_nosb, GammaReport, TrainConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayoffSpec {
    pub kind: PayoffKind,
    pub strike: f64,
}

impl Default for PayoffSpec {
    fn default() -> Self {
        Self {
            kind: PayoffKind::MaxCall,
            strike: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoordinatesSpec {
    pub orientation: Orientation,
    pub force_terminal: bool,
}

impl Default for CoordinatesSpec {
    fn default() -> Self {
        Self {
            orientation: Orientation::Epigraph,
            force_terminal: true,
        }
    }
}

/// Exercise dates: either `n_dates` equally spaced on `[0, horizon]` or an
/// explicit list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub horizon: f64,
    pub n_dates: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dates: Option<Vec<f64>>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            n_dates: 10,
            dates: None,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<TimeGrid> {
        match &self.dates {
            Some(d) => TimeGrid::new(d.clone()),
            None => TimeGrid::uniform(self.horizon, self.n_dates),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSpec {
    pub n_paths: usize,
    pub dump_paths: bool,
}

impl Default for SimulateSpec {
    fn default() -> Self {
        Self {
            n_paths: 100_000,
            dump_paths: false,
        }
    }
}

/// Lattice resolution and the grids on which boundaries are tabulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSpec {
    /// Compare trained values against the lattice price.
    pub enabled: bool,
    pub steps_per_interval: usize,
    /// Also enumerate all policies when the lattice has at most this many
    /// decision nodes.
    pub brute_force_max_nodes: usize,
    pub a_step: f64,
    /// Highest level searched, as a multiple of the strike.
    pub a_max_factor: f64,
    pub xi_nodes: usize,
    /// Lower end of each latent axis for multi-asset max-calls.
    pub xi_min: f64,
    /// Upper end of the min-call ratio axis.
    pub ratio_max: f64,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            enabled: true,
            steps_per_interval: 200,
            brute_force_max_nodes: 20,
            a_step: 0.05,
            a_max_factor: 4.0,
            xi_nodes: 41,
            xi_min: 0.5,
            ratio_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CertifySpec {
    pub restarts: usize,
    pub restart_iterations: usize,
    pub perturbations: usize,
    pub perturbation_scale: f64,
    /// Add a network regressed on the lattice boundary to the probes.
    pub fit_oracle: bool,
    pub fit_iterations: usize,
}

impl Default for CertifySpec {
    fn default() -> Self {
        Self {
            restarts: 0,
            restart_iterations: 200,
            perturbations: 0,
            perturbation_scale: 0.01,
            fit_oracle: false,
            fit_iterations: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSpec {
    pub boundaries: Vec<PathBuf>,
    /// Strictly decreasing remapping radii.
    pub radii: Vec<f64>,
    /// Inf-convolution widths applied to every boundary.
    pub deltas: Vec<f64>,
    pub iotas: Vec<f64>,
    pub a_step: f64,
    pub a_max: f64,
    pub modulus_paths: usize,
}

impl Default for MetricsSpec {
    fn default() -> Self {
        Self {
            boundaries: Vec::new(),
            radii: vec![0.5, 0.25, 0.1, 0.05],
            deltas: vec![0.1, 0.01],
            iotas: vec![0.2, 0.1, 0.05, 0.025],
            a_step: 0.05,
            a_max: 400.0,
            modulus_paths: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Boundary file to study; the lattice boundary when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary: Option<PathBuf>,
    pub eps: Vec<f64>,
    pub eps_paths: usize,
    pub paths: Vec<usize>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            boundary: None,
            eps: vec![0.2, 0.1, 0.05, 0.025],
            eps_paths: 200_000,
            paths: vec![50_000, 200_000, 800_000],
        }
    }
}

/// Everything a run depends on. `seed` drives simulation and training;
/// evaluation uses `train.eval_seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub market: MarketParams,
    pub payoff: PayoffSpec,
    pub coordinates: CoordinatesSpec,
    pub grid: GridSpec,
    pub simulate: SimulateSpec,
    pub oracle: OracleSpec,
    pub train: TrainConfig,
    pub certify: CertifySpec,
    pub metrics: MetricsSpec,
    pub convergence: ConvergenceSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("out"),
            market: MarketParams::symmetric(1, 100.0, 0.05, 0.1, 0.2),
            payoff: PayoffSpec::default(),
            coordinates: CoordinatesSpec::default(),
            grid: GridSpec::default(),
            simulate: SimulateSpec::default(),
            oracle: OracleSpec::default(),
            train: TrainConfig::default(),
            certify: CertifySpec::default(),
            metrics: MetricsSpec::default(),
            convergence: ConvergenceSpec::default(),
        }
    }
}

fn config_error(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_error)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_error)
    }

    /// Hex SHA-256 of the serialized config, ignoring where artifacts go.
    pub fn hash(&self) -> Result<String> {
        let mut keyed = self.clone();
        keyed.out_dir = Default::default();
        Ok(hex::encode(Sha256::digest(keyed.to_toml()?.as_bytes())))
    }

    /// Validates and fills every derived default, so that the emitted config
    /// reproduces the run on its own.
    pub fn resolve(mut self) -> Result<Self> {
        self.train.seed = self.seed;
        self.train.init_level.get_or_insert(1.2 * self.payoff.strike);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate().map_err(config_error)?;
        self.grid.build().map_err(config_error)?;
        self.payoff().map_err(config_error)?;
        self.coords().map_err(config_error)?;
        self.train.validate().map_err(config_error)?;
        let o = &self.oracle;
        let axes_ok = (0.0..1.0).contains(&o.xi_min) && o.ratio_max > 1.0 && o.xi_nodes >= 2;
        if o.steps_per_interval == 0 || !(o.a_step > 0.0) || !(o.a_max_factor > 0.0) || !axes_ok {
            return Err(config_error("oracle grids must be nonempty with positive steps"));
        }
        if self.simulate.n_paths == 0 || self.convergence.eps_paths == 0 {
            return Err(config_error("path counts must be positive"));
        }
        if self.convergence.paths.contains(&0) || self.convergence.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(config_error("sweep entries must be positive"));
        }
        let m = &self.metrics;
        if m.radii.windows(2).any(|w| !(w[0] > w[1])) || m.radii.iter().any(|r| !(*r > 0.0)) {
            return Err(config_error("metric radii must be positive and strictly decreasing"));
        }
        if m.deltas.iter().any(|d| !(*d > 0.0)) || !(m.a_step > 0.0) || !(m.a_max > m.a_step) {
            return Err(config_error("metric widths and level grid must be positive"));
        }
        Ok(())
    }

    pub fn payoff(&self) -> Result<Payoff> {
        Payoff::new(self.payoff.kind, self.payoff.strike, self.market.rate)
    }

    pub fn coords(&self) -> Result<CoordinateSystem> {
        CoordinateSystem::for_payoff(self.payoff.kind, self.market.n_assets())
    }

    pub fn problem(&self) -> Result<StoppingProblem> {
        Ok(StoppingProblem::new(
            self.payoff()?,
            self.coords()?,
            self.coordinates.orientation,
            self.coordinates.force_terminal,
        ))
    }

    /// Latent grid on which neural boundaries are tabulated.
    pub fn latent_grid(&self) -> Result<LatentGrid> {
        let o = &self.oracle;
        match self.coords()? {
            CoordinateSystem::MaxCall(1) => Ok(LatentGrid::point(&[1.0])),
            CoordinateSystem::MaxCall(m) => LatentGrid::new(vec![linspace(o.xi_min, 1.0, o.xi_nodes); m]),
            CoordinateSystem::MinCall2d => LatentGrid::uniform_1d(1.0, o.ratio_max, o.xi_nodes),
        }
    }

    /// Latent grid for exact boundary extraction; `None` when the image of
    /// the coordinates is not a box.
    pub fn extraction_grid(&self) -> Result<Option<LatentGrid>> {
        Ok(match self.coords()? {
            CoordinateSystem::MaxCall(m) if m > 1 => None,
            _ => Some(self.latent_grid()?),
        })
    }

    pub fn level_grid(&self) -> Vec<f64> {
        let top = self.oracle.a_max_factor * self.payoff.strike;
        let n = (top / self.oracle.a_step).round() as usize;
        (0..=n).map(|k| k as f64 * self.oracle.a_step).collect()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Headline numbers and the files a command wrote.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    /// Non-finite values are written as the strings `inf`, `-inf`, `NaN`.
    #[serde(serialize_with = "finite_or_text")]
    pub headline: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    pub artifacts: Vec<String>,
}

fn finite_or_text<S: serde::Serializer>(map: &BTreeMap<String, f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut m = s.serialize_map(Some(map.len()))?;
    for (k, v) in map {
        if v.is_finite() {
            m.serialize_entry(k, v)?;
        } else {
            m.serialize_entry(k, &v.to_string())?;
        }
    }
    m.end()
}

/// Output directory bookkeeping.
struct Artifacts {
    dir: PathBuf,
    files: Vec<String>,
    headline: BTreeMap<String, f64>,
    notes: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            headline: BTreeMap::new(),
            notes: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.dir.join(name)
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn put(&mut self, key: &str, value: f64) {
        self.headline.insert(key.to_string(), value);
    }

    fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<RunSummary> {
        fs::write(self.path("resolved_config.toml"), cfg.to_toml()?)?;
        let mut w = csv::Writer::from_writer(self.create("headline.csv")?);
        w.write_record(["name", "value"])?;
        for (k, v) in &self.headline {
            w.write_record([k.clone(), v.to_string()])?;
        }
        w.flush()?;
        self.files.push("summary.json".into());
        let summary = RunSummary {
            command: command.to_string(),
            config_hash: cfg.hash()?,
            headline: self.headline,
            notes: self.notes,
            artifacts: self.files,
        };
        let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.dir.join("summary.json"), json)?;
        Ok(summary)
    }
}

/// A boundary read from disk: a tabular CSV or a network parameter file.
pub enum LoadedBoundary {
    Tabular(TabularBoundary),
    Mlp(MlpBoundary),
}

impl Boundary for LoadedBoundary {
    fn value(&self, date: usize, xi: &[f64]) -> f64 {
        match self {
            LoadedBoundary::Tabular(b) => b.value(date, xi),
            LoadedBoundary::Mlp(b) => b.value(date, xi),
        }
    }
}

impl LoadedBoundary {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        if text.starts_with("nosb-mlp") {
            MlpBoundary::from_text(&text).map(Self::Mlp)
        } else {
            TabularBoundary::read_csv(text.as_bytes(), Interpolation::Nearest).map(Self::Tabular)
        }
    }

    pub fn n_dates(&self) -> usize {
        match self {
            LoadedBoundary::Tabular(b) => b.n_dates(),
            LoadedBoundary::Mlp(b) => b.n_dates(),
        }
    }
}

/// Per-date mean and standard deviation of the statistic and of each asset.
pub fn cmd_simulate(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let grid = cfg.grid.build()?;
    let cs = cfg.coords()?;
    let n = cfg.simulate.n_paths;
    let batch = simulate_paths(&cfg.market, &grid, n, cfg.seed)?;
    let m = batch.n_assets;
    let mut art = Artifacts::new(out)?;
    let mut w = csv::Writer::from_writer(art.create("path_stats.csv")?);
    let mut header = vec!["date".to_string(), "time".into(), "alpha_mean".into(), "alpha_std".into(), "alpha_stderr".into()];
    for i in 0..m {
        header.push(format!("asset{i}_mean"));
        header.push(format!("asset{i}_std"));
    }
    w.write_record(&header)?;
    let mut column = vec![0.0; n];
    let mut last_alpha = 0.0;
    for d in 0..grid.len() {
        let mut row = vec![d.to_string(), grid.dates()[d].to_string()];
        for (b, c) in column.iter_mut().enumerate() {
            *c = cs.alpha_of(batch.state(b, d));
        }
        let (mean, std) = mean_std(&column);
        last_alpha = mean;
        row.extend([mean, std, std / (n as f64).sqrt()].map(|v| v.to_string()));
        for i in 0..m {
            for (b, c) in column.iter_mut().enumerate() {
                *c = batch.state(b, d)[i];
            }
            let (mean, std) = mean_std(&column);
            row.extend([mean.to_string(), std.to_string()]);
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    if cfg.simulate.dump_paths {
        let mut w = csv::Writer::from_writer(art.create("paths.csv")?);
        w.write_record(["path", "date", "asset", "value"])?;
        for b in 0..n {
            for d in 0..grid.len() {
                for (i, v) in batch.state(b, d).iter().enumerate() {
                    w.write_record([b.to_string(), d.to_string(), i.to_string(), v.to_string()])?;
                }
            }
        }
        w.flush()?;
    }
    art.put("terminal_alpha_mean", last_alpha);
    art.finish("simulate", cfg)
}

/// Sample mean and standard deviation, shifted by the first sample so that
/// constant columns give exactly zero.
fn mean_std(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let x0 = x[0];
    let (s, s2) = x.iter().fold((0.0, 0.0), |(s, s2), v| {
        let d = v - x0;
        (s + d, s2 + d * d)
    });
    let var = if x.len() > 1 { ((s2 - s * s / n) / (n - 1.0)).max(0.0) } else { 0.0 };
    (x0 + s / n, var.sqrt())
}

/// Lattice price of the Bermudan claim and, where the latent image is a box,
/// the extracted exercise boundary.
pub struct OracleOutput {
    pub value: f64,
    pub boundary: Option<TabularBoundary>,
}

fn run_oracle(cfg: &RunConfig, art: Option<&mut Artifacts>) -> Result<OracleOutput> {
    let grid = cfg.grid.build()?;
    let payoff = cfg.payoff()?;
    let cs = cfg.coords()?;
    let lat = build_lattice(&cfg.market, &grid, cfg.oracle.steps_per_interval)?;
    let Some(lattice_grid) = cfg.extraction_grid()? else {
        let value = lattice_price(&lat, &payoff, &cs)?;
        if let Some(art) = art {
            art.put("oracle_value", value);
            art.put("european_value", lattice_european(&lat, &payoff, &cs)?);
            art.notes.push("boundary extraction skipped: latent image is not a box".into());
        }
        return Ok(OracleOutput { value, boundary: None });
    };
    let dp = lattice_dp(&lat, &payoff, &cs)?;
    let boundary = optimal_boundary_from_dp(&dp, &cs, &lattice_grid, &cfg.level_grid(), cfg.coordinates.orientation)?;
    if let Some(art) = art {
        art.put("oracle_value", dp.root_value);
        art.put("european_value", lattice_european(&lat, &payoff, &cs)?);
        dp.write_csv(art.create("exercise_table.csv")?)?;
        boundary.write_csv(art.create("oracle_boundary.csv")?)?;
        let s = cfg.oracle.steps_per_interval;
        let decision: usize = (0..grid.len().saturating_sub(1)).map(|d| lat.layer_size(d * s)).sum();
        if decision <= cfg.oracle.brute_force_max_nodes {
            let tree = ScenarioTree::from_lattice(&lat)?;
            let (v, _) = brute_force_policies(&tree, &payoff, &cs)?;
            art.put("brute_force_value", v);
            art.put("brute_force_dp_gap", (v - dp.root_value).abs());
        }
    }
    Ok(OracleOutput {
        value: dp.root_value,
        boundary: Some(boundary),
    })
}

pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let mut art = Artifacts::new(out)?;
    run_oracle(cfg, Some(&mut art))?;
    art.finish("oracle", cfg)
}

/// Trains a boundary, evaluates it out of sample and compares with the
/// lattice when configured.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let grid = cfg.grid.build()?;
    let problem = cfg.problem()?;
    let mut art = Artifacts::new(out)?;
    let (b, log) = train_nosb(&cfg.train, &cfg.market, &grid, &problem)?;
    b.save(art.path("theta.txt"))?;
    log.write_csv(art.create("train_log.csv")?)?;
    log.write_timing_csv(art.create("timing.csv")?)?;
    TabularBoundary::tabulate(&b, &cfg.latent_grid()?, grid.dates(), Interpolation::Multilinear)?
        .write_csv(art.create("trained_boundary.csv")?)?;
    let sim = PathSimulator::new(&cfg.market, &grid)?;
    let est = evaluate_trained(&b, cfg.train.eval_paths, cfg.train.eval_seed, &sim, &problem)?;
    art.put("value", est.mean);
    art.put("stderr", est.stderr);
    if let Some(r) = log.records.last() {
        art.put("final_batch_value", r.value);
    }
    let stalled = log.stalled_tail();
    art.put("stalled_iterations", stalled as f64);
    if stalled > 0 {
        art.notes.push(format!(
            "the last {stalled} iterations had zero gradient: no path entered the fuzzy band, so the boundary can no longer move"
        ));
    }
    let oracle = if cfg.oracle.enabled {
        let o = run_oracle(cfg, None)?;
        art.put("oracle_value", o.value);
        art.put("gap", o.value - est.mean);
        Some(o)
    } else {
        None
    };
    let c = &cfg.certify;
    if c.restarts + c.perturbations > 0 || c.fit_oracle {
        let mut probes = restart_probes(&cfg.train, &cfg.market, &grid, &problem, c.restarts, c.restart_iterations)?;
        probes.extend(perturbation_probes(&b, c.perturbations, c.perturbation_scale, cfg.seed));
        if let Some(target) = oracle.as_ref().and_then(|o| o.boundary.as_ref()).filter(|_| c.fit_oracle) {
            let lg = target.grid().clone();
            let points: Vec<_> = (1..grid.len()).flat_map(|d| lg.nodes().into_iter().map(move |x| (d, x))).collect();
            let cap = cfg.oracle.a_max_factor * cfg.payoff.strike;
            let fit = fit_mlp_to_boundary(target, &b, &points, cap, c.fit_iterations, 1e-3)?;
            probes.push(crate::train::Probe {
                label: "oracle-fit".into(),
                boundary: fit,
            });
        }
        let report = certify_gamma_maximizer(&b, &cfg.train, &sim, &problem, &probes)?;
        write_gamma_csv(&report, art.create("gamma_report.csv")?)?;
        art.put("gamma_gap", report.gap);
        art.put("gamma_satisfied", f64::from(u8::from(report.satisfied)));
    }
    art.finish("train", cfg)
}

fn write_gamma_csv<W: Write>(r: &GammaReport, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["label", "relaxed_value", "stderr"])?;
    w.write_record(["trained".to_string(), r.trained.mean.to_string(), r.trained.stderr.to_string()])?;
    for p in &r.probes {
        w.write_record([p.label.clone(), p.value.mean.to_string(), p.value.stderr.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Pairwise distances between boundary files, their inf-convolutions and
/// the moduli of their gap distributions.
pub fn cmd_metrics(cfg: &RunConfig, files: &[PathBuf], out: &Path) -> Result<RunSummary> {
    let mut paths = cfg.metrics.boundaries.clone();
    paths.extend_from_slice(files);
    if paths.is_empty() {
        return Err(config_error("no boundary files given"));
    }
    let grid = cfg.grid.build()?;
    let loaded: Vec<LoadedBoundary> = paths.iter().map(LoadedBoundary::load).collect::<Result<_>>()?;
    let latent = match loaded.iter().find_map(|b| match b {
        LoadedBoundary::Tabular(t) => Some(t.grid().clone()),
        LoadedBoundary::Mlp(_) => None,
    }) {
        Some(g) => g,
        None => cfg.latent_grid()?,
    };
    for (b, p) in loaded.iter().zip(&paths) {
        let compatible = b.n_dates() == grid.len()
            && match b {
                LoadedBoundary::Tabular(t) => t.grid() == &latent,
                LoadedBoundary::Mlp(m) => m.latent_dim() == latent.dim(),
            };
        if !compatible {
            return Err(config_error(format!("{} does not match the grids of this run", p.display())));
        }
    }
    let names: Vec<String> = paths.iter().map(|p| p.display().to_string()).collect();
    let tables: Vec<Vec<Vec<f64>>> = loaded.iter().map(|b| tabulate_values(b, grid.len(), &latent)).collect();
    let ms = &cfg.metrics;
    let a_grid: Vec<f64> = (0..=(ms.a_max / ms.a_step).round() as usize).map(|k| k as f64 * ms.a_step).collect();
    let mut art = Artifacts::new(out)?;

    let mut dist = csv::Writer::from_writer(art.create("distances.csv")?);
    dist.write_record(["left", "right", "sup", "hausdorff"])?;
    let mut prof = csv::Writer::from_writer(art.create("profiles.csv")?);
    prof.write_record(["left", "right", "date", "r", "value"])?;
    let mut max_sup = 0.0f64;
    for i in 0..loaded.len() {
        for j in i + 1..loaded.len() {
            let sup = sup_distance(&loaded[i], &loaded[j], grid.len(), &latent);
            let mut haus = 0.0f64;
            for d in 0..grid.len() {
                haus = haus.max(hausdorff_epigraph(&tables[i][d], &tables[j][d], &latent, &a_grid)?);
                let p = relaxed_linf_profile(&tables[i][d], &tables[j][d], &latent, &ms.radii)?;
                for (r, v) in p.radii.iter().zip(&p.values) {
                    prof.write_record([names[i].clone(), names[j].clone(), d.to_string(), r.to_string(), v.to_string()])?;
                }
            }
            max_sup = max_sup.max(sup);
            dist.write_record([names[i].clone(), names[j].clone(), sup.to_string(), haus.to_string()])?;
        }
    }
    dist.flush()?;
    prof.flush()?;
    if loaded.len() > 1 {
        art.put("max_sup_distance", max_sup);
    }

    if !ms.deltas.is_empty() {
        let mut w = csv::Writer::from_writer(art.create("regularization.csv")?);
        w.write_record(["boundary", "delta", "sup_distance"])?;
        for (b, name) in loaded.iter().zip(&names) {
            for &delta in &ms.deltas {
                match inf_convolution(b, delta, &latent, &grid) {
                    Ok(env) => {
                        let sup = sup_distance(b, &env.boundary, grid.len(), &latent);
                        w.write_record([name.clone(), delta.to_string(), sup.to_string()])?;
                    }
                    Err(Error::InvalidParameter(why)) => {
                        art.notes.push(format!("{name}: no inf-convolution at delta {delta}: {why}"));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        w.flush()?;
    }

    if ms.modulus_paths > 0 && !ms.iotas.is_empty() {
        let problem = cfg.problem()?;
        let batch = simulate_paths(&cfg.market, &grid, ms.modulus_paths, cfg.seed)?;
        let mut w = csv::Writer::from_writer(art.create("modulus.csv")?);
        w.write_record(["boundary", "iota", "date", "rho"])?;
        for (b, name) in loaded.iter().zip(&names) {
            let table = empirical_modulus(&problem.gap_samples(b, &batch), &ms.iotas)?;
            for (k, iota) in table.iotas.iter().enumerate() {
                for (d, r) in table.per_date[k].iter().enumerate() {
                    w.write_record([name.clone(), iota.to_string(), d.to_string(), r.to_string()])?;
                }
                w.write_record([name.clone(), iota.to_string(), "sum".into(), table.total(k).to_string()])?;
            }
        }
        w.flush()?;
    }
    art.finish("metrics", cfg)
}

/// Relaxed-versus-strict gaps across fuzzy widths, and standard errors
/// across path counts, for one fixed boundary.
pub fn cmd_convergence_study(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let grid = cfg.grid.build()?;
    let problem = cfg.problem()?;
    let mut art = Artifacts::new(out)?;
    let boundary: Box<dyn Boundary> = match &cfg.convergence.boundary {
        Some(p) => Box::new(LoadedBoundary::load(p)?),
        None => {
            let o = run_oracle(cfg, None)?;
            art.put("oracle_value", o.value);
            let b = o
                .boundary
                .ok_or_else(|| config_error("no boundary file given and the lattice boundary cannot be extracted"))?;
            b.write_csv(art.create("boundary.csv")?)?;
            Box::new(b)
        }
    };
    let batch = simulate_paths(&cfg.market, &grid, cfg.convergence.eps_paths, cfg.seed)?;
    let rows = relaxation_sweep(&problem, boundary.as_ref(), &batch, &cfg.convergence.eps)?;
    write_relaxation_csv(&rows, art.create("eps_sweep.csv")?)?;
    if let Some(r) = rows.first() {
        art.put("strict_value", r.strict.mean);
    }

    let sim = PathSimulator::new(&cfg.market, &grid)?;
    let mut w = csv::Writer::from_writer(art.create("paths_sweep.csv")?);
    w.write_record(["paths", "value", "stderr", "stderr_sqrt_paths"])?;
    for (k, &n) in cfg.convergence.paths.iter().enumerate() {
        let key = StreamKey::new(cfg.seed, Purpose::Evaluation, k as u64 + 1);
        let est = problem.value_strict_streamed(boundary.as_ref(), &sim, key, n);
        let scaled = est.stderr * (n as f64).sqrt();
        w.write_record([n.to_string(), est.mean.to_string(), est.stderr.to_string(), scaled.to_string()])?;
    }
    w.flush()?;
    art.finish("convergence-study", cfg)
}
