//! Reproducible stability sweeps: configuration, the per-cell pipelines,
//! CSV archival, the bound-shape fit and static SVG charts.
//!
//! A sweep runs one forward simulation per window value (once in total for
//! IP1/IP3, once per `Λ` for IP2), draws one noise pattern per seed and
//! scales it for every `ε`, so the noise level is the only thing that varies
//! along an `ε` row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array2, Array3, ArrayD, Dimension};
use serde::{Deserialize, Serialize};

use crate::bounds::{select_cutoff, theorem_bound, BoundInputs, BoundTerm, Problem};
use crate::forward::{
    apply_noise, noise_pattern, BoundaryDataset, BoundaryExtractor, ForwardSolver, NoiseModel,
    SphereQuadrature, SphereResolution,
};
use crate::multiparam::{
    extract_fhat_cones, invert4, lambda_ladder, resample_to_grid4, sample_source4,
    sweep_forward_with, LambdaSweep, MIN_LAMBDAS,
};
use crate::planar::{continuation_fill, extract_fhat_planar, invert_planar, sample_planar};
use crate::probe::{extract_fhat, reconstruct_ip1, relative_l2, SampledSignal};
use crate::source::SourceSpec;
use crate::spectral::{forward_nd, Axis, SimulationGrid};
use crate::{Complex64, Error, Result};

/// JSON schema of [`SweepConfig`].
pub const CONFIG_SCHEMA: &str = include_str!("../config.schema.json");

/// A source given inline or as a path to a JSON [`SourceSpec`], relative to
/// the configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SourceRef {
    File { file: PathBuf },
    Inline(SourceSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_space: usize,
    pub dt: f64,
    /// Measurement radius `R`.
    pub radius: f64,
    pub sphere: SphereResolution,
    /// IP1 only; IP3 requires 1 and IP2 takes its values from the ladder.
    #[serde(default = "one")]
    pub lambda: f64,
    /// Distance travelled after the last signal leaves `B_R`: the horizon is
    /// `T₀ + (2R + margin)/√λ` (at the largest `λ` for IP2).
    #[serde(default = "one")]
    pub horizon_margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructionConfig {
    /// Spatial (IP1/IP2) or in-plane (IP3) reconstruction axis `[−L, L)`.
    pub half_width: f64,
    pub n: usize,
    /// Time axis of the reconstruction, IP2/IP3 only.
    #[serde(default)]
    pub time: Option<Axis>,
    /// Number of `λ` levels per `Λ` (IP2).
    #[serde(default = "default_levels")]
    pub n_lambdas: usize,
    /// Polynomial degree of the gap fill (IP3).
    #[serde(default = "default_degree")]
    pub continuation_degree: usize,
    /// Apply the gap fill (IP3).
    #[serde(default = "yes")]
    pub fill: bool,
    /// Samples of the known profile `g`.
    #[serde(default = "default_g_samples")]
    pub g_samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Divisor threshold `δ_min` for `|ĝ|`.
    #[serde(default = "default_delta_min")]
    pub delta_min: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            delta_min: default_delta_min(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundConfig {
    #[serde(default = "yes")]
    pub overlay: bool,
    #[serde(default = "half")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub c_fit: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            overlay: true,
            alpha: 0.5,
            c_fit: 1.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn yes() -> bool {
    true
}
fn default_levels() -> usize {
    8
}
fn default_degree() -> usize {
    8
}
fn default_g_samples() -> usize {
    401
}
fn default_delta_min() -> f64 {
    1e-6
}
fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub problem: Problem,
    pub source: SourceRef,
    pub grid: GridConfig,
    pub reconstruction: ReconstructionConfig,
    /// Bandwidths `b` (IP1/IP3).
    #[serde(default)]
    pub b_list: Vec<f64>,
    /// Windows `Λ` (IP2).
    #[serde(default, rename = "Lambda_list")]
    pub lambda_list: Vec<f64>,
    pub epsilon_list: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub bound: BoundConfig,
    /// Write measured wall times; off by default so reruns are byte-identical.
    #[serde(default)]
    pub record_timing: bool,
}

impl SweepConfig {
    /// Parses and validates a configuration file; a `source.file` reference is
    /// resolved against the file's directory and inlined.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: SweepConfig = serde_json::from_str(&text)?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: SweepConfig = serde_json::from_str(text)?;
        cfg.resolve(base)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) -> Result<()> {
        if let SourceRef::File { file } = &self.source {
            let p = base.join(file);
            let text = fs::read_to_string(&p).map_err(|e| {
                Error::Configuration(format!("source file {}: {e}", p.display()))
            })?;
            self.source = SourceRef::Inline(serde_json::from_str(&text)?);
        }
        Ok(())
    }

    pub fn source(&self) -> Result<&SourceSpec> {
        match &self.source {
            SourceRef::Inline(s) => Ok(s),
            SourceRef::File { file } => Err(Error::Configuration(format!(
                "source file {} was not resolved",
                file.display()
            ))),
        }
    }

    /// `b` values for IP1/IP3, `Λ` values for IP2.
    pub fn windows(&self) -> &[f64] {
        match self.problem {
            Problem::Ip2 => &self.lambda_list,
            _ => &self.b_list,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Configuration(m));
        self.source()?.validate()?;
        let (name, list, other) = match self.problem {
            Problem::Ip2 => ("Lambda_list", &self.lambda_list, &self.b_list),
            _ => ("b_list", &self.b_list, &self.lambda_list),
        };
        if list.is_empty() {
            return cfg(format!("{name} must be nonempty for {}", self.problem));
        }
        if !other.is_empty() {
            return cfg(format!("{} does not use the other window list", self.problem));
        }
        if list.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return cfg(format!("{name} entries must be positive, got {list:?}"));
        }
        if self.epsilon_list.is_empty() || self.seeds.is_empty() {
            return cfg("epsilon_list and seeds must be nonempty".into());
        }
        if self.epsilon_list.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return cfg(format!("noise levels must be nonnegative, got {:?}", self.epsilon_list));
        }
        if self.bound.overlay {
            if self.epsilon_list.iter().any(|e| *e >= (-1.0f64).exp()) {
                return cfg("bound overlay needs every epsilon below 1/e".into());
            }
            if list.iter().any(|v| *v <= 1.0) {
                return cfg(format!("bound overlay needs {name} entries above 1"));
            }
            if !(self.bound.c_fit > 0.0) || !(self.bound.alpha > 0.0 && self.bound.alpha < 1.0) {
                return cfg("bound overlay needs c_fit > 0 and alpha in (0, 1)".into());
            }
        }
        self.noise.validate()?;
        let g = &self.grid;
        if !(g.dt > 0.0 && g.radius > 0.0 && g.horizon_margin > 0.0 && g.lambda > 0.0) {
            return cfg("grid dt, radius, lambda and horizon_margin must be positive".into());
        }
        let r = &self.reconstruction;
        Axis::centered(r.half_width, r.n)?;
        if r.g_samples < 3 {
            return cfg("g_samples must be at least 3".into());
        }
        match self.problem {
            Problem::Ip1 => {}
            Problem::Ip2 => {
                if r.time.is_none() {
                    return cfg("ip2 needs reconstruction.time".into());
                }
                if r.n_lambdas < MIN_LAMBDAS {
                    return cfg(format!("n_lambdas must be at least {MIN_LAMBDAS}"));
                }
            }
            Problem::Ip3 => {
                if r.time.is_none() {
                    return cfg("ip3 needs reconstruction.time".into());
                }
                if g.lambda != 1.0 {
                    return cfg("ip3 requires lambda = 1".into());
                }
            }
        }
        Ok(())
    }

    /// Forward grid at wave parameter `lambda` with the configured margin.
    pub fn simulation_grid(&self, lambda: f64) -> Result<SimulationGrid> {
        let g = &self.grid;
        let t0 = self.source()?.support_time;
        let horizon = t0 + (2.0 * g.radius + g.horizon_margin) / lambda.sqrt();
        let horizon = (horizon / g.dt - 1e-9).ceil() * g.dt;
        SimulationGrid::with_time_step(g.half_width, g.n_space, horizon, g.dt, lambda, g.radius)
    }

    pub fn sphere(&self) -> Result<SphereQuadrature> {
        let s = self.grid.sphere;
        SphereQuadrature::new(self.grid.radius, s.n_theta, s.n_phi)
    }

    pub fn reconstruction_axis(&self) -> Axis {
        Axis::centered(self.reconstruction.half_width, self.reconstruction.n)
            .expect("validated at load")
    }

    pub fn time_axis(&self) -> Result<Axis> {
        self.reconstruction
            .time
            .ok_or_else(|| Error::Configuration(format!("{} needs reconstruction.time", self.problem)))
    }

    /// Known temporal signal (IP1) or vertical profile (IP3), sampled.
    pub fn known_profile(&self) -> Result<SampledSignal> {
        let s = self.source()?;
        let n = self.reconstruction.g_samples;
        match self.problem {
            Problem::Ip3 => {
                let v = s.vertical_profile()?.clone();
                let r = v.radius();
                SampledSignal::from_fn(-r, r, n, |z| v.value(z.abs()))
            }
            _ => {
                let g = s.temporal_factor()?.clone();
                let (a, b) = g.support();
                SampledSignal::from_fn(a, b, n, |t| g.value(t))
            }
        }
    }

    /// Bound inputs for one cell, with `C = 1`.
    fn bound_inputs(&self, window: f64, epsilon: f64, m: f64) -> Result<BoundInputs> {
        let s = self.source()?;
        Ok(BoundInputs {
            window,
            epsilon,
            m,
            radius: self.grid.radius,
            r0: s.support_radius,
            t0: s.support_time,
            alpha: self.bound.alpha,
            c_fit: 1.0,
        })
    }
}

/// One sweep cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub problem: Problem,
    pub b_or_lambda: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub error_rel_l2: f64,
    /// `C_fit` times the sum of `bound_terms`.
    pub bound_total: f64,
    /// Shape terms of the estimate with `C = 1`.
    pub bound_terms: Vec<BoundTerm>,
    pub cutoff_k: f64,
    pub wall_time: f64,
    /// Set when the cell's pipeline failed; the numeric fields are then NaN.
    pub failure: Option<String>,
}

impl StabilityRecord {
    pub fn is_failure(&self) -> bool {
        self.failure.is_some()
    }

    pub fn bound_shape(&self) -> f64 {
        self.bound_terms.iter().map(|t| t.value).sum()
    }

    fn failed(problem: Problem, window: f64, epsilon: f64, seed: u64, message: String) -> Self {
        StabilityRecord {
            problem,
            b_or_lambda: window,
            epsilon,
            seed,
            error_rel_l2: f64::NAN,
            bound_total: f64::NAN,
            bound_terms: Vec::new(),
            cutoff_k: f64::NAN,
            wall_time: 0.0,
            failure: Some(message),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    problem: String,
    #[serde(rename = "b_or_Lambda")]
    b_or_lambda: f64,
    epsilon: f64,
    seed: u64,
    #[serde(rename = "error_rel_L2")]
    error_rel_l2: f64,
    bound_total: f64,
    bound_terms: String,
    cutoff_k: f64,
    wall_time: f64,
}

/// Renders records as CSV with the columns of [`StabilityRecord`] in order;
/// `bound_terms` is `name=value` pairs joined by `;`, or `failed: …`.
pub fn records_to_csv(records: &[StabilityRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        let terms = match &r.failure {
            Some(msg) => format!("failed: {msg}"),
            None => r
                .bound_terms
                .iter()
                .map(|t| format!("{}={:e}", t.name, t.value))
                .collect::<Vec<_>>()
                .join(";"),
        };
        w.serialize(CsvRow {
            problem: r.problem.to_string(),
            b_or_lambda: r.b_or_lambda,
            epsilon: r.epsilon,
            seed: r.seed,
            error_rel_l2: r.error_rel_l2,
            bound_total: r.bound_total,
            bound_terms: terms,
            cutoff_k: r.cutoff_k,
            wall_time: r.wall_time,
        })
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(path: impl AsRef<Path>, records: &[StabilityRecord]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, records_to_csv(records)?).map_err(|e| Error::io(path, e))
}

/// `‖f‖_{H¹}/‖f‖_{L²}` of a sampled function, computed spectrally on its grid.
pub fn relative_h1(values: &ArrayD<f64>, axes: &[Axis]) -> Result<f64> {
    let coeffs = forward_nd(values.mapv(|v| Complex64::new(v, 0.0)), axes)?;
    let (mut l2, mut grad) = (0.0, 0.0);
    for (idx, c) in coeffs.indexed_iter() {
        let w = c.norm_sqr();
        let xi2: f64 = idx
            .slice()
            .iter()
            .zip(axes)
            .map(|(p, ax)| ax.freq(*p).powi(2))
            .sum();
        l2 += w;
        grad += xi2 * w;
    }
    if l2 == 0.0 {
        return Err(Error::InvalidInput("relative H1 norm of a zero function".into()));
    }
    Ok((1.0 + grad / l2).sqrt())
}

/// Seed of the noise drawn for dataset `j` of a multi-`λ` sweep.
fn level_seed(seed: u64, j: usize) -> u64 {
    seed.wrapping_add((j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Truth, data and per-cell reconstruction for one problem.
enum Prepared {
    Ip1 {
        ds: BoundaryDataset,
        g: SampledSignal,
        axis: Axis,
        truth: Array3<f64>,
    },
    Ip2 {
        sweeps: Vec<(f64, Result<LambdaSweep>)>,
        space: Axis,
        time: Axis,
        truth: ndarray::Array4<f64>,
    },
    Ip3 {
        ds: BoundaryDataset,
        g: SampledSignal,
        inplane: Axis,
        time: Axis,
        truth: Array3<f64>,
    },
}

fn prepare(cfg: &SweepConfig) -> Result<(Prepared, f64)> {
    let source = cfg.source()?;
    let mut solver = ForwardSolver::new();
    let mut extractor = BoundaryExtractor::new(cfg.sphere()?);
    match cfg.problem {
        Problem::Ip1 => {
            let grid = cfg.simulation_grid(cfg.grid.lambda)?;
            let ds = extractor.extract(&solver.solve(source, &grid)?)?;
            let axis = cfg.reconstruction_axis();
            let x = axis.nodes();
            let truth = Array3::from_shape_fn((axis.n, axis.n, axis.n), |(a, b, c)| {
                source.spatial_value([x[a], x[b], x[c]])
            });
            let m = relative_h1(&truth.clone().into_dyn(), &[axis; 3])?;
            let g = cfg.known_profile()?;
            Ok((Prepared::Ip1 { ds, g, axis, truth }, m))
        }
        Problem::Ip2 => {
            let space = cfg.reconstruction_axis();
            let time = cfg.time_axis()?;
            let truth = sample_source4(source, &space, &time);
            let m = relative_h1(&truth.clone().into_dyn(), &[space, space, space, time])?;
            let mut sweeps = Vec::new();
            for &big in &cfg.lambda_list {
                let run = lambda_ladder(big, cfg.reconstruction.n_lambdas).and_then(|lambdas| {
                    let template = cfg.simulation_grid(big * big)?;
                    sweep_forward_with(&mut solver, &mut extractor, source, &template, &lambdas)
                });
                sweeps.push((big, run));
            }
            Ok((Prepared::Ip2 { sweeps, space, time, truth }, m))
        }
        Problem::Ip3 => {
            let grid = cfg.simulation_grid(cfg.grid.lambda)?;
            let ds = extractor.extract(&solver.solve(source, &grid)?)?;
            let inplane = cfg.reconstruction_axis();
            let time = cfg.time_axis()?;
            let truth = sample_planar(source, &inplane, &time);
            let m = relative_h1(&truth.clone().into_dyn(), &[inplane, inplane, time])?;
            let g = cfg.known_profile()?;
            Ok((Prepared::Ip3 { ds, g, inplane, time, truth }, m))
        }
    }
}

/// Cutoff for window `w` at level `ε`: the rule's `k` (recorded) and the
/// radius actually used, `min(k, w)`; noise-free cells use the whole window.
fn cutoff(window: f64, epsilon: f64, radius: f64) -> Result<(f64, f64)> {
    if epsilon == 0.0 {
        return Ok((f64::INFINITY, window));
    }
    let k = select_cutoff(window, epsilon, radius)?.k;
    Ok((k, k.min(window)))
}

struct CellOutcome {
    error: f64,
    cutoff_k: f64,
}

/// Cell result; upstream failures shared by many cells travel as messages.
type CellResult = std::result::Result<CellOutcome, String>;

fn msg<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn ip1_cell(
    cfg: &SweepConfig,
    noisy: &BoundaryDataset,
    g: &SampledSignal,
    axis: &Axis,
    truth: &Array3<f64>,
    b: f64,
) -> Result<CellOutcome> {
    let (k, used) = cutoff(b, noisy.noise_level, cfg.grid.radius)?;
    let samples = extract_fhat(noisy, g, b, cfg.tolerances.delta_min, axis)?;
    let rec = reconstruct_ip1(&samples, used)?;
    Ok(CellOutcome {
        error: relative_l2(rec.iter(), truth.iter()),
        cutoff_k: k,
    })
}

fn ip3_cell(
    cfg: &SweepConfig,
    noisy: &BoundaryDataset,
    g: &SampledSignal,
    axes: (&Axis, &Axis),
    truth: &Array3<f64>,
    b: f64,
) -> Result<CellOutcome> {
    let (k, used) = cutoff(b, noisy.noise_level, cfg.grid.radius)?;
    let mut samples =
        extract_fhat_planar(noisy, g, b, cfg.tolerances.delta_min, axes.0, axes.1)?;
    if cfg.reconstruction.fill {
        samples = continuation_fill(&samples, b, cfg.reconstruction.continuation_degree)?;
    }
    let (rec, _) = invert_planar(&samples, used)?;
    Ok(CellOutcome {
        error: relative_l2(rec.iter(), truth.iter()),
        cutoff_k: k,
    })
}

fn ip2_cell(
    cfg: &SweepConfig,
    noisy: &LambdaSweep,
    axes: (&Axis, &Axis),
    truth: &ndarray::Array4<f64>,
    big: f64,
    epsilon: f64,
) -> Result<CellOutcome> {
    let (k, used) = cutoff(big, epsilon, cfg.grid.radius)?;
    let cones = extract_fhat_cones(noisy, axes.0)?;
    let grid4 = resample_to_grid4(&cones, axes.1)?;
    let (rec, _) = invert4(&grid4, used)?;
    Ok(CellOutcome {
        error: relative_l2(rec.iter(), truth.iter()),
        cutoff_k: k,
    })
}

fn finish_record(
    cfg: &SweepConfig,
    window: f64,
    epsilon: f64,
    seed: u64,
    m: f64,
    outcome: CellResult,
    started: Instant,
) -> StabilityRecord {
    let outcome = outcome.and_then(|o| {
        let terms = cell_bound(cfg, window, epsilon, m).map_err(|e| e.to_string())?;
        Ok((o, terms))
    });
    match outcome {
        Ok((o, terms)) => {
            let shape: f64 = terms.iter().map(|t| t.value).sum();
            StabilityRecord {
                problem: cfg.problem,
                b_or_lambda: window,
                epsilon,
                seed,
                error_rel_l2: o.error,
                bound_total: cfg.bound.c_fit * shape,
                bound_terms: terms,
                cutoff_k: o.cutoff_k,
                wall_time: if cfg.record_timing {
                    started.elapsed().as_secs_f64()
                } else {
                    0.0
                },
                failure: None,
            }
        }
        Err(msg) => StabilityRecord::failed(cfg.problem, window, epsilon, seed, msg),
    }
}

/// Shape terms at `C = 1`. Every term vanishes as `ε → 0`, so noise-free
/// cells carry zeros; without the overlay the list is empty.
fn cell_bound(cfg: &SweepConfig, window: f64, epsilon: f64, m: f64) -> Result<Vec<BoundTerm>> {
    if !cfg.bound.overlay {
        return Ok(Vec::new());
    }
    if epsilon == 0.0 {
        let names: &[&str] = match cfg.problem {
            Problem::Ip3 => &["lipschitz", "continuation", "logarithmic"],
            _ => &["lipschitz", "logarithmic"],
        };
        return Ok(names
            .iter()
            .map(|n| BoundTerm {
                name: n.to_string(),
                value: 0.0,
            })
            .collect());
    }
    Ok(theorem_bound(cfg.problem, &cfg.bound_inputs(window, epsilon, m)?)?.terms)
}

fn sort_records(records: &mut [StabilityRecord]) {
    records.sort_by(|a, b| {
        a.b_or_lambda
            .total_cmp(&b.b_or_lambda)
            .then(a.epsilon.total_cmp(&b.epsilon))
            .then(a.seed.cmp(&b.seed))
    });
}

/// Result of [`run_sweep`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub records: Vec<StabilityRecord>,
    /// Relative `H¹` norm of the sampled source, used as `M` in the bounds.
    pub m: f64,
    pub monotonicity: Vec<MonotonicityCheck>,
    pub anomalous: bool,
}

/// Runs every `(window, ε, seed)` cell. Cells whose pipeline fails produce a
/// failure record; only configuration and forward-solve errors for IP1/IP3
/// abort the sweep. Records are sorted by `(window, ε, seed)`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepOutcome> {
    cfg.validate()?;
    let (prepared, m) = prepare(cfg)?;
    let mut records = Vec::new();
    let model = cfg.noise;
    match &prepared {
        Prepared::Ip1 { ds, g, axis, truth } => {
            for &seed in &cfg.seeds {
                let pattern = msg(noise_pattern(ds, seed, model));
                for &eps in &cfg.epsilon_list {
                    let noisy = pattern.clone().and_then(|p| msg(apply_noise(ds, eps, &p)));
                    for &b in &cfg.b_list {
                        let t = Instant::now();
                        let out = noisy
                            .as_ref()
                            .map_err(String::clone)
                            .and_then(|d| msg(ip1_cell(cfg, d, g, axis, truth, b)));
                        records.push(finish_record(cfg, b, eps, seed, m, out, t));
                    }
                }
            }
        }
        Prepared::Ip3 { ds, g, inplane, time, truth } => {
            for &seed in &cfg.seeds {
                let pattern = msg(noise_pattern(ds, seed, model));
                for &eps in &cfg.epsilon_list {
                    let noisy = pattern.clone().and_then(|p| msg(apply_noise(ds, eps, &p)));
                    for &b in &cfg.b_list {
                        let t = Instant::now();
                        let out = noisy
                            .as_ref()
                            .map_err(String::clone)
                            .and_then(|d| msg(ip3_cell(cfg, d, g, (inplane, time), truth, b)));
                        records.push(finish_record(cfg, b, eps, seed, m, out, t));
                    }
                }
            }
        }
        Prepared::Ip2 { sweeps, space, time, truth } => {
            for (big, sweep) in sweeps {
                let sweep = sweep.as_ref().map_err(|e| e.to_string());
                for &seed in &cfg.seeds {
                    let patterns = sweep.clone().and_then(|s| {
                        msg(s
                            .datasets
                            .iter()
                            .enumerate()
                            .map(|(j, d)| noise_pattern(d, level_seed(seed, j), model))
                            .collect::<Result<Vec<_>>>())
                    });
                    for &eps in &cfg.epsilon_list {
                        let t = Instant::now();
                        let out = sweep.clone().and_then(|s| {
                            let p = patterns.as_ref().map_err(String::clone)?;
                            msg(noisy_sweep(s, eps, p)
                                .and_then(|n| ip2_cell(cfg, &n, (space, time), truth, *big, eps)))
                        });
                        records.push(finish_record(cfg, *big, eps, seed, m, out, t));
                    }
                }
            }
        }
    }
    sort_records(&mut records);
    let monotonicity = monotonicity(&records);
    let anomalous = monotonicity.iter().any(|c| !c.nonincreasing);
    Ok(SweepOutcome {
        records,
        m,
        monotonicity,
        anomalous,
    })
}

fn noisy_sweep(
    sweep: &LambdaSweep,
    epsilon: f64,
    patterns: &[(Array2<f64>, Array2<f64>)],
) -> Result<LambdaSweep> {
    let datasets = sweep
        .datasets
        .iter()
        .zip(patterns)
        .map(|(d, p)| apply_noise(d, epsilon, p))
        .collect::<Result<Vec<_>>>()?;
    LambdaSweep::new(sweep.lambdas.clone(), datasets)
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Median over seeds of the successful records, keyed by `(window, ε)` bit
/// patterns so iteration follows the numeric order of positive values.
fn medians(records: &[StabilityRecord], value: impl Fn(&StabilityRecord) -> f64) -> BTreeMap<(u64, u64), f64> {
    let mut groups: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.is_failure()) {
        groups
            .entry((r.b_or_lambda.to_bits(), r.epsilon.to_bits()))
            .or_default()
            .push(value(r));
    }
    groups
        .into_iter()
        .map(|(k, mut v)| (k, median(&mut v)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityCheck {
    pub epsilon: f64,
    pub windows: Vec<f64>,
    pub median_errors: Vec<f64>,
    pub nonincreasing: bool,
}

/// Median error over seeds as a function of the window, at each `ε`.
pub fn monotonicity(records: &[StabilityRecord]) -> Vec<MonotonicityCheck> {
    let med = medians(records, |r| r.error_rel_l2);
    let mut by_eps: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for ((w, e), v) in med {
        by_eps.entry(e).or_default().push((f64::from_bits(w), v));
    }
    by_eps
        .into_iter()
        .map(|(e, pts)| {
            let nonincreasing = pts.windows(2).all(|p| p[1].1 <= p[0].1);
            MonotonicityCheck {
                epsilon: f64::from_bits(e),
                windows: pts.iter().map(|p| p.0).collect(),
                median_errors: pts.iter().map(|p| p.1).collect(),
                nonincreasing,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSlope {
    pub window: f64,
    /// Median error at `ε = 0`, if that level was run.
    pub floor: Option<f64>,
    /// Noise levels whose noise component exceeds the floor, i.e. whose
    /// median error is at least `√2` times the floor (errors add in quadrature).
    pub dominated: Vec<f64>,
    /// Least-squares slope of log median error against log `ε` over the
    /// dominated levels; `None` with fewer than two.
    pub slope: Option<f64>,
}

/// Slope of the error in `ε` per window, restricted to noise-dominated cells.
pub fn noise_slopes(records: &[StabilityRecord]) -> Vec<NoiseSlope> {
    let med = medians(records, |r| r.error_rel_l2);
    let mut by_w: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
    for ((w, e), v) in med {
        by_w.entry(w).or_default().push((f64::from_bits(e), v));
    }
    by_w.into_iter()
        .map(|(w, pts)| {
            let floor = pts.iter().find(|p| p.0 == 0.0).map(|p| p.1);
            let dom: Vec<(f64, f64)> = pts
                .iter()
                .filter(|p| p.0 > 0.0 && floor.is_some_and(|f| p.1 * p.1 >= 2.0 * f * f))
                .copied()
                .collect();
            let slope = (dom.len() >= 2).then(|| {
                let xs: Vec<f64> = dom.iter().map(|p| p.0.ln()).collect();
                let ys: Vec<f64> = dom.iter().map(|p| p.1.ln()).collect();
                ls_slope(&xs, &ys)
            });
            NoiseSlope {
                window: f64::from_bits(w),
                floor,
                dominated: dom.iter().map(|p| p.0).collect(),
                slope,
            }
        })
        .collect()
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub problem: Problem,
    pub c_fit: f64,
    /// Root mean square of `log error − log(C · shape)`.
    pub log_rms: f64,
    pub n_records: usize,
}

/// Fits `error ≈ C · shape` in log space for each problem present, where
/// `shape` is the sum of the recorded bound terms. Rows without a positive
/// error and shape (failures, `ε = 0`) are skipped.
pub fn fit_constant(records: &[StabilityRecord]) -> Result<Vec<FitResult>> {
    let mut by_problem: BTreeMap<String, (Problem, Vec<&StabilityRecord>)> = BTreeMap::new();
    for r in records {
        let shape = r.bound_shape();
        if r.is_failure() || !(r.error_rel_l2 > 0.0) || !(shape > 0.0) || !shape.is_finite() {
            continue;
        }
        by_problem
            .entry(r.problem.to_string())
            .or_insert_with(|| (r.problem, Vec::new()))
            .1
            .push(r);
    }
    if by_problem.is_empty() {
        return Err(Error::Fit("no records with positive error and bound shape".into()));
    }
    by_problem
        .into_values()
        .map(|(problem, rows)| {
            let mut design: Vec<(u64, u64)> = rows
                .iter()
                .map(|r| (r.b_or_lambda.to_bits(), r.epsilon.to_bits()))
                .collect();
            design.sort_unstable();
            design.dedup();
            if design.len() < 3 {
                return Err(Error::Fit(format!(
                    "{problem}: need at least 3 distinct (window, epsilon) pairs, got {}",
                    design.len()
                )));
            }
            let resid: Vec<f64> = rows
                .iter()
                .map(|r| r.error_rel_l2.ln() - r.bound_shape().ln())
                .collect();
            let n = resid.len() as f64;
            let log_c = resid.iter().sum::<f64>() / n;
            let log_rms = (resid.iter().map(|v| (v - log_c).powi(2)).sum::<f64>() / n).sqrt();
            Ok(FitResult {
                problem,
                c_fit: log_c.exp(),
                log_rms,
                n_records: rows.len(),
            })
        })
        .collect()
}

/// Writes the JSON schema of [`SweepConfig`] into `dir`.
pub fn write_schema(dir: impl AsRef<Path>) -> Result<PathBuf> {
    let path = dir.as_ref().join("config.schema.json");
    fs::write(&path, CONFIG_SCHEMA).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

struct Series {
    label: Option<String>,
    color: &'static str,
    dashed: bool,
    points: Vec<(f64, f64)>,
}

struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    log_x: bool,
    series: Vec<Series>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Static line chart; the y axis is logarithmic, the x axis optionally.
fn render(chart: &Chart) -> String {
    let tx = |x: f64| if chart.log_x { x.log10() } else { x };
    let visible: Vec<(f64, f64)> = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().copied())
        .filter(|(x, y)| *y > 0.0 && y.is_finite() && (!chart.log_x || *x > 0.0))
        .map(|(x, y)| (tx(x), y.log10()))
        .collect();
    let (x0, x1) = span(visible.iter().map(|p| p.0));
    let (y0, y1) = span(visible.iter().map(|p| p.1));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    s.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"12\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>",
        LEFT + pw / 2.0,
        escape(&chart.title)
    );
    let _ = writeln!(
        s,
        "<rect x=\"{LEFT}\" y=\"{TOP}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
    );
    for e in (y0 as i64)..=(y1 as i64) {
        let y = py(e as f64);
        let _ = writeln!(
            s,
            "<line x1=\"{LEFT}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#dddddd\"/>",
            LEFT + pw
        );
        let _ = writeln!(
            s,
            "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">1e{e}</text>",
            LEFT - 6.0,
            y + 4.0
        );
    }
    for t in x_ticks(x0, x1, chart.log_x) {
        let x = px(t);
        let label = if chart.log_x {
            format!("1e{}", t.round() as i64)
        } else {
            format!("{t}")
        };
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{TOP}\" x2=\"{x:.2}\" y2=\"{:.2}\" stroke=\"#dddddd\"/>",
            TOP + ph
        );
        let _ = writeln!(
            s,
            "<text x=\"{x:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{label}</text>",
            TOP + ph + 18.0
        );
    }
    let _ = writeln!(
        s,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>",
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(&chart.x_label)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {:.2})\">{}</text>",
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape(&chart.y_label)
    );
    let mut legend = 0;
    for series in &chart.series {
        let pts: Vec<String> = series
            .points
            .iter()
            .filter(|(x, y)| *y > 0.0 && y.is_finite() && (!chart.log_x || *x > 0.0))
            .map(|(x, y)| format!("{:.2},{:.2}", px(tx(*x)), py(y.log10())))
            .collect();
        let dash = if series.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
        if !pts.is_empty() {
            let _ = writeln!(
                s,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\"{dash}/>",
                pts.join(" "),
                series.color
            );
            if !series.dashed {
                for p in &pts {
                    let (cx, cy) = p.split_once(',').expect("formatted pair");
                    let _ = writeln!(s, "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"3\" fill=\"{}\"/>", series.color);
                }
            }
        }
        if let Some(label) = &series.label {
            let y = TOP + 10.0 + 18.0 * legend as f64;
            let x = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"1.5\"/>",
                x + 20.0,
                series.color
            );
            let _ = writeln!(
                s,
                "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>",
                x + 26.0,
                y + 4.0,
                escape(label)
            );
            legend += 1;
        }
    }
    if chart.series.iter().any(|s| s.dashed) {
        let y = TOP + 10.0 + 18.0 * legend as f64;
        let x = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"black\" stroke-dasharray=\"6 4\"/>",
            x + 20.0
        );
        let _ = writeln!(s, "<text x=\"{:.2}\" y=\"{:.2}\">bound</text>", x + 26.0, y + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn x_ticks(x0: f64, x1: f64, log: bool) -> Vec<f64> {
    if log {
        return ((x0.ceil() as i64)..=(x1.floor() as i64)).map(|e| e as f64).collect();
    }
    let raw = (x1 - x0) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut out = Vec::new();
    let mut t = (x0 / step).ceil() * step;
    while t <= x1 + 1e-9 * step {
        out.push((t / step).round() * step);
        t += step;
    }
    out
}

fn window_symbol(problem: Problem) -> &'static str {
    match problem {
        Problem::Ip2 => "Λ",
        _ => "b",
    }
}

/// Writes `<problem>_error_vs_epsilon.svg` (log–log, one line per window) and
/// `<problem>_error_vs_window.svg` (one line per `ε`), each with the median
/// bound over seeds dashed in the same colour.
pub fn emit_plots(records: &[StabilityRecord], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let first = records
        .iter()
        .find(|r| !r.is_failure())
        .ok_or_else(|| Error::InvalidInput("no successful records to plot".into()))?;
    let problem = first.problem;
    let sym = window_symbol(problem);
    let err = medians(records, |r| r.error_rel_l2);
    let bound = medians(records, |r| r.bound_total);
    let windows: Vec<u64> = {
        let mut w: Vec<u64> = err.keys().map(|k| k.0).collect();
        w.dedup();
        w
    };
    let mut eps: Vec<u64> = err.keys().map(|k| k.1).collect();
    eps.sort_by(|a, b| f64::from_bits(*a).total_cmp(&f64::from_bits(*b)));
    eps.dedup();

    let mut by_eps = Vec::new();
    for (i, w) in windows.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pick = |m: &BTreeMap<(u64, u64), f64>| -> Vec<(f64, f64)> {
            eps.iter()
                .filter_map(|e| m.get(&(*w, *e)).map(|v| (f64::from_bits(*e), *v)))
                .collect()
        };
        by_eps.push(Series {
            label: Some(format!("{sym} = {}", f64::from_bits(*w))),
            color,
            dashed: false,
            points: pick(&err),
        });
        by_eps.push(Series {
            label: None,
            color,
            dashed: true,
            points: pick(&bound),
        });
    }
    let mut by_window = Vec::new();
    for (i, e) in eps.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pick = |m: &BTreeMap<(u64, u64), f64>| -> Vec<(f64, f64)> {
            windows
                .iter()
                .filter_map(|w| m.get(&(*w, *e)).map(|v| (f64::from_bits(*w), *v)))
                .collect()
        };
        by_window.push(Series {
            label: Some(format!("ε = {}", f64::from_bits(*e))),
            color,
            dashed: false,
            points: pick(&err),
        });
        by_window.push(Series {
            label: None,
            color,
            dashed: true,
            points: pick(&bound),
        });
    }
    let charts = [
        (
            format!("{problem}_error_vs_epsilon.svg"),
            Chart {
                title: format!("{problem}: relative error vs noise level"),
                x_label: "ε".into(),
                y_label: "median relative L2 error".into(),
                log_x: true,
                series: by_eps,
            },
        ),
        (
            format!("{problem}_error_vs_window.svg"),
            Chart {
                title: format!("{problem}: relative error vs {sym}"),
                x_label: sym.into(),
                y_label: "median relative L2 error".into(),
                log_x: false,
                series: by_window,
            },
        ),
    ];
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for (name, chart) in charts {
        let path = dir.join(name);
        fs::write(&path, render(&chart)).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
