use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use wavesrc::bounds::{select_cutoff, theorem_bound, BoundInputs, Problem};
use wavesrc::forward::{
    add_noise_with, verify_huygens, BoundaryExtractor, ForwardSolver,
};
use wavesrc::harness::{
    emit_plots, fit_constant, noise_slopes, relative_h1, run_sweep, write_csv, write_schema,
    SweepConfig,
};
use wavesrc::io::{self, Fsamp};
use wavesrc::multiparam::{
    extract_fhat_cones, invert4, lambda_ladder, resample_to_grid4, sample_source4,
    sweep_forward_with, LambdaSweep,
};
use wavesrc::planar::{continuation_fill, extract_fhat_planar, invert_planar, sample_planar};
use wavesrc::probe::{extract_fhat, reconstruct_ip1, relative_l2};
use wavesrc::Error;

/// Forward wave simulation and Fourier-domain source reconstruction.
#[derive(Parser, Debug)]
#[command(name = "wavesrc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Sweep configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` of the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward-simulate the configured source and write boundary traces.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Window (`Λ`) for IP2; defaults to the first configured value.
        #[arg(long)]
        window: Option<f64>,
        /// Relative noise level added to the traces.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recover Fourier samples of the source from boundary traces.
    Probe {
        #[command(flatten)]
        common: Common,
        /// `.btrace` (IP1/IP3) or sweep manifest (IP2); defaults to the output of `simulate`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Bandwidth `b` (IP1/IP3); defaults to the first configured value.
        #[arg(long)]
        window: Option<f64>,
        /// Degree of the polynomial gap fill (IP3).
        #[arg(long)]
        continuation_degree: Option<usize>,
        /// Skip the gap fill (IP3).
        #[arg(long)]
        no_fill: bool,
    },
    /// Invert recovered samples with the cutoff rule and compare with the source.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// `.fsamp` or `.fsamp4`; defaults to the output of `probe`.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Noise level the samples were recovered at; 0 uses the whole window.
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Run the configured stability sweep; writes CSV, SVG charts and the schema.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the stability estimate for one parameter set.
    Bounds {
        #[arg(long)]
        problem: Problem,
        /// Bandwidth `b` (IP1/IP3) or window `Λ` (IP2).
        #[arg(long = "b", alias = "Lambda")]
        window: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long = "M")]
        m: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        c_fit: f64,
        /// Measurement radius, used by the cutoff rule.
        #[arg(long, default_value_t = 1.0)]
        radius: f64,
    },
    /// Check that the simulated field vanishes inside the sphere after the Huygens time.
    VerifyHuygens {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = std::result::Result<Value, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { common, window, eps, seed } => simulate(&common, window, eps, seed),
        Command::Probe { common, input, window, continuation_degree, no_fill } => {
            probe(&common, input, window, continuation_degree, no_fill)
        }
        Command::Reconstruct { common, input, eps } => reconstruct(&common, input, eps),
        Command::Sweep { common } => sweep(&common),
        Command::Bounds { problem, window, eps, m, alpha, c_fit, radius } => {
            bounds(problem, window, eps, m, alpha, c_fit, radius)
        }
        Command::VerifyHuygens { common } => huygens(&common),
    };
    match result {
        Ok(v) => {
            let failed = v.get("pass") == Some(&Value::Bool(false));
            emit(&serde_json::to_string_pretty(&v).expect("json value"));
            if failed {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(f) => {
            let (code, kind, message) = match f {
                Failure::Validation(m) => (1, "validation", m),
                Failure::Runtime(m) => (2, "runtime", m),
            };
            eprintln!("error: {message}");
            emit(&json!({"status": "error", "kind": kind, "message": message}).to_string());
            ExitCode::from(code)
        }
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

/// Loads the configuration; any failure here is a validation error.
fn load_config(common: &Common) -> std::result::Result<SweepConfig, Failure> {
    SweepConfig::load(&common.config).map_err(|e| Failure::Validation(e.to_string()))
}

/// Loads the configuration and creates the output directory.
fn load(common: &Common) -> std::result::Result<(SweepConfig, PathBuf), Failure> {
    let cfg = load_config(common)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| Failure::Runtime(Error::io(&out, e).to_string()))?;
    Ok((cfg, out))
}

fn first_window(cfg: &SweepConfig, window: Option<f64>) -> f64 {
    window.unwrap_or(cfg.windows()[0])
}

fn level_noise(sweep: LambdaSweep, cfg: &SweepConfig, eps: f64, seed: u64) -> Result<LambdaSweep, Error> {
    if eps == 0.0 {
        return Ok(sweep);
    }
    let datasets = sweep
        .datasets
        .iter()
        .enumerate()
        .map(|(j, d)| add_noise_with(d, eps, seed.wrapping_add(j as u64), cfg.noise))
        .collect::<Result<Vec<_>, _>>()?;
    LambdaSweep::new(sweep.lambdas, datasets)
}

fn simulate(common: &Common, window: Option<f64>, eps: f64, seed: u64) -> Outcome {
    let (cfg, out) = load(common)?;
    let source = cfg.source()?;
    let mut solver = ForwardSolver::new();
    let mut extractor = BoundaryExtractor::new(cfg.sphere()?);
    match cfg.problem {
        Problem::Ip2 => {
            let big = first_window(&cfg, window);
            let lambdas = lambda_ladder(big, cfg.reconstruction.n_lambdas)?;
            let template = cfg.simulation_grid(big * big)?;
            let sweep = sweep_forward_with(&mut solver, &mut extractor, source, &template, &lambdas)?;
            let sweep = level_noise(sweep, &cfg, eps, seed)?;
            let path = out.join("sweep.json");
            let manifest = io::write_sweep(&path, &sweep)?;
            Ok(json!({
                "command": "simulate",
                "problem": cfg.problem,
                "manifest": path,
                "Lambda": big,
                "lambdas": manifest.lambdas,
                "traces": manifest.traces,
                "noise_level": eps,
            }))
        }
        _ => {
            let grid = cfg.simulation_grid(cfg.grid.lambda)?;
            let clean = extractor.extract(&solver.solve(source, &grid)?)?;
            let ds = add_noise_with(&clean, eps, seed, cfg.noise)?;
            let path = out.join("traces.btrace");
            io::write_btrace(&path, &ds)?;
            let (dn, nn) = (clean.dirichlet_norm(), clean.neumann_norm());
            Ok(json!({
                "command": "simulate",
                "problem": cfg.problem,
                "path": path,
                "lambda": ds.lambda,
                "radius": ds.radius,
                "n_nodes": ds.sphere.len(),
                "n_time": ds.n_time,
                "dt": ds.dt,
                "noise_level": ds.noise_level,
                "dirichlet_norm": dn,
                "neumann_norm": nn,
                "neumann_to_dirichlet": if dn > 0.0 { nn / dn } else { 0.0 },
            }))
        }
    }
}

fn probe(
    common: &Common,
    input: Option<PathBuf>,
    window: Option<f64>,
    degree: Option<usize>,
    no_fill: bool,
) -> Outcome {
    let (cfg, out) = load(common)?;
    match cfg.problem {
        Problem::Ip1 => {
            let b = first_window(&cfg, window);
            let ds = io::read_btrace(input.unwrap_or_else(|| out.join("traces.btrace")))?;
            let samples = extract_fhat(
                &ds,
                &cfg.known_profile()?,
                b,
                cfg.tolerances.delta_min,
                &cfg.reconstruction_axis(),
            )?;
            let path = out.join("samples.fsamp");
            io::write_fsamp(&path, &samples)?;
            Ok(json!({
                "command": "probe",
                "problem": cfg.problem,
                "path": path,
                "b": b,
                "n_entries": samples.entries.len(),
                "n_valid": samples.n_valid(),
                "conjugate_residual": samples.conjugate_residual(),
            }))
        }
        Problem::Ip3 => {
            let b = first_window(&cfg, window);
            let ds = io::read_btrace(input.unwrap_or_else(|| out.join("traces.btrace")))?;
            let time = cfg.time_axis()?;
            let mut samples = extract_fhat_planar(
                &ds,
                &cfg.known_profile()?,
                b,
                cfg.tolerances.delta_min,
                &cfg.reconstruction_axis(),
                &time,
            )?;
            let fill = cfg.reconstruction.fill && !no_fill;
            let degree = degree.unwrap_or(cfg.reconstruction.continuation_degree);
            if fill {
                samples = continuation_fill(&samples, b, degree)?;
            }
            let path = out.join("samples.fsamp");
            io::write_fsamp_planar(&path, &samples)?;
            Ok(json!({
                "command": "probe",
                "problem": cfg.problem,
                "path": path,
                "b": b,
                "n_entries": samples.entries.len(),
                "n_valid": samples.n_valid(),
                "n_extrapolated": samples.entries.iter().filter(|e| e.extrapolated).count(),
                "continuation_degree": if fill { Some(degree) } else { None },
                "conjugate_residual": samples.conjugate_residual(),
            }))
        }
        Problem::Ip2 => {
            let sweep = io::read_sweep(input.unwrap_or_else(|| out.join("sweep.json")))?;
            let cones = extract_fhat_cones(&sweep, &cfg.reconstruction_axis())?;
            let grid = resample_to_grid4(&cones, &cfg.time_axis()?)?;
            let path = out.join("samples.fsamp4");
            io::write_fsamp4(&path, &grid)?;
            Ok(json!({
                "command": "probe",
                "problem": cfg.problem,
                "path": path,
                "Lambda": sweep.big_lambda,
                "n_cone_entries": cones.entries.len(),
                "cone_conjugate_residual": cones.conjugate_residual(),
                "n_covered": grid.n_covered(),
                "warnings": grid.warnings,
            }))
        }
    }
}

fn cutoff_for(window: f64, eps: f64, radius: f64) -> std::result::Result<(Option<f64>, f64), Failure> {
    if eps == 0.0 {
        return Ok((None, window));
    }
    let k = select_cutoff(window, eps, radius)?.k;
    Ok((Some(k), k.min(window)))
}

fn reconstruct(common: &Common, input: Option<PathBuf>, eps: f64) -> Outcome {
    let (cfg, out) = load(common)?;
    let source = cfg.source()?;
    let radius = cfg.grid.radius;
    let path = out.join("reconstruction.rgrid");
    let default_input = |ext: &str| out.join(format!("samples.{ext}"));
    match cfg.problem {
        Problem::Ip2 => {
            let samples = io::read_fsamp4(input.unwrap_or_else(|| default_input("fsamp4")))?;
            let (k, used) = cutoff_for(samples.big_lambda, eps, radius)?;
            let (rec, report) = invert4(&samples, used)?;
            let truth = sample_source4(source, &samples.space, &samples.time);
            let axes = [samples.space, samples.space, samples.space, samples.time];
            io::write_rgrid(&path, &rec.clone().into_dyn(), &axes)?;
            Ok(json!({
                "command": "reconstruct",
                "problem": cfg.problem,
                "path": path,
                "cutoff_k": k,
                "cutoff_used": used,
                "error_rel_L2": relative_l2(rec.iter(), truth.iter()),
                "truncation": report,
            }))
        }
        problem => {
            let samples = io::read_fsamp(input.unwrap_or_else(|| default_input("fsamp")))?;
            match (problem, samples) {
                (Problem::Ip1, Fsamp::Spatial3(s)) => {
                    let (k, used) = cutoff_for(s.band_b, eps, radius)?;
                    let rec = reconstruct_ip1(&s, used)?;
                    let x = s.axis.nodes();
                    let n = s.axis.n;
                    let truth = ndarray::Array3::from_shape_fn((n, n, n), |(a, b, c)| {
                        source.spatial_value([x[a], x[b], x[c]])
                    });
                    let axes = [s.axis; 3];
                    io::write_rgrid(&path, &rec.clone().into_dyn(), &axes)?;
                    Ok(json!({
                        "command": "reconstruct",
                        "problem": problem,
                        "path": path,
                        "cutoff_k": k,
                        "cutoff_used": used,
                        "error_rel_L2": relative_l2(rec.iter(), truth.iter()),
                        "relative_h1_of_source": relative_h1(&truth.into_dyn(), &axes)?,
                    }))
                }
                (Problem::Ip3, Fsamp::Planar(s)) => {
                    let (k, used) = cutoff_for(s.band_b, eps, radius)?;
                    let (rec, report) = invert_planar(&s, used)?;
                    let truth = sample_planar(source, &s.inplane, &s.time);
                    let axes = [s.inplane, s.inplane, s.time];
                    io::write_rgrid(&path, &rec.clone().into_dyn(), &axes)?;
                    Ok(json!({
                        "command": "reconstruct",
                        "problem": problem,
                        "path": path,
                        "cutoff_k": k,
                        "cutoff_used": used,
                        "error_rel_L2": relative_l2(rec.iter(), truth.iter()),
                        "regions": report,
                    }))
                }
                _ => Err(Failure::Validation(format!(
                    "sample file does not match problem {problem}"
                ))),
            }
        }
    }
}

fn sweep(common: &Common) -> Outcome {
    let (cfg, out) = load(common)?;
    let outcome = run_sweep(&cfg)?;
    let csv = out.join("sweep.csv");
    write_csv(&csv, &outcome.records)?;
    let plots = emit_plots(&outcome.records, &out)?;
    let schema = write_schema(&out)?;
    let fit = match fit_constant(&outcome.records) {
        Ok(f) => json!(f),
        Err(e) => json!({"error": e.to_string()}),
    };
    let failures: Vec<Value> = outcome
        .records
        .iter()
        .filter_map(|r| {
            r.failure.as_ref().map(|m| {
                json!({"b_or_Lambda": r.b_or_lambda, "epsilon": r.epsilon, "seed": r.seed, "message": m})
            })
        })
        .collect();
    Ok(json!({
        "command": "sweep",
        "problem": cfg.problem,
        "csv": csv,
        "plots": plots,
        "schema": schema,
        "n_records": outcome.records.len(),
        "failures": failures,
        "M": outcome.m,
        "fit": fit,
        "anomalous": outcome.anomalous,
        "monotonicity": outcome.monotonicity,
        "noise_slopes": noise_slopes(&outcome.records),
    }))
}

fn bounds(
    problem: Problem,
    window: f64,
    eps: f64,
    m: f64,
    alpha: f64,
    c_fit: f64,
    radius: f64,
) -> Outcome {
    let inputs = BoundInputs {
        alpha,
        c_fit,
        radius,
        ..BoundInputs::new(window, eps, m)
    };
    let report = theorem_bound(problem, &inputs)?;
    let cutoff = select_cutoff(window, eps, radius)?;
    Ok(json!({
        "command": "bounds",
        "problem": problem,
        "bound_total": report.total,
        "terms": report.terms,
        "proof_tail": report.proof_tail,
        "ip3_raw": report.ip3_raw,
        "cutoff": cutoff,
        "inputs": inputs,
    }))
}

fn huygens(common: &Common) -> Outcome {
    let cfg = load_config(common)?;
    let source = cfg.source()?;
    let lambda = match cfg.problem {
        Problem::Ip2 => cfg.windows()[0].powi(2),
        _ => cfg.grid.lambda,
    };
    let grid = cfg.simulation_grid(lambda)?;
    let field = ForwardSolver::new().solve(source, &grid)?;
    let report = verify_huygens(&field, source, cfg.grid.radius)?;
    Ok(json!({
        "command": "verify-huygens",
        "problem": cfg.problem,
        "lambda": lambda,
        "horizon": grid.horizon(),
        "pass": report.pass,
        "residual_ratio": report.residual_ratio,
        "tolerance": report.tolerance,
        "cutoff_time": report.cutoff_time,
        "n_points": report.n_points,
    }))
}
