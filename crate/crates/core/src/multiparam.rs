//! General sources `F(x, t)` from boundary data at many wave speeds.
//!
//! For each `λ` the boundary identity gives `F̂` on the cone
//! `ω² = λ|ξ|²`. A ladder of `λ` values sweeps the cones through the set
//! `{|ω| ≤ Λ|ξ|}`; the samples are then interpolated in `ω` onto a Cartesian
//! grid and inverted in four dimensions.

use std::collections::BTreeMap;

use ndarray::{Array4, ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::{BoundaryDataset, BoundaryExtractor, ForwardSolver, SphereQuadrature};
use crate::probe::{ball_indices, index_freq, is_canonical, norm3, BoundaryIntegrator};
use crate::source::SourceSpec;
use crate::spectral::{inverse_nd_real, Axis, SimulationGrid};
use crate::{Error, Result};

/// Minimum number of `λ` values for the `ω` interpolation.
pub const MIN_LAMBDAS: usize = 4;

/// `λ_j = (Λ j / n)²` for `j = 1..=n`; cone samples at fixed `ξ` are then
/// equispaced in `ω`.
pub fn lambda_ladder(big_lambda: f64, n: usize) -> Result<Vec<f64>> {
    if !(big_lambda > 0.0) || n == 0 {
        return Err(Error::InvalidInput(format!(
            "need Lambda > 0 and at least one level, got {big_lambda}, {n}"
        )));
    }
    Ok((1..=n)
        .map(|j| (big_lambda * j as f64 / n as f64).powi(2))
        .collect())
}

fn at_lambda(lambda: f64) -> impl Fn(Error) -> Error {
    move |e| Error::AtLambda {
        lambda,
        source: Box::new(e),
    }
}

#[derive(Debug, Clone)]
pub struct LambdaSweep {
    pub big_lambda: f64,
    pub lambdas: Vec<f64>,
    pub datasets: Vec<BoundaryDataset>,
}

impl LambdaSweep {
    pub fn new(lambdas: Vec<f64>, datasets: Vec<BoundaryDataset>) -> Result<Self> {
        if lambdas.is_empty() || lambdas.len() != datasets.len() {
            return Err(Error::InvalidInput(format!(
                "{} lambda values for {} datasets",
                lambdas.len(),
                datasets.len()
            )));
        }
        check_increasing(&lambdas)?;
        let first = &datasets[0];
        for (l, ds) in lambdas.iter().zip(&datasets) {
            if (ds.lambda - l).abs() > 1e-12 * l {
                return Err(Error::InvalidInput(format!(
                    "dataset recorded at lambda {} filed under {l}",
                    ds.lambda
                )));
            }
            if ds.radius != first.radius
                || ds.sphere != first.sphere
                || (ds.dt - first.dt).abs() > 1e-12 * first.dt
            {
                return Err(Error::InvalidInput(
                    "datasets must share the sphere and the time step".into(),
                ));
            }
        }
        Ok(LambdaSweep {
            big_lambda: lambdas.last().expect("nonempty").sqrt(),
            lambdas,
            datasets,
        })
    }
}

fn check_increasing(lambdas: &[f64]) -> Result<()> {
    if lambdas.iter().any(|l| !(*l > 0.0) || !l.is_finite())
        || lambdas.windows(2).any(|w| w[1] <= w[0])
    {
        return Err(Error::InvalidInput(format!(
            "lambda values must be positive and increasing, got {lambdas:?}"
        )));
    }
    Ok(())
}

/// Horizon for `λ` given a template `(λ_t, T_t)`: the time after the source
/// switches off is scaled by `√(λ_t/λ)`, keeping the same margin past
/// `T₀ + 2R/√λ` in units of the crossing time.
pub fn scaled_horizon(template: &SimulationGrid, source_duration: f64, lambda: f64) -> f64 {
    let tail = template.horizon() - source_duration;
    source_duration + tail * (template.lambda() / lambda).sqrt()
}

/// One forward solve and one boundary extraction per `λ`. The template's box
/// must satisfy the no-wrap condition for the largest `λ`; every `λ` keeps
/// the template's time step.
pub fn sweep_forward(
    source: &SourceSpec,
    template: &SimulationGrid,
    lambdas: &[f64],
    sphere: &SphereQuadrature,
) -> Result<LambdaSweep> {
    let mut solver = ForwardSolver::new();
    let mut extractor = BoundaryExtractor::new(sphere.clone());
    sweep_forward_with(&mut solver, &mut extractor, source, template, lambdas)
}

/// [`sweep_forward`] reusing caller-owned caches, so repeated sweeps over the
/// same source and box share spatial transforms and sphere projections.
pub fn sweep_forward_with(
    solver: &mut ForwardSolver,
    extractor: &mut BoundaryExtractor,
    source: &SourceSpec,
    template: &SimulationGrid,
    lambdas: &[f64],
) -> Result<LambdaSweep> {
    if lambdas.is_empty() {
        return Err(Error::InvalidInput("empty lambda set".into()));
    }
    check_increasing(lambdas)?;
    source.validate()?;
    let dt = template.dt();
    let mut datasets = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let grid = if lambda == template.lambda() {
            *template
        } else {
            let h = scaled_horizon(template, source.support_time, lambda);
            let h = (h / dt - 1e-9).ceil() * dt;
            template.retuned(lambda, h).map_err(at_lambda(lambda))?
        };
        let field = solver.solve(source, &grid).map_err(at_lambda(lambda))?;
        datasets.push(extractor.extract(&field).map_err(at_lambda(lambda))?);
    }
    LambdaSweep::new(lambdas.to_vec(), datasets)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeEntry {
    pub index: [i64; 3],
    pub xi: [f64; 3],
    pub lambda_index: usize,
    pub omega: f64,
    pub value: Complex64,
}

/// `F̂(ξ, ±√λ_j|ξ|)` on the grid frequencies `|ξ| ≤ Λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeSamples4D {
    pub axis: Axis,
    pub big_lambda: f64,
    pub lambdas: Vec<f64>,
    pub entries: Vec<ConeEntry>,
}

impl ConeSamples4D {
    /// Largest `|value(−ξ, −ω) − conj(value(ξ, ω))|` over stored pairs.
    pub fn conjugate_residual(&self) -> f64 {
        let map: BTreeMap<([i64; 3], usize, bool), Complex64> = self
            .entries
            .iter()
            .map(|e| ((e.index, e.lambda_index, e.omega > 0.0), e.value))
            .collect();
        self.entries
            .iter()
            .filter(|e| e.omega != 0.0)
            .filter_map(|e| {
                let m = [-e.index[0], -e.index[1], -e.index[2]];
                map.get(&(m, e.lambda_index, e.omega < 0.0))
                    .map(|v| (v - e.value.conj()).norm())
            })
            .fold(0.0, f64::max)
    }
}

/// Evaluates the boundary identity on every cone `ω = √λ_j|ξ|` for all grid
/// `ξ` with `|ξ| ≤ Λ`; the `ω < 0` half of each cone comes from `−ξ` by
/// conjugation.
pub fn extract_fhat_cones(sweep: &LambdaSweep, axis: &Axis) -> Result<ConeSamples4D> {
    let nyquist = axis.freq_step() * (axis.n / 2) as f64;
    if sweep.big_lambda >= nyquist {
        return Err(Error::Configuration(format!(
            "window {} reaches the reconstruction grid's Nyquist frequency {nyquist:.4}",
            sweep.big_lambda
        )));
    }
    let indices = ball_indices(axis, sweep.big_lambda);
    let mut entries = Vec::with_capacity(2 * indices.len() * sweep.lambdas.len());
    for (j, (lambda, ds)) in sweep.lambdas.iter().zip(&sweep.datasets).enumerate() {
        let mut integrator = BoundaryIntegrator::new(ds).map_err(at_lambda(*lambda))?;
        let speed = lambda.sqrt();
        for k in &indices {
            let xi = index_freq(axis, *k);
            let omega = speed * norm3(xi);
            let value = integrator.evaluate(xi, omega).map_err(at_lambda(*lambda))?;
            entries.push(ConeEntry {
                index: *k,
                xi,
                lambda_index: j,
                omega,
                value,
            });
            if *k != [0, 0, 0] {
                entries.push(ConeEntry {
                    index: [-k[0], -k[1], -k[2]],
                    xi: [-xi[0], -xi[1], -xi[2]],
                    lambda_index: j,
                    omega: -omega,
                    value: value.conj(),
                });
            }
        }
    }
    Ok(ConeSamples4D {
        axis: *axis,
        big_lambda: sweep.big_lambda,
        lambdas: sweep.lambdas.clone(),
        entries,
    })
}

/// Monotone cubic Hermite slopes (Fritsch–Carlson with the three-point end
/// rule).
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0]; 2];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() || d0 == 0.0 {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    d[0] = end(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn hermite(x: &[f64], y: &[f64], d: &[f64], t: f64) -> f64 {
    let k = match x.partition_point(|v| *v <= t) {
        0 => 0,
        p => (p - 1).min(x.len() - 2),
    };
    let h = x[k + 1] - x[k];
    let s = (t - x[k]) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y[k] + h10 * h * d[k] + h01 * y[k + 1] + h11 * h * d[k + 1]
}

/// Monotone cubic interpolant through `(x, y)` with strictly increasing `x`
/// (at least two nodes), evaluated at `t` inside `[x₀, x_last]`.
pub fn pchip(x: &[f64], y: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    if x.len() < 2 || x.len() != y.len() || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "pchip needs at least two strictly increasing nodes".into(),
        ));
    }
    let d = pchip_slopes(x, y);
    Ok(t.iter().map(|v| hermite(x, y, &d, *v)).collect())
}

/// `F̂` on the Cartesian grid `space³ × time`, zero where the cones give no
/// coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid4Samples {
    pub space: Axis,
    pub time: Axis,
    pub big_lambda: f64,
    /// Indexed by FFT positions `[p₁, p₂, p₃, q]`.
    pub values: Array4<Complex64>,
    pub covered: Array4<bool>,
    pub warnings: Vec<String>,
}

impl Grid4Samples {
    pub fn n_covered(&self) -> usize {
        self.covered.iter().filter(|c| **c).count()
    }

    fn cell(&self) -> f64 {
        self.space.freq_step().powi(3) * self.time.freq_step()
    }

    /// Samples of a known transform on the covered region `|ξ| ≤ Λ`,
    /// `|ω| ≤ Λ|ξ|`.
    pub fn from_fn(
        space: Axis,
        time: Axis,
        big_lambda: f64,
        f: impl Fn([f64; 3], f64) -> Complex64,
    ) -> Self {
        let mut out = Self::empty(space, time, big_lambda);
        for k in ball_indices(&space, big_lambda) {
            let xi = index_freq(&space, k);
            let r = norm3(xi);
            for q in 0..time.n {
                let omega = time.freq(q);
                if time.is_nyquist(q) || omega.abs() > big_lambda * r * (1.0 + 1e-12) {
                    continue;
                }
                let p = space_positions(&space, k);
                out.values[[p[0], p[1], p[2], q]] = f(xi, omega);
                out.covered[[p[0], p[1], p[2], q]] = true;
            }
        }
        out
    }

    fn empty(space: Axis, time: Axis, big_lambda: f64) -> Self {
        let n = space.n;
        Grid4Samples {
            space,
            time,
            big_lambda,
            values: Array4::zeros((n, n, n, time.n)),
            covered: Array4::from_elem((n, n, n, time.n), false),
            warnings: Vec::new(),
        }
    }
}

fn space_positions(axis: &Axis, k: [i64; 3]) -> [usize; 3] {
    k.map(|v| axis.position(v).expect("ball indices are representable"))
}

/// Interpolates the cone samples of each `ξ` in `ω` onto the frequency grid
/// of `time`. Grid points with `|ω| > Λ|ξ|` stay zero and uncovered.
pub fn resample_to_grid4(cones: &ConeSamples4D, time: &Axis) -> Result<Grid4Samples> {
    if cones.lambdas.len() < MIN_LAMBDAS {
        return Err(Error::InvalidInput(format!(
            "omega interpolation needs at least {MIN_LAMBDAS} lambda values, got {}",
            cones.lambdas.len()
        )));
    }
    let mut by_xi: BTreeMap<[i64; 3], Vec<(f64, Complex64)>> = BTreeMap::new();
    for e in &cones.entries {
        by_xi.entry(e.index).or_default().push((e.omega, e.value));
    }
    let space = cones.axis;
    let mut out = Grid4Samples::empty(space, *time, cones.big_lambda);
    let omegas: Vec<(usize, f64)> = (0..time.n)
        .filter(|q| !time.is_nyquist(*q))
        .map(|q| (q, time.freq(q)))
        .collect();
    for (k, mut nodes) in by_xi {
        if !is_canonical(&k) {
            continue;
        }
        let p = space_positions(&space, k);
        let m = space_positions(&space, [-k[0], -k[1], -k[2]]);
        let mut put = |q: usize, omega: f64, v: Complex64| {
            let qm = time
                .position(-time.signed_index(q))
                .expect("non-Nyquist frequencies have mirrors");
            out.values[[p[0], p[1], p[2], q]] = v;
            out.covered[[p[0], p[1], p[2], q]] = true;
            if omega != 0.0 || k != [0, 0, 0] {
                out.values[[m[0], m[1], m[2], qm]] = v.conj();
                out.covered[[m[0], m[1], m[2], qm]] = true;
            }
        };
        if k == [0, 0, 0] {
            if let Some((_, v)) = nodes.first() {
                put(time.position(0).expect("zero frequency exists"), 0.0, *v);
            }
            continue;
        }
        nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
        nodes.dedup_by(|a, b| a.0 == b.0);
        if nodes.len() < 2 {
            out.warnings.push(format!("frequency index {k:?} has fewer than two cone samples"));
            continue;
        }
        let x: Vec<f64> = nodes.iter().map(|n| n.0).collect();
        let (lo, hi) = (x[0], x[x.len() - 1]);
        let targets: Vec<(usize, f64)> = omegas
            .iter()
            .copied()
            .filter(|(_, w)| *w >= lo - 1e-12 * lo.abs() && *w <= hi + 1e-12 * hi.abs())
            .collect();
        let t: Vec<f64> = targets.iter().map(|t| t.1.clamp(lo, hi)).collect();
        let re = pchip(&x, &nodes.iter().map(|n| n.1.re).collect::<Vec<_>>(), &t)?;
        let im = pchip(&x, &nodes.iter().map(|n| n.1.im).collect::<Vec<_>>(), &t)?;
        for ((q, w), (a, b)) in targets.iter().zip(re.into_iter().zip(im)) {
            put(*q, *w, Complex64::new(a, b));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport4 {
    pub cutoff: f64,
    pub total: f64,
    /// `|ξ| ≤ s`, `|ω| ≤ s|ξ|`.
    pub kept: f64,
    /// `|ξ| > s`, `|ω| ≤ s|ξ|`.
    pub discarded_e1: f64,
    /// `|ω| > s|ξ|`.
    pub discarded_e2: f64,
}

impl TruncationReport4 {
    pub fn discarded_fraction(&self) -> f64 {
        if self.total == 0.0 {
            return 0.0;
        }
        (self.discarded_e1 + self.discarded_e2) / self.total
    }

    pub fn e1_fraction(&self) -> f64 {
        if self.total == 0.0 { 0.0 } else { self.discarded_e1 / self.total }
    }

    pub fn e2_fraction(&self) -> f64 {
        if self.total == 0.0 { 0.0 } else { self.discarded_e2 / self.total }
    }
}

/// Keeps the samples with `|ξ| ≤ s` and `|ω| ≤ s|ξ|` and inverts in four
/// dimensions. The result is indexed `[x₁, x₂, x₃, t]` on the axis nodes.
pub fn invert4(samples: &Grid4Samples, s: f64) -> Result<(Array4<f64>, TruncationReport4)> {
    if !(s >= 0.0) || s > samples.big_lambda * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "cutoff must lie in [0, {}], got {s}",
            samples.big_lambda
        )));
    }
    let space = samples.space;
    let time = samples.time;
    let cell = samples.cell();
    let mut report = TruncationReport4 {
        cutoff: s,
        total: 0.0,
        kept: 0.0,
        discarded_e1: 0.0,
        discarded_e2: 0.0,
    };
    let n = space.n;
    let mut coeffs = ArrayD::<Complex64>::zeros(IxDyn(&[n, n, n, time.n]));
    for ((idx, v), c) in samples.values.indexed_iter().zip(samples.covered.iter()) {
        if !*c {
            continue;
        }
        let (a, b, d, q) = idx;
        let xi = [space.freq(a), space.freq(b), space.freq(d)];
        let r = norm3(xi);
        let w = time.freq(q).abs();
        let e = v.norm_sqr() * cell;
        report.total += e;
        let tol = 1.0 + 1e-12;
        if w > s * r * tol {
            report.discarded_e2 += e;
        } else if r > s * tol || s == 0.0 {
            report.discarded_e1 += e;
        } else {
            report.kept += e;
            coeffs[IxDyn(&[a, b, d, q])] = *v;
        }
    }
    let f = inverse_nd_real(coeffs, &[space, space, space, time])?;
    let f = f
        .into_dimensionality()
        .expect("four axes give a four-dimensional array");
    Ok((f, report))
}

/// `F(x, t)` sampled on the nodes of `space³ × time`.
pub fn sample_source4(source: &SourceSpec, space: &Axis, time: &Axis) -> Array4<f64> {
    let xs = space.nodes();
    let ts = time.nodes();
    Array4::from_shape_fn((space.n, space.n, space.n, time.n), |(a, b, c, q)| {
        source.value([xs[a], xs[b], xs[c]], ts[q])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn ladder_is_equispaced_in_speed() {
        let l = lambda_ladder(2.0, 8).unwrap();
        assert_eq!(l.len(), 8);
        assert_abs_diff_eq!(l[7], 4.0, epsilon = 1e-15);
        let s: Vec<f64> = l.iter().map(|v| v.sqrt()).collect();
        for w in s.windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], 0.25, epsilon = 1e-14);
        }
    }

    #[test]
    fn pchip_hits_nodes_and_reproduces_lines() {
        let x = [-2.0, -0.5, 0.3, 1.0, 2.5];
        let y = [1.0, -3.0, 2.0, 2.5, 0.0];
        let v = pchip(&x, &y, &x).unwrap();
        for (a, b) in v.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let lin: Vec<f64> = x.iter().map(|t| 3.0 * t - 1.0).collect();
        let t = [-1.7, 0.0, 0.9, 2.2];
        for (a, tt) in pchip(&x, &lin, &t).unwrap().iter().zip(&t) {
            assert_abs_diff_eq!(*a, 3.0 * tt - 1.0, epsilon = 1e-12);
        }
        assert!(pchip(&[0.0], &[1.0], &[0.0]).is_err());
    }

    fn grid4(big_lambda: f64) -> Grid4Samples {
        let space = Axis::centered(3.5, 16).unwrap();
        let time = Axis::new(0.5, 3.0, 16).unwrap();
        Grid4Samples::from_fn(space, time, big_lambda, |xi, w| {
            let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            Complex64::from_polar((-0.3 * r2 - 0.2 * w * w).exp(), -0.5 * w)
        })
    }

    #[test]
    fn zero_cutoff_discards_everything() {
        let g = grid4(2.0);
        let (f, rep) = invert4(&g, 0.0).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
        assert!(rep.total > 0.0);
        assert_abs_diff_eq!(rep.discarded_fraction(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn truncation_energy_is_conserved() {
        let g = grid4(2.0);
        for s in [0.3, 1.0, 1.7, 2.0] {
            let (f, rep) = invert4(&g, s).unwrap();
            let parts = rep.kept + rep.discarded_e1 + rep.discarded_e2;
            assert!((parts - rep.total).abs() <= 1e-10 * rep.total);
            let dx = g.space.step().powi(3) * g.time.step();
            let l2: f64 = f.iter().map(|v| v * v).sum::<f64>() * dx;
            assert!((l2 - rep.kept).abs() <= 1e-10 * rep.total, "{l2} vs {}", rep.kept);
        }
        assert!(invert4(&g, 2.5).is_err());
    }

    #[test]
    fn resampling_needs_enough_levels() {
        let cones = ConeSamples4D {
            axis: Axis::centered(3.5, 16).unwrap(),
            big_lambda: 2.0,
            lambdas: vec![1.0, 4.0],
            entries: vec![],
        };
        assert!(resample_to_grid4(&cones, &Axis::centered(4.0, 16).unwrap()).is_err());
    }

    #[test]
    fn resampling_is_exact_on_cone_nodes_and_real() {
        let axis = Axis::centered(3.5, 16).unwrap();
        let big = 2.0;
        let lambdas = lambda_ladder(big, 8).unwrap();
        let f = |xi: [f64; 3], w: f64| {
            let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
            Complex64::from_polar((-0.3 * r2 - 0.2 * w * w).exp(), -0.5 * w + 0.3 * xi[0])
        };
        let mut entries = Vec::new();
        for k in ball_indices(&axis, big) {
            let xi = index_freq(&axis, k);
            for (j, l) in lambdas.iter().enumerate() {
                let w = l.sqrt() * norm3(xi);
                entries.push(ConeEntry { index: k, xi, lambda_index: j, omega: w, value: f(xi, w) });
                if k != [0, 0, 0] {
                    let m = [-xi[0], -xi[1], -xi[2]];
                    entries.push(ConeEntry {
                        index: [-k[0], -k[1], -k[2]],
                        xi: m,
                        lambda_index: j,
                        omega: -w,
                        value: f(xi, w).conj(),
                    });
                }
            }
        }
        let cones = ConeSamples4D { axis, big_lambda: big, lambdas, entries };
        assert!(cones.conjugate_residual() < 1e-15);
        let time = Axis::new(0.5, 4.0, 32).unwrap();
        let g = resample_to_grid4(&cones, &time).unwrap();
        let exact = Grid4Samples::from_fn(axis, time, big, f);
        let (mut num, mut den) = (0.0, 0.0);
        for ((a, b), c) in g.values.iter().zip(exact.values.iter()).zip(exact.covered.iter()) {
            if *c {
                num += (a - b).norm_sqr();
                den += b.norm_sqr();
            }
        }
        assert!((num / den).sqrt() < 3e-2, "{}", (num / den).sqrt());
        let (rec, _) = invert4(&g, big).unwrap();
        assert!(rec.iter().all(|v| v.is_finite()));
    }

    proptest! {
        #[test]
        fn pchip_never_overshoots(ys in proptest::collection::vec(-5.0f64..5.0, 3..12), t in 0.0f64..1.0) {
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let tt = t * (ys.len() - 1) as f64;
            let v = pchip(&x, &ys, &[tt]).unwrap()[0];
            let k = (tt.floor() as usize).min(ys.len() - 2);
            let (lo, hi) = (ys[k].min(ys[k + 1]), ys[k].max(ys[k + 1]));
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
