//! Forward problem `∂ₜ²u − λΔu = F`, `u = ∂ₜu = 0` at `t = 0`, solved mode by
//! mode with the Duhamel formula, plus trace extraction on a sphere.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::quadrature::{cumulative_simpson, gauss_legendre, simpson_weights};
use crate::source::{SourceSpec, TemporalProfile};
use crate::spectral::{
    forward_dft3, Axis, ModalTerm, ShellIndex, ShellProjection, SimulationGrid, SpectralField,
};
use crate::{Error, Result};

/// Relative spectral content allowed on the Nyquist planes of a source.
pub const RESOLUTION_LIMIT: f64 = 1e-6;

/// Default Huygens tolerance, relative to the global maximum.
pub const HUYGENS_TOLERANCE: f64 = 1e-3;

/// `∫₀^{t_j} sin(c(t_j − s))/c · g(s) ds` for every time index `j`.
///
/// The kernel is expanded as `sin(ct)cos(cs) − cos(ct)sin(cs)`, so each
/// value is the composite Simpson sum of the full integrand computed in
/// `O(n)` overall. `c = 0` gives the kernel `t − s`.
pub fn duhamel_kernel(c: f64, g: &[f64], dt: f64) -> Vec<f64> {
    let n = g.len();
    let t: Vec<f64> = (0..n).map(|j| j as f64 * dt).collect();
    // sin(cx)/c, continuous at c = 0
    let sin_over_c = |x: f64| if c == 0.0 { x } else { (c * x).sin() / c };
    let gc: Vec<f64> = (0..n).map(|j| (c * t[j]).cos() * g[j]).collect();
    let gs: Vec<f64> = (0..n).map(|j| sin_over_c(t[j]) * g[j]).collect();
    let ic = cumulative_simpson(&gc, dt);
    let is = cumulative_simpson(&gs, dt);
    (0..n)
        .map(|j| sin_over_c(t[j]) * ic[j] - (c * t[j]).cos() * is[j])
        .collect()
}

/// Largest spatial coefficient on any Nyquist plane relative to the largest
/// coefficient overall.
pub fn nyquist_ratio(coeffs: &Array3<Complex64>, axis: &Axis) -> f64 {
    let nyq = axis.nyquist_position();
    let mut max_all: f64 = 0.0;
    let mut max_nyq: f64 = 0.0;
    for ((i, j, k), v) in coeffs.indexed_iter() {
        let m = v.norm();
        max_all = max_all.max(m);
        if i == nyq || j == nyq || k == nyq {
            max_nyq = max_nyq.max(m);
        }
    }
    if max_all == 0.0 {
        0.0
    } else {
        max_nyq / max_all
    }
}

/// Forward solver with caches for shell indices and spatial transforms, so
/// repeated solves of one source (several `λ`, several horizons) transform
/// the spatial profiles once.
#[derive(Debug, Default)]
pub struct ForwardSolver {
    shells: HashMap<usize, Arc<ShellIndex>>,
    spatial: HashMap<String, Arc<Array3<Complex64>>>,
}

impl ForwardSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shells(&mut self, n: usize) -> Arc<ShellIndex> {
        Arc::clone(
            self.shells
                .entry(n)
                .or_insert_with(|| Arc::new(ShellIndex::new(n))),
        )
    }

    pub fn solve(&mut self, source: &SourceSpec, grid: &SimulationGrid) -> Result<SpectralField> {
        source.validate()?;
        let axis = grid.axis();
        if source.support_radius >= grid.half_width() {
            return Err(Error::Geometry(format!(
                "source support radius {} does not fit in the box of half width {}",
                source.support_radius,
                grid.half_width()
            )));
        }
        let shells = self.shells(grid.n_space());
        let radii = shells.radii(&axis);
        let times = grid.times();
        let dt = grid.dt();
        let speed = grid.lambda().sqrt();

        // terms sharing a temporal profile share one kernel
        let mut groups: Vec<(TemporalProfile, Vec<String>)> = Vec::new();
        for term in &source.terms {
            let key = format!(
                "{}|{:?}",
                serde_json::to_string(&term.space).expect("profile serializes"),
                axis
            );
            if !self.spatial.contains_key(&key) {
                let a = forward_dft3(&term.space.sample(&axis), &axis)?;
                let ratio = nyquist_ratio(&a, &axis);
                if ratio > RESOLUTION_LIMIT {
                    return Err(Error::Resolution {
                        ratio,
                        limit: RESOLUTION_LIMIT,
                    });
                }
                self.spatial.insert(key.clone(), Arc::new(a));
            }
            match groups.iter_mut().find(|(t, _)| *t == term.time) {
                Some((_, keys)) => keys.push(key),
                None => groups.push((term.time.clone(), vec![key])),
            }
        }
        // cached per group so that repeated solves hand out the same `Arc`,
        // which lets boundary extraction reuse its sphere projections
        let groups: Vec<(TemporalProfile, Arc<Array3<Complex64>>)> = groups
            .into_iter()
            .map(|(profile, keys)| {
                let group_key = keys.join("\n");
                let spatial = match self.spatial.get(&group_key) {
                    Some(a) => Arc::clone(a),
                    None => {
                        let mut acc = (*self.spatial[&keys[0]]).clone();
                        for k in &keys[1..] {
                            acc += &*self.spatial[k];
                        }
                        let a = Arc::new(acc);
                        self.spatial.insert(group_key, Arc::clone(&a));
                        a
                    }
                };
                (profile, spatial)
            })
            .collect();

        let mut terms = Vec::with_capacity(groups.len());
        for (profile, spatial) in groups {
            let g = profile.sample(&times);
            let mut kernel = Array2::<f64>::zeros((shells.len(), times.len()));
            for (s, rho) in radii.iter().enumerate() {
                let row = duhamel_kernel(speed * rho, &g, dt);
                kernel
                    .row_mut(s)
                    .iter_mut()
                    .zip(row)
                    .for_each(|(k, v)| *k = v);
            }
            terms.push(ModalTerm {
                spatial,
                kernel: Arc::new(kernel),
            });
        }
        Ok(SpectralField::from_terms(*grid, shells, terms)?.with_source_duration(source.support_time))
    }
}

/// Solves the forward problem for `source` on `grid`.
pub fn solve(source: &SourceSpec, grid: &SimulationGrid) -> Result<SpectralField> {
    ForwardSolver::new().solve(source, grid)
}

/// Product rule on the sphere `|x| = R`: Gauss–Legendre in `cos θ`, uniform
/// trapezoid in `φ`. Nodes are stored polar-major, index `i·n_phi + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    radius: f64,
    n_theta: usize,
    n_phi: usize,
    nodes: Vec<[f64; 3]>,
    normals: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn new(radius: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidInput(format!("sphere radius must be positive, got {radius}")));
        }
        if n_theta < 2 || n_phi < 3 {
            return Err(Error::InvalidInput(format!(
                "sphere resolution needs n_theta ≥ 2 and n_phi ≥ 3, got {n_theta} × {n_phi}"
            )));
        }
        let (mu, w_mu) = gauss_legendre(n_theta);
        let dphi = 2.0 * PI / n_phi as f64;
        let mut nodes = Vec::with_capacity(n_theta * n_phi);
        let mut normals = Vec::with_capacity(n_theta * n_phi);
        let mut weights = Vec::with_capacity(n_theta * n_phi);
        for (m, wm) in mu.iter().zip(&w_mu) {
            let s = (1.0 - m * m).sqrt();
            for j in 0..n_phi {
                let phi = j as f64 * dphi;
                let nu = [s * phi.cos(), s * phi.sin(), *m];
                normals.push(nu);
                nodes.push([radius * nu[0], radius * nu[1], radius * nu[2]]);
                weights.push(radius * radius * wm * dphi);
            }
        }
        Ok(SphereQuadrature {
            radius,
            n_theta,
            n_phi,
            nodes,
            normals,
            weights,
        })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn n_phi(&self) -> usize {
        self.n_phi
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 3]] {
        &self.nodes
    }

    /// Outward unit normals `x/R`.
    pub fn normals(&self) -> &[[f64; 3]] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Polar angle `θ` and azimuth `φ` of node `i`.
    pub fn angles(&self, i: usize) -> (f64, f64) {
        let nu = self.normals[i];
        (nu[2].clamp(-1.0, 1.0).acos(), nu[1].atan2(nu[0]).rem_euclid(2.0 * PI))
    }
}

/// Sphere resolution as it appears in configs and file headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereResolution {
    pub n_theta: usize,
    pub n_phi: usize,
}

/// Dirichlet and Neumann traces on a measurement sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDataset {
    pub radius: f64,
    pub lambda: f64,
    pub sphere: SphereQuadrature,
    pub dt: f64,
    pub n_time: usize,
    /// Temporal support `T₀` of the source that produced the data.
    pub source_duration: f64,
    /// `u(x_i, t_j)`, shape `[nodes, n_time]`.
    pub dirichlet: Array2<f64>,
    /// `∂_ν u(x_i, t_j)`, shape `[nodes, n_time]`.
    pub neumann: Array2<f64>,
    /// Relative noise level `ε` added by [`add_noise`]; zero for clean data.
    pub noise_level: f64,
}

impl BoundaryDataset {
    pub fn zeros(
        sphere: SphereQuadrature,
        lambda: f64,
        dt: f64,
        n_time: usize,
        source_duration: f64,
    ) -> Self {
        let n = sphere.len();
        BoundaryDataset {
            radius: sphere.radius(),
            lambda,
            sphere,
            dt,
            n_time,
            source_duration,
            dirichlet: Array2::zeros((n, n_time)),
            neumann: Array2::zeros((n, n_time)),
            noise_level: 0.0,
        }
    }

    pub fn horizon(&self) -> f64 {
        (self.n_time - 1) as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_time).map(|j| j as f64 * self.dt).collect()
    }

    /// `T₀ + 2R/√λ`, after which the field inside the sphere vanishes.
    pub fn huygens_time(&self) -> f64 {
        self.source_duration + 2.0 * self.radius / self.lambda.sqrt()
    }

    /// Discrete space-time `L²` norm: surface quadrature × time Simpson.
    pub fn surrogate_norm(&self, values: &Array2<f64>) -> f64 {
        let tw = simpson_weights(self.n_time, self.dt);
        let mut total = 0.0;
        for (row, w) in values.rows().into_iter().zip(self.sphere.weights()) {
            let s: f64 = row.iter().zip(&tw).map(|(v, t)| t * v * v).sum();
            total += w * s;
        }
        total.sqrt()
    }

    pub fn dirichlet_norm(&self) -> f64 {
        self.surrogate_norm(&self.dirichlet)
    }

    pub fn neumann_norm(&self) -> f64 {
        self.surrogate_norm(&self.neumann)
    }

    /// Largest `|u|` after `T₀ + 2R/√λ + 2Δt` relative to the overall largest,
    /// or `None` when the record ends before that time.
    pub fn huygens_tail_ratio(&self) -> Option<f64> {
        let start = self.huygens_time() + 2.0 * self.dt;
        let first = (0..self.n_time).find(|&j| j as f64 * self.dt > start)?;
        let max_all = self.dirichlet.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_all == 0.0 {
            return Some(0.0);
        }
        let mut tail: f64 = 0.0;
        for row in self.dirichlet.rows() {
            for v in row.iter().skip(first) {
                tail = tail.max(v.abs());
            }
        }
        Some(tail / max_all)
    }
}

/// Trace extractor that caches shell projections per spatial coefficient
/// array, so fields sharing spatial transforms (different `λ` or horizons)
/// are projected once.
#[derive(Debug)]
pub struct BoundaryExtractor {
    sphere: SphereQuadrature,
    huygens_tolerance: f64,
    cache: Vec<(Arc<Array3<Complex64>>, Arc<ShellProjection>)>,
}

impl BoundaryExtractor {
    pub fn new(sphere: SphereQuadrature) -> Self {
        BoundaryExtractor {
            sphere,
            huygens_tolerance: HUYGENS_TOLERANCE,
            cache: Vec::new(),
        }
    }

    pub fn with_huygens_tolerance(mut self, tol: f64) -> Self {
        self.huygens_tolerance = tol;
        self
    }

    pub fn sphere(&self) -> &SphereQuadrature {
        &self.sphere
    }

    fn projection(
        &mut self,
        spatial: &Arc<Array3<Complex64>>,
        field: &SpectralField,
    ) -> Result<Arc<ShellProjection>> {
        if let Some((_, p)) = self.cache.iter().find(|(a, _)| Arc::ptr_eq(a, spatial)) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(ShellProjection::compute(
            spatial,
            field.shells(),
            &field.grid().axis(),
            self.sphere.nodes(),
            Some(self.sphere.normals()),
        )?);
        self.cache.push((Arc::clone(spatial), Arc::clone(&p)));
        Ok(p)
    }

    pub fn extract(&mut self, field: &SpectralField) -> Result<BoundaryDataset> {
        let grid = field.grid();
        let r = self.sphere.radius();
        if r >= grid.half_width() {
            return Err(Error::Geometry(format!(
                "sphere radius {r} must be smaller than the box half width {}",
                grid.half_width()
            )));
        }
        let mut ds = BoundaryDataset::zeros(
            self.sphere.clone(),
            grid.lambda(),
            grid.dt(),
            grid.n_time(),
            field.source_duration(),
        );
        for term in field.terms() {
            let p = self.projection(&term.spatial, field)?;
            ds.dirichlet += &p.value.dot(&*term.kernel);
            let normal = p.normal.as_ref().expect("sphere projections carry normals");
            ds.neumann += &normal.dot(&*term.kernel);
        }
        if let Some(ratio) = ds.huygens_tail_ratio() {
            if ratio > self.huygens_tolerance {
                return Err(Error::Huygens {
                    ratio,
                    tolerance: self.huygens_tolerance,
                });
            }
        }
        Ok(ds)
    }
}

/// Dirichlet and Neumann traces of `field` on the sphere of radius `radius`.
pub fn extract_boundary(
    field: &SpectralField,
    radius: f64,
    resolution: SphereResolution,
) -> Result<BoundaryDataset> {
    let sphere = SphereQuadrature::new(radius, resolution.n_theta, resolution.n_phi)?;
    BoundaryExtractor::new(sphere).extract(field)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuygensReport {
    /// `T₀ + 2R/√λ`.
    pub cutoff_time: f64,
    pub residual_ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuygensOptions {
    pub tolerance: f64,
    /// Interior sample lattice spacing is `R / lattice`.
    pub lattice: usize,
}

impl Default for HuygensOptions {
    fn default() -> Self {
        HuygensOptions {
            tolerance: HUYGENS_TOLERANCE,
            lattice: 5,
        }
    }
}

/// Checks that the field inside `B_R` has died out after `T₀ + 2R/√λ`.
///
/// The wave speed of `∂ₜ²u − λΔu = F` is `√λ`, so the last signal from a
/// source supported in `B_R × (0, T₀)` leaves the ball by `T₀ + 2R/√λ`.
pub fn verify_huygens(
    field: &SpectralField,
    source: &SourceSpec,
    radius: f64,
) -> Result<HuygensReport> {
    verify_huygens_with(field, source, radius, HuygensOptions::default())
}

pub fn verify_huygens_with(
    field: &SpectralField,
    source: &SourceSpec,
    radius: f64,
    options: HuygensOptions,
) -> Result<HuygensReport> {
    let grid = field.grid();
    if !(radius > 0.0) || radius >= grid.half_width() {
        return Err(Error::Geometry(format!(
            "radius {radius} must lie in (0, {})",
            grid.half_width()
        )));
    }
    let cutoff = source.support_time + 2.0 * radius / grid.lambda().sqrt();
    let window_start = cutoff + 2.0 * grid.dt();
    if window_start >= grid.horizon() {
        return Err(Error::Window(format!(
            "check window starts at {window_start:.4} but the horizon is {:.4}",
            grid.horizon()
        )));
    }
    let m = options.lattice.max(1) as i64;
    let h = radius / m as f64;
    let mut points = Vec::new();
    for i in -m..=m {
        for j in -m..=m {
            for k in -m..=m {
                let x = [i as f64 * h, j as f64 * h, k as f64 * h];
                if (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt() < radius * (1.0 - 1e-9) {
                    points.push(x);
                }
            }
        }
    }
    let mut values = Array2::<f64>::zeros((points.len(), grid.n_time()));
    for term in field.terms() {
        let p = ShellProjection::compute(&term.spatial, field.shells(), &grid.axis(), &points, None)?;
        values += &p.value.dot(&*term.kernel);
    }
    let mut global: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for row in values.rows() {
        for (j, v) in row.iter().enumerate() {
            global = global.max(v.abs());
            if grid.time(j) > window_start {
                tail = tail.max(v.abs());
            }
        }
    }
    let residual_ratio = if global == 0.0 { 0.0 } else { tail / global };
    Ok(HuygensReport {
        cutoff_time: cutoff,
        residual_ratio,
        tolerance: options.tolerance,
        pass: residual_ratio <= options.tolerance,
        n_points: points.len(),
    })
}

/// Statistical model of the data perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    /// Independent standard normal values at every node and time sample.
    White,
    /// Random superposition of `modes` travelling plane waves
    /// `a cos(κ R d·ν − ωt + φ)` with `a` standard normal, `d` uniform on the
    /// unit sphere, `κ, ω` uniform in `[0, bandwidth]` and `φ` uniform.
    Smooth { bandwidth: f64, modes: usize },
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel::Smooth {
            bandwidth: 8.0,
            modes: 64,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if let NoiseModel::Smooth { bandwidth, modes } = self {
            if !(*bandwidth > 0.0) || *modes == 0 {
                return Err(Error::InvalidInput(format!(
                    "smooth noise needs bandwidth > 0 and at least one mode, got {bandwidth}, {modes}"
                )));
            }
        }
        Ok(())
    }

    fn draw(&self, ds: &BoundaryDataset, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let shape = ds.dirichlet.dim();
        match *self {
            NoiseModel::White => {
                Array2::from_shape_simple_fn(shape, || StandardNormal.sample(&mut *rng))
            }
            NoiseModel::Smooth { bandwidth, modes } => {
                let mut out = Array2::<f64>::zeros(shape);
                let unit = Uniform::new(0.0, 1.0).expect("unit interval is valid");
                let mut temporal = vec![Complex64::new(0.0, 0.0); shape.1];
                for _ in 0..modes {
                    let a: f64 = StandardNormal.sample(&mut *rng);
                    let d: [f64; 3] = std::array::from_fn(|_| StandardNormal.sample(&mut *rng));
                    let dn = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-300);
                    let kappa = bandwidth * unit.sample(&mut *rng);
                    let omega = bandwidth * unit.sample(&mut *rng);
                    let phi = 2.0 * PI * unit.sample(&mut *rng);
                    for (j, e) in temporal.iter_mut().enumerate() {
                        *e = Complex64::from_polar(a, -omega * j as f64 * ds.dt);
                    }
                    for (i, nu) in ds.sphere.normals().iter().enumerate() {
                        let s = kappa * ds.radius * (d[0] * nu[0] + d[1] * nu[1] + d[2] * nu[2]) / dn;
                        let spatial = Complex64::from_polar(1.0, s + phi);
                        for (v, e) in out.row_mut(i).iter_mut().zip(&temporal) {
                            *v += (spatial * e).re;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Unit-level perturbation pair for one seed: `(dirichlet, neumann)` scaled
/// so that adding `ε` times each gives relative surrogate level `ε`.
pub fn noise_pattern(
    ds: &BoundaryDataset,
    seed: u64,
    model: NoiseModel,
) -> Result<(Array2<f64>, Array2<f64>)> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pd = model.draw(ds, &mut rng);
    let mut pn = model.draw(ds, &mut rng);
    for (clean, pert) in [(&ds.dirichlet, &mut pd), (&ds.neumann, &mut pn)] {
        let want = ds.surrogate_norm(clean);
        let have = ds.surrogate_norm(pert);
        if want > 0.0 && have > 0.0 {
            pert.mapv_inplace(|v| v * want / have);
        } else {
            pert.fill(0.0);
        }
    }
    Ok((pd, pn))
}

/// `ds + ε · pattern`, with the noise level recorded.
pub fn apply_noise(
    ds: &BoundaryDataset,
    epsilon: f64,
    pattern: &(Array2<f64>, Array2<f64>),
) -> Result<BoundaryDataset> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise level must be finite and nonnegative, got {epsilon}"
        )));
    }
    let mut out = ds.clone();
    out.noise_level = epsilon;
    if epsilon > 0.0 {
        out.dirichlet.scaled_add(epsilon, &pattern.0);
        out.neumann.scaled_add(epsilon, &pattern.1);
    }
    Ok(out)
}

/// Adds seeded perturbations to both traces with the default
/// [`NoiseModel`].
pub fn add_noise(ds: &BoundaryDataset, epsilon: f64, seed: u64) -> Result<BoundaryDataset> {
    add_noise_with(ds, epsilon, seed, NoiseModel::default())
}

/// Adds seeded perturbations drawn from `model` to both traces.
///
/// The Dirichlet perturbation is rescaled so its surrogate norm is exactly
/// `epsilon` times the surrogate norm of the clean Dirichlet trace; the
/// Neumann perturbation (drawn independently) likewise relative to the clean
/// Neumann trace.
pub fn add_noise_with(
    ds: &BoundaryDataset,
    epsilon: f64,
    seed: u64,
    model: NoiseModel,
) -> Result<BoundaryDataset> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "noise level must be finite and nonnegative, got {epsilon}"
        )));
    }
    if epsilon == 0.0 {
        model.validate()?;
        let mut out = ds.clone();
        out.noise_level = 0.0;
        return Ok(out);
    }
    apply_noise(ds, epsilon, &noise_pattern(ds, seed, model)?)
}
