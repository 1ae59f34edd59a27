//! Separable sources `f(x) g(t)` with known `g`: recover `f̂` on the ball
//! `|ξ| ≤ b` from a single dataset and invert.
//!
//! Multiplying the wave equation by `w = e^{−i(ξ·x + ωt)}` with
//! `ω² = λ|ξ|²` and integrating over `B_R × (0, T)` leaves only boundary
//! terms, because `u` and `∂ₜu` vanish at both ends of the time interval:
//!
//! `(2π)² F̂(ξ, ω) = λ ∫₀ᵀ ∫_{∂B_R} (u ∂_ν w − w ∂_ν u) ds dt`.

use std::collections::HashMap;
use std::f64::consts::PI;

use ndarray::{Array3, ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::BoundaryDataset;
use crate::quadrature::simpson_weights;
use crate::spectral::{inverse_nd_real, Axis};
use crate::{Error, Result};

pub const DEFAULT_DELTA_MIN: f64 = 1e-6;
pub const DEFAULT_PROBES: usize = 256;
const DISPERSION_TOL: f64 = 1e-10;

/// Uniform samples `values[j] = g(start + j·step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub start: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl SampledSignal {
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !start.is_finite() {
            return Err(Error::InvalidInput(format!("sample step must be positive, got {step}")));
        }
        Ok(SampledSignal {
            start,
            step,
            values,
        })
    }

    /// `n` samples of `f` on `[a, b]` including both ends.
    pub fn from_fn(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        if n < 2 || !(b > a) {
            return Err(Error::InvalidInput(format!(
                "need n ≥ 2 samples on a nonempty interval, got {n} on ({a}, {b})"
            )));
        }
        let h = (b - a) / (n - 1) as f64;
        Self::new(a, h, (0..n).map(|j| f(a + j as f64 * h)).collect())
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len().saturating_sub(1)) as f64
    }
}

/// Minimum sample count accepted by [`ghat`].
pub const MIN_SIGNAL_SAMPLES: usize = 64;

/// `ĝ(ω) = (2π)^{−1/2} ∫ g(t) e^{−iωt} dt` by composite Simpson.
pub fn ghat(g: &SampledSignal, omega: f64) -> Result<Complex64> {
    if g.values.len() < MIN_SIGNAL_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_SIGNAL_SAMPLES} samples of g, got {}",
            g.values.len()
        )));
    }
    let w = simpson_weights(g.values.len(), g.step);
    let total: Complex64 = g
        .values
        .iter()
        .zip(&w)
        .enumerate()
        .map(|(j, (v, wt))| Complex64::from_polar(wt * v, -omega * (g.start + j as f64 * g.step)))
        .sum();
    Ok(total / (2.0 * PI).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCondition {
    pub b: f64,
    /// Smallest `|ĝ|` found on the probe frequencies.
    pub delta: f64,
    pub delta_min: f64,
    pub satisfied: bool,
}

/// Smallest `|ĝ(ω)|` over `n_probe` equispaced `ω` in the open interval `(0, b)`.
pub fn check_bandwidth_condition(
    g: &SampledSignal,
    b: f64,
    delta_min: f64,
    n_probe: usize,
) -> Result<BandCondition> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput(format!("band limit must be positive, got {b}")));
    }
    if n_probe == 0 {
        return Err(Error::InvalidInput("need at least one probe frequency".into()));
    }
    let mut delta = f64::INFINITY;
    for i in 1..=n_probe {
        let omega = b * i as f64 / (n_probe + 1) as f64;
        delta = delta.min(ghat(g, omega)?.norm());
    }
    Ok(BandCondition {
        b,
        delta,
        delta_min,
        satisfied: delta >= delta_min,
    })
}

/// Evaluates the boundary identity on one dataset, caching the time
/// transforms of both traces per `ω`.
#[derive(Debug)]
pub struct BoundaryIntegrator<'a> {
    ds: &'a BoundaryDataset,
    time_weights: Vec<f64>,
    cache: HashMap<u64, (Vec<Complex64>, Vec<Complex64>)>,
}

impl<'a> BoundaryIntegrator<'a> {
    pub fn new(ds: &'a BoundaryDataset) -> Result<Self> {
        let t_h = ds.huygens_time();
        if ds.horizon() <= t_h {
            return Err(Error::Horizon(format!(
                "record ends at T = {:.4}, field inside the sphere persists until T0 + 2R/sqrt(lambda) = {t_h:.4}",
                ds.horizon()
            )));
        }
        Ok(BoundaryIntegrator {
            ds,
            time_weights: simpson_weights(ds.n_time, ds.dt),
            cache: HashMap::new(),
        })
    }

    pub fn dataset(&self) -> &BoundaryDataset {
        self.ds
    }

    fn time_transforms(&mut self, omega: f64) -> &(Vec<Complex64>, Vec<Complex64>) {
        let ds = self.ds;
        let tw = &self.time_weights;
        self.cache.entry(omega.to_bits()).or_insert_with(|| {
            let e: Vec<Complex64> = tw
                .iter()
                .enumerate()
                .map(|(j, w)| Complex64::from_polar(*w, -omega * j as f64 * ds.dt))
                .collect();
            let transform = |a: &ndarray::Array2<f64>| -> Vec<Complex64> {
                a.rows()
                    .into_iter()
                    .map(|row| row.iter().zip(&e).map(|(v, ej)| ej * *v).sum())
                    .collect()
            };
            (transform(&ds.dirichlet), transform(&ds.neumann))
        })
    }

    /// `λ(2π)^{−2} ∫₀ᵀ∫_{∂B_R} (u ∂_ν w − w ∂_ν u)` with `∂_ν w = −i(ξ·x/R) w`.
    ///
    /// The caller is responsible for the dispersion relation; see
    /// [`boundary_integral`] for the checked entry point.
    pub fn evaluate_unchecked(&mut self, xi: [f64; 3], omega: f64) -> Complex64 {
        let ds = self.ds;
        let r = ds.radius;
        let (ut, nt) = self.time_transforms(omega);
        let mut total = Complex64::new(0.0, 0.0);
        for (i, (x, w)) in ds.sphere.nodes().iter().zip(ds.sphere.weights()).enumerate() {
            let xd = xi[0] * x[0] + xi[1] * x[1] + xi[2] * x[2];
            let phase = Complex64::from_polar(*w, -xd);
            total += phase * (Complex64::new(0.0, -xd / r) * ut[i] - nt[i]);
        }
        total * ds.lambda / (2.0 * PI).powi(2)
    }

    pub fn evaluate(&mut self, xi: [f64; 3], omega: f64) -> Result<Complex64> {
        check_dispersion(xi, omega, self.ds.lambda)?;
        Ok(self.evaluate_unchecked(xi, omega))
    }
}

fn check_dispersion(xi: [f64; 3], omega: f64, lambda: f64) -> Result<()> {
    let c2 = lambda * (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]);
    if (omega * omega - c2).abs() > DISPERSION_TOL * c2.max(1.0) {
        return Err(Error::Dispersion(format!(
            "omega² = {:.6e} but lambda |xi|² = {c2:.6e}",
            omega * omega
        )));
    }
    Ok(())
}

/// `F̂(ξ, ω)` recovered from the boundary identity; requires `ω² = λ|ξ|²`.
pub fn boundary_integral(ds: &BoundaryDataset, xi: [f64; 3], omega: f64) -> Result<Complex64> {
    check_dispersion(xi, omega, ds.lambda)?;
    BoundaryIntegrator::new(ds)?.evaluate(xi, omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierEntry {
    /// Signed integer frequency index on the reconstruction grid.
    pub index: [i64; 3],
    pub xi: [f64; 3],
    pub omega: f64,
    pub value: Complex64,
    pub valid: bool,
    pub divisor_mag: f64,
}

/// Recovered `f̂` at the reconstruction-grid frequencies inside `|ξ| ≤ b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierSamples {
    pub entries: Vec<FourierEntry>,
    pub band_b: f64,
    /// Reconstruction axis (the same on all three coordinates).
    pub axis: Axis,
}

impl FourierSamples {
    /// Samples of a known transform on every grid frequency with `|ξ| ≤ b`,
    /// all marked valid.
    pub fn from_fn(axis: Axis, b: f64, f: impl Fn([f64; 3]) -> Complex64) -> Self {
        let entries = ball_indices(&axis, b)
            .into_iter()
            .map(|k| {
                let xi = index_freq(&axis, k);
                FourierEntry {
                    index: k,
                    xi,
                    omega: norm3(xi),
                    value: f(xi),
                    valid: true,
                    divisor_mag: 1.0,
                }
            })
            .collect();
        FourierSamples {
            entries,
            band_b: b,
            axis,
        }
    }

    /// Largest `|value(−ξ) − conj(value(ξ))|` over pairs present in the set.
    pub fn conjugate_residual(&self) -> f64 {
        let map: HashMap<[i64; 3], Complex64> =
            self.entries.iter().map(|e| (e.index, e.value)).collect();
        self.entries
            .iter()
            .filter_map(|e| {
                let m = [-e.index[0], -e.index[1], -e.index[2]];
                map.get(&m).map(|v| (v - e.value.conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    pub fn n_valid(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }
}

pub(crate) fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

pub(crate) fn index_freq(axis: &Axis, k: [i64; 3]) -> [f64; 3] {
    let h = axis.freq_step();
    [k[0] as f64 * h, k[1] as f64 * h, k[2] as f64 * h]
}

/// Signed indices with `|ξ| ≤ b` whose mirror is also representable.
pub(crate) fn ball_indices(axis: &Axis, b: f64) -> Vec<[i64; 3]> {
    let half = (axis.n / 2) as i64;
    let h = axis.freq_step();
    let kmax = ((b / h).floor() as i64).min(half - 1);
    let mut out = Vec::new();
    for a in -kmax..=kmax {
        for c in -kmax..=kmax {
            for d in -kmax..=kmax {
                let k = [a, c, d];
                if norm3(index_freq(axis, k)) <= b * (1.0 + 1e-12) {
                    out.push(k);
                }
            }
        }
    }
    out
}

/// True for the representative of each `±k` pair (and for `k = 0`).
pub(crate) fn is_canonical(k: &[i64]) -> bool {
    for v in k {
        if *v != 0 {
            return *v > 0;
        }
    }
    true
}

/// Recovers `f̂(ξ) = F̂(ξ, |ξ|)/ĝ(|ξ|)` on the grid frequencies of `axis`
/// inside `|ξ| ≤ b`.
///
/// The identity is evaluated on the branch `ω = +|ξ|` for one frequency of
/// each `±ξ` pair; the partner is filled by conjugation (`ω = −|ξ|`), which
/// the realness of the source guarantees. Entries with `|ĝ| < δ_min` are
/// kept but flagged invalid.
pub fn extract_fhat(
    ds: &BoundaryDataset,
    g: &SampledSignal,
    b: f64,
    delta_min: f64,
    axis: &Axis,
) -> Result<FourierSamples> {
    let band = check_bandwidth_condition(g, b, delta_min, DEFAULT_PROBES)?;
    if !band.satisfied {
        return Err(Error::Configuration(format!(
            "band condition fails: min |ghat| on (0, {b}) is {:.3e} < {delta_min:.1e}",
            band.delta
        )));
    }
    let nyquist = axis.freq_step() * (axis.n / 2) as f64;
    if b >= nyquist {
        return Err(Error::Configuration(format!(
            "band {b} reaches the reconstruction grid's Nyquist frequency {nyquist:.4}"
        )));
    }
    let mut integrator = BoundaryIntegrator::new(ds)?;
    let speed = ds.lambda.sqrt();
    let mut divisors: HashMap<u64, Complex64> = HashMap::new();
    let mut entries = Vec::new();
    for k in ball_indices(axis, b) {
        if !is_canonical(&k) {
            continue;
        }
        let xi = index_freq(axis, k);
        let omega = speed * norm3(xi);
        let gh = match divisors.get(&omega.to_bits()) {
            Some(v) => *v,
            None => {
                let v = ghat(g, omega)?;
                divisors.insert(omega.to_bits(), v);
                v
            }
        };
        let bi = integrator.evaluate(xi, omega)?;
        let valid = gh.norm() >= delta_min;
        let value = if gh.norm() > 0.0 { bi / gh } else { Complex64::new(0.0, 0.0) };
        entries.push(FourierEntry {
            index: k,
            xi,
            omega,
            value,
            valid,
            divisor_mag: gh.norm(),
        });
        if k != [0, 0, 0] {
            entries.push(FourierEntry {
                index: [-k[0], -k[1], -k[2]],
                xi: [-xi[0], -xi[1], -xi[2]],
                omega: -omega,
                value: value.conj(),
                valid,
                divisor_mag: gh.norm(),
            });
        }
    }
    Ok(FourierSamples {
        entries,
        band_b: b,
        axis: *axis,
    })
}

/// Inverse transform of the valid samples with `|ξ| ≤ k`; everything else
/// (including invalid entries) is zero.
pub fn reconstruct_ip1(samples: &FourierSamples, k: f64) -> Result<Array3<f64>> {
    if !(k >= 0.0) {
        return Err(Error::InvalidInput(format!("cutoff must be nonnegative, got {k}")));
    }
    let axis = samples.axis;
    let n = axis.n;
    let mut coeffs = ArrayD::<Complex64>::zeros(IxDyn(&[n, n, n]));
    for e in &samples.entries {
        if !e.valid || norm3(e.xi) > k * (1.0 + 1e-12) {
            continue;
        }
        let p: Vec<usize> = e
            .index
            .iter()
            .map(|v| axis.position(*v).expect("ball indices are representable"))
            .collect();
        coeffs[IxDyn(&p)] = e.value;
    }
    let out = inverse_nd_real(coeffs, &[axis; 3])?;
    Ok(out
        .into_dimensionality()
        .expect("three axes give a three-dimensional array"))
}

/// `‖a − b‖₂ / ‖b‖₂` over matching samples.
pub fn relative_l2<'x>(
    approx: impl IntoIterator<Item = &'x f64>,
    exact: impl IntoIterator<Item = &'x f64>,
) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in approx.into_iter().zip(exact) {
        num += (a - b) * (a - b);
        den += b * b;
    }
    if den == 0.0 {
        return num.sqrt();
    }
    (num / den).sqrt()
}
