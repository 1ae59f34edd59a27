//! Sources `F = f(x̃, t) g(x₃)` with known vertical profile `g` and `λ = 1`.
//!
//! With a test frequency `(ξ̃, ξ₃, ω)` on the light cone the boundary identity
//! gives `f̂(ξ̃, ω) ĝ(ξ₃)`. Fixing `(ξ̃, ω)` on a Cartesian grid and solving
//! `ξ₃ = sign(ω)√(ω² − |ξ̃|²)` recovers `f̂` inside the cone `|ξ̃| ≤ |ω|`;
//! the gap outside the cone can be filled by polynomial extrapolation.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use ndarray::{Array3, ArrayD, IxDyn};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::BoundaryDataset;
use crate::probe::{
    check_bandwidth_condition, ghat, is_canonical, BoundaryIntegrator, SampledSignal, DEFAULT_PROBES,
};
use crate::quadrature::legendre_table;
use crate::source::SourceSpec;
use crate::spectral::{inverse_nd_real, Axis};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarEntry {
    /// Signed indices `(k₁, k₂)` on the in-plane axis and `k_ω` on the time axis.
    pub index: [i64; 3],
    pub xi1: f64,
    pub xi2: f64,
    pub omega: f64,
    pub value: Complex64,
    pub xi3: f64,
    pub divisor_mag: f64,
    pub valid: bool,
    /// Filled by extrapolation rather than recovered from data.
    pub extrapolated: bool,
}

impl PlanarEntry {
    fn inplane_norm(&self) -> f64 {
        self.xi1.hypot(self.xi2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarSamples {
    pub entries: Vec<PlanarEntry>,
    pub band_b: f64,
    pub inplane: Axis,
    pub time: Axis,
}

impl PlanarSamples {
    pub fn n_valid(&self) -> usize {
        self.entries.iter().filter(|e| e.valid).count()
    }

    /// Largest `|value(−ξ̃, −ω) − conj(value(ξ̃, ω))|` over stored pairs.
    pub fn conjugate_residual(&self) -> f64 {
        let map: HashMap<[i64; 3], Complex64> =
            self.entries.iter().map(|e| (e.index, e.value)).collect();
        self.entries
            .iter()
            .filter_map(|e| {
                map.get(&e.index.map(|v| -v))
                    .map(|v| (v - e.value.conj()).norm())
            })
            .fold(0.0, f64::max)
    }

    /// Samples of a known `f̂` on the same index set as `extract_fhat_planar`
    /// would produce, all valid.
    pub fn from_fn(
        inplane: Axis,
        time: Axis,
        b: f64,
        f: impl Fn(f64, f64, f64) -> Complex64,
    ) -> Self {
        let entries = cone_indices(&inplane, &time, b)
            .into_iter()
            .map(|(index, xi1, xi2, omega, xi3)| PlanarEntry {
                index,
                xi1,
                xi2,
                omega,
                value: f(xi1, xi2, omega),
                xi3,
                divisor_mag: 1.0,
                valid: xi3.abs() < b,
                extrapolated: false,
            })
            .collect();
        PlanarSamples {
            entries,
            band_b: b,
            inplane,
            time,
        }
    }
}

/// Grid points `(k₁, k₂, k_ω)` with `|ξ̃| ≤ b` and `|ξ̃| ≤ |ω| ≤ √(|ξ̃|² + b²)`,
/// excluding Nyquist indices, with the matching `ξ₃ = sign(ω)√(ω² − |ξ̃|²)`.
fn cone_indices(inplane: &Axis, time: &Axis, b: f64) -> Vec<([i64; 3], f64, f64, f64, f64)> {
    let hx = inplane.freq_step();
    let ht = time.freq_step();
    let kx = ((b / hx).floor() as i64).min(inplane.n as i64 / 2 - 1);
    let wmax = (2.0f64).sqrt() * b;
    let kt = ((wmax / ht).floor() as i64).min(time.n as i64 / 2 - 1);
    let tol = 1.0 + 1e-12;
    let mut out = Vec::new();
    for a in -kx..=kx {
        for c in -kx..=kx {
            let (x1, x2) = (a as f64 * hx, c as f64 * hx);
            let r = x1.hypot(x2);
            if r > b * tol {
                continue;
            }
            for q in -kt..=kt {
                let w = q as f64 * ht;
                if w.abs() < r || w.abs() > (r * r + b * b).sqrt() * tol {
                    continue;
                }
                let x3 = w.signum() * (w * w - r * r).max(0.0).sqrt();
                out.push(([a, c, q], x1, x2, w, x3));
            }
        }
    }
    out
}

/// Support half-width `R₀` of the nonzero samples of `g`.
fn support_half_width(g: &SampledSignal) -> f64 {
    let first = g.values.iter().position(|v| *v != 0.0);
    let last = g.values.iter().rposition(|v| *v != 0.0);
    match (first, last) {
        (Some(i), Some(j)) => {
            let a = g.start + i as f64 * g.step;
            let b = g.start + j as f64 * g.step;
            a.abs().max(b.abs())
        }
        _ => 0.0,
    }
}

/// Recovers `f̂(ξ̃, ω)` on the Cartesian `(ξ̃, ω)` grid of `inplane² × time`
/// inside the set reached by `|ξ₃| ≤ b`. Entries with `|ĝ(ξ₃)| < δ_min` are
/// kept but flagged invalid.
pub fn extract_fhat_planar(
    ds: &BoundaryDataset,
    g: &SampledSignal,
    b: f64,
    delta_min: f64,
    inplane: &Axis,
    time: &Axis,
) -> Result<PlanarSamples> {
    if (ds.lambda - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInput(format!(
            "planar recovery assumes lambda = 1, dataset has {}",
            ds.lambda
        )));
    }
    let r0 = support_half_width(g);
    if r0 >= ds.radius / 2f64.sqrt() {
        return Err(Error::Geometry(format!(
            "vertical profile reaches {r0}, must stay below R/sqrt(2) = {:.4}",
            ds.radius / 2f64.sqrt()
        )));
    }
    let band = check_bandwidth_condition(g, b, delta_min, DEFAULT_PROBES)?;
    if !band.satisfied {
        return Err(Error::Configuration(format!(
            "band condition fails: min |ghat| on (0, {b}) is {:.3e} < {delta_min:.1e}",
            band.delta
        )));
    }
    let mut integrator = BoundaryIntegrator::new(ds)?;
    let mut divisors: HashMap<u64, Complex64> = HashMap::new();
    let mut entries = Vec::new();
    for (index, xi1, xi2, omega, xi3) in cone_indices(inplane, time, b) {
        if !is_canonical(&index) {
            continue;
        }
        let gh = match divisors.get(&xi3.to_bits()) {
            Some(v) => *v,
            None => {
                let v = ghat(g, xi3)?;
                divisors.insert(xi3.to_bits(), v);
                v
            }
        };
        let bi = integrator.evaluate([xi1, xi2, xi3], omega)?;
        let valid = gh.norm() >= delta_min && xi3.abs() < b;
        let value = if gh.norm() > 0.0 { bi / gh } else { Complex64::new(0.0, 0.0) };
        let entry = PlanarEntry {
            index,
            xi1,
            xi2,
            omega,
            value,
            xi3,
            divisor_mag: gh.norm(),
            valid,
            extrapolated: false,
        };
        entries.push(entry);
        if index != [0, 0, 0] {
            entries.push(mirror(&entry));
        }
    }
    Ok(PlanarSamples {
        entries,
        band_b: b,
        inplane: *inplane,
        time: *time,
    })
}

fn mirror(e: &PlanarEntry) -> PlanarEntry {
    PlanarEntry {
        index: e.index.map(|v| -v),
        xi1: -e.xi1,
        xi2: -e.xi2,
        omega: -e.omega,
        value: e.value.conj(),
        xi3: -e.xi3,
        ..*e
    }
}

/// Product Legendre basis `P_i(u)P_j(v)P_k(w)` with `i + j + k ≤ d` on the
/// scaled variables `(ξ₁, ξ₂, ω)/b`.
fn basis_row(d: usize, b: f64, xi1: f64, xi2: f64, omega: f64) -> Vec<f64> {
    let pu = legendre_table(d, xi1 / b);
    let pv = legendre_table(d, xi2 / b);
    let pw = legendre_table(d, omega / b);
    let mut row = Vec::with_capacity(n_coefficients(d));
    for i in 0..=d {
        for j in 0..=d - i {
            for k in 0..=d - i - j {
                row.push(pu[i] * pv[j] * pw[k]);
            }
        }
    }
    row
}

pub fn n_coefficients(d: usize) -> usize {
    (d + 1) * (d + 2) * (d + 3) / 6
}

/// Fills the grid points of the gap `|ξ̃| ≥ |ω|`, `|ξ̃|² + ω² ≤ b²` that carry
/// no valid sample, using a least-squares polynomial of total degree
/// `degree` fitted to the valid samples. Valid samples are never changed.
pub fn continuation_fill(samples: &PlanarSamples, b: f64, degree: usize) -> Result<PlanarSamples> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput(format!("fill radius must be positive, got {b}")));
    }
    let fit: Vec<&PlanarEntry> = samples
        .entries
        .iter()
        .filter(|e| e.valid && !e.extrapolated)
        .collect();
    let m = n_coefficients(degree);
    if fit.len() < m {
        return Err(Error::Fit(format!(
            "degree {degree} needs {m} coefficients but only {} valid samples exist",
            fit.len()
        )));
    }
    let mut a = DMatrix::<f64>::zeros(fit.len(), m);
    for (r, e) in fit.iter().enumerate() {
        for (c, v) in basis_row(degree, b, e.xi1, e.xi2, e.omega).into_iter().enumerate() {
            a[(r, c)] = v;
        }
    }
    let rhs_re = DVector::from_iterator(fit.len(), fit.iter().map(|e| e.value.re));
    let rhs_im = DVector::from_iterator(fit.len(), fit.iter().map(|e| e.value.im));
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-13;
    let c_re = svd.solve(&rhs_re, eps).map_err(|e| Error::Fit(e.to_string()))?;
    let c_im = svd.solve(&rhs_im, eps).map_err(|e| Error::Fit(e.to_string()))?;
    let eval = |xi1: f64, xi2: f64, w: f64| {
        let row = basis_row(degree, b, xi1, xi2, w);
        let re: f64 = row.iter().zip(c_re.iter()).map(|(p, c)| p * c).sum();
        let im: f64 = row.iter().zip(c_im.iter()).map(|(p, c)| p * c).sum();
        Complex64::new(re, im)
    };

    let mut out = samples.clone();
    let present: HashMap<[i64; 3], usize> = out
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (e.index, i))
        .collect();
    let (ix, it) = (samples.inplane, samples.time);
    let (hx, ht) = (ix.freq_step(), it.freq_step());
    let kx = ((b / hx).floor() as i64).min(ix.n as i64 / 2 - 1);
    let kt = ((b / ht).floor() as i64).min(it.n as i64 / 2 - 1);
    let tol = 1.0 + 1e-12;
    for p in -kx..=kx {
        for q in -kx..=kx {
            for k in -kt..=kt {
                let index = [p, q, k];
                if !is_canonical(&index) {
                    continue;
                }
                let (x1, x2, w) = (p as f64 * hx, q as f64 * hx, k as f64 * ht);
                let r = x1.hypot(x2);
                if r < w.abs() || r * r + w * w > b * b * tol * tol {
                    continue;
                }
                if let Some(i) = present.get(&index) {
                    if out.entries[*i].valid {
                        continue;
                    }
                }
                let mut v = eval(x1, x2, w);
                if index == [0, 0, 0] {
                    v = Complex64::new(v.re, 0.0);
                }
                let entry = PlanarEntry {
                    index,
                    xi1: x1,
                    xi2: x2,
                    omega: w,
                    value: v,
                    xi3: 0.0,
                    divisor_mag: 0.0,
                    valid: true,
                    extrapolated: true,
                };
                let mut put = |e: PlanarEntry| match present.get(&e.index) {
                    Some(i) => out.entries[*i] = e,
                    None => out.entries.push(e),
                };
                put(entry);
                if index != [0, 0, 0] {
                    put(mirror(&entry));
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarReport {
    pub cutoff: f64,
    pub total: f64,
    /// Inside the cone with `|ξ₃| < s` and `|ξ̃| ≤ s`.
    pub kept: f64,
    /// Extrapolated samples in the gap `|ξ̃| ≥ |ω|`, `|ξ̃|² + ω² ≤ s²`.
    pub kept_fill: f64,
    /// Inside the cone with `|ω| > s`, outside the kept set.
    pub discarded_e1: f64,
    /// In the gap but not kept.
    pub discarded_e2: f64,
    /// Outside the cone with `|ξ̃|² + ω² > s²`.
    pub discarded_e3: f64,
}

impl PlanarReport {
    pub fn discarded(&self) -> f64 {
        self.discarded_e1 + self.discarded_e2 + self.discarded_e3
    }
}

/// Inverts the valid samples that lie in the kept region for cutoff `s`,
/// returning `f` on `inplane² × time` nodes indexed `[x₁, x₂, t]`.
pub fn invert_planar(samples: &PlanarSamples, s: f64) -> Result<(Array3<f64>, PlanarReport)> {
    if !(s >= 0.0) {
        return Err(Error::InvalidInput(format!("cutoff must be nonnegative, got {s}")));
    }
    let (ix, it) = (samples.inplane, samples.time);
    let cell = ix.freq_step().powi(2) * it.freq_step();
    let mut report = PlanarReport {
        cutoff: s,
        total: 0.0,
        kept: 0.0,
        kept_fill: 0.0,
        discarded_e1: 0.0,
        discarded_e2: 0.0,
        discarded_e3: 0.0,
    };
    let mut coeffs = ArrayD::<Complex64>::zeros(IxDyn(&[ix.n, ix.n, it.n]));
    let tol = 1.0 + 1e-12;
    for e in samples.entries.iter().filter(|e| e.valid) {
        let en = e.value.norm_sqr() * cell;
        report.total += en;
        let r = e.inplane_norm();
        let w = e.omega.abs();
        let in_cone = r <= w * tol && !e.extrapolated;
        let keep = if in_cone {
            let x3 = (w * w - r * r).max(0.0).sqrt();
            s > 0.0 && r <= s * tol && x3 < s
        } else {
            e.extrapolated && r * r + w * w <= s * s * tol * tol && s > 0.0
        };
        if keep {
            if e.extrapolated {
                report.kept_fill += en;
            } else {
                report.kept += en;
            }
            let p = [
                ix.position(e.index[0]),
                ix.position(e.index[1]),
                it.position(e.index[2]),
            ];
            let p: Vec<usize> = p
                .iter()
                .map(|v| v.ok_or_else(|| Error::InvalidInput("sample index off the grid".into())))
                .collect::<Result<_>>()?;
            coeffs[IxDyn(&p)] = e.value;
        } else if in_cone {
            report.discarded_e1 += en;
        } else if r * r + w * w <= s * s * tol * tol {
            report.discarded_e2 += en;
        } else {
            report.discarded_e3 += en;
        }
    }
    let f = inverse_nd_real(coeffs, &[ix, ix, it])?;
    let f = f
        .into_dimensionality()
        .expect("three axes give a three-dimensional array");
    Ok((f, report))
}

/// `f(x̃, t)` of a planar source on the nodes of `inplane² × time`.
pub fn sample_planar(source: &SourceSpec, inplane: &Axis, time: &Axis) -> Array3<f64> {
    let xs = inplane.nodes();
    let ts = time.nodes();
    Array3::from_shape_fn((inplane.n, inplane.n, time.n), |(a, b, q)| {
        source.planar_value(xs[a], xs[b], ts[q])
    })
}
