//! Closed-form source descriptors and their sampling on grids.
//!
//! A source is a finite sum of separable terms `a(x) h(t)`. Every profile is
//! compactly supported by construction; [`SourceSpec::validate`] checks the
//! declared supports against the profiles rather than trusting them.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::quadrature::gauss_legendre_on;
use crate::spectral::Axis;
use crate::{Error, Result};

/// Radially symmetric bump supported in `r ≤ radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialShape {
    /// `max(e^{−r²/2σ²} − e^{−R²/2σ²}, 0)`, exactly zero for `r ≥ R`.
    TruncatedGaussian { sigma: f64, radius: f64 },
    /// `(1 − r²/R²)^p` for `r < R`.
    PolynomialBump { radius: f64, power: u32 },
}

impl RadialShape {
    pub fn radius(&self) -> f64 {
        match self {
            RadialShape::TruncatedGaussian { radius, .. } => *radius,
            RadialShape::PolynomialBump { radius, .. } => *radius,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RadialShape::TruncatedGaussian { sigma, radius } => {
                if !(*sigma > 0.0 && *radius > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "truncated Gaussian needs sigma > 0 and radius > 0, got {sigma}, {radius}"
                    )));
                }
            }
            RadialShape::PolynomialBump { radius, power } => {
                if !(*radius > 0.0) || *power < 2 {
                    return Err(Error::InvalidInput(format!(
                        "polynomial bump needs radius > 0 and power ≥ 2, got {radius}, {power}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn value(&self, r: f64) -> f64 {
        let r = r.abs();
        match self {
            RadialShape::TruncatedGaussian { sigma, radius } => {
                if r >= *radius {
                    return 0.0;
                }
                let s2 = 2.0 * sigma * sigma;
                ((-r * r / s2).exp() - (-radius * radius / s2).exp()).max(0.0)
            }
            RadialShape::PolynomialBump { radius, power } => {
                if r >= *radius {
                    return 0.0;
                }
                (1.0 - (r / radius).powi(2)).powi(*power as i32)
            }
        }
    }

    /// Fourier transform of the radial function viewed in `dim` dimensions
    /// (1, 2 or 3), as a function of `ρ = |ξ|`, by composite Gauss–Legendre
    /// quadrature of the radial integral.
    pub fn transform(&self, rho: f64, dim: usize) -> f64 {
        let big_r = self.radius();
        let panels = 32;
        let mut total = 0.0;
        for k in 0..panels {
            let a = big_r * k as f64 / panels as f64;
            let b = big_r * (k + 1) as f64 / panels as f64;
            let (x, w) = gauss_legendre_on(20, a, b);
            for (r, wt) in x.iter().zip(&w) {
                let f = self.value(*r);
                total += wt
                    * f
                    * match dim {
                        1 => 2.0 * (rho * r).cos() / (2.0 * PI).sqrt(),
                        2 => r * bessel_j0(rho * r),
                        _ => (2.0 / PI).sqrt() * r * r * sinc(rho * r),
                    };
            }
        }
        total
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        1.0 - x * x / 6.0 + x.powi(4) / 120.0
    } else {
        x.sin() / x
    }
}

/// `J₀(z) = (1/π) ∫₀^π cos(z sin θ) dθ`.
pub fn bessel_j0(z: f64) -> f64 {
    let panels = 8 + (z.abs() / 4.0).ceil() as usize;
    let mut s = 0.0;
    for k in 0..panels {
        let a = PI * k as f64 / panels as f64;
        let b = PI * (k + 1) as f64 / panels as f64;
        let (x, w) = gauss_legendre_on(16, a, b);
        for (t, wt) in x.iter().zip(&w) {
            s += wt * (z * t.sin()).cos();
        }
    }
    s / PI
}

/// Spatial factor of a source term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialProfile {
    /// `amplitude · shape(|x − center|)`.
    Ball {
        shape: RadialShape,
        center: [f64; 3],
        amplitude: f64,
    },
    /// `amplitude · inplane(|x̃ − c̃|) · vertical(x₃ − c₃)` with `x̃ = (x₁, x₂)`.
    Cylinder {
        inplane: RadialShape,
        inplane_center: [f64; 2],
        vertical: RadialShape,
        vertical_center: f64,
        amplitude: f64,
    },
}

impl SpatialProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpatialProfile::Ball { shape, .. } => shape.validate(),
            SpatialProfile::Cylinder {
                inplane, vertical, ..
            } => {
                inplane.validate()?;
                vertical.validate()
            }
        }
    }

    pub fn value(&self, x: [f64; 3]) -> f64 {
        match self {
            SpatialProfile::Ball {
                shape,
                center,
                amplitude,
            } => {
                let r = ((x[0] - center[0]).powi(2)
                    + (x[1] - center[1]).powi(2)
                    + (x[2] - center[2]).powi(2))
                .sqrt();
                amplitude * shape.value(r)
            }
            SpatialProfile::Cylinder {
                inplane,
                inplane_center,
                vertical,
                vertical_center,
                amplitude,
            } => {
                let r = ((x[0] - inplane_center[0]).powi(2) + (x[1] - inplane_center[1]).powi(2))
                    .sqrt();
                amplitude * inplane.value(r) * vertical.value(x[2] - vertical_center)
            }
        }
    }

    /// Radius of the smallest origin-centred ball containing the support.
    pub fn support_radius(&self) -> f64 {
        match self {
            SpatialProfile::Ball { shape, center, .. } => {
                (center[0].powi(2) + center[1].powi(2) + center[2].powi(2)).sqrt() + shape.radius()
            }
            SpatialProfile::Cylinder {
                inplane,
                inplane_center,
                vertical,
                vertical_center,
                ..
            } => {
                let rho = (inplane_center[0].powi(2) + inplane_center[1].powi(2)).sqrt()
                    + inplane.radius();
                let z = vertical_center.abs() + vertical.radius();
                (rho * rho + z * z).sqrt()
            }
        }
    }

    /// Closed-form continuous transform `(2π)^{−3/2} ∫ a(x) e^{−iξ·x} dx`.
    pub fn transform(&self, xi: [f64; 3]) -> Complex64 {
        match self {
            SpatialProfile::Ball {
                shape,
                center,
                amplitude,
            } => {
                let rho = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
                let phase = -(xi[0] * center[0] + xi[1] * center[1] + xi[2] * center[2]);
                Complex64::from_polar(amplitude * shape.transform(rho, 3), phase)
            }
            SpatialProfile::Cylinder {
                inplane,
                inplane_center,
                vertical,
                vertical_center,
                amplitude,
            } => {
                let rho = (xi[0] * xi[0] + xi[1] * xi[1]).sqrt();
                let phase = -(xi[0] * inplane_center[0]
                    + xi[1] * inplane_center[1]
                    + xi[2] * vertical_center);
                Complex64::from_polar(
                    amplitude * inplane.transform(rho, 2) * vertical.transform(xi[2].abs(), 1),
                    phase,
                )
            }
        }
    }

    /// Samples on the cubic grid `axis³`.
    pub fn sample(&self, axis: &Axis) -> Array3<f64> {
        let x = axis.nodes();
        Array3::from_shape_fn((axis.n, axis.n, axis.n), |(i, j, k)| {
            self.value([x[i], x[j], x[k]])
        })
    }
}

/// Temporal factor of a source term, supported in `[start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TemporalProfile {
    /// `exp(1 − 1/(1 − s²))` with `s` mapping `(start, end)` onto `(−1, 1)`.
    Bump { start: f64, end: f64 },
    /// `e^{−(t − center)²/η}` times the flat-top window `exp(1 − 1/(1 − s⁸))`.
    WindowedGaussian {
        center: f64,
        eta: f64,
        start: f64,
        end: f64,
    },
}

impl TemporalProfile {
    pub fn support(&self) -> (f64, f64) {
        match self {
            TemporalProfile::Bump { start, end } => (*start, *end),
            TemporalProfile::WindowedGaussian { start, end, .. } => (*start, *end),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.support();
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidInput(format!(
                "temporal support must satisfy start < end, got ({a}, {b})"
            )));
        }
        if let TemporalProfile::WindowedGaussian { eta, .. } = self {
            if !(*eta > 0.0) {
                return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
            }
        }
        Ok(())
    }

    pub fn value(&self, t: f64) -> f64 {
        let (a, b) = self.support();
        if t <= a || t >= b {
            return 0.0;
        }
        let s = 2.0 * (t - a) / (b - a) - 1.0;
        match self {
            TemporalProfile::Bump { .. } => (1.0 - 1.0 / (1.0 - s * s)).exp(),
            TemporalProfile::WindowedGaussian { center, eta, .. } => {
                let window = (1.0 - 1.0 / (1.0 - s.powi(8))).exp();
                (-(t - center).powi(2) / eta).exp() * window
            }
        }
    }

    pub fn sample(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|t| self.value(*t)).collect()
    }

    /// `(2π)^{−1/2} ∫ h(t) e^{−iωt} dt` by composite Gauss–Legendre.
    pub fn transform(&self, omega: f64) -> Complex64 {
        let (a, b) = self.support();
        let panels = 64 + (omega.abs() * (b - a) / 2.0).ceil() as usize;
        let mut total = Complex64::new(0.0, 0.0);
        for k in 0..panels {
            let lo = a + (b - a) * k as f64 / panels as f64;
            let hi = a + (b - a) * (k + 1) as f64 / panels as f64;
            let (x, w) = gauss_legendre_on(16, lo, hi);
            for (t, wt) in x.iter().zip(&w) {
                total += Complex64::from_polar(wt * self.value(*t), -omega * t);
            }
        }
        total / (2.0 * PI).sqrt()
    }
}

/// One separable contribution `a(x) h(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceTerm {
    pub space: SpatialProfile,
    pub time: TemporalProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// `f(x) g(t)` with a single known `g`.
    SeparableXt,
    /// Arbitrary `F(x, t)`, represented as a sum of separable terms.
    General,
    /// `f(x̃, t) g(x₃)` with a single known vertical profile `g`.
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub terms: Vec<SourceTerm>,
    /// Declared spatial support radius (`R₀` for planar sources, where it
    /// bounds both `|x̃|` and `|x₃|`).
    pub support_radius: f64,
    /// Declared temporal support `(0, T₀)`.
    pub support_time: f64,
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidInput("source has no terms".into()));
        }
        if !(self.support_radius > 0.0 && self.support_time > 0.0) {
            return Err(Error::InvalidInput(format!(
                "declared supports must be positive, got R = {}, T0 = {}",
                self.support_radius, self.support_time
            )));
        }
        for (i, term) in self.terms.iter().enumerate() {
            term.space.validate()?;
            term.time.validate()?;
            let (a, b) = term.time.support();
            if a < 0.0 || b > self.support_time * (1.0 + 1e-12) {
                return Err(Error::InvalidInput(format!(
                    "term {i}: temporal support ({a}, {b}) not inside (0, {})",
                    self.support_time
                )));
            }
            match (&self.kind, &term.space) {
                (SourceKind::Planar, SpatialProfile::Cylinder {
                    inplane,
                    inplane_center,
                    vertical,
                    vertical_center,
                    ..
                }) => {
                    let rho = inplane_center[0].hypot(inplane_center[1]) + inplane.radius();
                    let z = vertical_center.abs() + vertical.radius();
                    if rho > self.support_radius * (1.0 + 1e-12) || z > self.support_radius * (1.0 + 1e-12)
                    {
                        return Err(Error::InvalidInput(format!(
                            "term {i}: planar support (ρ = {rho}, |x3| = {z}) exceeds R0 = {}",
                            self.support_radius
                        )));
                    }
                }
                (SourceKind::Planar, _) => {
                    return Err(Error::InvalidInput(format!(
                        "term {i}: planar sources need cylinder profiles"
                    )));
                }
                _ => {
                    let r = term.space.support_radius();
                    if r > self.support_radius * (1.0 + 1e-12) {
                        return Err(Error::InvalidInput(format!(
                            "term {i}: spatial support radius {r} exceeds declared {}",
                            self.support_radius
                        )));
                    }
                }
            }
        }
        match self.kind {
            SourceKind::SeparableXt => {
                let g = &self.terms[0].time;
                if self.terms.iter().any(|t| &t.time != g) {
                    return Err(Error::InvalidInput(
                        "separable sources need one temporal profile shared by all terms".into(),
                    ));
                }
            }
            SourceKind::Planar => {
                let v0 = self.vertical_profile().expect("checked cylinder above");
                for t in &self.terms {
                    if let SpatialProfile::Cylinder { vertical, vertical_center, .. } = &t.space {
                        if vertical != v0 || *vertical_center != 0.0 {
                            return Err(Error::InvalidInput(
                                "planar sources need one vertical profile centred at x3 = 0".into(),
                            ));
                        }
                    }
                }
            }
            SourceKind::General => {}
        }
        Ok(())
    }

    /// `F(x, t)`.
    pub fn value(&self, x: [f64; 3], t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.space.value(x) * term.time.value(t))
            .sum()
    }

    /// The known temporal factor `g` of a separable source.
    pub fn temporal_factor(&self) -> Result<&TemporalProfile> {
        match self.kind {
            SourceKind::SeparableXt => Ok(&self.terms[0].time),
            _ => Err(Error::InvalidInput("source is not of separable kind".into())),
        }
    }

    /// `f(x) = Σ a_i(x)` for separable sources.
    pub fn spatial_value(&self, x: [f64; 3]) -> f64 {
        self.terms.iter().map(|t| t.space.value(x)).sum()
    }

    /// `f̂(ξ)` of a separable source by closed form.
    pub fn spatial_transform(&self, xi: [f64; 3]) -> Complex64 {
        self.terms.iter().map(|t| t.space.transform(xi)).sum()
    }

    /// `F̂(ξ, ω) = (2π)^{−2} ∫∫ F e^{−i(ξ·x + ωt)}`.
    pub fn transform(&self, xi: [f64; 3], omega: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|t| t.space.transform(xi) * t.time.transform(omega))
            .sum()
    }

    /// The known vertical profile `g(x₃)` of a planar source.
    pub fn vertical_profile(&self) -> Result<&RadialShape> {
        match (&self.kind, &self.terms[0].space) {
            (SourceKind::Planar, SpatialProfile::Cylinder { vertical, .. }) => Ok(vertical),
            _ => Err(Error::InvalidInput("source is not of planar kind".into())),
        }
    }

    /// `f(x̃, t)` of a planar source, i.e. `F` with the vertical factor removed.
    pub fn planar_value(&self, x1: f64, x2: f64, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| match &term.space {
                SpatialProfile::Cylinder {
                    inplane,
                    inplane_center,
                    amplitude,
                    ..
                } => {
                    let r = (x1 - inplane_center[0]).hypot(x2 - inplane_center[1]);
                    amplitude * inplane.value(r) * term.time.value(t)
                }
                SpatialProfile::Ball { .. } => 0.0,
            })
            .sum()
    }

    /// `f̂(ξ̃, ω) = (2π)^{−3/2} ∫∫ f(x̃, t) e^{−i(ξ̃·x̃ + ωt)}` of a planar source.
    pub fn planar_transform(&self, xi1: f64, xi2: f64, omega: f64) -> Complex64 {
        self.terms
            .iter()
            .map(|term| match &term.space {
                SpatialProfile::Cylinder {
                    inplane,
                    inplane_center,
                    amplitude,
                    ..
                } => {
                    let rho = xi1.hypot(xi2);
                    let phase = -(xi1 * inplane_center[0] + xi2 * inplane_center[1]);
                    Complex64::from_polar(amplitude * inplane.transform(rho, 2), phase)
                        * term.time.transform(omega)
                }
                SpatialProfile::Ball { .. } => Complex64::new(0.0, 0.0),
            })
            .sum()
    }

    /// Stable identity for caching forward solves.
    pub fn cache_key(&self) -> String {
        serde_json::to_string(self).expect("source spec serializes")
    }
}
