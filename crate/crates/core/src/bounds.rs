//! Closed-form stability estimates for the three inverse problems.
//!
//! Everything here is formula evaluation. The unknown constant of each
//! estimate enters as `c_fit`, which the harness fits per sweep.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{norm3, FourierSamples};

/// Formula branch of the lower bound on `μ(z)`, valid for `z > 2^{1/4} L`.
pub fn mu_formula(z: f64, l: f64) -> f64 {
    let q = (z / l).powi(4) - 1.0;
    1.0 / (PI * q.sqrt())
}

/// Piecewise lower bound on the harmonic measure `μ(z)`.
pub fn mu_lower(z: f64, l: f64) -> Result<f64> {
    if !(l > 0.0) || !(z > l) || !z.is_finite() {
        return Err(Error::Domain(format!("mu_lower needs z > L > 0, got z={z}, L={l}")));
    }
    if z <= 2f64.powf(0.25) * l {
        Ok(0.5)
    } else {
        Ok(mu_formula(z, l))
    }
}

/// `(4π/3)² R³ |k|³ e^{2R|Im k|} ‖f‖²`.
pub fn lemma1_bound(k: Complex64, radius: f64, f_norm: f64) -> f64 {
    let c = 4.0 * PI / 3.0;
    c * c * radius.powi(3) * k.norm().powi(3) * (2.0 * radius * k.im.abs()).exp() * f_norm * f_norm
}

/// Frequency-sample sets over which a truncated energy can be computed.
pub trait RegionSamples {
    /// Largest region parameter the samples support.
    fn coverage(&self) -> f64;
    /// `Σ |value|² · cell` over the samples inside the region of parameter `s`.
    fn energy_within(&self, s: f64) -> f64;
}

impl RegionSamples for FourierSamples {
    fn coverage(&self) -> f64 {
        self.band_b
    }

    fn energy_within(&self, s: f64) -> f64 {
        let cell = self.axis.freq_step().powi(3);
        self.entries
            .iter()
            .filter(|e| e.valid && norm3(e.xi) <= s * (1.0 + 1e-12))
            .map(|e| e.value.norm_sqr() * cell)
            .sum()
    }
}

/// Energy of the samples inside the region of parameter `k`; for IP1 data
/// this is `∫_{|ξ|≤k} |f̂|² dξ` by the Cartesian cell rule.
pub fn spherical_energy<S: RegionSamples + ?Sized>(samples: &S, k: f64) -> Result<f64> {
    if !(k >= 0.0) {
        return Err(Error::InvalidInput(format!("energy radius must be nonnegative, got {k}")));
    }
    let cover = samples.coverage();
    if k > cover * (1.0 + 1e-12) {
        return Err(Error::Coverage(format!(
            "samples cover radius {cover} but energy was requested up to {k}"
        )));
    }
    Ok(samples.energy_within(k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffBranch {
    /// `k = b^{2/3}|ln ε|^{1/4}/((2R+3)π)^{1/3}`.
    Balanced,
    /// `k = b`.
    Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub k: f64,
    pub branch: CutoffBranch,
    /// `2^{1/4}((2R+3)π)^{1/3} b^{1/3}`.
    pub threshold: f64,
    /// `|ln ε|^{1/4}`.
    pub log_root: f64,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < (-1.0f64).exp()) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1/e), got {epsilon}")));
    }
    Ok(())
}

/// Cutoff rule for the IP1 inversion.
pub fn select_cutoff(b: f64, epsilon: f64, radius: f64) -> Result<Cutoff> {
    check_epsilon(epsilon)?;
    if !(b > 0.0) || !b.is_finite() {
        return Err(Error::Domain(format!("band must be positive, got {b}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {radius}")));
    }
    select_cutoff_log(b, epsilon.ln().abs(), radius)
}

/// Same rule, with `|ln ε|` given directly so that tiny `ε` (e.g. `e^{-10⁴}`)
/// stays representable.
pub fn select_cutoff_log(b: f64, log_inv_epsilon: f64, radius: f64) -> Result<Cutoff> {
    if !(log_inv_epsilon > 1.0) {
        return Err(Error::Domain(format!("|ln ε| must exceed 1, got {log_inv_epsilon}")));
    }
    if !(b > 0.0) || !(radius > 0.0) {
        return Err(Error::Domain(format!("need b > 0 and R > 0, got b={b}, R={radius}")));
    }
    let geom = ((2.0 * radius + 3.0) * PI).cbrt();
    let threshold = 2f64.powf(0.25) * geom * b.cbrt();
    let log_root = log_inv_epsilon.powf(0.25);
    let (k, branch) = if threshold < log_root {
        (b.powf(2.0 / 3.0) * log_root / geom, CutoffBranch::Balanced)
    } else {
        (b, CutoffBranch::Band)
    };
    Ok(Cutoff {
        k,
        branch,
        threshold,
        log_root,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Ip1,
    Ip2,
    Ip3,
}

impl std::str::FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ip1" => Ok(Problem::Ip1),
            "ip2" => Ok(Problem::Ip2),
            "ip3" => Ok(Problem::Ip3),
            other => Err(Error::InvalidInput(format!("unknown problem {other:?}"))),
        }
    }
}

impl std::fmt::Display for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Problem::Ip1 => "ip1",
            Problem::Ip2 => "ip2",
            Problem::Ip3 => "ip3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// `b` for IP1/IP3, `Λ` for IP2.
    pub window: f64,
    pub epsilon: f64,
    pub m: f64,
    pub radius: f64,
    pub r0: f64,
    pub t0: f64,
    pub alpha: f64,
    pub c_fit: f64,
}

impl BoundInputs {
    pub fn new(window: f64, epsilon: f64, m: f64) -> Self {
        BoundInputs {
            window,
            epsilon,
            m,
            radius: 1.0,
            r0: 0.5,
            t0: 1.0,
            alpha: 0.5,
            c_fit: 1.0,
        }
    }

    pub fn validate(&self, problem: Problem) -> Result<()> {
        check_epsilon(self.epsilon)?;
        if !(self.m > 1.0) {
            return Err(Error::Domain(format!("M must exceed 1, got {}", self.m)));
        }
        if !(self.window > 1.0) || !self.window.is_finite() {
            return Err(Error::Domain(format!("window must exceed 1, got {}", self.window)));
        }
        if !(self.c_fit > 0.0) || !self.c_fit.is_finite() {
            return Err(Error::Domain(format!("C must be positive, got {}", self.c_fit)));
        }
        if problem != Problem::Ip1 && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTerm {
    pub name: String,
    /// Already multiplied by `c_fit`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub problem: Problem,
    pub total: f64,
    pub terms: Vec<BoundTerm>,
    /// IP2 only: tail with exponent `1 − (1−α)/2`, not part of `total`.
    pub proof_tail: Option<f64>,
    /// IP3 only: `b^{4/3}|α ln ε|^{1/2}` and `(b^{2/3}|α ln ε|^{1/4})²`.
    pub ip3_raw: Option<[f64; 2]>,
}

impl BoundReport {
    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|t| t.name == name).map(|t| t.value)
    }
}

/// Right-hand side of the stability estimate for `problem`.
pub fn theorem_bound(problem: Problem, inp: &BoundInputs) -> Result<BoundReport> {
    inp.validate(problem)?;
    let b = inp.window;
    let eps = inp.epsilon;
    let m2 = inp.m * inp.m;
    let ln = eps.ln().abs();
    let c = inp.c_fit;
    let a = inp.alpha;
    let mut proof_tail = None;
    let mut ip3_raw = None;
    let raw: Vec<(&str, f64)> = match problem {
        Problem::Ip1 => vec![
            ("lipschitz", b.powi(5) * eps * eps),
            ("logarithmic", m2 / (b.powf(4.0 / 3.0) * ln.sqrt())),
        ],
        Problem::Ip2 => {
            proof_tail = Some(c * m2 / (b * ln.powf(1.0 - (1.0 - a) / 2.0)));
            vec![
                ("lipschitz", b.powi(10) * eps * eps),
                ("logarithmic", m2 / (b * ln.powf((1.0 - a) / 2.0))),
            ]
        }
        Problem::Ip3 => {
            let al = (a * ln).abs();
            let first = b.powf(4.0 / 3.0) * al.sqrt();
            let second = (b.powf(2.0 / 3.0) * al.powf(0.25)).powi(2);
            ip3_raw = Some([first, second]);
            vec![
                ("lipschitz", b.powi(5) * eps * eps),
                (
                    "continuation",
                    b.powi(3)
                        * (2.0 * b * (1.0 - a)).exp()
                        * (1.0 + b).powf(2.0 * a)
                        * eps.powf(2.0 * a),
                ),
                ("logarithmic", m2 / first),
            ]
        }
    };
    let terms: Vec<BoundTerm> = raw
        .into_iter()
        .map(|(name, v)| BoundTerm {
            name: name.to_string(),
            value: c * v,
        })
        .collect();
    Ok(BoundReport {
        problem,
        total: terms.iter().map(|t| t.value).sum(),
        terms,
        proof_tail,
        ip3_raw,
    })
}

/// Interpolation-type estimate `N · M₀^{1−μ} · data^μ` with user-supplied
/// `(N, μ)`. The geometric inputs are recorded for reporting only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuationBound {
    pub m0: f64,
    pub eta: f64,
    pub region_measure: f64,
    pub dims: usize,
    pub n: f64,
    pub mu: f64,
}

impl ContinuationBound {
    pub fn new(m0: f64, eta: f64, region_measure: f64, dims: usize, n: f64, mu: f64) -> Result<Self> {
        if !(m0 > 0.0) || !(eta > 0.0) {
            return Err(Error::Domain(format!("need M0 > 0 and eta > 0, got {m0}, {eta}")));
        }
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Domain(format!("mu must lie in (0, 1), got {mu}")));
        }
        if !(n > 0.0) {
            return Err(Error::Domain(format!("N must be positive, got {n}")));
        }
        Ok(ContinuationBound {
            m0,
            eta,
            region_measure,
            dims,
            n,
            mu,
        })
    }

    pub fn evaluate(&self, data: f64) -> f64 {
        self.n * self.m0.powf(1.0 - self.mu) * data.max(0.0).powf(self.mu)
    }

    pub fn curve(&self, data: &[f64]) -> Vec<f64> {
        data.iter().map(|d| self.evaluate(*d)).collect()
    }
}

/// `N · M₀^{1−μ} · data^μ` for a single data value.
pub fn continuation_bound(m0: f64, eta: f64, n: f64, mu: f64, data: f64) -> Result<f64> {
    Ok(ContinuationBound::new(m0, eta, 0.0, 3, n, mu)?.evaluate(data))
}
