use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One periodic axis `[center − L, center + L)` sampled at `n` nodes.
///
/// Mode indices use FFT ordering: storage position `p` carries the signed
/// index `k = p` for `p < n/2` and `k = p − n` otherwise, with angular
/// frequency `ξ_k = π k / L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub center: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Axis {
    pub fn new(center: f64, half_width: f64, n: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidInput(format!(
                "axis half width must be positive and finite, got {half_width}"
            )));
        }
        if n < 2 || n % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "axis size must be even and at least 2, got {n}"
            )));
        }
        Ok(Axis {
            center,
            half_width,
            n,
        })
    }

    /// Symmetric axis `[−L, L)`.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        Self::new(0.0, half_width, n)
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    /// Left end of the period, the coordinate of node 0.
    pub fn origin(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn node(&self, j: usize) -> f64 {
        self.origin() + j as f64 * self.step()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.node(j)).collect()
    }

    pub fn signed_index(&self, p: usize) -> i64 {
        if p < self.n / 2 {
            p as i64
        } else {
            p as i64 - self.n as i64
        }
    }

    /// Storage position of signed index `k`, if representable.
    pub fn position(&self, k: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        if k < -half || k >= half {
            return None;
        }
        Some(if k >= 0 { k as usize } else { (k + self.n as i64) as usize })
    }

    pub fn freq_step(&self) -> f64 {
        PI / self.half_width
    }

    pub fn freq(&self, p: usize) -> f64 {
        self.signed_index(p) as f64 * self.freq_step()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.n).map(|p| self.freq(p)).collect()
    }

    pub fn nyquist_position(&self) -> usize {
        self.n / 2
    }

    pub fn is_nyquist(&self, p: usize) -> bool {
        p == self.n / 2
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.origin() - 1e-12 && x <= self.center + self.half_width + 1e-12
    }
}

/// Periodic cubic box `[−L, L]³` with `n_space` modes per axis and a uniform
/// time grid on `[0, T]`.
///
/// Construction enforces the no-wrap condition `L ≥ R + √λ·T` for the
/// measurement radius `R`, so periodic images of the field cannot reach the
/// sphere before the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    half_width: f64,
    n_space: usize,
    horizon: f64,
    n_time: usize,
    lambda: f64,
    measure_radius: f64,
}

impl SimulationGrid {
    pub fn new(
        half_width: f64,
        n_space: usize,
        horizon: f64,
        n_time: usize,
        lambda: f64,
        measure_radius: f64,
    ) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if n_space < 16 || n_space % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "n_space must be even and at least 16, got {n_space}"
            )));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        if n_time < 2 {
            return Err(Error::InvalidInput(format!(
                "n_time must be at least 2, got {n_time}"
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(measure_radius > 0.0) {
            return Err(Error::InvalidInput(format!(
                "measurement radius must be positive, got {measure_radius}"
            )));
        }
        let reach = measure_radius + lambda.sqrt() * horizon;
        if half_width < reach * (1.0 - 1e-12) {
            return Err(Error::Geometry(format!(
                "no-wrap condition violated: L = {half_width} < R + sqrt(lambda) T = {reach}"
            )));
        }
        Ok(SimulationGrid {
            half_width,
            n_space,
            horizon,
            n_time,
            lambda,
            measure_radius,
        })
    }

    /// Grid whose time step is as close as possible to `dt` without exceeding it.
    pub fn with_time_step(
        half_width: f64,
        n_space: usize,
        horizon: f64,
        dt: f64,
        lambda: f64,
        measure_radius: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidInput(format!("time step must be positive, got {dt}")));
        }
        let n_time = (horizon / dt - 1e-9).ceil() as usize + 1;
        Self::new(half_width, n_space, horizon, n_time.max(2), lambda, measure_radius)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n_space(&self) -> usize {
        self.n_space
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_time(&self) -> usize {
        self.n_time
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn measure_radius(&self) -> f64 {
        self.measure_radius
    }

    pub fn dt(&self) -> f64 {
        self.horizon / (self.n_time - 1) as f64
    }

    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_time).map(|j| self.time(j)).collect()
    }

    pub fn axis(&self) -> Axis {
        Axis {
            center: 0.0,
            half_width: self.half_width,
            n: self.n_space,
        }
    }

    /// Same box and time step with a different `λ` and horizon.
    pub fn retuned(&self, lambda: f64, horizon: f64) -> Result<Self> {
        let dt = self.dt();
        let n_time = (horizon / dt).round() as usize + 1;
        let horizon = if n_time == self.n_time {
            self.horizon
        } else {
            (n_time - 1) as f64 * dt
        };
        Self::new(
            self.half_width,
            self.n_space,
            horizon,
            n_time,
            lambda,
            self.measure_radius,
        )
    }

    pub fn point_in_box(&self, x: [f64; 3]) -> bool {
        x.iter().all(|c| c.abs() <= self.half_width + 1e-12)
    }
}
