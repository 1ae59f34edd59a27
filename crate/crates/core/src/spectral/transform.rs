//! Discrete approximations of the continuous Fourier transform
//! `f̂(ξ) = (2π)^{−d/2} ∫ f(x) e^{−iξ·x} dx` on periodic tensor grids.

use std::f64::consts::PI;

use ndarray::{Array3, ArrayD, Axis as NdAxis, Dimension, IxDyn};
use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};

use super::grid::Axis;
use crate::{Error, Result};

/// Imaginary residue (relative to the largest magnitude) tolerated when a
/// complex result is declared real.
pub const REAL_TOLERANCE: f64 = 1e-10;

fn inv_sqrt_2pi() -> f64 {
    1.0 / (2.0 * PI).sqrt()
}

fn check_shape(shape: &[usize], axes: &[Axis]) -> Result<()> {
    if shape.len() != axes.len() || shape.iter().zip(axes).any(|(s, a)| *s != a.n) {
        let want: Vec<usize> = axes.iter().map(|a| a.n).collect();
        return Err(Error::InvalidInput(format!(
            "array shape {shape:?} does not match grid shape {want:?}"
        )));
    }
    Ok(())
}

fn fft_along(data: &mut ArrayD<Complex64>, dim: usize, direction: FftDirection) {
    let n = data.shape()[dim];
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft(n, direction);
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for mut lane in data.lanes_mut(NdAxis(dim)) {
        for (b, v) in buf.iter_mut().zip(lane.iter()) {
            *b = *v;
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (v, b) in lane.iter_mut().zip(&buf) {
            *v = *b;
        }
    }
}

fn scale_along(data: &mut ArrayD<Complex64>, dim: usize, factors: &[Complex64]) {
    for mut lane in data.lanes_mut(NdAxis(dim)) {
        for (v, f) in lane.iter_mut().zip(factors) {
            *v *= f;
        }
    }
}

/// Forward transform on a tensor grid; output in FFT storage order.
pub fn forward_nd(mut data: ArrayD<Complex64>, axes: &[Axis]) -> Result<ArrayD<Complex64>> {
    check_shape(data.shape(), axes)?;
    for (dim, ax) in axes.iter().enumerate() {
        fft_along(&mut data, dim, FftDirection::Forward);
        let a = ax.origin();
        let w = inv_sqrt_2pi() * ax.step();
        let factors: Vec<Complex64> = (0..ax.n)
            .map(|p| Complex64::from_polar(w, -ax.freq(p) * a))
            .collect();
        scale_along(&mut data, dim, &factors);
    }
    Ok(data)
}

/// Exact discrete inverse of [`forward_nd`], complex valued.
pub fn inverse_nd(mut coeffs: ArrayD<Complex64>, axes: &[Axis]) -> Result<ArrayD<Complex64>> {
    check_shape(coeffs.shape(), axes)?;
    for (dim, ax) in axes.iter().enumerate() {
        let a = ax.origin();
        let w = inv_sqrt_2pi() * ax.freq_step();
        let factors: Vec<Complex64> = (0..ax.n)
            .map(|p| Complex64::from_polar(w, ax.freq(p) * a))
            .collect();
        scale_along(&mut coeffs, dim, &factors);
        fft_along(&mut coeffs, dim, FftDirection::Inverse);
    }
    Ok(coeffs)
}

/// Largest violation of `c(−ξ) = conj(c(ξ))`, relative to the largest
/// coefficient magnitude. Zero for an all-zero array.
pub fn symmetry_residual(coeffs: &ArrayD<Complex64>, axes: &[Axis]) -> Result<f64> {
    check_shape(coeffs.shape(), axes)?;
    // strip the origin phase so the check is on the raw DFT, where the
    // Nyquist entry is its own mirror
    let phases: Vec<Vec<Complex64>> = axes
        .iter()
        .map(|ax| {
            (0..ax.n)
                .map(|p| Complex64::from_polar(1.0, ax.freq(p) * ax.origin()))
                .collect()
        })
        .collect();
    let d = |idx: &[usize]| -> Complex64 {
        let mut v = coeffs[IxDyn(idx)];
        for (dim, &p) in idx.iter().enumerate() {
            v *= phases[dim][p];
        }
        v
    };
    let mut max_mag: f64 = 0.0;
    let mut max_res: f64 = 0.0;
    let mut mirror = vec![0usize; axes.len()];
    for (idx, _) in coeffs.indexed_iter() {
        let idx = idx.slice();
        for (dim, &p) in idx.iter().enumerate() {
            mirror[dim] = (axes[dim].n - p) % axes[dim].n;
        }
        let a = d(idx);
        let b = d(&mirror);
        max_mag = max_mag.max(a.norm());
        max_res = max_res.max((a - b.conj()).norm());
    }
    if max_mag == 0.0 {
        return Ok(0.0);
    }
    Ok(max_res / max_mag)
}

/// Drops the imaginary part after checking it is negligible.
pub fn into_real(values: ArrayD<Complex64>) -> Result<ArrayD<f64>> {
    let max_mag = values.iter().fold(0.0f64, |m, v| m.max(v.norm()));
    let max_im = values.iter().fold(0.0f64, |m, v| m.max(v.im.abs()));
    if max_mag > 0.0 && max_im > REAL_TOLERANCE * max_mag {
        return Err(Error::SymmetryViolation {
            residual: max_im / max_mag,
        });
    }
    Ok(values.mapv(|v| v.re))
}

/// Inverse transform of conjugate-symmetric coefficients to real samples.
pub fn inverse_nd_real(coeffs: ArrayD<Complex64>, axes: &[Axis]) -> Result<ArrayD<f64>> {
    let residual = symmetry_residual(&coeffs, axes)?;
    if residual > REAL_TOLERANCE {
        return Err(Error::SymmetryViolation { residual });
    }
    into_real(inverse_nd(coeffs, axes)?)
}

/// Forward transform of real samples on the cubic grid `axis³`.
pub fn forward_dft3(samples: &Array3<f64>, axis: &Axis) -> Result<Array3<Complex64>> {
    let axes = [*axis; 3];
    let data = samples.mapv(|v| Complex64::new(v, 0.0)).into_dyn();
    let out = forward_nd(data, &axes)?;
    Ok(out
        .into_dimensionality()
        .expect("three-dimensional input gives three-dimensional output"))
}

/// Inverse of [`forward_dft3`]; rejects coefficients that are not
/// conjugate-symmetric to `1e−10`.
pub fn inverse_dft3(coeffs: &Array3<Complex64>, axis: &Axis) -> Result<Array3<f64>> {
    let axes = [*axis; 3];
    let out = inverse_nd_real(coeffs.clone().into_dyn(), &axes)?;
    Ok(out
        .into_dimensionality()
        .expect("three-dimensional input gives three-dimensional output"))
}

/// Per-axis synthesis basis used for evaluation off the grid.
///
/// Ordinary modes contribute `e^{iξx}`. The Nyquist mode is evaluated as
/// `e^{iξ_N a} cos(ξ_N (x − a))`, which agrees with `e^{iξ_N x}` on the nodes
/// and keeps the interpolant of real data real between them.
pub fn basis(axis: &Axis, p: usize, x: f64) -> Complex64 {
    let xi = axis.freq(p);
    if axis.is_nyquist(p) {
        let a = axis.origin();
        Complex64::from_polar(1.0, xi * a) * (xi * (x - a)).cos()
    } else {
        Complex64::from_polar(1.0, xi * x)
    }
}

/// All basis values of one axis at `x`, scaled by the inverse-transform
/// weight `(2π)^{−1/2} π/L`.
pub fn weighted_basis_row(axis: &Axis, x: f64) -> Vec<Complex64> {
    let w = inv_sqrt_2pi() * axis.freq_step();
    (0..axis.n).map(|p| basis(axis, p, x) * w).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_samples(axis: &Axis, sigma: f64) -> Array3<f64> {
        let x = axis.nodes();
        Array3::from_shape_fn((axis.n, axis.n, axis.n), |(i, j, k)| {
            let r2 = x[i] * x[i] + x[j] * x[j] + x[k] * x[k];
            (-r2 / (2.0 * sigma * sigma)).exp()
        })
    }

    #[test]
    fn gaussian_transform_at_origin() {
        let axis = Axis::centered(2.0, 64).unwrap();
        let f = forward_dft3(&gaussian_samples(&axis, 0.2), &axis).unwrap();
        let s3 = 0.2f64.powi(3);
        assert!((f[[0, 0, 0]].re - s3).abs() / s3 < 1e-6);
        // a few more modes against σ³ e^{−σ²|ξ|²/2}
        for (p, q, r) in [(1, 0, 0), (3, 2, 63), (10, 5, 60)] {
            let xi2 = axis.freq(p).powi(2) + axis.freq(q).powi(2) + axis.freq(r).powi(2);
            let exact = s3 * (-0.02 * xi2).exp();
            assert!((f[[p, q, r]] - exact).norm() < 1e-9);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let axis = Axis::centered(1.0, 16).unwrap();
        let z = Array3::<f64>::zeros((16, 16, 16));
        let f = forward_dft3(&z, &axis).unwrap();
        assert!(f.iter().all(|v| v.norm() == 0.0));
        let back = inverse_dft3(&f, &axis).unwrap();
        assert!(back.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn round_trip_and_symmetry() {
        let axis = Axis::new(0.3, 1.7, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = Array3::from_shape_fn((16, 16, 16), |_| rng.random::<f64>() - 0.5);
        let c = forward_dft3(&f, &axis).unwrap();
        let res = symmetry_residual(&c.clone().into_dyn(), &[axis; 3]).unwrap();
        assert!(res < 1e-12, "symmetry residual {res}");
        let back = inverse_dft3(&c, &axis).unwrap();
        let dev = (&back - &f).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(dev < 1e-12, "round trip deviation {dev}");
    }

    #[test]
    fn constant_mode_by_direct_sum() {
        let axis = Axis::centered(1.5, 16).unwrap();
        let mut c = Array3::<Complex64>::zeros((16, 16, 16));
        c[[0, 0, 0]] = Complex64::new(2.5, 0.0);
        let f = inverse_dft3(&c, &axis).unwrap();
        // (2π)^{−3/2} (π/L)³ c
        let expect = 2.5 * ((PI / 1.5) / (2.0 * PI).sqrt()).powi(3);
        assert!(f.iter().all(|v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn asymmetric_coefficients_rejected() {
        let axis = Axis::centered(1.0, 16).unwrap();
        let mut c = Array3::<Complex64>::zeros((16, 16, 16));
        c[[1, 0, 0]] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            inverse_dft3(&c, &axis),
            Err(Error::SymmetryViolation { .. })
        ));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let axis = Axis::centered(1.0, 16).unwrap();
        let f = Array3::<f64>::zeros((16, 16, 8));
        assert!(matches!(
            forward_dft3(&f, &axis),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn parseval() {
        let axis = Axis::new(-0.2, 2.0, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let f = Array3::from_shape_fn((16, 16, 16), |_| rng.random::<f64>());
        let c = forward_dft3(&f, &axis).unwrap();
        let space: f64 = f.iter().map(|v| v * v).sum::<f64>() * axis.step().powi(3);
        let freq: f64 = c.iter().map(|v| v.norm_sqr()).sum::<f64>() * axis.freq_step().powi(3);
        assert!((space - freq).abs() / space < 1e-10);
    }

    #[test]
    fn basis_matches_nodes() {
        let axis = Axis::new(0.4, 1.3, 8).unwrap();
        for j in 0..8 {
            let x = axis.node(j);
            for p in 0..8 {
                let plain = Complex64::from_polar(1.0, axis.freq(p) * x);
                assert!((basis(&axis, p, x) - plain).norm() < 1e-12);
            }
        }
    }
}
