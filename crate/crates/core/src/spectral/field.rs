use std::collections::BTreeMap;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use super::grid::{Axis, SimulationGrid};
use super::transform::{inverse_dft3, weighted_basis_row};
use crate::{Error, Result};

/// Groups the modes of a cubic grid by `k₁² + k₂² + k₃²`, i.e. by `|ξ|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellIndex {
    n: usize,
    shell_of: Vec<u32>,
    k2: Vec<u64>,
}

impl ShellIndex {
    pub fn new(n: usize) -> Self {
        let axis_k = |p: usize| -> i64 {
            if p < n / 2 {
                p as i64
            } else {
                p as i64 - n as i64
            }
        };
        let mut distinct = BTreeMap::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let s = (axis_k(a).pow(2) + axis_k(b).pow(2) + axis_k(c).pow(2)) as u64;
                    distinct.insert(s, 0u32);
                }
            }
        }
        let k2: Vec<u64> = distinct.keys().copied().collect();
        for (i, s) in k2.iter().enumerate() {
            distinct.insert(*s, i as u32);
        }
        let mut shell_of = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let s = (axis_k(a).pow(2) + axis_k(b).pow(2) + axis_k(c).pow(2)) as u64;
                    shell_of.push(distinct[&s]);
                }
            }
        }
        ShellIndex { n, shell_of, k2 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.k2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k2.is_empty()
    }

    /// Shell of the mode at storage position `(p₁, p₂, p₃)`.
    pub fn shell(&self, p: [usize; 3]) -> usize {
        self.shell_of[(p[0] * self.n + p[1]) * self.n + p[2]] as usize
    }

    pub fn shell_flat(&self, flat: usize) -> usize {
        self.shell_of[flat] as usize
    }

    /// `|ξ|` of every shell for the given axis.
    pub fn radii(&self, axis: &Axis) -> Vec<f64> {
        let h = axis.freq_step();
        self.k2.iter().map(|&s| h * (s as f64).sqrt()).collect()
    }
}

/// One separable contribution `A(ξ) K(|ξ|, t)` to a field.
#[derive(Debug, Clone)]
pub struct ModalTerm {
    /// Spatial coefficients in FFT storage order.
    pub spatial: Arc<Array3<Complex64>>,
    /// Time kernel per shell, shape `[shells, n_time]`.
    pub kernel: Arc<Array2<f64>>,
}

/// Fourier coefficients `û(ξ, t)` of a field on a [`SimulationGrid`].
///
/// Stored as a sum of [`ModalTerm`]s: the coefficient of mode `ξ` at time
/// index `j` is `Σ A(ξ) K(|ξ|, t_j)`. Dense time slices are materialized on
/// request.
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: SimulationGrid,
    shells: Arc<ShellIndex>,
    terms: Vec<ModalTerm>,
    source_duration: f64,
}

impl SpectralField {
    pub fn zeros(grid: SimulationGrid, shells: Arc<ShellIndex>) -> Self {
        SpectralField {
            grid,
            shells,
            terms: Vec::new(),
            source_duration: 0.0,
        }
    }

    pub fn from_terms(
        grid: SimulationGrid,
        shells: Arc<ShellIndex>,
        terms: Vec<ModalTerm>,
    ) -> Result<Self> {
        let n = grid.n_space();
        if shells.n() != n {
            return Err(Error::InvalidInput(format!(
                "shell index built for n = {}, grid has n = {n}",
                shells.n()
            )));
        }
        for t in &terms {
            if t.spatial.shape() != [n, n, n] {
                return Err(Error::InvalidInput(format!(
                    "spatial coefficients have shape {:?}, expected {n}³",
                    t.spatial.shape()
                )));
            }
            if t.kernel.shape() != [shells.len(), grid.n_time()] {
                return Err(Error::InvalidInput(format!(
                    "kernel has shape {:?}, expected [{}, {}]",
                    t.kernel.shape(),
                    shells.len(),
                    grid.n_time()
                )));
            }
        }
        Ok(SpectralField {
            grid,
            shells,
            terms,
            source_duration: 0.0,
        })
    }

    /// Records the temporal support `T₀` of the source that produced the field.
    pub fn with_source_duration(mut self, t0: f64) -> Self {
        self.source_duration = t0;
        self
    }

    pub fn source_duration(&self) -> f64 {
        self.source_duration
    }

    pub fn grid(&self) -> &SimulationGrid {
        &self.grid
    }

    pub fn shells(&self) -> &Arc<ShellIndex> {
        &self.shells
    }

    pub fn terms(&self) -> &[ModalTerm] {
        &self.terms
    }

    pub fn coeff(&self, p: [usize; 3], j: usize) -> Complex64 {
        let s = self.shells.shell(p);
        self.terms
            .iter()
            .map(|t| t.spatial[p] * t.kernel[[s, j]])
            .sum()
    }

    /// Dense coefficients at time index `j`.
    pub fn time_slice(&self, j: usize) -> Array3<Complex64> {
        let n = self.grid.n_space();
        let mut out = Array3::<Complex64>::zeros((n, n, n));
        for t in &self.terms {
            let kernel = t.kernel.column(j);
            for (flat, (o, a)) in out.iter_mut().zip(t.spatial.iter()).enumerate() {
                *o += a * kernel[self.shells.shell_flat(flat)];
            }
        }
        out
    }

    /// Real field samples on the grid nodes at time index `j`.
    pub fn values_on_grid(&self, j: usize) -> Result<Array3<f64>> {
        inverse_dft3(&self.time_slice(j), &self.grid.axis())
    }

    /// Componentwise `∂/∂x_d`; the Nyquist plane of the differentiated axis
    /// is set to zero.
    pub fn gradient(&self) -> [SpectralField; 3] {
        let axis = self.grid.axis();
        let freqs: Vec<f64> = (0..axis.n)
            .map(|p| if axis.is_nyquist(p) { 0.0 } else { axis.freq(p) })
            .collect();
        std::array::from_fn(|d| {
            let terms = self
                .terms
                .iter()
                .map(|t| {
                    let mut spatial = (*t.spatial).clone();
                    for ((i, j, k), v) in spatial.indexed_iter_mut() {
                        let xi = freqs[[i, j, k][d]];
                        *v *= Complex64::new(0.0, xi);
                    }
                    ModalTerm {
                        spatial: Arc::new(spatial),
                        kernel: Arc::clone(&t.kernel),
                    }
                })
                .collect();
            SpectralField {
                grid: self.grid,
                shells: Arc::clone(&self.shells),
                terms,
                source_duration: self.source_duration,
            }
        })
    }

    /// `Σ_ξ û(ξ, t_j) e^{iξ·x}` with the inverse-transform normalization, by
    /// direct summation at each point.
    pub fn evaluate_at_points(&self, points: &[[f64; 3]], j: usize) -> Result<Vec<Complex64>> {
        if j >= self.grid.n_time() {
            return Err(Error::InvalidInput(format!(
                "time index {j} out of range (n_time = {})",
                self.grid.n_time()
            )));
        }
        let axis = self.grid.axis();
        for x in points {
            if !self.grid.point_in_box(*x) {
                return Err(Error::Geometry(format!("point {x:?} lies outside the box")));
            }
        }
        let slice = self.time_slice(j);
        Ok(points
            .iter()
            .map(|x| evaluate_dense(&slice, &axis, *x))
            .collect())
    }

    /// `α·self + β·other` on the same grid.
    pub fn combine(&self, alpha: f64, other: &SpectralField, beta: f64) -> Result<SpectralField> {
        if self.grid != other.grid {
            return Err(Error::InvalidInput("fields live on different grids".into()));
        }
        let scaled = |t: &ModalTerm, s: f64| ModalTerm {
            spatial: Arc::new(t.spatial.mapv(|v| v * s)),
            kernel: Arc::clone(&t.kernel),
        };
        let mut terms: Vec<ModalTerm> = self.terms.iter().map(|t| scaled(t, alpha)).collect();
        terms.extend(other.terms.iter().map(|t| scaled(t, beta)));
        Ok(SpectralField {
            grid: self.grid,
            shells: Arc::clone(&self.shells),
            terms,
            source_duration: self.source_duration.max(other.source_duration),
        })
    }
}

/// Direct trigonometric-polynomial evaluation of one dense coefficient slice.
pub fn evaluate_dense(coeffs: &Array3<Complex64>, axis: &Axis, x: [f64; 3]) -> Complex64 {
    let e1 = weighted_basis_row(axis, x[0]);
    let e2 = weighted_basis_row(axis, x[1]);
    let e3 = weighted_basis_row(axis, x[2]);
    let n = axis.n;
    let mut total = Complex64::new(0.0, 0.0);
    for a in 0..n {
        let mut plane = Complex64::new(0.0, 0.0);
        for b in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for c in 0..n {
                row += coeffs[[a, b, c]] * e3[c];
            }
            plane += row * e2[b];
        }
        total += plane * e1[a];
    }
    total
}

/// Shell-binned projections of spatial coefficients onto point evaluations.
///
/// For each point `x` (with optional unit normal `ν`) and shell `s`,
/// `value[x, s] = Re Σ_{ξ ∈ s} A(ξ) b_ξ(x)` and
/// `normal[x, s] = Re Σ_{ξ ∈ s} i(ξ·ν) A(ξ) b_ξ(x)`, where `b_ξ` is the
/// weighted synthesis basis. Multiplying by a `[shell, time]` kernel gives
/// real traces `u(x, t)` and `∂_ν u(x, t)`.
#[derive(Debug, Clone)]
pub struct ShellProjection {
    pub value: Array2<f64>,
    pub normal: Option<Array2<f64>>,
}

impl ShellProjection {
    pub fn compute(
        spatial: &Array3<Complex64>,
        shells: &ShellIndex,
        axis: &Axis,
        points: &[[f64; 3]],
        normals: Option<&[[f64; 3]]>,
    ) -> Result<Self> {
        let n = axis.n;
        if spatial.shape() != [n, n, n] || shells.n() != n {
            return Err(Error::InvalidInput("projection shapes do not match the axis".into()));
        }
        if let Some(nv) = normals {
            if nv.len() != points.len() {
                return Err(Error::InvalidInput("one normal per point required".into()));
            }
        }
        let grad_freq: Vec<f64> = (0..n)
            .map(|p| if axis.is_nyquist(p) { 0.0 } else { axis.freq(p) })
            .collect();
        let n_shell = shells.len();
        let mut value = Array2::<f64>::zeros((points.len(), n_shell));
        let mut normal = normals.map(|_| Array2::<f64>::zeros((points.len(), n_shell)));
        let coeffs = spatial
            .as_slice()
            .expect("spatial coefficients are stored contiguously");
        let mut e12 = vec![Complex64::new(0.0, 0.0); n];
        for (ip, x) in points.iter().enumerate() {
            let e1 = weighted_basis_row(axis, x[0]);
            let e2 = weighted_basis_row(axis, x[1]);
            let e3 = weighted_basis_row(axis, x[2]);
            let nu = normals.map(|nv| nv[ip]);
            let mut vrow = value.row_mut(ip);
            let vrow = vrow.as_slice_mut().expect("row is contiguous");
            let mut nrow_owner = normal.as_mut().map(|m| m.row_mut(ip));
            let mut nrow = nrow_owner
                .as_mut()
                .map(|r| r.as_slice_mut().expect("row is contiguous"));
            for a in 0..n {
                for b in 0..n {
                    e12[b] = e1[a] * e2[b];
                }
                for b in 0..n {
                    let base = (a * n + b) * n;
                    let w12 = e12[b];
                    match (&mut nrow, nu) {
                        (Some(nr), Some(nu)) => {
                            let partial = grad_freq[a] * nu[0] + grad_freq[b] * nu[1];
                            for c in 0..n {
                                let v = coeffs[base + c] * w12 * e3[c];
                                let s = shells.shell_flat(base + c);
                                vrow[s] += v.re;
                                nr[s] -= (partial + grad_freq[c] * nu[2]) * v.im;
                            }
                        }
                        _ => {
                            for c in 0..n {
                                let v = coeffs[base + c] * w12 * e3[c];
                                vrow[shells.shell_flat(base + c)] += v.re;
                            }
                        }
                    }
                }
            }
        }
        Ok(ShellProjection { value, normal })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::transform::forward_dft3;
    use std::f64::consts::PI;

    fn grid(n: usize) -> SimulationGrid {
        SimulationGrid::new(PI, n, 1.0, 3, 1.0, 1.0).unwrap()
    }

    fn single_mode(n: usize, p: [usize; 3], c: Complex64, h: &[f64]) -> SpectralField {
        let g = grid(n);
        let shells = Arc::new(ShellIndex::new(n));
        let mut spatial = Array3::zeros((n, n, n));
        spatial[p] = c;
        let mut kernel = Array2::zeros((shells.len(), g.n_time()));
        let s = shells.shell(p);
        for (j, v) in h.iter().enumerate() {
            kernel[[s, j]] = *v;
        }
        SpectralField::from_terms(
            g,
            shells,
            vec![ModalTerm {
                spatial: Arc::new(spatial),
                kernel: Arc::new(kernel),
            }],
        )
        .unwrap()
    }

    #[test]
    fn shells_group_by_radius() {
        let s = ShellIndex::new(16);
        assert_eq!(s.shell([0, 0, 0]), 0);
        assert_eq!(s.shell([1, 0, 0]), s.shell([0, 15, 0]));
        assert_eq!(s.shell([3, 4, 0]), s.shell([0, 0, 5]));
        assert_ne!(s.shell([1, 1, 0]), s.shell([1, 0, 0]));
        let axis = Axis::centered(PI, 16).unwrap();
        assert!((s.radii(&axis)[s.shell([3, 4, 0])] - 5.0).abs() < 1e-14);
    }

    #[test]
    fn single_mode_evaluation() {
        let c = Complex64::new(0.7, -0.2);
        let f = single_mode(16, [2, 0, 15], c, &[0.0, 1.0, 2.0]);
        let x = [0.31, -1.2, 2.05];
        let v = f.evaluate_at_points(&[x], 2).unwrap()[0];
        // ξ = (2, 0, −1); weight (2π)^{−3/2}
        let w = (2.0 * PI).powf(-1.5);
        let expect = c * 2.0 * w * Complex64::from_polar(1.0, 2.0 * x[0] - x[2]);
        assert!((v - expect).norm() < 1e-14);
    }

    #[test]
    fn evaluation_matches_grid_nodes() {
        let n = 16;
        let g = grid(n);
        let axis = g.axis();
        let x = axis.nodes();
        let f = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
            (x[i].cos() + 0.5 * (2.0 * x[j]).sin()) * (x[k] - 0.3).cos().exp()
        });
        let shells = Arc::new(ShellIndex::new(n));
        let mut kernel = Array2::zeros((shells.len(), 3));
        kernel.column_mut(1).fill(1.0);
        let field = SpectralField::from_terms(
            g,
            shells,
            vec![ModalTerm {
                spatial: Arc::new(forward_dft3(&f, &axis).unwrap()),
                kernel: Arc::new(kernel),
            }],
        )
        .unwrap();
        let on_grid = field.values_on_grid(1).unwrap();
        let pts: Vec<[f64; 3]> = [(0, 0, 0), (3, 7, 11), (15, 1, 8)]
            .iter()
            .map(|&(i, j, k)| [x[i], x[j], x[k]])
            .collect();
        let v = field.evaluate_at_points(&pts, 1).unwrap();
        for (p, (i, j, k)) in v.iter().zip([(0, 0, 0), (3, 7, 11), (15, 1, 8)]) {
            assert!((p.re - on_grid[[i, j, k]]).abs() < 1e-12);
            assert!((p.re - f[[i, j, k]]).abs() < 1e-12);
            assert!(p.im.abs() < 1e-12);
        }
    }

    #[test]
    fn outside_point_rejected() {
        let f = single_mode(16, [0, 0, 0], Complex64::new(1.0, 0.0), &[1.0, 1.0, 1.0]);
        assert!(matches!(
            f.evaluate_at_points(&[[0.0, 0.0, 4.0]], 0),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn gradient_of_single_mode() {
        let c = Complex64::new(1.0, 0.5);
        let f = single_mode(16, [1, 0, 0], c, &[1.0, 1.0, 1.0]);
        let [gx, gy, gz] = f.gradient();
        assert!((gx.coeff([1, 0, 0], 0) - c * Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(gy.coeff([1, 0, 0], 0), Complex64::new(0.0, 0.0));
        assert_eq!(gz.coeff([1, 0, 0], 0), Complex64::new(0.0, 0.0));
        let k = single_mode(16, [0, 0, 0], c, &[1.0, 1.0, 1.0]);
        assert!(k.gradient().iter().all(|g| g.time_slice(0).iter().all(|v| v.norm() == 0.0)));
    }

    #[test]
    fn gaussian_gradient_on_nodes() {
        let n = 64;
        let g = SimulationGrid::new(2.0, n, 0.5, 2, 1.0, 0.5).unwrap();
        let axis = g.axis();
        let sigma = 0.2;
        let x = axis.nodes();
        let f = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
            (-(x[i] * x[i] + x[j] * x[j] + x[k] * x[k]) / (2.0 * sigma * sigma)).exp()
        });
        let shells = Arc::new(ShellIndex::new(n));
        let kernel = Array2::from_elem((shells.len(), 2), 1.0);
        let field = SpectralField::from_terms(
            g,
            shells,
            vec![ModalTerm {
                spatial: Arc::new(forward_dft3(&f, &axis).unwrap()),
                kernel: Arc::new(kernel),
            }],
        )
        .unwrap();
        let grad = field.gradient();
        let gx = grad[0].values_on_grid(0).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for ((i, j, k), v) in gx.indexed_iter() {
            let exact = -x[i] / (sigma * sigma) * f[[i, j, k]];
            num += (v - exact).powi(2);
            den += exact * exact;
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn projection_reproduces_direct_evaluation() {
        let n = 16;
        let g = grid(n);
        let axis = g.axis();
        let x = axis.nodes();
        let f = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
            (-(x[i].powi(2) + (x[j] - 0.2).powi(2) + x[k].powi(2))).exp()
        });
        let spatial = forward_dft3(&f, &axis).unwrap();
        let shells = ShellIndex::new(n);
        let pts = [[0.3, -0.7, 1.1], [-2.0, 0.5, 0.25]];
        let nrm = [[0.0, 0.6, 0.8], [1.0, 0.0, 0.0]];
        let proj = ShellProjection::compute(&spatial, &shells, &axis, &pts, Some(&nrm)).unwrap();
        let direct: Vec<f64> = pts.iter().map(|p| evaluate_dense(&spatial, &axis, *p).re).collect();
        for (i, d) in direct.iter().enumerate() {
            assert!((proj.value.row(i).sum() - d).abs() < 1e-12);
        }
        // normal derivative against the gradient field evaluated directly
        let shells = Arc::new(shells);
        let kernel = Array2::from_elem((shells.len(), 3), 1.0);
        let field = SpectralField::from_terms(
            g,
            Arc::clone(&shells),
            vec![ModalTerm {
                spatial: Arc::new(spatial),
                kernel: Arc::new(kernel),
            }],
        )
        .unwrap();
        let grad = field.gradient();
        for (i, p) in pts.iter().enumerate() {
            let dn: f64 = (0..3)
                .map(|d| nrm[i][d] * grad[d].evaluate_at_points(&[*p], 0).unwrap()[0].re)
                .sum();
            let got = proj.normal.as_ref().unwrap().row(i).sum();
            assert!((got - dn).abs() < 1e-12, "{got} vs {dn}");
        }
    }
}
