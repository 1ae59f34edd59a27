//! Periodic grids, Fourier transforms with the `(2π)^{−d/2}` convention, and
//! off-grid evaluation of band-limited fields.

pub mod field;
pub mod grid;
pub mod transform;

pub use field::{evaluate_dense, ModalTerm, ShellIndex, ShellProjection, SpectralField};
pub use grid::{Axis, SimulationGrid};
pub use transform::{
    forward_dft3, forward_nd, inverse_dft3, inverse_nd, inverse_nd_real, symmetry_residual,
};
