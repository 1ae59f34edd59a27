//! Forward simulation of the constant-coefficient acoustic wave equation in a
//! periodic box, and Fourier-based reconstruction of compactly supported
//! sources from traces on a measurement sphere.
//!
//! Three reconstruction pipelines are provided:
//!
//! - [`probe`]: separable sources `f(x) g(t)` with known `g`, recovering `f`
//!   from Dirichlet/Neumann traces at a single wave speed.
//! - [`multiparam`]: general sources `F(x, t)` recovered from a family of
//!   traces measured at several values of the medium parameter `λ`.
//! - [`planar`]: sources `f(x₁, x₂, t) g(x₃)` with known `g`, including a
//!   polynomial continuation step that fills the frequency region the data
//!   cannot reach.
//!
//! [`bounds`] evaluates the analytic stability estimates, and [`harness`]
//! drives parameter sweeps that compare measured reconstruction errors with
//! those estimates.

pub mod bounds;
pub mod error;
pub mod forward;
pub mod harness;
pub mod io;
pub mod multiparam;
pub mod planar;
pub mod probe;
pub mod quadrature;
pub mod source;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
