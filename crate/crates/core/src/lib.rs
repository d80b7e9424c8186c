//! Nonconforming least-squares spectral element solver for two-dimensional
//! elliptic interface problems `-∇·(p∇u) = f` with piecewise-constant `p`,
//! whose solutions carry `r^λ` singularities where interfaces meet the
//! boundary or each other.
//!
//! Near each singular point the mesh is geometrically graded and the
//! elements are posed in modified polar coordinates `(τ, θ) = (ln r, θ)`,
//! where the singular function becomes analytic. Elsewhere elements are
//! mapped from the master square. The discrete solution minimizes a weighted
//! least-squares functional of PDE residuals, boundary residuals and jumps
//! measured in fractional Sobolev norms; the normal equations are solved
//! matrix-free by preconditioned conjugate gradients.

pub mod basis;
pub mod config;
pub mod error;
pub mod functional;
pub mod harness;
pub mod mesh;
pub mod norms;
pub mod problem;
pub mod singularity;
pub mod solver;

pub use error::{Error, Result};
