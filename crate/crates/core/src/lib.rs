//! Spectral-Galerkin simulation toolkit for the bilinear control system
//! `dψ/dt = Aψ + u(t) Bψ` with `A` skew-adjoint and diagonal in a known
//! eigenbasis and `B` a bounded skew-adjoint control potential.
//!
//! The crate builds finite-dimensional compressions of `(A, B)` for 1D
//! model geometries (Dirichlet box, flat torus), propagates states exactly
//! on piecewise-constant-plus-atoms controls by products of matrix
//! exponentials, computes the quantitative constants that govern norm
//! growth on the spectral Sobolev scale, and measures Galerkin truncation
//! error uniformly over seeded control families.

pub mod control;
pub mod error;
pub mod estimates;
pub mod expm;
pub mod galerkin;
pub mod linalg;
pub mod propagator;
pub mod quadrature;
pub mod spectral;

pub use control::Control;
pub use error::{Error, Result};
pub use estimates::{BoundName, BoundReport};
pub use galerkin::{ConvergenceReport, FamilySpec, HarnessParams, HeldoutSummary};
pub use propagator::{RecordSpec, TimeGrid, Trajectory};
pub use spectral::{Geometry, PotentialSpec, Provenance, SpectralModel, StateVector};
