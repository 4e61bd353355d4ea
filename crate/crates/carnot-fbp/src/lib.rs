//! Variational solver for singular Prandtl-Batchelor-type free boundary
//! problems driven by the sub-Laplacian of a stratified Lie group.
//!
//! The crate is organized around a discrete energy
//!
//! ```text
//! E_eps(u) = 1/2 <u, A u>  +  sum_j w_j [ B((u_j-1)/eps) - lambda*G_eps((u_j-1)_+) - beta*Phi(u_j) ]
//! ```
//!
//! where `A` is a flux-form sub-Laplacian assembled so that the discrete
//! divergence theorem holds exactly, `w` are Haar quadrature weights and the
//! bulk terms regularize the characteristic-function and singular parts of
//! the limit energy. Modules:
//!
//! * [`geometry`] — group models (Euclidean, Heisenberg), box grids, Haar weights.
//! * [`operators`] — horizontal gradient, flux-form sub-Laplacian, norms.
//! * [`model`] — nonlinearity, mollifier pair, singular cutoff, energies.
//! * [`auxiliary`] — principal eigenpair, singular auxiliary solution, barriers.
//! * [`solvers`] — energy minimization and the numerical mountain pass.
//! * [`continuation`] — eps-continuation driver, free boundary extraction, diagnostics.
//! * [`oracle`] — independent 1-D shooting references and dense scans.
//!
//! All numerics are generic over the scalar type through the [`Real`] trait;
//! concrete `f64` aliases are exported at the crate root.

pub mod auxiliary;
pub mod continuation;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod solvers;
pub mod verify;

mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete aliases for the default double-precision instantiation.
pub type Grid64 = geometry::Grid<f64>;
pub type ScalarField64 = geometry::ScalarField<f64>;
pub type ModelParams64 = model::ModelParams<f64>;
pub type CutoffContext64 = model::CutoffContext<f64>;
pub type SubLaplacian64 = operators::SubLaplacian<f64>;
pub type Eigenpair64 = auxiliary::Eigenpair<f64>;
pub type SolveReport64 = solvers::SolveReport<f64>;
pub type FreeBoundary64 = continuation::FreeBoundary<f64>;
