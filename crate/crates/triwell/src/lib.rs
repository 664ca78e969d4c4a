//! Dynamics of an ultracold bosonic gas in a symmetric triple-well trap.
//!
//! The gas is described by three localized modes with tunneling between every
//! pair of wells, on-site collisions and cross-well collision corrections. Two
//! levels of description are provided and kept numerically comparable:
//!
//! * a mean-field (time-dependent variational) description on the manifold of
//!   SU(3) coherent states, parametrized by two complex amplitudes `(w1, w2)`
//!   relative to the third well ([`classical`]);
//! * the exact many-body problem in the symmetric Fock space of `N` bosons in
//!   three modes ([`quantum`]).
//!
//! [`equilibria`] catalogs the mean-field equilibrium points (twin-condensate
//! branch, single-depleted-well states, vortices) with closed-form and numeric
//! linear stability. [`sections`] computes Poincaré sections of the mean-field
//! flow. [`presets`] bundles ready-made parameter sets for the standard runs.

pub mod classical;
pub mod equilibria;
mod error;
pub mod model;
pub mod ode;
pub mod poly;
pub mod presets;
pub mod quantum;
pub mod sections;

pub use error::Error;

/// Convenient alias used throughout: double-precision complex number.
pub type C64 = num_complex::Complex64;

/// Library-wide result type.
pub type Result<T> = std::result::Result<T, Error>;
