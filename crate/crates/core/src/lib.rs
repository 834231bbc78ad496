//! Simulator for one-dimensional non-Hermitian tight-binding chains whose
//! hopping rates carry a phase-modulated imaginary part.
//!
//! Layout:
//! - [`lattice`]: parameter types and Hamiltonian builders, closed-form
//!   dispersion, adiabatic elimination of the auxiliary sublattice.
//! - [`dynamics`]: RK4 and exact propagation, schedules, trajectories.
//! - [`analysis`]: initial excitations and transport/storage observables.
//! - [`phase`]: angles written as numbers or `pi` expressions.
//! - [`protocols`]: named experiment runners and presets.
//! - [`io`]: configuration documents, CSV/metrics/manifest files, SVG heatmaps.
//! - [`cli`]: the command-line front end.

// NaN-rejecting guards are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod lattice;
pub mod dynamics;
pub mod analysis;
pub mod phase;
pub mod protocols;
pub mod io;
pub mod cli;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
