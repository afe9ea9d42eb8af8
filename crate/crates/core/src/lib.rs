//! Numerical laboratory for Langevin dynamics on spiked Wigner matrices.
//!
//! The crate is organised the way the computations depend on each other:
//!
//! - [`matrix_model`] samples spiked GOE instances, diagonalises them and
//!   evaluates the Hamiltonian in the eigenbasis.
//! - [`thresholds`] turns a phase point and three eigenvalues into the overlap
//!   thresholds, drift floor, Bakry–Émery constant and the modified Hamiltonian.
//! - [`free_energy`] holds the closed-form free energies, the semicircle
//!   transforms, the contour-integral partition function and the exact finite-N
//!   law of the top overlap.
//! - [`dynamics`] integrates the spherical Langevin SDE, the reduced overlap SDE
//!   and the Ornstein–Uhlenbeck comparison processes.
//! - [`experiments`] runs replica ensembles and compares them with predictions.
//! - [`io`] writes CSV tables, JSON manifests and spectrum caches.

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod free_energy;
pub mod io;
pub mod matrix_model;
pub mod rng;
pub mod stats;
pub mod thresholds;

pub use error::{Result, SlabError};
pub use matrix_model::{PhasePoint, SphereState, Spectrum, SpikedInstance};
pub use thresholds::{EigenTriple, ThresholdSet};

/// Library version recorded in every manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
