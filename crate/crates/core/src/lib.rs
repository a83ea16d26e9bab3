//! Numerical core for diffraction-managed solitons of the discrete nonlinear
//! Schrödinger equation at zero average diffraction.
//!
//! Everything here is pure computation on dense lattice fields. File formats,
//! reports and the command line live in the `dmsol` crate.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature; the FFT-based spectral propagator requires `std`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
mod error;
pub mod functional;
pub mod lattice;
pub mod propagator;
pub mod quadrature;
pub mod solver;
pub mod special;

pub use error::Error;
pub use functional::Functional;
pub use lattice::{GridFunction, Shape, Site, SupportThreshold};
pub use num_complex::Complex64;
pub use propagator::{DiffractionProfile, Method, PropagatorEngine, Segment};
pub use quadrature::QuadratureRule;
pub use solver::{SolitonResult, SolverConfig, SolverMethod};

pub type Result<T, E = Error> = core::result::Result<T, E>;
