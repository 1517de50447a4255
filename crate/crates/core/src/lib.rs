//! Simulation of a magnetically driven singlet-triplet exciton: spin dynamics,
//! Lindblad propagation, third-order response, 2D spectra and the inverse
//! reconstruction of the bare Hamiltonian from those spectra.

pub mod analysis;
pub mod config;
pub mod error;
pub mod io;
pub mod liouville;
pub mod model;
pub mod ode;
pub mod pulse;
pub mod response;
pub mod spectra;
pub mod spin;
pub mod units;

pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;
pub type Mat5 = nalgebra::SMatrix<C64, 5, 5>;
