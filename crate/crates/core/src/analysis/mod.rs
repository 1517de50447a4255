//! Inverse analysis of simulated 2D spectra.

pub mod detrend;
pub mod peaks;
pub mod pipeline;
pub mod reconstruct;

pub use detrend::{detrend_multiexp, detrend_with, oscillation_frequencies, DetrendFit, DetrendOptions, Oscillation};
pub use peaks::{extract_trace, find_peaks, Peak2D, T2Trace};
pub use pipeline::{run_pipeline, PipelineOptions, PipelineReport};
pub use reconstruct::{forward_eigenvalues, reconstruct_hamiltonian, ReconstructOptions, ReconstructionModel};
