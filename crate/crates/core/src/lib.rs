//! Online generator of phase-map training samples for microphone-array DOA
//! estimation.
//!
//! Each sample models the microphone spectra directly in the frequency domain:
//! a unit-modulus direct path, a diffuse reverberant part drawn from a
//! circular complex Gaussian with sinc spatial coherence, and white sensor
//! noise. The feature handed to a learner is the `K x M` phase map.
//!
//! Besides the generator the crate ships statistical checks that the samples
//! follow their declared laws ([`stats`]) and a phase-only steered-response
//! estimator that certifies labels are recoverable from the feature
//! ([`oracle`]).

pub mod cli;
pub mod coherence;
pub mod error;
pub mod geometry;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod phasemap;
pub mod random;
pub mod rtf;
pub mod signalgen;
pub mod stats;

pub use error::{Error, Result};
