//! Time-local feedback control of multiqubit entanglement under dephasing.
//!
//! The crate simulates small qubit registers evolving under an always-on
//! two-body coupling, Markovian dephasing, and a per-qubit feedback field
//! chosen at each instant to maximize the growth rate of a multipartite
//! entanglement monotone. See the `examples/` directory for runnable entry
//! points covering each capability, and the `lyapctl` binary for the CLI.

pub mod cli;
pub mod controller;
pub mod dynamics;
pub mod entanglement;
pub mod error;
pub mod experiments;
pub mod hilbert;

pub use entanglement::{ConcurrenceOperator, ControlGradient};
pub use error::{Error, Result};
pub use hilbert::{Axis, DensityMatrix, PureState, QubitSystem, RngStream};
