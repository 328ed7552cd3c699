//! Self-testing quantum random number generation.
//!
//! Observed prepare-and-measure statistics certify min-entropy through a
//! qubit dimension witness; finite-size and multi-photon corrections turn
//! that into an extractable length, and a Toeplitz hash produces the output.

pub mod bits;
pub mod error;
pub mod extractor;
pub mod model;
pub mod oracle;
pub mod photon;
pub mod pipeline;
pub mod security;
pub mod simulator;
pub mod stats;
pub mod tolerances;
pub mod witness;

pub use bits::BitString;
pub use error::{Error, Result};
pub use model::{BlochVector, Outcome, OutcomeDistribution, Strategy};
pub use pipeline::{PipelineConfig, PipelineOutput};
pub use witness::{CountsTable, InconclusivePolicy, WitnessValue};
