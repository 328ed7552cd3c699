//! Numerical tolerances shared across the crate.

/// Slack on |S| <= 1 for state Bloch vectors.
pub const STATE_NORM: f64 = 1e-12;

/// Slack on |T| = 1 for projective measurement Bloch vectors.
pub const MEASUREMENT_NORM: f64 = 1e-9;

/// Witness values up to `1 + QUBIT_BOUND` are clamped to 1; beyond that
/// they are flagged as exceeding the qubit bound.
pub const QUBIT_BOUND: f64 = 1e-9;

/// Outcome probabilities are clamped into [0, 1] after this much rounding.
pub const PROBABILITY: f64 = 1e-12;
