//! Shared fixtures for the benchmarks.

/// Calibrated homogeneous consideration rates (20% and 22% booking at
/// `lambda = 1`).
pub const PHI: f64 = 0.252_499_696_409_146;
pub const PHI_T: f64 = 0.285_632_653_011_837;
