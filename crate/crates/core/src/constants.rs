//! Physical constants shared by every module.

/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96_485.33;

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314_462;

/// Seconds per hour, for Ah <-> As conversions at I/O boundaries.
pub const SECONDS_PER_HOUR: f64 = 3600.0;
