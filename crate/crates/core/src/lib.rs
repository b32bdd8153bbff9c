//! Reduced electrochemical-thermal model of a series battery pack and a
//! balancing-aware NMPC charging controller.

pub mod cell;
pub mod constants;
pub mod error;
pub mod nmpc;
pub mod pack;
pub mod protocols;
pub mod simulator;

pub use error::{ModelError, Result};
