use thiserror::Error;

use crate::cell::Electrode;

/// Everything that can go wrong while evaluating or integrating the model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("harmonic mean needs strictly positive inputs")]
    NonPositiveHarmonicInput,

    #[error("{electrode} surface stoichiometry {value} left the open interval (0, 1)")]
    SurfaceStoichiometry { electrode: Electrode, value: f64 },

    #[error("electrolyte conductivity {value} S/m is not positive at ce = {concentration} mol/m^3")]
    NonPositiveConductivity { concentration: f64, value: f64 },

    #[error("electrolyte concentration {value} mol/m^3 in volume {volume} is not positive")]
    ElectrolyteDepleted { volume: usize, value: f64 },

    #[error("capacity {0} As is not positive")]
    NonPositiveCapacity(f64),

    #[error("state of charge {soc} exceeds the ceiling {ceiling}")]
    Overcharge { soc: f64, ceiling: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cell {index}: {source}")]
    InCell {
        index: usize,
        #[source]
        source: Box<ModelError>,
    },
}

impl ModelError {
    pub(crate) fn param(name: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn in_cell(self, index: usize) -> Self {
        ModelError::InCell {
            index,
            source: Box::new(self),
        }
    }

    /// Index of the offending cell, when the error was raised inside a pack evaluation.
    pub fn cell_index(&self) -> Option<usize> {
        match self {
            ModelError::InCell { index, .. } => Some(*index),
            _ => None,
        }
    }

    /// The innermost error, with any cell wrapping removed.
    pub fn root(&self) -> &ModelError {
        match self {
            ModelError::InCell { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for violations of the state validity envelope (as opposed to bad parameters).
    pub fn is_validity_violation(&self) -> bool {
        matches!(
            self.root(),
            ModelError::SurfaceStoichiometry { .. }
                | ModelError::NonPositiveConductivity { .. }
                | ModelError::ElectrolyteDepleted { .. }
                | ModelError::NonPositiveCapacity(_)
                | ModelError::NonPositiveTemperature(_)
                | ModelError::Overcharge { .. }
        )
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
