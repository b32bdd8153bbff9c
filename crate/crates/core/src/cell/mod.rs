//! Single-cell reduced electrochemical model.
//!
//! Solid diffusion uses a polynomial profile per particle, so each electrode
//! contributes an average stoichiometry and a volume-averaged flux. The anode
//! average stoichiometry is slaved to the cathode's by lithium conservation.
//! The electrolyte is a finite-volume discretization with `M` volumes per
//! section, and the SEI side reaction drives capacity fade and film growth.
//!
//! Sign convention: charging current is negative.

mod ageing;
mod electrolyte;
mod params;
mod state;
mod voltage;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use ageing::{ageing_rhs, side_reaction_flux};
pub use electrolyte::{
    electrolyte_conductivity, electrolyte_rhs, electrolyte_rhs_into, harmonic_mean, max_stable_substep, phi_drop,
    phi_sums, total_electrolyte_lithium,
};
pub use params::{
    AgeingParams, ArrheniusParam, CellParameters, ConductivityParams, ElectrodeParams, OcpCurve, SeparatorParams,
    DEFAULT_REFERENCE_TEMPERATURE,
};
pub use state::CellState;
pub use voltage::{evaluate, ocp, overpotential, terminal_voltage, CellOutputs};

use crate::constants::GAS_CONSTANT;
use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Electrode {
    Positive,
    Negative,
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Electrode::Positive => f.write_str("positive"),
            Electrode::Negative => f.write_str("negative"),
        }
    }
}

/// `psi0 * exp(-Ea / (R T))`.
pub fn arrhenius(p: &ArrheniusParam, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(ModelError::NonPositiveTemperature(temperature_k));
    }
    Ok(arrhenius_unchecked(p, temperature_k))
}

#[inline]
pub(crate) fn arrhenius_unchecked(p: &ArrheniusParam, temperature_k: f64) -> f64 {
    if p.activation_energy_j_per_mol == 0.0 {
        p.psi0
    } else {
        p.psi0 * (-p.activation_energy_j_per_mol / (GAS_CONSTANT * temperature_k)).exp()
    }
}

/// Anode average stoichiometry from the cathode's.
pub fn anodic_from_cathodic(theta_bar_p: f64, params: &CellParameters) -> Result<f64> {
    let dp = params.positive.delta_theta();
    if dp == 0.0 {
        return Err(ModelError::param(
            "positive.theta_100pct",
            "theta_100pct equals theta_0pct; the stoichiometry window is empty",
        ));
    }
    Ok(theta_n_unchecked(theta_bar_p, params))
}

#[inline]
fn theta_n_unchecked(theta_bar_p: f64, params: &CellParameters) -> f64 {
    let p = &params.positive;
    let n = &params.negative;
    n.theta_0pct + (theta_bar_p - p.theta_0pct) / p.delta_theta() * n.delta_theta()
}

/// Normalized state of charge from the cathode average stoichiometry.
pub fn soc(theta_bar_p: f64, params: &CellParameters) -> f64 {
    let n = &params.negative;
    (theta_n_unchecked(theta_bar_p, params) - n.theta_0pct) / n.delta_theta()
}

pub(crate) fn soc_from_theta_p(theta_bar_p: f64, params: &CellParameters) -> f64 {
    soc(theta_bar_p, params)
}

pub(crate) fn theta_p_from_soc(z: f64, params: &CellParameters) -> f64 {
    params.positive.theta_0pct + z * params.positive.delta_theta()
}

/// Derivatives of `(theta_bar_p, q_p, q_n)`.
pub fn solid_rhs(state: &CellState, current_a: f64, params: &CellParameters) -> Result<(f64, f64, f64)> {
    if !(state.temperature_k > 0.0) {
        return Err(ModelError::NonPositiveTemperature(state.temperature_k));
    }
    if !(state.capacity_as > 0.0) {
        return Err(ModelError::NonPositiveCapacity(state.capacity_as));
    }
    let ds_p = arrhenius_unchecked(&params.positive.solid_diffusivity, state.temperature_k);
    let ds_n = arrhenius_unchecked(&params.negative.solid_diffusivity, state.temperature_k);
    Ok(solid_rates(state, current_a, params, ds_p, ds_n))
}

#[inline]
pub(crate) fn solid_rates(
    state: &CellState,
    current_a: f64,
    params: &CellParameters,
    ds_p: f64,
    ds_n: f64,
) -> (f64, f64, f64) {
    let c = state.capacity_as;
    let theta_dot = -params.positive.delta_theta() * current_a / c;
    let flux_rate = |e: &ElectrodeParams, ds: f64, q: f64| {
        let r = e.particle_radius_m;
        -30.0 * ds / (r * r) * q - 45.0 * e.delta_theta() * e.max_concentration_mol_per_m3 / (6.0 * r * c) * current_a
    };
    (
        theta_dot,
        flux_rate(&params.positive, ds_p, state.q_p),
        flux_rate(&params.negative, ds_n, state.q_n),
    )
}

/// Surface stoichiometry of one electrode.
pub fn surface_stoichiometry(state: &CellState, current_a: f64, params: &CellParameters, electrode: Electrode) -> f64 {
    let e = params.electrode(electrode);
    let ds = arrhenius_unchecked(&e.solid_diffusivity, state.temperature_k);
    surface_theta(state, current_a, params, electrode, ds)
}

#[inline]
pub(crate) fn surface_theta(
    state: &CellState,
    current_a: f64,
    params: &CellParameters,
    electrode: Electrode,
    ds: f64,
) -> f64 {
    let (e, theta_bar, q) = match electrode {
        Electrode::Positive => (&params.positive, state.theta_p, state.q_p),
        Electrode::Negative => (&params.negative, theta_n_unchecked(state.theta_p, params), state.q_n),
    };
    let r = e.particle_radius_m;
    theta_bar + 8.0 * r * q / (35.0 * e.max_concentration_mol_per_m3)
        - r * r * e.delta_theta() / (105.0 * ds * state.capacity_as) * current_a
}

/// Active material volume fractions `(positive, negative)` implied by the capacity.
pub fn active_material_fractions(capacity_as: f64, params: &CellParameters) -> (f64, f64) {
    use crate::constants::FARADAY;
    let a = params.area_m2;
    let p = &params.positive;
    let n = &params.negative;
    let eps_p = -capacity_as / (p.delta_theta() * a * FARADAY * p.thickness_m * p.max_concentration_mol_per_m3);
    let eps_n = capacity_as / (n.delta_theta() * a * FARADAY * n.thickness_m * n.max_concentration_mol_per_m3);
    (eps_p, eps_n)
}

/// Full right-hand side of one cell into `out`. The temperature rate is left
/// at zero; the pack thermal network owns it.
pub fn cell_rhs_into(
    state: &CellState,
    current_a: f64,
    params: &CellParameters,
    out: &mut CellState,
) -> Result<CellOutputs> {
    let outputs = evaluate(state, current_a, params)?;
    let (theta_dot, qp_dot, qn_dot) = solid_rates(state, current_a, params, outputs.ds_p, outputs.ds_n);
    out.theta_p = theta_dot;
    out.q_p = qp_dot;
    out.q_n = qn_dot;
    electrolyte::rates_with_diffusivity(state, current_a, params, outputs.de, &mut out.ce);
    let (c_dot, r_dot) = ageing::rates_from_flux(state, params, outputs.side_flux);
    out.capacity_as = c_dot;
    out.r_sei_ohm = r_dot;
    out.temperature_k = 0.0;
    Ok(outputs)
}
