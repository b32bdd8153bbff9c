//! SEI side reaction: capacity fade and film growth, active only while charging.

use super::params::CellParameters;
use super::state::CellState;
use super::voltage::evaluate;
use crate::constants::{FARADAY, GAS_CONSTANT};
use crate::error::Result;

/// Average side-reaction flux, mol/(m^2 s). Never positive.
pub fn side_reaction_flux(state: &CellState, current_a: f64, params: &CellParameters) -> Result<f64> {
    Ok(evaluate(state, current_a, params)?.side_flux)
}

/// `(dC/dt, dR_sei/dt)`, in As/s and Ohm/s.
pub fn ageing_rhs(state: &CellState, current_a: f64, params: &CellParameters) -> Result<(f64, f64)> {
    let j = side_reaction_flux(state, current_a, params)?;
    Ok(rates_from_flux(state, params, j))
}

pub(crate) fn flux_from(current_a: f64, eta_n: f64, u_n: f64, temperature_k: f64, params: &CellParameters) -> f64 {
    let a = &params.ageing;
    if current_a > 0.0 || a.base_side_current_a_per_m2 == 0.0 {
        return 0.0;
    }
    let rate = current_a.abs() / a.one_c_current_a;
    let scale = if a.current_exponent == 1.0 { rate } else { rate.powf(a.current_exponent) };
    let i0 = a.base_side_current_a_per_m2 * scale;
    if i0 == 0.0 {
        return 0.0;
    }
    let eta_side = eta_n + u_n - a.sei_reference_potential_v;
    -(i0 / FARADAY) * (0.5 * FARADAY / (GAS_CONSTANT * temperature_k) * eta_side).exp()
}

pub(crate) fn rates_from_flux(state: &CellState, params: &CellParameters, side_flux: f64) -> (f64, f64) {
    if side_flux == 0.0 {
        return (0.0, 0.0);
    }
    let n = &params.negative;
    let c_dot = 3.0 * state.capacity_as
        / (n.particle_radius_m * params.area_m2 * n.delta_theta() * n.max_concentration_mol_per_m3)
        * side_flux;
    let a = &params.ageing;
    let r_dot = -a.molar_weight_kg_per_mol / (a.density_kg_per_m3 * a.film_admittance) * side_flux;
    (c_dot, r_dot)
}
