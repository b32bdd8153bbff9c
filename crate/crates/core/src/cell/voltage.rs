//! Algebraic outputs: open-circuit potentials, overpotentials and terminal voltage.

use super::electrolyte::phi_drop_with_factor;
use super::params::CellParameters;
use super::state::CellState;
use super::{ageing, arrhenius_unchecked, surface_theta, Electrode};
use crate::constants::{FARADAY, GAS_CONSTANT};
use crate::error::{ModelError, Result};

/// Everything the right-hand side and the observers need from one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOutputs {
    pub voltage: f64,
    /// Open-circuit potential of the positive electrode at its surface stoichiometry.
    pub u_p: f64,
    pub u_n: f64,
    pub eta_p: f64,
    pub eta_n: f64,
    pub theta_surf_p: f64,
    pub theta_surf_n: f64,
    /// Electrolyte potential difference, ohmic drop plus concentration term.
    pub delta_phi_e: f64,
    /// Average side-reaction flux, mol/(m^2 s); zero or negative.
    pub side_flux: f64,
    pub(crate) ds_p: f64,
    pub(crate) ds_n: f64,
    pub(crate) de: f64,
}

impl CellOutputs {
    /// `U_p - U_n` at the surface stoichiometries.
    pub fn ocv(&self) -> f64 {
        self.u_p - self.u_n
    }
}

/// Open-circuit potential of one electrode.
pub fn ocp(theta_surface: f64, params: &CellParameters, electrode: Electrode) -> f64 {
    match electrode {
        Electrode::Positive => params.ocp_positive.eval(theta_surface),
        Electrode::Negative => params.ocp_negative.eval(theta_surface),
    }
}

fn section_mean(ce: &[f64], m: usize, electrode: Electrode) -> f64 {
    let slice = match electrode {
        Electrode::Positive => &ce[..m],
        Electrode::Negative => &ce[2 * m..3 * m],
    };
    slice.iter().sum::<f64>() / m as f64
}

fn check_surface(theta: f64, electrode: Electrode) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(ModelError::SurfaceStoichiometry { electrode, value: theta })
    }
}

#[inline]
fn eta_from(
    theta_surf: f64,
    ce_mean: f64,
    k_rate: f64,
    current_a: f64,
    state: &CellState,
    params: &CellParameters,
    electrode: Electrode,
) -> f64 {
    let e = params.electrode(electrode);
    let t = state.temperature_k;
    let i0 = FARADAY * k_rate * (ce_mean * theta_surf * (1.0 - theta_surf)).sqrt();
    let arg = e.delta_theta() * FARADAY * e.particle_radius_m / (6.0 * i0 * state.capacity_as) * current_a;
    2.0 * GAS_CONSTANT * t / FARADAY * arg.asinh()
}

/// Reaction overpotential of one electrode.
pub fn overpotential(state: &CellState, current_a: f64, params: &CellParameters, electrode: Electrode) -> Result<f64> {
    let o = evaluate(state, current_a, params)?;
    Ok(match electrode {
        Electrode::Positive => o.eta_p,
        Electrode::Negative => o.eta_n,
    })
}

pub fn terminal_voltage(state: &CellState, current_a: f64, params: &CellParameters) -> Result<f64> {
    Ok(evaluate(state, current_a, params)?.voltage)
}

/// Validates the state and computes every algebraic output.
pub fn evaluate(state: &CellState, current_a: f64, params: &CellParameters) -> Result<CellOutputs> {
    let t = state.temperature_k;
    if !(t > 0.0) {
        return Err(ModelError::NonPositiveTemperature(t));
    }
    if !(state.capacity_as > 0.0) {
        return Err(ModelError::NonPositiveCapacity(state.capacity_as));
    }
    let m = params.volumes_per_section;
    if state.ce.len() != 3 * m {
        return Err(ModelError::Dimension(format!(
            "electrolyte vector has {} entries, parameters need {}",
            state.ce.len(),
            3 * m
        )));
    }
    if let Some((volume, &value)) = state.ce.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
        return Err(ModelError::ElectrolyteDepleted { volume, value });
    }

    let ds_p = arrhenius_unchecked(&params.positive.solid_diffusivity, t);
    let ds_n = arrhenius_unchecked(&params.negative.solid_diffusivity, t);
    let theta_surf_p = surface_theta(state, current_a, params, Electrode::Positive, ds_p);
    let theta_surf_n = surface_theta(state, current_a, params, Electrode::Negative, ds_n);
    check_surface(theta_surf_p, Electrode::Positive)?;
    check_surface(theta_surf_n, Electrode::Negative)?;

    let k_p = arrhenius_unchecked(&params.positive.rate_constant, t);
    let k_n = arrhenius_unchecked(&params.negative.rate_constant, t);
    let ce_p = section_mean(&state.ce, m, Electrode::Positive);
    let ce_n = section_mean(&state.ce, m, Electrode::Negative);
    let eta_p = eta_from(theta_surf_p, ce_p, k_p, current_a, state, params, Electrode::Positive);
    let eta_n = eta_from(theta_surf_n, ce_n, k_n, current_a, state, params, Electrode::Negative);

    let u_p = params.ocp_positive.eval(theta_surf_p);
    let u_n = params.ocp_negative.eval(theta_surf_n);

    let kappa_factor = (-params.conductivity.activation_energy_j_per_mol / (GAS_CONSTANT * t)).exp();
    let drop = phi_drop_with_factor(state, current_a, params, kappa_factor)?;
    let two_rt_f = 2.0 * GAS_CONSTANT * t / FARADAY;
    let conc = two_rt_f * (1.0 - params.transference_number) * (state.ce[0] / state.ce[3 * m - 1]).ln();
    let delta_phi_e = drop + conc;

    let voltage = u_p - u_n + eta_p - eta_n + delta_phi_e + current_a * state.r_sei_ohm;
    let side_flux = ageing::flux_from(current_a, eta_n, u_n, t, params);
    let de = arrhenius_unchecked(&params.electrolyte_diffusivity, t);

    Ok(CellOutputs {
        voltage,
        u_p,
        u_n,
        eta_p,
        eta_n,
        theta_surf_p,
        theta_surf_n,
        delta_phi_e,
        side_flux,
        ds_p,
        ds_n,
        de,
    })
}
