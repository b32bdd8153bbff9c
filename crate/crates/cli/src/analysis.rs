//! Numerical studies: RK4 order and the accuracy of the supply approximations.

use serde::Serialize;

use balcharge_core::cell::max_stable_substep;
use balcharge_core::pack::{PackParameters, PackState};
use balcharge_core::simulator::{simulate, InputStep, IntegratorConfig, SimConfig, Simulator, SupplyMode};

use crate::error::CliResult;

/// Max over state components of `|a - b|`, scaled by `max(|b|, 1e-3)`.
pub fn scaled_distance(a: &PackState, b: &PackState) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3))
        .fold(0.0, f64::max)
}

fn config(substeps: usize, mode: SupplyMode, slope: f64) -> SimConfig {
    SimConfig {
        integrator: IntegratorConfig {
            substeps,
            sigmoid_slope: slope,
            ..IntegratorConfig::default()
        },
        mode,
        ..SimConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rk4Study {
    pub substeps: Vec<usize>,
    /// Error of each run against the reference.
    pub errors: Vec<f64>,
    /// `errors[j] / errors[j + 1]`; 16 for a fourth-order method.
    pub ratios: Vec<f64>,
    pub reference_substeps: usize,
}

/// One sigmoid-mode step integrated with `base`, `2 base`, ... substeps,
/// against a run with `16 * 2^levels` times smaller substeps.
pub fn rk4_study(pack: &PackParameters, state: &PackState, step: &InputStep, base: usize, levels: usize) -> CliResult<Rk4Study> {
    let run = |n: usize| -> CliResult<PackState> {
        let mut s = state.clone();
        let mut sim = Simulator::new(pack, config(n, SupplyMode::Sigmoid, 5.0), &s)?;
        sim.advance(&mut s, step, 0, 0.0)?;
        Ok(s)
    };
    let reference_substeps = base << (levels + 4);
    let reference = run(reference_substeps)?;
    let substeps: Vec<usize> = (0..=levels).map(|j| base << j).collect();
    let errors = substeps
        .iter()
        .map(|&n| Ok(scaled_distance(&run(n)?, &reference)))
        .collect::<CliResult<Vec<f64>>>()?;
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    Ok(Rk4Study {
        substeps,
        errors,
        ratios,
        reference_substeps,
    })
}

/// Smallest power-of-two multiple of 10 substeps per step that keeps RK4
/// comfortably inside its stability region.
pub fn stable_base_substeps(pack: &PackParameters, temperature_k: f64, ts_s: f64) -> usize {
    let h = pack.cells.iter().map(|p| max_stable_substep(p, temperature_k)).fold(f64::INFINITY, f64::min);
    let mut n = 10;
    while ts_s / n as f64 > 0.5 * h {
        n *= 2;
    }
    n
}

/// Errors of one approximate supply against the switched plant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyError {
    pub mode: SupplyMode,
    /// Logistic slope for the sigmoid mode, 1/s.
    pub slope: Option<f64>,
    /// Scaled distance between final states.
    pub state: f64,
    /// Max over cells of the final temperature error, K.
    pub temperature_k: f64,
    /// Max over cells of the final capacity error relative to the plant's fade.
    pub capacity: f64,
    /// Max over cells of the final film-resistance error relative to the plant's growth.
    pub r_sei: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupplyStudy {
    pub duration_s: f64,
    pub sigmoid: Vec<SupplyError>,
    pub average: SupplyError,
}

/// A bypass schedule with duties on a 5% grid varying from step to step and cell to cell.
pub fn varying_duty_schedule(n_cells: usize, steps: usize, current_a: f64, ts_s: f64) -> Vec<InputStep> {
    (0..steps)
        .map(|k| InputStep {
            i_branch_a: current_a,
            duty: (0..n_cells)
                .map(|i| (20.0 * (0.5 + 0.45 * (0.7 * k as f64 + 1.3 * i as f64).sin())).round() / 20.0)
                .collect(),
            ts_s,
        })
        .collect()
}

/// Runs `schedule` with the switched plant and with each approximation, all at `substeps`.
pub fn supply_study(
    pack: &PackParameters,
    state: &PackState,
    schedule: &[InputStep],
    substeps: usize,
    slopes: &[f64],
) -> CliResult<SupplyStudy> {
    let run = |mode, slope| simulate(state.clone(), schedule, config(substeps, mode, slope), pack, &mut |_| None);
    let plant = run(SupplyMode::Switched, 5.0)?.final_state;
    let compare = |mode, slope: Option<f64>| -> CliResult<SupplyError> {
        let approx = run(mode, slope.unwrap_or(5.0))?.final_state;
        let mut e = SupplyError {
            mode,
            slope,
            state: scaled_distance(&approx, &plant),
            temperature_k: 0.0,
            capacity: 0.0,
            r_sei: 0.0,
        };
        for ((a, p), s0) in approx.cells.iter().zip(&plant.cells).zip(&state.cells) {
            e.temperature_k = e.temperature_k.max((a.temperature_k - p.temperature_k).abs());
            let fade = (s0.capacity_as - p.capacity_as).abs().max(f64::MIN_POSITIVE);
            e.capacity = e.capacity.max((a.capacity_as - p.capacity_as).abs() / fade);
            let growth = (p.r_sei_ohm - s0.r_sei_ohm).abs().max(f64::MIN_POSITIVE);
            e.r_sei = e.r_sei.max((a.r_sei_ohm - p.r_sei_ohm).abs() / growth);
        }
        Ok(e)
    };
    let sigmoid = slopes
        .iter()
        .map(|&a| compare(SupplyMode::Sigmoid, Some(a)))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(SupplyStudy {
        duration_s: schedule.iter().map(|s| s.ts_s).sum(),
        sigmoid,
        average: compare(SupplyMode::Average, None)?,
    })
}
