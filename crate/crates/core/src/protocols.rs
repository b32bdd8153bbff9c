//! Baseline charging strategies and the discharge-capacity test.
//!
//! CC-CV: one branch current for the whole series string, constant until the
//! total voltage reaches its limit, then regulated to hold that voltage.
//! Voltage-based: constant current with per-cell bypass at a voltage
//! threshold.

use serde::{Deserialize, Serialize};

use crate::constants::SECONDS_PER_HOUR;
use crate::error::{ModelError, Result};
use crate::pack::{PackParameters, PackState};
use crate::simulator::{
    InputStep, Observation, OverchargeEvent, OverchargePolicy, Session, SimConfig, SimFailure, SimTrace, Simulator,
    StopReason,
};

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error("invalid protocol configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Simulation(#[from] Box<SimFailure>),
    #[error("CV regulation could not bracket the voltage limit at t = {t_s} s: {detail}")]
    NoBracket { t_s: f64, detail: String },
}

impl From<SimFailure> for ProtocolError {
    fn from(f: SimFailure) -> Self {
        ProtocolError::Simulation(Box::new(f))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CccvConfig {
    /// Constant-current magnitude, A.
    pub i_cc_a: f64,
    /// Limit on the sum of the cell voltages, V.
    pub v_total_limit_v: f64,
    /// The CV phase ends once the regulated current magnitude drops to this, A.
    pub i_cutoff_a: f64,
    pub ts_s: f64,
    /// Stop if any cell passes this SOC.
    pub soc_rail: f64,
    /// Optional per-cell voltage ceiling that aborts the run, V.
    #[serde(default)]
    pub per_cell_guard_v: Option<f64>,
    /// Regulation tolerance on the total voltage, V.
    pub tolerance_v: f64,
    pub max_iterations: usize,
    pub max_steps: usize,
}

impl CccvConfig {
    pub fn new(i_1c: f64, n_cells: usize) -> Self {
        CccvConfig {
            i_cc_a: i_1c,
            v_total_limit_v: 4.15 * n_cells as f64,
            i_cutoff_a: i_1c / 20.0,
            ts_s: 10.0,
            soc_rail: 1.3,
            per_cell_guard_v: None,
            tolerance_v: 1e-3,
            max_iterations: 10,
            max_steps: 5_000,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ProtocolError> {
        let bad = |m: &str| Err(ProtocolError::Config(m.into()));
        if !(self.i_cc_a > 0.0) {
            return bad("i_cc_a must be positive");
        }
        if !(self.v_total_limit_v > 0.0) {
            return bad("v_total_limit_v must be positive");
        }
        if !(self.i_cutoff_a > 0.0 && self.i_cutoff_a < self.i_cc_a) {
            return bad("i_cutoff_a must lie in (0, i_cc_a)");
        }
        if !(self.ts_s > 0.0 && self.tolerance_v > 0.0 && self.soc_rail > 1.0) {
            return bad("ts_s and tolerance_v must be positive and soc_rail above 1");
        }
        if self.max_iterations < 1 || self.max_steps < 1 {
            return bad("max_iterations and max_steps must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoltageBasedConfig {
    pub i_cc_a: f64,
    /// A cell is bypassed for good once its voltage reaches this, V.
    pub v_cell_max_v: f64,
    pub ts_s: f64,
    pub max_steps: usize,
}

impl VoltageBasedConfig {
    pub fn new(i_1c: f64) -> Self {
        VoltageBasedConfig {
            i_cc_a: i_1c,
            v_cell_max_v: 4.2,
            ts_s: 10.0,
            max_steps: 5_000,
        }
    }

    pub fn validate(&self) -> std::result::Result<(), ProtocolError> {
        if !(self.i_cc_a > 0.0 && self.v_cell_max_v > 0.0 && self.ts_s > 0.0) || self.max_steps < 1 {
            return Err(ProtocolError::Config(
                "i_cc_a, v_cell_max_v, ts_s and max_steps must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Cut-off used by the discharge-capacity test, V.
pub const DISCHARGE_CUTOFF_V: f64 = 2.7;

/// A run of the CC-CV protocol, with the current applied at each step.
#[derive(Debug, Clone)]
pub struct CccvRun {
    pub trace: SimTrace,
    /// Branch current per control step, A.
    pub currents_a: Vec<f64>,
    /// Total voltage at the end of each CV step, V.
    pub cv_voltages_v: Vec<f64>,
}

fn end_total_voltage(sim: &mut Simulator, state: &PackState, input: &InputStep) -> Result<f64> {
    let mut s = state.clone();
    sim.advance(&mut s, input, 0, 0.0)?;
    Ok(sim.end_outputs().iter().map(|o| o.voltage).sum())
}

/// Solves `V_end(I) = limit` on `[lo, 0]` with the Illinois variant of regula falsi.
fn regulate(
    f: &mut dyn FnMut(f64) -> f64,
    lo: f64,
    f_lo: f64,
    f_hi: f64,
    tol: f64,
    max_iter: usize,
) -> f64 {
    let (mut a, mut fa) = (lo, f_lo);
    let (mut b, mut fb) = (0.0, f_hi);
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for _ in 0..max_iter {
        if best.1.abs() <= tol {
            break;
        }
        let mut c = (a * fb - b * fa) / (fb - fa);
        if !c.is_finite() || c <= a.min(b) || c >= a.max(b) {
            c = 0.5 * (a + b);
        }
        let fc = f(c);
        if fc.abs() < best.1.abs() {
            best = (c, fc);
        }
        // keep the bracket; halve the retained end when it is retained again
        if fc * fb < 0.0 {
            a = b;
            fa = fb;
        } else {
            fa *= 0.5;
        }
        b = c;
        fb = fc;
    }
    best.0
}

/// Charges with CC-CV on the series string. SOC above 1 is recorded, not fatal.
pub fn charge_cccv(
    initial: PackState,
    cfg: &CccvConfig,
    sim_config: &SimConfig,
    params: &PackParameters,
) -> std::result::Result<CccvRun, ProtocolError> {
    cfg.validate()?;
    let n = initial.cells.len();
    let mut sc = sim_config.clone();
    sc.overcharge = OverchargePolicy::Record;
    let mut session = Session::new(params, sc.clone(), initial.clone()).map_err(|e| config_failure(e, &initial))?;
    let mut predictor = Simulator::new(params, sc, &initial).map_err(|e| config_failure(e, &initial))?;
    let mut currents = Vec::new();
    let mut cv_voltages = Vec::new();
    let mut in_cv = false;
    let limit = cfg.v_total_limit_v;

    let mut stop = |o: &Observation| {
        for i in 0..o.state.cells.len() {
            if o.soc(i) >= cfg.soc_rail {
                return Some(StopReason::SocRail { cell: i });
            }
            if cfg.per_cell_guard_v.is_some_and(|g| o.voltage(i) > g) {
                return Some(StopReason::VoltageCeiling { cell: i });
            }
        }
        None
    };

    let reason = loop {
        if session.steps() >= cfg.max_steps {
            break StopReason::StepLimit;
        }
        let state = session.state().clone();
        let mut excess = |i: f64| -> f64 {
            let input = InputStep::uniform(i, n, cfg.ts_s);
            // a prediction that leaves the valid region counts as too high
            end_total_voltage(&mut predictor, &state, &input).map_or(f64::INFINITY, |v| v - limit)
        };
        let mut current = -cfg.i_cc_a;
        let f_lo = excess(current);
        in_cv |= f_lo > 0.0;
        if in_cv {
            let f_hi = excess(0.0);
            if f_hi > cfg.tolerance_v {
                return Err(ProtocolError::NoBracket {
                    t_s: session.time(),
                    detail: format!("total voltage at rest is {:.4} V above the limit", f_hi),
                });
            }
            if f_lo > 0.0 {
                current = regulate(&mut excess, -cfg.i_cc_a, f_lo, f_hi, cfg.tolerance_v, cfg.max_iterations);
            }
            if current.abs() <= cfg.i_cutoff_a {
                break StopReason::CurrentCutoff;
            }
        }
        currents.push(current);
        match session.step(&InputStep::uniform(current, n, cfg.ts_s), &mut stop) {
            Ok(None) => {}
            Ok(Some(r)) => break r,
            Err(e) => return Err(session.fail(e).into()),
        }
        if in_cv {
            match session.outputs() {
                Ok(o) => cv_voltages.push(o.iter().map(|o| o.voltage).sum()),
                Err(e) => return Err(session.fail(e).into()),
            }
        }
    };
    Ok(CccvRun {
        trace: session.finish(reason),
        currents_a: currents,
        cv_voltages_v: cv_voltages,
    })
}

fn config_failure(error: ModelError, initial: &PackState) -> ProtocolError {
    ProtocolError::Simulation(Box::new(SimFailure {
        error,
        t_s: 0.0,
        trace: Box::new(empty(initial)),
    }))
}

fn empty(state: &PackState) -> SimTrace {
    let n = state.cells.len();
    SimTrace {
        n_cells: n,
        rows: Vec::new(),
        charge_as: vec![0.0; n],
        peak_voltage_v: vec![f64::NEG_INFINITY; n],
        peak_temperature_k: vec![f64::NEG_INFINITY; n],
        max_soc: vec![f64::NEG_INFINITY; n],
        overcharge_events: Vec::new(),
        stop: StopReason::ValidityViolation,
        steps: 0,
        duration_s: 0.0,
        final_state: state.clone(),
    }
}

/// Splits each control step into single-substep steps so that decisions can
/// be taken at substep resolution with the same numerics.
fn fine_grained(config: &SimConfig, ts_s: f64) -> (SimConfig, f64, usize) {
    let n_sub = config.integrator.substeps;
    let mut fine = config.clone();
    fine.integrator.substeps = 1;
    (fine, ts_s / n_sub as f64, n_sub)
}

/// A run of the voltage-based protocol.
#[derive(Debug, Clone)]
pub struct VoltageBasedRun {
    pub trace: SimTrace,
    /// Time at which each cell was bypassed, s.
    pub bypass_time_s: Vec<Option<f64>>,
}

/// Charges at constant current and bypasses each cell for good when it
/// reaches the voltage threshold. Bypass decisions are taken every substep.
pub fn charge_voltage_based(
    initial: PackState,
    cfg: &VoltageBasedConfig,
    sim_config: &SimConfig,
    params: &PackParameters,
) -> std::result::Result<VoltageBasedRun, ProtocolError> {
    cfg.validate()?;
    let n = initial.cells.len();
    let (fine, h, per_step) = fine_grained(sim_config, cfg.ts_s);
    let mut session = Session::new(params, fine, initial.clone()).map_err(|e| config_failure(e, &initial))?;
    let mut bypassed: Vec<Option<f64>> = vec![None; n];
    let rest = session.outputs().map_err(|e| config_failure(e, &initial))?;
    for (b, o) in bypassed.iter_mut().zip(&rest) {
        if o.voltage >= cfg.v_cell_max_v {
            *b = Some(0.0);
        }
    }
    let max_fine = cfg.max_steps.saturating_mul(per_step);
    let reason = loop {
        if bypassed.iter().all(Option::is_some) {
            break StopReason::AllBypassed;
        }
        if session.steps() >= max_fine {
            break StopReason::StepLimit;
        }
        let duty: Vec<f64> = bypassed.iter().map(|b| if b.is_some() { 0.0 } else { 1.0 }).collect();
        let input = InputStep {
            i_branch_a: -cfg.i_cc_a,
            duty,
            ts_s: h,
        };
        match session.step(&input, &mut |_| None) {
            Ok(_) => {}
            Err(e) => return Err(session.fail(e).into()),
        }
        let t = session.time();
        let out = match session.outputs() {
            Ok(o) => o,
            Err(e) => return Err(session.fail(e).into()),
        };
        for (b, o) in bypassed.iter_mut().zip(&out) {
            if b.is_none() && o.voltage >= cfg.v_cell_max_v {
                *b = Some(t);
            }
        }
    };
    Ok(VoltageBasedRun {
        trace: session.finish(reason),
        bypass_time_s: bypassed,
    })
}

/// Result of the discharge-capacity test.
#[derive(Debug, Clone)]
pub struct DischargeResult {
    /// Charge extracted until the first cell hit the cut-off, Ah.
    pub extracted_ah: f64,
    pub trace: SimTrace,
}

/// Discharges the pack at `+I_1C` until any cell reaches the cut-off voltage.
pub fn discharge_capacity_test(
    initial: PackState,
    sim_config: &SimConfig,
    params: &PackParameters,
) -> std::result::Result<DischargeResult, ProtocolError> {
    let n = initial.cells.len();
    let i_1c = params
        .cells
        .first()
        .ok_or_else(|| ProtocolError::Config("empty pack".into()))?
        .ageing
        .one_c_current_a;
    let ts = 10.0;
    // bound the run by twice the time needed to empty the largest cell
    let c_max = initial.cells.iter().map(|c| c.capacity_as).fold(0.0, f64::max);
    let max_steps = (2.0 * c_max / i_1c / ts).ceil() as usize + 1;
    // discharging cannot overcharge, and a pack charged with CC-CV may start above 1
    let mut sc = sim_config.clone();
    sc.overcharge = OverchargePolicy::Record;
    let mut session = Session::new(params, sc, initial.clone()).map_err(|e| config_failure(e, &initial))?;
    let mut stop = |o: &Observation| {
        (0..o.state.cells.len())
            .find(|&i| o.voltage(i) <= DISCHARGE_CUTOFF_V)
            .map(|cell| StopReason::CutoffVoltage { cell })
    };
    let input = InputStep::uniform(i_1c, n, ts);
    let reason = loop {
        if session.steps() >= max_steps {
            break StopReason::StepLimit;
        }
        match session.step(&input, &mut stop) {
            Ok(None) => {}
            Ok(Some(r)) => break r,
            Err(e) => return Err(session.fail(e).into()),
        }
    };
    let trace = session.finish(reason);
    let extracted_ah = trace.charge_as.iter().cloned().fold(f64::INFINITY, f64::min) / SECONDS_PER_HOUR;
    Ok(DischargeResult { extracted_ah, trace })
}

/// Headline numbers of one charging run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub protocol: String,
    pub final_soc: Vec<f64>,
    /// `max z - min z` at the end of the charge.
    pub soc_spread: f64,
    pub max_soc: Vec<f64>,
    pub peak_voltage_v: f64,
    pub peak_temperature_k: f64,
    pub duration_s: f64,
    pub capacity_lost_ah: Vec<f64>,
    pub r_sei_growth_ohm: Vec<f64>,
    pub overcharge_events: Vec<OverchargeEvent>,
    pub stop: StopReason,
    #[serde(default)]
    pub extracted_ah: Option<f64>,
}

impl RunSummary {
    pub fn from_trace(protocol: &str, initial: &PackState, trace: &SimTrace, params: &PackParameters) -> Self {
        let z = trace.final_soc(params);
        let (lo, hi) = z.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        RunSummary {
            protocol: protocol.into(),
            soc_spread: hi - lo,
            final_soc: z,
            max_soc: trace.max_soc.clone(),
            peak_voltage_v: trace.peak_voltage_v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            peak_temperature_k: trace.peak_temperature_k.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            duration_s: trace.duration_s,
            capacity_lost_ah: initial
                .cells
                .iter()
                .zip(&trace.final_state.cells)
                .map(|(a, b)| (a.capacity_as - b.capacity_as) / SECONDS_PER_HOUR)
                .collect(),
            r_sei_growth_ohm: initial
                .cells
                .iter()
                .zip(&trace.final_state.cells)
                .map(|(a, b)| b.r_sei_ohm - a.r_sei_ohm)
                .collect(),
            overcharge_events: trace.overcharge_events.clone(),
            stop: trace.stop,
            extracted_ah: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn illinois_finds_root_of_monotone_map() {
        let mut calls = 0;
        let mut f = |i: f64| {
            calls += 1;
            (-i / 7.5).powf(0.7) - 0.3
        };
        let (flo, fhi) = (f(-7.5), f(0.0));
        let i = regulate(&mut f, -7.5, flo, fhi, 1e-9, 30);
        assert!(((-i / 7.5).powf(0.7) - 0.3).abs() <= 1e-9);
        assert!(calls < 20, "{calls} evaluations");
    }

    #[test]
    fn configs_validate() {
        CccvConfig::new(7.5, 6).validate().unwrap();
        assert!((CccvConfig::new(7.5, 6).v_total_limit_v - 24.9).abs() < 1e-12);
        let mut c = CccvConfig::new(7.5, 6);
        c.i_cutoff_a = 8.0;
        assert!(c.validate().is_err());
        VoltageBasedConfig::new(7.5).validate().unwrap();
    }
}
