//! Time integration of the pack under piecewise control inputs.
//!
//! Each control step of length `Ts` carries one branch current and one duty
//! cycle per cell. A cell with duty `delta` conducts the branch current during
//! the last `delta * Ts` of the step and is bypassed before that. The
//! prediction model replaces the switch with a logistic ramp; the `average`
//! mode applies `delta * I` for the whole step.

mod engine;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

pub use engine::{Observation, Simulator};
pub use trace::{simulate, OverchargeEvent, Session, SimFailure, SimTrace, StopReason, TraceRow};

/// One control interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStep {
    /// Branch current, A. Negative while charging.
    pub i_branch_a: f64,
    /// Duty cycle per cell, in [0, 1].
    pub duty: Vec<f64>,
    pub ts_s: f64,
}

impl InputStep {
    pub fn uniform(i_branch_a: f64, n: usize, ts_s: f64) -> Self {
        InputStep {
            i_branch_a,
            duty: vec![1.0; n],
            ts_s,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.duty.len() != n {
            return Err(ModelError::Dimension(format!("{} duty cycles for {n} cells", self.duty.len())));
        }
        if !(self.ts_s > 0.0 && self.ts_s.is_finite()) {
            return Err(ModelError::param("ts_s", "step duration must be positive"));
        }
        if !self.i_branch_a.is_finite() {
            return Err(ModelError::param("i_branch_a", "branch current must be finite"));
        }
        if let Some(d) = self.duty.iter().find(|d| !(**d >= 0.0 && **d <= 1.0)) {
            return Err(ModelError::param("duty", format!("duty cycle {d} outside [0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupplyMode {
    /// Ideal switches: the plant.
    #[default]
    Switched,
    /// Logistic approximation of the switch: the prediction model.
    Sigmoid,
    /// Constant `delta * I` over the whole step.
    Average,
}

impl std::str::FromStr for SupplyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "switched" => Ok(SupplyMode::Switched),
            "sigmoid" => Ok(SupplyMode::Sigmoid),
            "average" => Ok(SupplyMode::Average),
            other => Err(format!("unknown supply mode `{other}` (switched, sigmoid, average)")),
        }
    }
}

/// Where the logistic ramp is centred within a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SigmoidTime {
    /// Centre at `(1 - delta) * Ts` seconds into the step, where the ideal switch closes.
    #[default]
    ScaledOffset,
    /// Centre at `(1 - delta)` seconds into the step, whatever `Ts` is.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    /// RK4 substeps per control step.
    pub substeps: usize,
    /// Logistic slope `a`, 1/s.
    pub sigmoid_slope: f64,
    #[serde(default)]
    pub sigmoid_time: SigmoidTime,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            substeps: 100,
            sigmoid_slope: 5.0,
            sigmoid_time: SigmoidTime::ScaledOffset,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps < 1 {
            return Err(ModelError::param("substeps", "need at least one substep"));
        }
        if !(self.sigmoid_slope > 0.0) {
            return Err(ModelError::param("sigmoid_slope", "must be positive"));
        }
        Ok(())
    }
}

/// What the simulator does when a cell's SOC passes 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum OverchargePolicy {
    /// Treat SOC above `ceiling` as a validity violation.
    Abort { ceiling: f64 },
    /// Record the first crossing of 1 per cell and carry on.
    Record,
}

impl Default for OverchargePolicy {
    fn default() -> Self {
        OverchargePolicy::Abort { ceiling: 1.005 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub mode: SupplyMode,
    #[serde(default)]
    pub overcharge: OverchargePolicy,
    /// Keep one trace row every this many substeps. Peaks and events are
    /// still tracked at every substep.
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            integrator: IntegratorConfig::default(),
            mode: SupplyMode::Switched,
            overcharge: OverchargePolicy::default(),
            record_every: 1,
        }
    }
}

/// Duty cycle rounded to the substep grid of the switched supply.
pub fn quantized_duty(delta: f64, substeps: usize) -> f64 {
    (delta * substeps as f64).round() / substeps as f64
}

/// Current of cell `i` at absolute time `t` within step `k` under ideal switching.
pub fn applied_current_switched(t: f64, k: usize, step: &InputStep, i: usize) -> f64 {
    let tau = t - k as f64 * step.ts_s;
    if tau >= (1.0 - step.duty[i]) * step.ts_s && step.duty[i] > 0.0 {
        step.i_branch_a
    } else {
        0.0
    }
}

/// Current of cell `i` under the logistic approximation of the switch.
pub fn applied_current_sigmoid(t: f64, k: usize, step: &InputStep, i: usize, slope: f64, time: SigmoidTime) -> f64 {
    let tau = t - k as f64 * step.ts_s;
    sigmoid_current(tau, step.i_branch_a, step.duty[i], step.ts_s, slope, time)
}

#[inline]
pub(crate) fn sigmoid_current(tau: f64, i_branch: f64, delta: f64, ts: f64, slope: f64, time: SigmoidTime) -> f64 {
    let offset = match time {
        SigmoidTime::ScaledOffset => (1.0 - delta) * ts,
        SigmoidTime::Literal => 1.0 - delta,
    };
    i_branch / (1.0 + (-slope * (tau - offset)).exp())
}

/// Charge delivered to a cell over one step of the logistic profile, As.
pub fn sigmoid_step_charge(step: &InputStep, i: usize, slope: f64, time: SigmoidTime) -> f64 {
    let offset = match time {
        SigmoidTime::ScaledOffset => (1.0 - step.duty[i]) * step.ts_s,
        SigmoidTime::Literal => 1.0 - step.duty[i],
    };
    // closed-form integral of the logistic, written with a stable softplus
    let softplus = |x: f64| if x > 30.0 { x } else { x.exp().ln_1p() };
    let a = slope;
    step.i_branch_a / a * (softplus(a * (step.ts_s - offset)) - softplus(-a * offset))
}
