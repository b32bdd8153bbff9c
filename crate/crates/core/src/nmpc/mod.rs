//! Balancing-aware model predictive charging.
//!
//! Every control step the controller optimizes the branch current and the
//! per-cell duty cycles over a short horizon, using a coarse logistic-switch
//! model of the pack, then applies the first input to the plant.

mod controller;
mod cost;
mod gradcheck;
mod problem;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ModelError;
use crate::simulator::{InputStep, IntegratorConfig, SigmoidTime, SimFailure};

pub use controller::{receding_horizon_charge, NmpcRun, SolveLogRow};
pub use cost::{soft_constrained_cost, stage_costs, CostBreakdown, SoftCost};
pub use gradcheck::{gradcheck, GradcheckReport};
pub use cost::Trajectory;
pub use problem::{prediction_model, Prediction, Problem};
pub use solver::{minimize_box, Objective, SolverOutcome, Termination};

/// Cost returned for predictions that leave the model's validity envelope.
pub const INVALID_COST: f64 = 1e30;

#[derive(Debug, Error)]
pub enum NmpcError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("target SOC {target} is below the SOC {soc} of cell {cell}")]
    TargetBelowSoc { cell: usize, soc: f64, target: f64 },
    #[error("no valid initial guess: {0}")]
    NoValidGuess(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Simulation(#[from] Box<SimFailure>),
}

impl From<SimFailure> for NmpcError {
    fn from(f: SimFailure) -> Self {
        NmpcError::Simulation(Box::new(f))
    }
}

pub type NmpcResult<T> = std::result::Result<T, NmpcError>;

/// Weights of the seven cost terms and of the constraint slacks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostWeights {
    /// SOC tracking, temperature, duty, current, duty rate, current rate, terminal balance.
    pub alpha: [f64; 7],
    /// Voltage, temperature and power slacks.
    pub alpha_slack: [f64; 3],
    /// Weight of the exact penalty on the SOC bounds `0 <= z <= 1`.
    pub alpha_soc: f64,
    pub z_target: f64,
    pub i_max_a: f64,
    pub t_env_k: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            alpha: [1e4, 25.0, 0.0, 1.0, 1e-3, 1e-3, 1e5],
            alpha_slack: [1e15; 3],
            alpha_soc: 1e15,
            z_target: 1.0,
            i_max_a: 7.5,
            t_env_k: 298.15,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> NmpcResult<()> {
        let all = self.alpha.iter().chain(&self.alpha_slack).chain([&self.alpha_soc]);
        if all.into_iter().any(|a| !(*a >= 0.0 && a.is_finite())) {
            return Err(NmpcError::Config("weights must be finite and non-negative".into()));
        }
        if !(self.i_max_a > 0.0) || !(self.t_env_k > 0.0) {
            return Err(NmpcError::Config("i_max_a and t_env_k must be positive".into()));
        }
        Ok(())
    }
}

/// Lower bound on charging power, as a positive magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PowerLimit {
    Constant(f64),
    /// One value per control step; the last value holds afterwards.
    Profile(Vec<f64>),
}

impl PowerLimit {
    pub fn at(&self, step: usize) -> f64 {
        match self {
            PowerLimit::Constant(p) => *p,
            PowerLimit::Profile(v) => v[step.min(v.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintLimits {
    pub v_max_v: f64,
    pub t_max_k: f64,
    pub p_max_w: PowerLimit,
}

impl ConstraintLimits {
    /// Limits with the power bound at three quarters of `v_max * i_max`.
    pub fn for_current(i_max_a: f64) -> Self {
        ConstraintLimits {
            v_max_v: 4.2,
            t_max_k: 313.15,
            p_max_w: PowerLimit::Constant(0.75 * 4.2 * i_max_a),
        }
    }

    pub fn validate(&self) -> NmpcResult<()> {
        let p_ok = match &self.p_max_w {
            PowerLimit::Constant(p) => *p > 0.0,
            PowerLimit::Profile(v) => !v.is_empty() && v.iter().all(|p| *p > 0.0),
        };
        if !(self.v_max_v > 0.0 && self.t_max_k > 0.0 && p_ok) {
            return Err(NmpcError::Config("constraint limits must be positive".into()));
        }
        Ok(())
    }
}

impl Default for ConstraintLimits {
    fn default() -> Self {
        Self::for_current(7.5)
    }
}

/// Sharpness of the softplus used in place of each hinge inside the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Smoothing {
    pub voltage_per_v: f64,
    pub temperature_per_k: f64,
    pub power_per_w: f64,
    pub soc: f64,
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing {
            voltage_per_v: 1e3,
            temperature_per_k: 1e3,
            power_per_w: 1e3,
            soc: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when one iteration lowers the cost by less than this fraction.
    pub relative_tolerance: f64,
    /// Stop when the projected gradient falls below this (scaled variables).
    pub gradient_tolerance: f64,
    /// Forward-difference step in scaled variables.
    pub fd_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 200,
            relative_tolerance: 1e-8,
            gradient_tolerance: 1e-6,
            fd_step: 1e-6,
        }
    }
}

/// Everything the controller needs besides the plant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NmpcConfig {
    pub horizon: usize,
    pub ts_s: f64,
    pub weights: CostWeights,
    pub limits: ConstraintLimits,
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Iteration cap per control step in closed loop.
    pub closed_loop_iterations: usize,
    /// Electrolyte volumes per section in the prediction model.
    pub model_volumes: usize,
    pub model_integrator: IntegratorConfig,
    /// Logistic cooling width of the prediction model, K.
    pub model_cooling_smoothing_k: f64,
    /// Charging ends once every cell reaches this SOC.
    pub z_done: f64,
    pub max_steps: usize,
}

impl Default for NmpcConfig {
    fn default() -> Self {
        NmpcConfig {
            horizon: 3,
            ts_s: 10.0,
            weights: CostWeights::default(),
            limits: ConstraintLimits::default(),
            smoothing: Smoothing::default(),
            solver: SolverConfig::default(),
            closed_loop_iterations: 6,
            model_volumes: 3,
            model_integrator: IntegratorConfig {
                substeps: 40,
                sigmoid_slope: 5.0,
                sigmoid_time: SigmoidTime::ScaledOffset,
            },
            model_cooling_smoothing_k: 0.05,
            z_done: 0.99,
            max_steps: 6000,
        }
    }
}

impl NmpcConfig {
    pub fn validate(&self) -> NmpcResult<()> {
        self.weights.validate()?;
        self.limits.validate()?;
        self.model_integrator.validate()?;
        if !(self.ts_s > 0.0) || self.model_volumes < 1 || self.closed_loop_iterations < 1 {
            return Err(NmpcError::Config("ts_s, model_volumes and closed_loop_iterations must be positive".into()));
        }
        if !(self.z_done > 0.0 && self.z_done <= self.weights.z_target) {
            return Err(NmpcError::Config("z_done must lie in (0, z_target]".into()));
        }
        if !(self.model_cooling_smoothing_k >= 0.0) {
            return Err(NmpcError::Config("model_cooling_smoothing_k must be non-negative".into()));
        }
        Ok(())
    }
}

/// Input for one step: branch current and one duty cycle per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub current_a: f64,
    pub duty: Vec<f64>,
}

impl ControlInput {
    pub fn zero(n: usize) -> Self {
        ControlInput {
            current_a: 0.0,
            duty: vec![0.0; n],
        }
    }

    pub fn to_step(&self, ts_s: f64) -> InputStep {
        InputStep {
            i_branch_a: self.current_a,
            duty: self.duty.clone(),
            ts_s,
        }
    }
}

/// Inputs over the horizon, steps `k0 ..= k0 + H`, with the slacks they produce.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector {
    pub inputs: Vec<ControlInput>,
    /// Voltage, temperature and power slack per step.
    pub slacks: Vec<[f64; 3]>,
}

impl DecisionVector {
    /// Half duty and half current on every step.
    pub fn initial_guess(n: usize, horizon: usize, i_max_a: f64) -> Self {
        let u = ControlInput {
            current_a: -0.5 * i_max_a,
            duty: vec![0.5; n],
        };
        DecisionVector {
            inputs: vec![u; horizon + 1],
            slacks: vec![[0.0; 3]; horizon + 1],
        }
    }

    pub fn horizon(&self) -> usize {
        self.inputs.len() - 1
    }

    /// Drops the first input and repeats the last one.
    pub fn shifted(&self) -> Self {
        let mut inputs = self.inputs[1..].to_vec();
        inputs.push(self.inputs[self.inputs.len() - 1].clone());
        let mut slacks = self.slacks[1..].to_vec();
        slacks.push([0.0; 3]);
        DecisionVector { inputs, slacks }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_repeats_last_input() {
        let mut d = DecisionVector::initial_guess(1, 2, 7.5);
        d.inputs[0].current_a = -1.0;
        d.inputs[2].current_a = -3.0;
        let s = d.shifted();
        assert_eq!(s.inputs.len(), 3);
        assert_eq!(s.inputs[1].current_a, -3.0);
        assert_eq!(s.inputs[2].current_a, -3.0);
    }

    #[test]
    fn power_profile_holds_last_value() {
        let p = PowerLimit::Profile(vec![10.0, 20.0]);
        assert_eq!(p.at(0), 10.0);
        assert_eq!(p.at(7), 20.0);
        assert_eq!(PowerLimit::Constant(5.0).at(3), 5.0);
    }

    #[test]
    fn defaults_validate() {
        NmpcConfig::default().validate().unwrap();
        let mut c = NmpcConfig::default();
        c.weights.alpha[2] = -1.0;
        assert!(c.validate().is_err());
        let mut c = NmpcConfig::default();
        c.z_done = 1.2;
        assert!(c.validate().is_err());
    }
}
