use crate::error::Result;
use crate::pack::{PackParameters, PackState};
use crate::simulator::{OverchargePolicy, SimConfig, Simulator, SupplyMode};

use super::cost::{smoothed_cost, soft_constrained_cost, SoftCost, Trajectory};
use super::solver::Objective;
use super::{ControlInput, DecisionVector, NmpcConfig, NmpcError, NmpcResult, INVALID_COST};

/// The coarse pack the controller predicts with: fewer electrolyte volumes
/// and a smooth cooling switch.
pub fn prediction_model(plant: &PackParameters, config: &NmpcConfig) -> PackParameters {
    let mut p = plant.with_volumes(config.model_volumes);
    p.network.cooling_smoothing_k = config.model_cooling_smoothing_k;
    p
}

fn model_sim_config(config: &NmpcConfig) -> SimConfig {
    SimConfig {
        integrator: config.model_integrator.clone(),
        mode: SupplyMode::Sigmoid,
        overcharge: OverchargePolicy::Record,
        record_every: 1,
    }
}

#[derive(Debug, Clone)]
struct Node {
    state: PackState,
    socs: Vec<f64>,
    temperatures: Vec<f64>,
    voltages: Vec<f64>,
}

/// A prediction over the horizon and its cost.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub trajectory: Trajectory,
    /// Model states at the step boundaries.
    pub states: Vec<PackState>,
    pub cost: SoftCost,
    /// The softened cost the solver sees.
    pub smoothed_cost: f64,
}

/// One horizon problem: the model, the measured start and the cost.
pub struct Problem<'a> {
    sim: Simulator<'a>,
    params: &'a PackParameters,
    config: &'a NmpcConfig,
    start: Node,
    previous: ControlInput,
    k0: usize,
    cached_x: Vec<f64>,
    cached: Option<(Vec<Node>, Vec<ControlInput>)>,
    cached_cost: f64,
    /// Number of single-step model integrations so far.
    pub integrations: usize,
    pub evaluations: usize,
}

impl<'a> Problem<'a> {
    /// `state` must live on the prediction model's grid; `measured_v` are
    /// the terminal voltages at the start of step `k0`.
    pub fn new(
        params: &'a PackParameters,
        config: &'a NmpcConfig,
        state: PackState,
        measured_v: Vec<f64>,
        previous: ControlInput,
        k0: usize,
    ) -> NmpcResult<Self> {
        config.validate()?;
        let n = params.len();
        if measured_v.len() != n || previous.duty.len() != n {
            return Err(NmpcError::Config(format!("expected {n} measured voltages and duty cycles")));
        }
        let sim = Simulator::new(params, model_sim_config(config), &state)?;
        let socs: Vec<f64> = state.cells.iter().zip(&params.cells).map(|(c, p)| c.soc(p)).collect();
        let target = config.weights.z_target;
        if let Some((cell, &soc)) = socs.iter().enumerate().find(|(_, z)| **z > target) {
            return Err(NmpcError::TargetBelowSoc { cell, soc, target });
        }
        let temperatures = state.cells.iter().map(|c| c.temperature_k).collect();
        Ok(Problem {
            sim,
            params,
            config,
            start: Node {
                state,
                socs,
                temperatures,
                voltages: measured_v,
            },
            previous,
            k0,
            cached_x: Vec::new(),
            cached: None,
            cached_cost: f64::NAN,
            integrations: 0,
            evaluations: 0,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.params.len()
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon
    }

    /// Absolute index of the first step of the horizon.
    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn config(&self) -> &NmpcConfig {
        self.config
    }

    fn i_max(&self) -> f64 {
        self.config.weights.i_max_a
    }

    fn advance(&mut self, from: &Node, u: &ControlInput) -> Result<Node> {
        let mut state = from.state.clone();
        self.integrations += 1;
        self.sim.advance(&mut state, &u.to_step(self.config.ts_s), 0, 0.0)?;
        Ok(Node {
            socs: state.cells.iter().zip(&self.params.cells).map(|(c, p)| c.soc(p)).collect(),
            temperatures: state.cells.iter().map(|c| c.temperature_k).collect(),
            voltages: self.sim.end_outputs().iter().map(|o| o.voltage).collect(),
            state,
        })
    }

    /// Integrates steps `from..H` under explicit inputs, truncating `nodes` first.
    fn extend(&mut self, nodes: &mut Vec<Node>, from: usize, decision: &DecisionVector) -> Result<()> {
        nodes.truncate(from + 1);
        for j in from..self.horizon() {
            let next = self.advance(&nodes[j], &decision.inputs[j])?;
            nodes.push(next);
        }
        Ok(())
    }

    fn trajectory(nodes: &[Node]) -> Trajectory {
        Trajectory {
            socs: nodes.iter().map(|n| n.socs.clone()).collect(),
            temperatures_k: nodes.iter().map(|n| n.temperatures.clone()).collect(),
            voltages_v: nodes.iter().map(|n| n.voltages.clone()).collect(),
        }
    }

    /// Softened cost; the power bound holds by construction under the
    /// scaled variables, so `power` is only set for explicit inputs.
    fn smoothed(&self, nodes: &[Node], decision: &DecisionVector, power: bool) -> f64 {
        let c = self.config;
        let v = smoothed_cost(
            &Self::trajectory(nodes),
            decision,
            &self.previous,
            &c.weights,
            &c.limits,
            &c.smoothing,
            self.k0,
            power,
        );
        if v.is_finite() {
            v.min(INVALID_COST)
        } else {
            INVALID_COST
        }
    }

    /// Predicts the horizon under `decision` and prices it.
    pub fn predict(&mut self, decision: &DecisionVector) -> Result<Prediction> {
        let mut nodes = vec![self.start.clone()];
        self.extend(&mut nodes, 0, decision)?;
        let trajectory = Self::trajectory(&nodes);
        let c = self.config;
        let cost = soft_constrained_cost(&trajectory, decision, &self.previous, &c.weights, &c.limits, self.k0);
        Ok(Prediction {
            smoothed_cost: self.smoothed(&nodes, decision, true),
            states: nodes.into_iter().map(|n| n.state).collect(),
            trajectory,
            cost,
        })
    }

    /// Input of step `j` under scaled variables `x`, given the terminal
    /// voltages at the start of that step.
    ///
    /// Per step the variables are the duties and a power fraction `rho`:
    /// the branch current is `-rho * p_max / sum(V_i delta_i)`, capped at
    /// `i_max`, so the power bound reduces to `rho <= 1`.
    fn input_from(&self, x: &[f64], j: usize, voltages: &[f64]) -> ControlInput {
        let n = self.n_cells();
        let block = &x[j * (n + 1)..(j + 1) * (n + 1)];
        let duty = block[..n].to_vec();
        let rho = block[n];
        let drawn: f64 = voltages.iter().zip(&duty).map(|(v, d)| v * d).sum();
        let p_max = self.config.limits.p_max_w.at(self.k0 + j);
        let i_max = self.i_max();
        let magnitude = if rho * p_max < i_max * drawn { rho * p_max / drawn } else { i_max };
        ControlInput {
            current_a: -magnitude,
            duty,
        }
    }

    /// Integrates from `nodes[from]` under scaled variables, rebuilding the inputs from `from` on.
    fn extend_scaled(&mut self, nodes: &mut Vec<Node>, inputs: &mut Vec<ControlInput>, from: usize, x: &[f64]) -> Result<()> {
        nodes.truncate(from + 1);
        inputs.truncate(from);
        for j in from..=self.horizon() {
            let u = self.input_from(x, j, &nodes[j].voltages);
            if j < self.horizon() {
                let next = self.advance(&nodes[j], &u)?;
                nodes.push(next);
            }
            inputs.push(u);
        }
        Ok(())
    }

    fn as_decision(inputs: &[ControlInput]) -> DecisionVector {
        DecisionVector {
            inputs: inputs.to_vec(),
            slacks: vec![[0.0; 3]; inputs.len()],
        }
    }

    /// The inputs that scaled variables `x` stand for.
    pub fn decision(&mut self, x: &[f64]) -> NmpcResult<DecisionVector> {
        let mut nodes = vec![self.start.clone()];
        let mut inputs = Vec::new();
        self.extend_scaled(&mut nodes, &mut inputs, 0, x)?;
        Ok(Self::as_decision(&inputs))
    }

    /// Half duty everywhere with the current at half of `i_max` or 90% of
    /// the power bound, whichever is lower.
    pub fn default_point(&self) -> Vec<f64> {
        let n = self.n_cells();
        let drawn: f64 = self.start.voltages.iter().map(|v| 0.5 * v).sum();
        let mut x = Vec::with_capacity(self.dim());
        for j in 0..=self.horizon() {
            let p_max = self.config.limits.p_max_w.at(self.k0 + j);
            x.extend(std::iter::repeat(0.5).take(n));
            x.push((0.5 * self.i_max() * drawn / p_max).min(0.9));
        }
        x
    }

    /// Variables for a rest step everywhere.
    pub fn rest_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    fn ensure_cached(&mut self, x: &[f64]) {
        if self.cached_x != x {
            self.value(x);
        }
    }
}

/// Upper bound of the power fraction.
pub const RHO_MAX: f64 = 1.0 - 1e-9;

/// Warm start for the next step: drops the first block, repeats the last.
pub fn shift_scaled(x: &[f64], n_cells: usize) -> Vec<f64> {
    let mut out = x[n_cells + 1..].to_vec();
    out.extend_from_slice(&x[x.len() - (n_cells + 1)..]);
    out
}

impl Objective for Problem<'_> {
    fn dim(&self) -> usize {
        (self.horizon() + 1) * (self.n_cells() + 1)
    }

    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n_cells();
        let lo = vec![0.0; self.dim()];
        // the margin keeps roundoff at the power bound from registering as a violation
        let hi = (0..self.dim()).map(|i| if i % (n + 1) == n { RHO_MAX } else { 1.0 }).collect();
        (lo, hi)
    }

    fn value(&mut self, x: &[f64]) -> f64 {
        self.evaluations += 1;
        let mut nodes = vec![self.start.clone()];
        let mut inputs = Vec::new();
        let cost = match self.extend_scaled(&mut nodes, &mut inputs, 0, x) {
            Ok(()) => self.smoothed(&nodes, &Self::as_decision(&inputs), false),
            Err(_) => INVALID_COST,
        };
        self.cached_x = x.to_vec();
        self.cached = (cost < INVALID_COST).then_some((nodes, inputs));
        self.cached_cost = cost;
        cost
    }

    /// Forward differences; a perturbation of step `j` only re-integrates
    /// steps `j..H`, and the last block needs no integration at all.
    fn gradient(&mut self, x: &[f64], g: &mut [f64]) {
        self.ensure_cached(x);
        let Some((base_nodes, base_inputs)) = self.cached.clone() else {
            g.iter_mut().for_each(|v| *v = 0.0);
            return;
        };
        let f0 = self.cached_cost;
        let n = self.n_cells();
        let step = self.config.solver.fd_step;
        let (_, hi) = self.bounds();
        let mut xp = x.to_vec();
        let mut nodes = base_nodes.clone();
        let mut inputs = base_inputs.clone();
        for idx in 0..x.len() {
            let j = idx / (n + 1);
            let h = if x[idx] + step > hi[idx] { -step } else { step };
            xp[idx] = x[idx] + h;
            let cost = match self.extend_scaled(&mut nodes, &mut inputs, j, &xp) {
                Ok(()) => self.smoothed(&nodes, &Self::as_decision(&inputs), false),
                Err(_) => INVALID_COST,
            };
            g[idx] = (cost - f0) / h;
            xp[idx] = x[idx];
            nodes.truncate(j + 1);
            nodes.extend_from_slice(&base_nodes[j + 1..]);
            inputs.truncate(j);
            inputs.extend_from_slice(&base_inputs[j..]);
        }
        self.evaluations += x.len();
    }
}
