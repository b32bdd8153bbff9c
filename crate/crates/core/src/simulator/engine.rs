use crate::cell::{evaluate, max_stable_substep, CellOutputs};
use crate::error::{ModelError, Result};
use crate::pack::{pack_rhs_into, PackParameters, PackScratch, PackState};

use super::{quantized_duty, sigmoid_current, InputStep, OverchargePolicy, SimConfig, SupplyMode};

/// What an observer sees at a substep boundary.
pub struct Observation<'a> {
    /// Absolute time, s.
    pub t: f64,
    /// Zero-based control step index.
    pub step: usize,
    /// Substep index within the step; equals `substeps` at the end of the step.
    pub substep: usize,
    pub substeps: usize,
    pub i_branch_a: f64,
    /// Current in effect just after `t` (just before `t` at the end of a step).
    pub currents_a: &'a [f64],
    pub outputs: &'a [CellOutputs],
    pub state: &'a PackState,
    pub params: &'a PackParameters,
}

impl Observation<'_> {
    pub fn at_step_end(&self) -> bool {
        self.substep == self.substeps
    }

    pub fn soc(&self, i: usize) -> f64 {
        self.state.cells[i].soc(&self.params.cells[i])
    }

    pub fn voltage(&self, i: usize) -> f64 {
        self.outputs[i].voltage
    }

    pub fn total_voltage(&self) -> f64 {
        self.outputs.iter().map(|o| o.voltage).sum()
    }
}

/// Fixed-step RK4 integrator with its scratch buffers.
pub struct Simulator<'p> {
    params: &'p PackParameters,
    config: SimConfig,
    k: [PackState; 4],
    tmp: PackState,
    currents: Vec<f64>,
    outputs: Vec<CellOutputs>,
    stage_outputs: Vec<CellOutputs>,
    scratch: PackScratch,
    /// Outputs at the end of the last integrated step, with the current in
    /// effect just before the step boundary.
    end_outputs: Vec<CellOutputs>,
    end_currents: Vec<f64>,
    /// Charge delivered per cell during the last step, As.
    step_charge: Vec<f64>,
    /// Stability limit of the substep at the initial temperatures.
    stable_h: f64,
    warned: bool,
}

/// How a step ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEnd<R> {
    Completed,
    /// The observer asked to stop at this substep boundary.
    Stopped { substep: usize, reason: R },
}

impl<'p> Simulator<'p> {
    pub fn new(params: &'p PackParameters, config: SimConfig, template: &PackState) -> Result<Self> {
        config.integrator.validate()?;
        if config.record_every < 1 {
            return Err(ModelError::param("record_every", "must be at least 1"));
        }
        params.check_state(template)?;
        let z = template.zeros_like();
        let n = template.cells.len();
        let stable_h = template
            .cells
            .iter()
            .zip(&params.cells)
            .map(|(c, p)| max_stable_substep(p, c.temperature_k))
            .fold(f64::INFINITY, f64::min);
        Ok(Simulator {
            params,
            config,
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: template.clone(),
            currents: vec![0.0; n],
            outputs: Vec::with_capacity(n),
            stage_outputs: Vec::with_capacity(n),
            scratch: PackScratch::default(),
            end_outputs: Vec::with_capacity(n),
            end_currents: vec![0.0; n],
            step_charge: vec![0.0; n],
            stable_h,
            warned: false,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn params(&self) -> &'p PackParameters {
        self.params
    }

    pub fn end_outputs(&self) -> &[CellOutputs] {
        &self.end_outputs
    }

    pub fn end_currents(&self) -> &[f64] {
        &self.end_currents
    }

    pub fn step_charge(&self) -> &[f64] {
        &self.step_charge
    }

    fn fill_currents(&mut self, step: &InputStep, substep: usize, tau: f64) {
        let n_sub = self.config.integrator.substeps;
        let ts = step.ts_s;
        match self.config.mode {
            SupplyMode::Switched => {
                for (c, &d) in self.currents.iter_mut().zip(&step.duty) {
                    let on = (quantized_duty(d, n_sub) * n_sub as f64).round() as usize;
                    *c = if substep + on >= n_sub { step.i_branch_a } else { 0.0 };
                }
            }
            SupplyMode::Average => {
                for (c, &d) in self.currents.iter_mut().zip(&step.duty) {
                    *c = d * step.i_branch_a;
                }
            }
            SupplyMode::Sigmoid => {
                let a = self.config.integrator.sigmoid_slope;
                let time = self.config.integrator.sigmoid_time;
                for (c, &d) in self.currents.iter_mut().zip(&step.duty) {
                    *c = sigmoid_current(tau, step.i_branch_a, d, ts, a, time);
                }
            }
        }
    }

    fn check_soc(&self, state: &PackState) -> Result<()> {
        if let OverchargePolicy::Abort { ceiling } = self.config.overcharge {
            for (i, (c, p)) in state.cells.iter().zip(&self.params.cells).enumerate() {
                let z = c.soc(p);
                if z > ceiling {
                    return Err(ModelError::Overcharge { soc: z, ceiling }.in_cell(i));
                }
            }
        }
        Ok(())
    }

    /// Advances `state` by one control step starting at absolute time `t0`.
    ///
    /// `observe` is called at every substep start (with the current that is
    /// about to flow) and once at the end of the step (with the current that
    /// just flowed). Returning `Some` stops the integration at that boundary.
    pub fn integrate_step<R>(
        &mut self,
        state: &mut PackState,
        step: &InputStep,
        step_index: usize,
        t0: f64,
        observe: &mut dyn FnMut(&Observation) -> Option<R>,
    ) -> Result<StepEnd<R>> {
        let n_sub = self.config.integrator.substeps;
        let h = step.ts_s / n_sub as f64;
        if h > self.stable_h && !self.warned {
            log::warn!(
                "substep {h:.3} s exceeds the electrolyte stability limit {:.3} s; raise substeps",
                self.stable_h
            );
            self.warned = true;
        }
        let params = self.params;
        self.step_charge.iter_mut().for_each(|q| *q = 0.0);

        for j in 0..n_sub {
            let tau = j as f64 * h;
            // stage 1, doubling as the observation at the substep start
            self.fill_currents(step, j, tau);
            pack_rhs_into(state, &self.currents, params, &mut self.k[0], &mut self.outputs, &mut self.scratch)?;
            let obs = Observation {
                t: t0 + tau,
                step: step_index,
                substep: j,
                substeps: n_sub,
                i_branch_a: step.i_branch_a,
                currents_a: &self.currents,
                outputs: &self.outputs,
                state,
                params,
            };
            if let Some(reason) = observe(&obs) {
                self.end_outputs.clone_from(&self.outputs);
                self.end_currents.clone_from(&self.currents);
                return Ok(StepEnd::Stopped { substep: j, reason });
            }
            for (q, c) in self.step_charge.iter_mut().zip(&self.currents) {
                *q += h / 6.0 * c;
            }

            self.tmp.set_axpy(state, 0.5 * h, &self.k[0]);
            self.fill_currents(step, j, tau + 0.5 * h);
            pack_rhs_into(&self.tmp, &self.currents, params, &mut self.k[1], &mut self.stage_outputs, &mut self.scratch)?;
            for (q, c) in self.step_charge.iter_mut().zip(&self.currents) {
                *q += 4.0 * h / 6.0 * c;
            }
            self.tmp.set_axpy(state, 0.5 * h, &self.k[1]);
            pack_rhs_into(&self.tmp, &self.currents, params, &mut self.k[2], &mut self.stage_outputs, &mut self.scratch)?;

            self.tmp.set_axpy(state, h, &self.k[2]);
            self.fill_currents(step, j, tau + h);
            pack_rhs_into(&self.tmp, &self.currents, params, &mut self.k[3], &mut self.stage_outputs, &mut self.scratch)?;
            for (q, c) in self.step_charge.iter_mut().zip(&self.currents) {
                *q += h / 6.0 * c;
            }

            state.add_scaled(h / 6.0, &self.k[0]);
            state.add_scaled(h / 3.0, &self.k[1]);
            state.add_scaled(h / 3.0, &self.k[2]);
            state.add_scaled(h / 6.0, &self.k[3]);
            self.check_soc(state)?;
        }

        // end of step: the current of the last substep is still flowing
        self.fill_currents(step, n_sub - 1, step.ts_s);
        self.end_outputs.clear();
        for (i, (c, p)) in state.cells.iter().zip(&params.cells).enumerate() {
            self.end_outputs
                .push(evaluate(c, self.currents[i], p).map_err(|e| e.in_cell(i))?);
        }
        self.end_currents.clone_from(&self.currents);
        let obs = Observation {
            t: t0 + step.ts_s,
            step: step_index,
            substep: n_sub,
            substeps: n_sub,
            i_branch_a: step.i_branch_a,
            currents_a: &self.end_currents,
            outputs: &self.end_outputs,
            state,
            params,
        };
        if let Some(reason) = observe(&obs) {
            return Ok(StepEnd::Stopped { substep: n_sub, reason });
        }
        Ok(StepEnd::Completed)
    }

    /// Advances one step without observation.
    pub fn advance(&mut self, state: &mut PackState, step: &InputStep, step_index: usize, t0: f64) -> Result<()> {
        self.integrate_step::<()>(state, step, step_index, t0, &mut |_| None)?;
        Ok(())
    }
}
