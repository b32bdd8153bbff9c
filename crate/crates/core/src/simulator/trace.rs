use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::cell::{evaluate, CellOutputs};
use crate::constants::SECONDS_PER_HOUR;
use crate::error::{ModelError, Result};
use crate::pack::{PackParameters, PackState};

use super::engine::{Observation, StepEnd};
use super::{InputStep, SimConfig, Simulator};

/// Why a run ended. Cell indices are zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    ScheduleExhausted,
    VoltageCeiling { cell: usize },
    TemperatureCeiling { cell: usize },
    SocTarget,
    CutoffVoltage { cell: usize },
    /// Safety rail on SOC for protocols that tolerate overcharge.
    SocRail { cell: usize },
    CurrentCutoff,
    AllBypassed,
    StepLimit,
    ValidityViolation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellRow {
    pub soc: f64,
    pub voltage_v: f64,
    pub temperature_k: f64,
    pub capacity_as: f64,
    pub r_sei_ohm: f64,
    pub current_a: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub i_branch_a: f64,
    pub cells: Vec<CellRow>,
    pub t_sink_k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverchargeEvent {
    pub cell: usize,
    pub t_s: f64,
    pub soc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub n_cells: usize,
    pub rows: Vec<TraceRow>,
    /// Charge delivered to each cell, As. Negative while charging.
    pub charge_as: Vec<f64>,
    /// Largest terminal voltage seen per cell, at any substep boundary.
    pub peak_voltage_v: Vec<f64>,
    pub peak_temperature_k: Vec<f64>,
    pub max_soc: Vec<f64>,
    /// First time each cell's SOC passed 1.
    pub overcharge_events: Vec<OverchargeEvent>,
    pub stop: StopReason,
    /// Control steps started.
    pub steps: usize,
    pub duration_s: f64,
    pub final_state: PackState,
}

impl SimTrace {
    pub fn final_soc(&self, params: &PackParameters) -> Vec<f64> {
        self.final_state
            .cells
            .iter()
            .zip(&params.cells)
            .map(|(c, p)| c.soc(p))
            .collect()
    }

    /// Writes the trace as CSV: one unit comment line, a header and one row per sample.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "# units: t [s], I_branch [A], z [-], V [V], T [K], C [Ah], Rsei [Ohm], Iapp [A], T_sink [K]; charging current is negative"
        )?;
        let mut header = vec!["t".to_string(), "I_branch".to_string()];
        for name in ["z", "V", "T", "C", "Rsei", "Iapp"] {
            for i in 1..=self.n_cells {
                header.push(format!("{name}_{i}"));
            }
        }
        header.push("T_sink".into());
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for row in &self.rows {
            use std::fmt::Write as _;
            line.clear();
            let _ = write!(line, "{},{}", row.t_s, row.i_branch_a);
            for f in 0..6 {
                for c in &row.cells {
                    let v = match f {
                        0 => c.soc,
                        1 => c.voltage_v,
                        2 => c.temperature_k,
                        3 => c.capacity_as / SECONDS_PER_HOUR,
                        4 => c.r_sei_ohm,
                        _ => c.current_a,
                    };
                    let _ = write!(line, ",{v}");
                }
            }
            let _ = write!(line, ",{}", row.t_sink_k);
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

/// A run that hit a validity violation, with everything recorded up to that point.
#[derive(Debug, Clone, thiserror::Error)]
#[error("simulation aborted at t = {t_s} s: {error}")]
pub struct SimFailure {
    pub error: ModelError,
    pub t_s: f64,
    pub trace: Box<SimTrace>,
}

struct Recorder {
    record_every: usize,
    counter: usize,
    rows: Vec<TraceRow>,
    peak_v: Vec<f64>,
    peak_t: Vec<f64>,
    max_soc: Vec<f64>,
    events: Vec<OverchargeEvent>,
    charge: Vec<f64>,
}

impl Recorder {
    fn new(n: usize, record_every: usize) -> Self {
        Recorder {
            record_every,
            counter: 0,
            rows: Vec::new(),
            peak_v: vec![f64::NEG_INFINITY; n],
            peak_t: vec![f64::NEG_INFINITY; n],
            max_soc: vec![f64::NEG_INFINITY; n],
            events: Vec::new(),
            charge: vec![0.0; n],
        }
    }

    fn track(&mut self, t: f64, state: &PackState, params: &PackParameters, outputs: &[CellOutputs]) {
        for (i, (c, p)) in state.cells.iter().zip(&params.cells).enumerate() {
            let z = c.soc(p);
            self.peak_v[i] = self.peak_v[i].max(outputs[i].voltage);
            self.peak_t[i] = self.peak_t[i].max(c.temperature_k);
            self.max_soc[i] = self.max_soc[i].max(z);
            if z > 1.0 && !self.events.iter().any(|e| e.cell == i) {
                self.events.push(OverchargeEvent { cell: i, t_s: t, soc: z });
            }
        }
    }

    fn row(
        t: f64,
        i_branch: f64,
        state: &PackState,
        params: &PackParameters,
        outputs: &[CellOutputs],
        currents: &[f64],
    ) -> TraceRow {
        TraceRow {
            t_s: t,
            i_branch_a: i_branch,
            cells: state
                .cells
                .iter()
                .zip(&params.cells)
                .enumerate()
                .map(|(i, (c, p))| CellRow {
                    soc: c.soc(p),
                    voltage_v: outputs[i].voltage,
                    temperature_k: c.temperature_k,
                    capacity_as: c.capacity_as,
                    r_sei_ohm: c.r_sei_ohm,
                    current_a: currents[i],
                })
                .collect(),
            t_sink_k: state.t_sink_k,
        }
    }

    fn observe(&mut self, obs: &Observation) {
        self.track(obs.t, obs.state, obs.params, obs.outputs);
        if !obs.at_step_end() {
            if self.counter % self.record_every == 0 {
                self.rows
                    .push(Self::row(obs.t, obs.i_branch_a, obs.state, obs.params, obs.outputs, obs.currents_a));
            }
            self.counter += 1;
        }
    }
}

/// A run in progress: simulator, pack state, clock and recorder.
///
/// Closed-loop drivers call [`Session::step`] once per control step and
/// decide the next input from the returned state.
pub struct Session<'p> {
    sim: Simulator<'p>,
    state: PackState,
    t: f64,
    steps: usize,
    recorder: Recorder,
    last: Option<(f64, Vec<f64>)>,
    stopped: Option<StopReason>,
}

impl<'p> Session<'p> {
    pub fn new(params: &'p PackParameters, config: SimConfig, initial: PackState) -> Result<Self> {
        params.validate()?;
        let every = config.record_every;
        let sim = Simulator::new(params, config, &initial)?;
        Ok(Session {
            sim,
            recorder: Recorder::new(initial.cells.len(), every),
            state: initial,
            t: 0.0,
            steps: 0,
            last: None,
            stopped: None,
        })
    }

    pub fn state(&self) -> &PackState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn params(&self) -> &'p PackParameters {
        self.sim.params()
    }

    pub fn config(&self) -> &SimConfig {
        self.sim.config()
    }

    /// Outputs at the current time with the current that flowed last (zero before the first step).
    pub fn outputs(&self) -> Result<Vec<CellOutputs>> {
        if self.steps > 0 {
            return Ok(self.sim.end_outputs().to_vec());
        }
        self.outputs_at_rest()
    }

    fn outputs_at_rest(&self) -> Result<Vec<CellOutputs>> {
        self.state
            .cells
            .iter()
            .zip(&self.params().cells)
            .enumerate()
            .map(|(i, (c, p))| evaluate(c, 0.0, p).map_err(|e| e.in_cell(i)))
            .collect()
    }

    pub fn socs(&self) -> Vec<f64> {
        self.state
            .cells
            .iter()
            .zip(&self.params().cells)
            .map(|(c, p)| c.soc(p))
            .collect()
    }

    /// Runs one control step. Returns the stop reason if `stop` fired.
    pub fn step(
        &mut self,
        input: &InputStep,
        stop: &mut dyn FnMut(&Observation) -> Option<StopReason>,
    ) -> Result<Option<StopReason>> {
        if let Some(r) = self.stopped {
            return Ok(Some(r));
        }
        input.validate(self.state.cells.len())?;
        let t0 = self.t;
        let index = self.steps;
        self.steps += 1;
        let recorder = &mut self.recorder;
        let mut observe = |obs: &Observation| {
            recorder.observe(obs);
            stop(obs)
        };
        let end = self.sim.integrate_step(&mut self.state, input, index, t0, &mut observe);
        let h = input.ts_s / self.sim.config().integrator.substeps as f64;
        for (q, dq) in self.recorder.charge.iter_mut().zip(self.sim.step_charge()) {
            *q += dq;
        }
        match end {
            Ok(StepEnd::Completed) => {
                self.t = t0 + input.ts_s;
                self.last = Some((input.i_branch_a, self.sim.end_currents().to_vec()));
                Ok(None)
            }
            Ok(StepEnd::Stopped { substep, reason }) => {
                self.t = t0 + substep as f64 * h;
                self.last = Some((input.i_branch_a, self.sim.end_currents().to_vec()));
                self.stopped = Some(reason);
                Ok(Some(reason))
            }
            Err(e) => Err(e),
        }
    }

    fn into_trace(mut self, stop: StopReason) -> SimTrace {
        let params = self.sim.params();
        let final_row = match &self.last {
            Some((ib, currents)) => Some(Recorder::row(
                self.t,
                *ib,
                &self.state,
                params,
                self.sim.end_outputs(),
                currents,
            )),
            None => self
                .outputs_at_rest()
                .ok()
                .map(|o| Recorder::row(self.t, 0.0, &self.state, params, &o, &vec![0.0; self.state.cells.len()])),
        };
        if let Some(row) = final_row {
            let dup = self.recorder.rows.last().is_some_and(|r| r.t_s == row.t_s);
            if !dup {
                self.recorder.rows.push(row);
            }
        }
        if self.steps == 0 {
            if let Ok(o) = self.outputs_at_rest() {
                self.recorder.track(self.t, &self.state, params, &o);
            }
        }
        let r = self.recorder;
        SimTrace {
            n_cells: self.state.cells.len(),
            rows: r.rows,
            charge_as: r.charge,
            peak_voltage_v: r.peak_v,
            peak_temperature_k: r.peak_t,
            max_soc: r.max_soc,
            overcharge_events: r.events,
            stop,
            steps: self.steps,
            duration_s: self.t,
            final_state: self.state,
        }
    }

    pub fn finish(self, stop: StopReason) -> SimTrace {
        self.into_trace(stop)
    }

    /// Wraps a validity violation together with the partial trace.
    pub fn fail(self, error: ModelError) -> SimFailure {
        let t_s = self.t;
        SimFailure {
            error,
            t_s,
            trace: Box::new(self.into_trace(StopReason::ValidityViolation)),
        }
    }
}

/// Runs a fixed schedule until it is exhausted or `stop` fires at a substep boundary.
pub fn simulate(
    initial: PackState,
    schedule: &[InputStep],
    config: SimConfig,
    params: &PackParameters,
    stop: &mut dyn FnMut(&Observation) -> Option<StopReason>,
) -> std::result::Result<SimTrace, SimFailure> {
    if schedule.is_empty() {
        return Err(SimFailure {
            error: ModelError::param("schedule", "schedule is empty"),
            t_s: 0.0,
            trace: Box::new(empty_trace(initial)),
        });
    }
    let mut session = match Session::new(params, config, initial.clone()) {
        Ok(s) => s,
        Err(error) => {
            return Err(SimFailure {
                error,
                t_s: 0.0,
                trace: Box::new(empty_trace(initial)),
            })
        }
    };
    for input in schedule {
        match session.step(input, stop) {
            Ok(None) => {}
            Ok(Some(reason)) => return Ok(session.finish(reason)),
            Err(e) => return Err(session.fail(e)),
        }
    }
    Ok(session.finish(StopReason::ScheduleExhausted))
}

fn empty_trace(state: PackState) -> SimTrace {
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
        final_state: state,
    }
}
