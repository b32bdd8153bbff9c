//! Runs behind the subcommands, kept free of I/O so tests can call them.

use std::time::Instant;

use serde::Serialize;

use balcharge_core::cell::evaluate;
use balcharge_core::nmpc::{gradcheck, prediction_model, receding_horizon_charge, ControlInput, GradcheckReport, NmpcRun, Problem};
use balcharge_core::pack::{PackParameters, PackState};
use balcharge_core::protocols::{
    charge_cccv, charge_voltage_based, discharge_capacity_test, CccvRun, DischargeResult, RunSummary, VoltageBasedRun,
};
use balcharge_core::simulator::{simulate, SimConfig, SimTrace, SupplyMode};

use crate::error::{CliError, CliResult};
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Cccv,
    VoltageBased,
    Nmpc,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Cccv, Protocol::VoltageBased, Protocol::Nmpc];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Cccv => "cccv",
            Protocol::VoltageBased => "voltage_based",
            Protocol::Nmpc => "nmpc",
        }
    }
}

/// The plant settings of a scenario, with the supply mode optionally overridden.
pub fn plant_config(scenario: &Scenario, mode: Option<SupplyMode>) -> SimConfig {
    let mut c = scenario.plant.clone();
    if let Some(m) = mode {
        c.mode = m;
    }
    c
}

#[derive(Debug, Clone)]
pub enum ChargeRun {
    Cccv(CccvRun),
    VoltageBased(VoltageBasedRun),
    Nmpc(NmpcRun),
}

impl ChargeRun {
    pub fn trace(&self) -> &SimTrace {
        match self {
            ChargeRun::Cccv(r) => &r.trace,
            ChargeRun::VoltageBased(r) => &r.trace,
            ChargeRun::Nmpc(r) => &r.trace,
        }
    }

    pub fn protocol(&self) -> Protocol {
        match self {
            ChargeRun::Cccv(_) => Protocol::Cccv,
            ChargeRun::VoltageBased(_) => Protocol::VoltageBased,
            ChargeRun::Nmpc(_) => Protocol::Nmpc,
        }
    }
}

pub fn charge(
    protocol: Protocol,
    scenario: &Scenario,
    pack: &PackParameters,
    initial: &PackState,
    plant: &SimConfig,
) -> CliResult<ChargeRun> {
    let start = Instant::now();
    let run = match protocol {
        Protocol::Cccv => ChargeRun::Cccv(charge_cccv(initial.clone(), &scenario.cccv_config(), plant, pack)?),
        Protocol::VoltageBased => ChargeRun::VoltageBased(charge_voltage_based(
            initial.clone(),
            &scenario.voltage_based_config(),
            plant,
            pack,
        )?),
        Protocol::Nmpc => ChargeRun::Nmpc(receding_horizon_charge(
            initial.clone(),
            pack,
            plant.clone(),
            &scenario.nmpc_config(),
        )?),
    };
    log::info!(
        "{}: {} steps, stop {:?}, {:.1} s wall",
        protocol.name(),
        run.trace().steps,
        run.trace().stop,
        start.elapsed().as_secs_f64()
    );
    Ok(run)
}

/// A charge followed by the discharge-capacity test from its final state.
#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub charge: ChargeRun,
    pub discharge: DischargeResult,
    pub summary: RunSummary,
    /// Wall-clock time of the charge, s.
    pub wall_s: f64,
}

pub fn charge_and_discharge(
    protocol: Protocol,
    scenario: &Scenario,
    pack: &PackParameters,
    initial: &PackState,
    plant: &SimConfig,
) -> CliResult<ProtocolReport> {
    let start = Instant::now();
    let charge = charge(protocol, scenario, pack, initial, plant)?;
    let wall_s = start.elapsed().as_secs_f64();
    let discharge = discharge_capacity_test(charge.trace().final_state.clone(), plant, pack)?;
    let mut summary = RunSummary::from_trace(protocol.name(), initial, charge.trace(), pack);
    summary.extracted_ah = Some(discharge.extracted_ah);
    Ok(ProtocolReport {
        charge,
        discharge,
        summary,
        wall_s,
    })
}

/// The three charging strategies from identical initial states.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub runs: Vec<ProtocolReport>,
}

impl Comparison {
    pub fn get(&self, protocol: Protocol) -> &ProtocolReport {
        self.runs.iter().find(|r| r.charge.protocol() == protocol).expect("every protocol runs")
    }

    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }
}

/// Runs the three protocols concurrently, each with its chained discharge.
pub fn run_compare(scenario: &Scenario, plant: &SimConfig) -> CliResult<Comparison> {
    let pack = scenario.pack();
    let initial = scenario.initial_state(&pack);
    let results: Vec<CliResult<ProtocolReport>> = std::thread::scope(|s| {
        let handles: Vec<_> = Protocol::ALL
            .iter()
            .map(|&p| {
                let (pack, initial) = (&pack, &initial);
                s.spawn(move || charge_and_discharge(p, scenario, pack, initial, plant))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("protocol thread panicked")).collect()
    });
    Ok(Comparison {
        runs: results.into_iter().collect::<CliResult<_>>()?,
    })
}

/// Runs the scenario schedule open loop.
pub fn run_simulate(scenario: &Scenario, plant: &SimConfig) -> CliResult<SimTrace> {
    let pack = scenario.pack();
    let initial = scenario.initial_state(&pack);
    Ok(simulate(initial, &scenario.input_schedule(), plant.clone(), &pack, &mut |_| None)?)
}

pub fn run_discharge(scenario: &Scenario, plant: &SimConfig) -> CliResult<DischargeResult> {
    let pack = scenario.pack();
    let initial = scenario.initial_state(&pack);
    Ok(discharge_capacity_test(initial, plant, &pack)?)
}

/// Terminal voltages of a pack at rest.
pub fn rest_voltages(state: &PackState, pack: &PackParameters) -> CliResult<Vec<f64>> {
    state
        .cells
        .iter()
        .zip(&pack.cells)
        .map(|(c, p)| Ok(evaluate(c, 0.0, p)?.voltage))
        .collect()
}

/// Audits the controller's objective gradient at the scenario's initial state.
pub fn run_gradcheck(scenario: &Scenario, points: usize, seed: u64, central_step: f64) -> CliResult<GradcheckReport> {
    let config = scenario.nmpc_config();
    let plant = scenario.pack();
    let initial = scenario.initial_state(&plant);
    let model = prediction_model(&plant, &config);
    let state = PackState {
        cells: initial.cells.iter().map(|c| c.restricted(config.model_volumes)).collect(),
        t_sink_k: initial.t_sink_k,
    };
    let v0 = rest_voltages(&initial, &plant)?;
    let n = plant.len();
    let mut problem = Problem::new(&model, &config, state, v0, ControlInput::zero(n), 0)?;
    Ok(gradcheck(&mut problem, points, seed, central_step))
}

pub fn check_gradient(report: &GradcheckReport, tolerance: f64) -> CliResult<()> {
    if report.passed(tolerance) {
        Ok(())
    } else {
        Err(CliError::Solver(format!(
            "gradient audit failed: max relative error {:e} exceeds {tolerance:e}",
            report.max_relative_error
        )))
    }
}
