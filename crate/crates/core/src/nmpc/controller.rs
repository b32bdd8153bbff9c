use std::time::Instant;

use serde::Serialize;

use crate::pack::{PackParameters, PackState};
use crate::simulator::{Session, SimConfig, SimTrace, StopReason};

use super::problem::{prediction_model, shift_scaled, Problem};
use super::solver::{minimize_box, Objective, Termination};
use super::{ControlInput, NmpcConfig, NmpcError, NmpcResult, INVALID_COST};

/// One line of the per-step solver log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveLogRow {
    pub k: usize,
    pub cost: f64,
    pub iterations: usize,
    pub max_violation: f64,
    pub wall_ms: f64,
    #[serde(skip)]
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct NmpcRun {
    pub trace: SimTrace,
    pub log: Vec<SolveLogRow>,
    /// Inputs applied to the plant, one per step.
    pub applied: Vec<ControlInput>,
}

impl NmpcRun {
    pub fn write_log_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k,cost,iterations,max_violation,wall_ms")?;
        for r in &self.log {
            writeln!(w, "{},{:e},{},{:e},{:.3}", r.k, r.cost, r.iterations, r.max_violation, r.wall_ms)?;
        }
        Ok(())
    }
}

/// Model state matching a plant state, on the model's electrolyte grid.
fn restrict(state: &PackState, model: &PackParameters) -> PackState {
    PackState {
        cells: state
            .cells
            .iter()
            .zip(&model.cells)
            .map(|(c, p)| c.restricted(p.volumes_per_section))
            .collect(),
        t_sink_k: state.t_sink_k,
    }
}

/// The cheapest valid start among the warm start, the default point and rest.
fn starting_point(problem: &mut Problem, warm: Option<&[f64]>) -> NmpcResult<Vec<f64>> {
    let mut candidates: Vec<Vec<f64>> = warm.into_iter().map(|w| w.to_vec()).collect();
    candidates.push(problem.default_point());
    candidates.push(problem.rest_point());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for x in candidates {
        let f = problem.value(&x);
        if f < INVALID_COST && best.as_ref().map_or(true, |(b, _)| f < *b) {
            best = Some((f, x));
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| NmpcError::NoValidGuess("even a rest step leaves the model's valid region".into()))
}

/// Charges the plant in closed loop until every cell reaches `z_done`.
pub fn receding_horizon_charge(
    initial: PackState,
    plant: &PackParameters,
    plant_config: SimConfig,
    config: &NmpcConfig,
) -> NmpcResult<NmpcRun> {
    config.validate()?;
    let model = prediction_model(plant, config);
    let n = plant.len();
    let mut session = Session::new(plant, plant_config, initial)?;
    let mut previous = ControlInput::zero(n);
    let mut warm: Option<Vec<f64>> = None;
    let mut log = Vec::new();
    let mut applied = Vec::new();

    let stop = loop {
        if session.socs().iter().all(|z| *z >= config.z_done) {
            break StopReason::SocTarget;
        }
        if session.steps() >= config.max_steps {
            break StopReason::StepLimit;
        }
        let k = session.steps();
        let clock = Instant::now();
        let measured: Vec<f64> = match session.outputs() {
            Ok(o) => o.iter().map(|o| o.voltage).collect(),
            Err(e) => return Err(session.fail(e).into()),
        };
        let state = restrict(session.state(), &model);
        let mut problem = Problem::new(&model, config, state, measured.clone(), previous.clone(), k)?;
        let x0 = starting_point(&mut problem, warm.as_deref())?;
        let out = minimize_box(
            &mut problem,
            &x0,
            config.closed_loop_iterations,
            config.solver.relative_tolerance,
            config.solver.gradient_tolerance,
        );
        let decision = problem.decision(&out.x)?;
        let max_violation = problem.predict(&decision)?.cost.max_violation;
        let u = decision.inputs[0].clone();
        if let Err(e) = session.step(&u.to_step(config.ts_s), &mut |_| None) {
            return Err(session.fail(e).into());
        }
        log.push(SolveLogRow {
            k,
            cost: out.value,
            iterations: out.iterations,
            max_violation,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            termination: out.termination,
        });
        log::debug!(
            "step {k}: cost {:.6e}, {} iterations ({:?}), I = {:.3} A",
            out.value,
            out.iterations,
            out.termination,
            u.current_a
        );
        applied.push(u.clone());
        previous = u;
        warm = Some(shift_scaled(&out.x, n));
    };

    Ok(NmpcRun {
        trace: session.finish(stop),
        log,
        applied,
    })
}
