mod common;

use balcharge_core::cell::{anodic_from_cathodic, ocp, CellParameters, CellState, Electrode};
use balcharge_core::pack::{heat_generation, pack_rhs, PackParameters, PackState, ThermalNetwork};
use balcharge_core::simulator::*;
use common::*;
use proptest::prelude::*;

fn cfg(substeps: usize) -> SimConfig {
    SimConfig {
        integrator: IntegratorConfig {
            substeps,
            ..IntegratorConfig::default()
        },
        ..SimConfig::default()
    }
}

fn run(state: PackState, sched: &[InputStep], substeps: usize, pack: &PackParameters) -> SimTrace {
    simulate(state, sched, cfg(substeps), pack, &mut |_| None::<StopReason>).unwrap()
}

fn rest_ocv(c: &CellState, p: &CellParameters) -> f64 {
    ocp(c.theta_p, p, Electrode::Positive) - ocp(anodic_from_cathodic(c.theta_p, p).unwrap(), p, Electrode::Negative)
}

#[test]
fn voltage_relaxes_to_ocv_after_rest() {
    let (pack, state) = single(CellParameters::synthetic(), 7.5, 0.5);
    let mut sched = vec![InputStep::uniform(-7.5, 1, 10.0); 30];
    sched.extend(vec![InputStep::uniform(0.0, 1, 10.0); 360]);
    let tr = run(state, &sched, 40, &pack);
    let cell = &tr.final_state.cells[0];
    let v = tr.rows.last().unwrap().cells[0].voltage_v;
    let gap = (v - rest_ocv(cell, &pack.cells[0])).abs();
    assert!(gap < 1e-3, "|V - OCV| = {gap}");
}

#[test]
fn inner_cells_run_hottest() {
    let network = ThermalNetwork::testbed();
    let pack = PackParameters::uniform(CellParameters::synthetic(), network, T_ENV);
    let cells = pack
        .cells
        .iter()
        .map(|p| CellState::rested(p, 7.5 * 3600.0, 2e-3, 0.2, T_ENV))
        .collect();
    let state = PackState { cells, t_sink_k: T_ENV };
    let sched = vec![InputStep::uniform(-7.5, 6, 10.0); 120];
    let tr = run(state, &sched, 40, &pack);
    let t: Vec<f64> = tr.final_state.cells.iter().map(|c| c.temperature_k).collect();
    for outer in [0, 2, 3, 5] {
        assert!(t[1] > t[outer] && t[4] > t[outer], "{t:?}");
    }
    // the two strings are mirror images
    assert!((t[1] - t[4]).abs() < 1e-9 && (t[0] - t[3]).abs() < 1e-9);
}

#[test]
fn heat_vanishes_at_rest() {
    let (pack, state) = single(CellParameters::synthetic(), 7.5, 0.5);
    let (_, outputs) = pack_rhs(&state, &[0.0], &pack).unwrap();
    assert_eq!(heat_generation(0.0, &outputs[0]), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn heat_is_never_negative(z in 0.25f64..0.8, i in -15.0f64..15.0, t in 285.0f64..315.0) {
        let p = CellParameters::synthetic();
        let network = ThermalNetwork::chain(1, 1.0, 3.0, 150.0, 400.0);
        let pack = PackParameters::uniform(p, network, T_ENV);
        let mut state = PackState {
            cells: vec![CellState::rested(&pack.cells[0], 7.5 * 3600.0, 2e-3, z, t)],
            t_sink_k: T_ENV,
        };
        state.cells[0].q_p = 1e6 * i;
        let (_, outputs) = pack_rhs(&state, &[i], &pack).unwrap();
        prop_assert!(heat_generation(i, &outputs[0]) >= 0.0);
    }

    #[test]
    fn ageing_is_monotone(currents in proptest::collection::vec(-10.0f64..6.0, 1..6)) {
        let (pack, state) = single(CellParameters::synthetic(), 7.5, 0.4);
        let sched: Vec<_> = currents.iter().map(|&i| InputStep::uniform(i, 1, 10.0)).collect();
        let tr = run(state.clone(), &sched, 30, &pack);
        let (c0, c1) = (&state.cells[0], &tr.final_state.cells[0]);
        prop_assert!(c1.capacity_as <= c0.capacity_as);
        prop_assert!(c1.r_sei_ohm >= c0.r_sei_ohm);
        // capacity only fades while charging
        if currents.iter().all(|&i| i >= 0.0) {
            prop_assert_eq!(c1.capacity_as, c0.capacity_as);
        }
        for w in tr.rows.windows(2) {
            prop_assert!(w[1].cells[0].capacity_as <= w[0].cells[0].capacity_as);
            prop_assert!(w[1].cells[0].r_sei_ohm >= w[0].cells[0].r_sei_ohm);
        }
    }
}
