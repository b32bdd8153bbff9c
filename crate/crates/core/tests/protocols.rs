mod common;

use balcharge_core::cell::{CellParameters, CellState};
use balcharge_core::pack::{PackParameters, PackState, ThermalNetwork};
use balcharge_core::protocols::*;
use balcharge_core::simulator::*;
use common::*;

fn cfg() -> SimConfig {
    SimConfig {
        integrator: IntegratorConfig {
            substeps: 40,
            ..IntegratorConfig::default()
        },
        ..SimConfig::default()
    }
}

fn identical(n: usize, z: f64) -> (PackParameters, PackState) {
    let pack = PackParameters::uniform(CellParameters::synthetic(), ThermalNetwork::testbed(), T_ENV);
    let cells = pack.cells[..n]
        .iter()
        .map(|p| CellState::rested(p, 7.5 * 3600.0, 2e-3, z, T_ENV))
        .collect();
    (pack, PackState { cells, t_sink_k: T_ENV })
}

#[test]
fn cccv_on_identical_cells_keeps_them_identical() {
    let (pack, state) = identical(6, 0.3);
    let run = charge_cccv(state, &CccvConfig::new(7.5, 6), &cfg(), &pack).unwrap();
    let z = run.trace.final_soc(&pack);
    // the thermal network is mirror symmetric, not fully uniform
    for w in z.windows(2) {
        assert!((w[0] - w[1]).abs() < 1e-4, "{z:?}");
    }
    assert_eq!(run.trace.stop, StopReason::CurrentCutoff);
}

#[test]
fn cccv_overcharges_a_heterogeneous_pack_and_holds_the_limit() {
    let (pack, state) = testbed(CellParameters::synthetic());
    let c = CccvConfig::new(7.5, 6);
    let run = charge_cccv(state, &c, &cfg(), &pack).unwrap();
    assert!(!run.trace.overcharge_events.is_empty());
    assert!(run.trace.max_soc.iter().any(|&z| z > 1.0));
    assert!(!run.cv_voltages_v.is_empty());
    for v in &run.cv_voltages_v {
        assert!((v - c.v_total_limit_v).abs() <= c.tolerance_v, "total voltage {v}");
    }
    // the regulated current tapers
    let cv = &run.currents_a[run.currents_a.len() - run.cv_voltages_v.len()..];
    assert!(cv.last().unwrap().abs() < cv[0].abs());
    for row in &run.trace.rows {
        assert!(row.cells.iter().all(|c| c.current_a == row.i_branch_a));
    }
}

#[test]
fn voltage_based_single_cell_is_cc_with_cutoff() {
    let (pack, state) = single(CellParameters::synthetic(), 7.5, 0.3);
    let run = charge_voltage_based(state.clone(), &VoltageBasedConfig::new(7.5), &cfg(), &pack).unwrap();
    assert_eq!(run.trace.stop, StopReason::AllBypassed);

    let sched = vec![InputStep::uniform(-7.5, 1, 10.0); 1000];
    let mut stop = |o: &Observation| (o.voltage(0) >= 4.2).then_some(StopReason::VoltageCeiling { cell: 0 });
    let cc = simulate(state, &sched, cfg(), &pack, &mut stop).unwrap();
    let dz = (run.trace.final_soc(&pack)[0] - cc.final_soc(&pack)[0]).abs();
    // the oracle stops one substep earlier: it sees the voltage at the substep start
    assert!(dz <= 7.5 * 0.25 / (7.5 * 3600.0) * 1.01, "dz = {dz}");
}

#[test]
fn voltage_based_reduces_spread_and_latches() {
    let (pack, state) = testbed(CellParameters::synthetic());
    let vb = charge_voltage_based(state.clone(), &VoltageBasedConfig::new(7.5), &cfg(), &pack).unwrap();
    let cccv = charge_cccv(state.clone(), &CccvConfig::new(7.5, 6), &cfg(), &pack).unwrap();
    let s_vb = RunSummary::from_trace("voltage", &state, &vb.trace, &pack);
    let s_cc = RunSummary::from_trace("cccv", &state, &cccv.trace, &pack);
    assert!(s_vb.soc_spread < s_cc.soc_spread, "{} vs {}", s_vb.soc_spread, s_cc.soc_spread);
    assert!(s_vb.final_soc.iter().all(|&z| z < 1.0));
    // one substep of charging at 1C moves the voltage by well under 5 mV
    assert!(s_vb.peak_voltage_v <= 4.2 + 5e-3, "{}", s_vb.peak_voltage_v);
    for i in 0..6 {
        let rows = &vb.trace.rows;
        let first_off = rows.iter().position(|r| r.cells[i].current_a == 0.0).unwrap_or(rows.len());
        assert!(rows[first_off..].iter().all(|r| r.cells[i].current_a == 0.0));
    }
    assert!(vb.bypass_time_s.iter().all(Option::is_some));
}

#[test]
fn discharge_matches_single_cell_oracle() {
    let (pack, state) = identical(3, 0.95);
    let pack = PackParameters {
        cells: pack.cells[..3].to_vec(),
        network: ThermalNetwork::chain(3, 1.5, 3.0, 150.0, 400.0),
        t_env_k: T_ENV,
    };
    let d = discharge_capacity_test(state, &cfg(), &pack).unwrap();
    let (one, s1) = single(CellParameters::synthetic(), 7.5, 0.95);
    let d1 = discharge_capacity_test(s1, &cfg(), &one).unwrap();
    assert!(matches!(d.trace.stop, StopReason::CutoffVoltage { .. }));
    // only the thermal environment differs
    assert!((d.extracted_ah - d1.extracted_ah).abs() / d1.extracted_ah < 5e-3);
    assert!(d.extracted_ah > 0.8 * 7.5 && d.extracted_ah < 0.95 * 7.5);
}

#[test]
fn low_cell_gates_the_discharge() {
    let (pack, balanced) = identical(6, 1.0);
    let mut low = balanced.clone();
    low.cells[2] = CellState::rested(&pack.cells[2], 7.5 * 3600.0, 2e-3, 0.9, T_ENV);
    let a = discharge_capacity_test(balanced, &cfg(), &pack).unwrap();
    let b = discharge_capacity_test(low, &cfg(), &pack).unwrap();
    assert!(a.extracted_ah > b.extracted_ah);
    assert_eq!(b.trace.stop, StopReason::CutoffVoltage { cell: 2 });
}

#[test]
fn discharge_from_cutoff_extracts_nothing() {
    let (pack, state) = single(CellParameters::synthetic(), 7.5, 0.5);
    let first = discharge_capacity_test(state, &cfg(), &pack).unwrap();
    let again = discharge_capacity_test(first.trace.final_state, &cfg(), &pack).unwrap();
    assert_eq!(again.extracted_ah, 0.0);
    assert_eq!(again.trace.stop, StopReason::CutoffVoltage { cell: 0 });
}
