#![allow(dead_code)]

use balcharge_core::cell::{CellParameters, CellState};
use balcharge_core::pack::{PackParameters, PackState, ThermalNetwork};

pub const T_ENV: f64 = 298.15;

pub fn single(params: CellParameters, capacity_ah: f64, soc: f64) -> (PackParameters, PackState) {
    let network = ThermalNetwork::chain(1, 1.0, 3.0, 150.0, 400.0);
    let pack = PackParameters::uniform(params, network, T_ENV);
    let state = PackState {
        cells: vec![CellState::rested(&pack.cells[0], capacity_ah * 3600.0, 2e-3, soc, T_ENV)],
        t_sink_k: T_ENV,
    };
    (pack, state)
}

/// The six-cell testbed with heterogeneous initial conditions.
pub fn testbed(params: CellParameters) -> (PackParameters, PackState) {
    let pack = PackParameters::uniform(params, ThermalNetwork::testbed(), T_ENV);
    let c = [6.47, 7.62, 8.83, 8.68, 8.46, 7.22];
    let r = [2.09, 2.36, 2.22, 2.36, 2.12, 1.76];
    let z = [0.39, 0.19, 0.21, 0.20, 0.34, 0.37];
    let cells = (0..6)
        .map(|i| CellState::rested(&pack.cells[i], c[i] * 3600.0, r[i] * 1e-3, z[i], T_ENV))
        .collect();
    (pack, PackState { cells, t_sink_k: T_ENV })
}

/// Max over components of the error scaled by the reference magnitude.
pub fn scaled_distance(a: &PackState, b: &PackState) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(x, y)| (x - y).abs() / y.abs().max(1e-3))
        .fold(0.0, f64::max)
}
