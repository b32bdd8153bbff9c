//! Series pack: N cells coupled through a lumped thermal resistance network
//! and a shared coolant (sink) node.

use serde::{Deserialize, Serialize};

use crate::cell::{cell_rhs_into, CellOutputs, CellParameters, CellState};
use crate::error::{ModelError, Result};

/// Conductive contact between two cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalEdge {
    /// Zero-based cell indices.
    pub a: usize,
    pub b: usize,
    pub resistance_k_per_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalNetwork {
    /// Cell-to-cell contacts. Pairs without an edge exchange no heat.
    pub edges: Vec<ThermalEdge>,
    /// Cell-to-coolant resistance per cell, K/W. `inf` decouples the cell from the sink.
    pub sink_resistance_k_per_w: Vec<f64>,
    pub cell_heat_capacity_j_per_k: Vec<f64>,
    pub sink_heat_capacity_j_per_k: f64,
    /// Power the cooling system releases to the environment while active, W.
    pub cooling_power_w: f64,
    /// The cooling system runs while the sink is above this temperature.
    pub cooling_threshold_k: f64,
    /// Width of a logistic ramp replacing the on/off cooling switch, K. Zero
    /// keeps the hard switch.
    #[serde(default)]
    pub cooling_smoothing_k: f64,
}

impl ThermalNetwork {
    /// The six-cell testbed: two packs of three cells side by side. Outer
    /// cells sit closer to the coolant than the middle cell of each pack, and
    /// the two packs do not touch.
    pub fn testbed() -> Self {
        let edge = |a, b| ThermalEdge {
            a,
            b,
            resistance_k_per_w: 1.5,
        };
        ThermalNetwork {
            edges: vec![edge(0, 1), edge(1, 2), edge(3, 4), edge(4, 5)],
            sink_resistance_k_per_w: vec![3.0, 12.0, 3.0, 3.0, 12.0, 3.0],
            cell_heat_capacity_j_per_k: vec![150.0; 6],
            sink_heat_capacity_j_per_k: 400.0,
            cooling_power_w: 5.0,
            cooling_threshold_k: 298.15,
            cooling_smoothing_k: 0.0,
        }
    }

    /// `n` cells in a chain with uniform resistances.
    pub fn chain(n: usize, r_cell: f64, r_sink: f64, c_cell: f64, c_sink: f64) -> Self {
        ThermalNetwork {
            edges: (1..n)
                .map(|i| ThermalEdge {
                    a: i - 1,
                    b: i,
                    resistance_k_per_w: r_cell,
                })
                .collect(),
            sink_resistance_k_per_w: vec![r_sink; n],
            cell_heat_capacity_j_per_k: vec![c_cell; n],
            sink_heat_capacity_j_per_k: c_sink,
            cooling_power_w: 5.0,
            cooling_threshold_k: 298.15,
            cooling_smoothing_k: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.cell_heat_capacity_j_per_k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_heat_capacity_j_per_k.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(ModelError::param("network", "at least one cell is required"));
        }
        if self.sink_resistance_k_per_w.len() != n {
            return Err(ModelError::Dimension(format!(
                "{} sink resistances for {n} cells",
                self.sink_resistance_k_per_w.len()
            )));
        }
        for (i, &c) in self.cell_heat_capacity_j_per_k.iter().enumerate() {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ModelError::param(format!("cell_heat_capacity_j_per_k[{i}]"), "must be positive"));
            }
        }
        for (i, &r) in self.sink_resistance_k_per_w.iter().enumerate() {
            if !(r > 0.0) {
                return Err(ModelError::param(format!("sink_resistance_k_per_w[{i}]"), "must be positive or inf"));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.edges {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(ModelError::param("edges", format!("invalid edge {}-{}", e.a, e.b)));
            }
            if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
                return Err(ModelError::param("edges", format!("duplicate edge {}-{}", e.a, e.b)));
            }
            if !(e.resistance_k_per_w > 0.0 && e.resistance_k_per_w.is_finite()) {
                return Err(ModelError::param("edges", "edge resistances must be positive and finite"));
            }
        }
        if !(self.sink_heat_capacity_j_per_k > 0.0) {
            return Err(ModelError::param("sink_heat_capacity_j_per_k", "must be positive"));
        }
        if !(self.cooling_power_w >= 0.0) {
            return Err(ModelError::param("cooling_power_w", "must be >= 0"));
        }
        if !(self.cooling_smoothing_k >= 0.0) {
            return Err(ModelError::param("cooling_smoothing_k", "must be >= 0"));
        }
        Ok(())
    }

    /// Cooling power at sink temperature `t_sink`.
    pub fn cooling(&self, t_sink: f64) -> f64 {
        if self.cooling_smoothing_k > 0.0 {
            let x = (t_sink - self.cooling_threshold_k) / self.cooling_smoothing_k;
            self.cooling_power_w / (1.0 + (-x).exp())
        } else if t_sink > self.cooling_threshold_k {
            self.cooling_power_w
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackState {
    pub cells: Vec<CellState>,
    pub t_sink_k: f64,
}

impl PackState {
    pub fn zeros_like(&self) -> Self {
        PackState {
            cells: self.cells.iter().map(CellState::zeros_like).collect(),
            t_sink_k: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn set_axpy(&mut self, base: &PackState, h: f64, rate: &PackState) {
        for ((c, b), r) in self.cells.iter_mut().zip(&base.cells).zip(&rate.cells) {
            c.set_axpy(b, h, r);
        }
        self.t_sink_k = base.t_sink_k + h * rate.t_sink_k;
    }

    pub fn add_scaled(&mut self, h: f64, rate: &PackState) {
        for (c, r) in self.cells.iter_mut().zip(&rate.cells) {
            c.add_scaled(h, r);
        }
        self.t_sink_k += h * rate.t_sink_k;
    }

    /// Total thermal energy relative to 0 K, J.
    pub fn thermal_energy(&self, network: &ThermalNetwork) -> f64 {
        self.cells
            .iter()
            .zip(&network.cell_heat_capacity_j_per_k)
            .map(|(c, cap)| c.temperature_k * cap)
            .sum::<f64>()
            + self.t_sink_k * network.sink_heat_capacity_j_per_k
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.cells.iter().flat_map(|c| c.to_vec()).collect();
        v.push(self.t_sink_k);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PackParameters {
    pub cells: Vec<CellParameters>,
    pub network: ThermalNetwork,
    pub t_env_k: f64,
}

impl PackParameters {
    /// `n` cells sharing one parameter set.
    pub fn uniform(cell: CellParameters, network: ThermalNetwork, t_env_k: f64) -> Self {
        PackParameters {
            cells: vec![cell; network.len()],
            network,
            t_env_k,
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        if self.cells.len() != self.network.len() {
            return Err(ModelError::Dimension(format!(
                "{} cell parameter sets for a {}-cell network",
                self.cells.len(),
                self.network.len()
            )));
        }
        for (i, c) in self.cells.iter().enumerate() {
            c.validate().map_err(|e| e.in_cell(i))?;
        }
        if !(self.t_env_k > 0.0) {
            return Err(ModelError::NonPositiveTemperature(self.t_env_k));
        }
        Ok(())
    }

    /// Same pack with a different number of electrolyte volumes per section.
    pub fn with_volumes(&self, m: usize) -> Self {
        let mut p = self.clone();
        for c in &mut p.cells {
            c.volumes_per_section = m;
        }
        p
    }

    pub fn check_state(&self, state: &PackState) -> Result<()> {
        if state.cells.len() != self.cells.len() {
            return Err(ModelError::Dimension(format!(
                "{} cell states for {} cells",
                state.cells.len(),
                self.cells.len()
            )));
        }
        for (i, (s, p)) in state.cells.iter().zip(&self.cells).enumerate() {
            if s.ce.len() != p.electrolyte_len() {
                return Err(ModelError::Dimension(format!(
                    "cell {i}: {} electrolyte volumes, parameters need {}",
                    s.ce.len(),
                    p.electrolyte_len()
                ))
                .in_cell(i));
            }
        }
        Ok(())
    }
}

/// Polarisation heat, W.
pub fn heat_generation(current_a: f64, outputs: &CellOutputs) -> f64 {
    current_a.abs() * (outputs.voltage - outputs.ocv()).abs()
}

/// `(dT_i/dt, dT_sink/dt)` for per-cell heat inputs `q_w`.
pub fn thermal_rhs(state: &PackState, q_w: &[f64], network: &ThermalNetwork) -> Result<(Vec<f64>, f64)> {
    let n = network.len();
    if state.cells.len() != n || q_w.len() != n {
        return Err(ModelError::Dimension(format!(
            "thermal network has {n} cells, got {} states and {} heat inputs",
            state.cells.len(),
            q_w.len()
        )));
    }
    let temps: Vec<f64> = state.cells.iter().map(|c| c.temperature_k).collect();
    let mut dt = vec![0.0; n];
    let dsink = thermal_rates(&temps, state.t_sink_k, q_w, network, &mut dt);
    Ok((dt, dsink))
}

fn thermal_rates(temps: &[f64], t_sink: f64, q_w: &[f64], network: &ThermalNetwork, out: &mut [f64]) -> f64 {
    let mut to_sink = 0.0;
    for i in 0..temps.len() {
        let flow = (temps[i] - t_sink) / network.sink_resistance_k_per_w[i];
        to_sink += flow;
        out[i] = q_w[i] - flow;
    }
    for e in &network.edges {
        let flow = (temps[e.b] - temps[e.a]) / e.resistance_k_per_w;
        out[e.a] += flow;
        out[e.b] -= flow;
    }
    for (o, cap) in out.iter_mut().zip(&network.cell_heat_capacity_j_per_k) {
        *o /= cap;
    }
    (to_sink - network.cooling(t_sink)) / network.sink_heat_capacity_j_per_k
}

/// Reusable buffers for [`pack_rhs_into`].
#[derive(Debug, Default, Clone)]
pub struct PackScratch {
    temps: Vec<f64>,
    heat: Vec<f64>,
    dtemps: Vec<f64>,
}

/// Full pack derivative into `out`; the per-cell algebraic outputs go into `outputs`.
pub fn pack_rhs_into(
    state: &PackState,
    currents_a: &[f64],
    params: &PackParameters,
    out: &mut PackState,
    outputs: &mut Vec<CellOutputs>,
    scratch: &mut PackScratch,
) -> Result<()> {
    let n = params.cells.len();
    if currents_a.len() != n || state.cells.len() != n || out.cells.len() != n {
        return Err(ModelError::Dimension(format!(
            "pack of {n} cells got {} currents, {} states, {} output slots",
            currents_a.len(),
            state.cells.len(),
            out.cells.len()
        )));
    }
    outputs.clear();
    scratch.temps.clear();
    scratch.heat.clear();
    for (i, ((s, p), d)) in state.cells.iter().zip(&params.cells).zip(out.cells.iter_mut()).enumerate() {
        let o = cell_rhs_into(s, currents_a[i], p, d).map_err(|e| e.in_cell(i))?;
        scratch.heat.push(heat_generation(currents_a[i], &o));
        scratch.temps.push(s.temperature_k);
        outputs.push(o);
    }
    scratch.dtemps.resize(n, 0.0);
    out.t_sink_k = thermal_rates(&scratch.temps, state.t_sink_k, &scratch.heat, &params.network, &mut scratch.dtemps);
    for (d, &dt) in out.cells.iter_mut().zip(&scratch.dtemps) {
        d.temperature_k = dt;
    }
    Ok(())
}

/// Allocating convenience wrapper around [`pack_rhs_into`].
pub fn pack_rhs(state: &PackState, currents_a: &[f64], params: &PackParameters) -> Result<(PackState, Vec<CellOutputs>)> {
    let mut out = state.zeros_like();
    let mut outputs = Vec::with_capacity(state.cells.len());
    pack_rhs_into(state, currents_a, params, &mut out, &mut outputs, &mut PackScratch::default())?;
    Ok((out, outputs))
}
