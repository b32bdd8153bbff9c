//! Scenario files: the pack, its initial conditions and every run setting.
//!
//! Scenarios are TOML. Keys carry their unit as a suffix and unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use balcharge_core::cell::{CellParameters, CellState};
use balcharge_core::nmpc::NmpcConfig;
use balcharge_core::pack::{PackParameters, PackState, ThermalNetwork};
use balcharge_core::protocols::{CccvConfig, VoltageBasedConfig};
use balcharge_core::simulator::{InputStep, IntegratorConfig, SimConfig};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellPreset {
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSection {
    /// Built-in parameter set. Ignored when `parameters` is given.
    #[serde(default = "synthetic")]
    pub preset: CellPreset,
    /// Full parameter set, overriding the preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parameters: Option<CellParameters>,
    /// Electrolyte volumes per section in the plant.
    #[serde(default = "ten")]
    pub volumes_per_section: usize,
    #[serde(default = "yes")]
    pub ageing: bool,
}

fn synthetic() -> CellPreset {
    CellPreset::Synthetic
}

fn ten() -> usize {
    10
}

fn yes() -> bool {
    true
}

impl Default for CellSection {
    fn default() -> Self {
        CellSection {
            preset: CellPreset::Synthetic,
            parameters: None,
            volumes_per_section: 10,
            ageing: true,
        }
    }
}

/// Per-cell initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellsSection {
    pub capacity_ah: Vec<f64>,
    pub r_sei_mohm: Vec<f64>,
    pub soc: Vec<f64>,
    /// Defaults to the ambient temperature.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<Vec<f64>>,
}

/// One entry of the fixed input schedule used by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleStep {
    /// Branch current, A; negative charges.
    pub i_branch_a: f64,
    pub duty: Vec<f64>,
    pub ts_s: f64,
    #[serde(default = "one")]
    pub repeat: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub ambient_temperature_k: f64,
    /// Where runs write their results unless `--out` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cell: CellSection,
    pub cells: CellsSection,
    pub thermal: ThermalNetwork,
    /// Plant integrator, supply mode and trace decimation.
    #[serde(default = "default_plant")]
    pub plant: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cccv: Option<CccvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltage_based: Option<VoltageBasedConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nmpc: Option<NmpcConfig>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleStep>,
}

pub fn default_plant() -> SimConfig {
    SimConfig {
        integrator: IntegratorConfig {
            substeps: 400,
            ..IntegratorConfig::default()
        },
        record_every: 40,
        ..SimConfig::default()
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &Path) -> CliResult<Scenario> {
    let text = std::fs::read_to_string(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    parse_scenario(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_scenario(text: &str) -> CliResult<Scenario> {
    let scenario: Scenario = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    scenario.validate()?;
    Ok(scenario)
}

fn bad(key: impl std::fmt::Display, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {reason}"))
}

impl Scenario {
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize scenario: {e}")))
    }

    pub fn n_cells(&self) -> usize {
        self.cells.soc.len()
    }

    pub fn validate(&self) -> CliResult<()> {
        let n = self.n_cells();
        if n == 0 {
            return Err(bad("cells.soc", "at least one cell is required"));
        }
        let c = &self.cells;
        for (key, len) in [
            ("cells.capacity_ah", c.capacity_ah.len()),
            ("cells.r_sei_mohm", c.r_sei_mohm.len()),
            ("thermal.cell_heat_capacity_j_per_k", self.thermal.cell_heat_capacity_j_per_k.len()),
        ] {
            if len != n {
                return Err(bad(key, format!("has {len} entries for {n} cells")));
            }
        }
        for (i, z) in c.soc.iter().enumerate() {
            if !(0.0..=1.0).contains(z) {
                return Err(bad(format!("cells.soc[{i}]"), format!("{z} is outside [0, 1]")));
            }
        }
        for (i, v) in c.capacity_ah.iter().enumerate() {
            if !(*v > 0.0 && v.is_finite()) {
                return Err(bad(format!("cells.capacity_ah[{i}]"), "must be positive"));
            }
        }
        for (i, v) in c.r_sei_mohm.iter().enumerate() {
            if !(*v >= 0.0 && v.is_finite()) {
                return Err(bad(format!("cells.r_sei_mohm[{i}]"), "must be non-negative"));
            }
        }
        if let Some(t) = &c.temperature_k {
            if t.len() != n {
                return Err(bad("cells.temperature_k", format!("has {} entries for {n} cells", t.len())));
            }
            if let Some(i) = t.iter().position(|v| !(*v > 0.0)) {
                return Err(bad(format!("cells.temperature_k[{i}]"), "must be positive"));
            }
        }
        if !(self.ambient_temperature_k > 0.0) {
            return Err(bad("ambient_temperature_k", "must be positive"));
        }
        if self.cell.volumes_per_section < 1 {
            return Err(bad("cell.volumes_per_section", "must be at least 1"));
        }
        self.thermal.validate().map_err(|e| bad("thermal", e))?;
        self.cell_parameters().validate().map_err(|e| bad("cell", e))?;
        self.plant.integrator.validate().map_err(|e| bad("plant.integrator", e))?;
        if self.plant.record_every < 1 {
            return Err(bad("plant.record_every", "must be at least 1"));
        }
        if let Some(cfg) = &self.cccv {
            cfg.validate().map_err(|e| bad("cccv", e))?;
        }
        if let Some(cfg) = &self.voltage_based {
            cfg.validate().map_err(|e| bad("voltage_based", e))?;
        }
        if let Some(cfg) = &self.nmpc {
            cfg.validate().map_err(|e| bad("nmpc", e))?;
        }
        for (k, s) in self.schedule.iter().enumerate() {
            let step = InputStep {
                i_branch_a: s.i_branch_a,
                duty: s.duty.clone(),
                ts_s: s.ts_s,
            };
            step.validate(n).map_err(|e| bad(format!("schedule[{k}]"), e))?;
            if s.repeat < 1 {
                return Err(bad(format!("schedule[{k}].repeat"), "must be at least 1"));
            }
        }
        Ok(())
    }

    pub fn cell_parameters(&self) -> CellParameters {
        let base = match (&self.cell.parameters, self.cell.preset) {
            (Some(p), _) => p.clone(),
            (None, CellPreset::Synthetic) => CellParameters::synthetic(),
        };
        let p = base.with_volumes(self.cell.volumes_per_section);
        if self.cell.ageing {
            p
        } else {
            p.without_ageing()
        }
    }

    pub fn pack(&self) -> PackParameters {
        PackParameters::uniform(self.cell_parameters(), self.thermal.clone(), self.ambient_temperature_k)
    }

    pub fn initial_state(&self, pack: &PackParameters) -> PackState {
        let c = &self.cells;
        let cells = (0..self.n_cells())
            .map(|i| {
                let t = c.temperature_k.as_ref().map_or(self.ambient_temperature_k, |t| t[i]);
                CellState::rested(&pack.cells[i], c.capacity_ah[i] * 3600.0, c.r_sei_mohm[i] * 1e-3, c.soc[i], t)
            })
            .collect();
        PackState {
            cells,
            t_sink_k: self.ambient_temperature_k,
        }
    }

    fn one_c(&self) -> f64 {
        self.cell_parameters().ageing.one_c_current_a
    }

    pub fn cccv_config(&self) -> CccvConfig {
        self.cccv.clone().unwrap_or_else(|| CccvConfig::new(self.one_c(), self.n_cells()))
    }

    pub fn voltage_based_config(&self) -> VoltageBasedConfig {
        self.voltage_based.clone().unwrap_or_else(|| VoltageBasedConfig::new(self.one_c()))
    }

    pub fn nmpc_config(&self) -> NmpcConfig {
        self.nmpc.clone().unwrap_or_else(|| {
            let mut c = NmpcConfig::default();
            c.weights.t_env_k = self.ambient_temperature_k;
            c
        })
    }

    /// The `simulate` schedule; a one-minute 1C charge of every cell if none is given.
    pub fn input_schedule(&self) -> Vec<InputStep> {
        if self.schedule.is_empty() {
            return vec![InputStep::uniform(-self.one_c(), self.n_cells(), 10.0); 6];
        }
        self.schedule
            .iter()
            .flat_map(|s| {
                let step = InputStep {
                    i_branch_a: s.i_branch_a,
                    duty: s.duty.clone(),
                    ts_s: s.ts_s,
                };
                std::iter::repeat(step).take(s.repeat)
            })
            .collect()
    }
}
