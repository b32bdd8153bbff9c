use serde::{Deserialize, Serialize};

use crate::constants::GAS_CONSTANT;
use crate::error::{ModelError, Result};

/// Reference temperature used by the shipped defaults when converting a
/// value-at-temperature into a pre-exponential factor.
pub const DEFAULT_REFERENCE_TEMPERATURE: f64 = 298.15;

/// A temperature-dependent parameter `psi0 * exp(-Ea / (R T))`.
///
/// `psi0` is the absolute pre-exponential factor, not a value at some
/// reference temperature. Use [`ArrheniusParam::from_reference`] to build one
/// from a value measured at a known temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrheniusParam {
    pub psi0: f64,
    pub activation_energy_j_per_mol: f64,
}

impl ArrheniusParam {
    pub fn new(psi0: f64, activation_energy_j_per_mol: f64) -> Self {
        Self {
            psi0,
            activation_energy_j_per_mol,
        }
    }

    /// Parameter whose value at `reference_temperature` equals `value`.
    pub fn from_reference(value: f64, activation_energy_j_per_mol: f64, reference_temperature: f64) -> Self {
        let psi0 = value * (activation_energy_j_per_mol / (GAS_CONSTANT * reference_temperature)).exp();
        Self::new(psi0, activation_energy_j_per_mol)
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.psi0 > 0.0) || !self.psi0.is_finite() {
            return Err(ModelError::param(name, format!("psi0 must be positive, got {}", self.psi0)));
        }
        if !(self.activation_energy_j_per_mol >= 0.0) {
            return Err(ModelError::param(
                name,
                format!("activation energy must be >= 0, got {}", self.activation_energy_j_per_mol),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElectrodeParams {
    pub particle_radius_m: f64,
    pub max_concentration_mol_per_m3: f64,
    /// Stoichiometry of the fully discharged cell.
    pub theta_0pct: f64,
    /// Stoichiometry of the fully charged cell.
    pub theta_100pct: f64,
    /// Solid diffusion coefficient, m^2/s.
    pub solid_diffusivity: ArrheniusParam,
    /// Reaction rate constant of the Butler-Volmer exchange current.
    pub rate_constant: ArrheniusParam,
    pub thickness_m: f64,
    pub porosity: f64,
    pub bruggeman: f64,
}

impl ElectrodeParams {
    /// `theta_100pct - theta_0pct`; negative for the cathode.
    pub fn delta_theta(&self) -> f64 {
        self.theta_100pct - self.theta_0pct
    }

    fn validate(&self, name: &str) -> Result<()> {
        positive(&format!("{name}.particle_radius_m"), self.particle_radius_m)?;
        positive(&format!("{name}.max_concentration_mol_per_m3"), self.max_concentration_mol_per_m3)?;
        positive(&format!("{name}.thickness_m"), self.thickness_m)?;
        positive(&format!("{name}.bruggeman"), self.bruggeman)?;
        unit_open(&format!("{name}.theta_0pct"), self.theta_0pct)?;
        unit_open(&format!("{name}.theta_100pct"), self.theta_100pct)?;
        unit_open(&format!("{name}.porosity"), self.porosity)?;
        self.solid_diffusivity.validate(&format!("{name}.solid_diffusivity"))?;
        self.rate_constant.validate(&format!("{name}.rate_constant"))?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparatorParams {
    pub thickness_m: f64,
    pub porosity: f64,
    pub bruggeman: f64,
}

/// Side-reaction (SEI growth) constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeingParams {
    pub molar_weight_kg_per_mol: f64,
    pub density_kg_per_m3: f64,
    pub film_admittance: f64,
    /// Base side-reaction exchange current, A/m^2. Zero disables ageing.
    pub base_side_current_a_per_m2: f64,
    /// Exponent on `|I| / I_1C`.
    pub current_exponent: f64,
    pub sei_reference_potential_v: f64,
    pub one_c_current_a: f64,
}

/// Open-circuit potential as a function of surface stoichiometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OcpCurve {
    /// `sum_k coeffs[k] * theta^k` (ascending powers).
    Polynomial { coeffs: Vec<f64> },
    /// `sum_k numerator[k] theta^k / sum_k denominator[k] theta^k` (ascending powers).
    Rational { numerator: Vec<f64>, denominator: Vec<f64> },
}

impl OcpCurve {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            OcpCurve::Polynomial { coeffs } => horner(coeffs, theta),
            OcpCurve::Rational {
                numerator,
                denominator,
            } => horner(numerator, theta) / horner(denominator, theta),
        }
    }
}

fn horner(ascending: &[f64], x: f64) -> f64 {
    ascending.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Electrolyte conductivity: a cubic in `gamma = 1e-3 ce` scaled by an Arrhenius factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConductivityParams {
    /// Ascending coefficients `[c0, c1, c2, c3]` of the cubic in gamma, S/m.
    pub coeffs: [f64; 4],
    pub activation_energy_j_per_mol: f64,
}

/// All constants describing one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellParameters {
    pub positive: ElectrodeParams,
    pub negative: ElectrodeParams,
    pub separator: SeparatorParams,
    /// Solid-electrolyte contact (plate) area, m^2.
    pub area_m2: f64,
    pub transference_number: f64,
    /// Electrolyte diffusion coefficient, m^2/s.
    pub electrolyte_diffusivity: ArrheniusParam,
    /// Finite volumes per section (positive, separator, negative each get this many).
    pub volumes_per_section: usize,
    pub ageing: AgeingParams,
    pub ocp_positive: OcpCurve,
    pub ocp_negative: OcpCurve,
    pub conductivity: ConductivityParams,
    pub initial_electrolyte_mol_per_m3: f64,
}

impl Default for CellParameters {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl CellParameters {
    /// The shipped synthetic NMC/graphite-like parameter set.
    ///
    /// Apart from the OCP curves and the conductivity cubic, none of these
    /// numbers is an identified value for a real cell. They are chosen to be
    /// physically plausible and to give a 7.5 Ah cell with a usable
    /// 3.0 - 4.13 V open-circuit window.
    pub fn synthetic() -> Self {
        let t_ref = DEFAULT_REFERENCE_TEMPERATURE;
        CellParameters {
            positive: ElectrodeParams {
                particle_radius_m: 6.5e-6,
                max_concentration_mol_per_m3: 48_390.0,
                theta_0pct: 0.95,
                theta_100pct: 0.27,
                solid_diffusivity: ArrheniusParam::from_reference(9.0e-15, 25_000.0, t_ref),
                rate_constant: ArrheniusParam::from_reference(3.0e-11, 30_000.0, t_ref),
                thickness_m: 54.5e-6,
                porosity: 0.296,
                bruggeman: 1.5,
            },
            negative: ElectrodeParams {
                particle_radius_m: 14.75e-6,
                max_concentration_mol_per_m3: 31_390.0,
                theta_0pct: 0.02,
                theta_100pct: 0.70,
                solid_diffusivity: ArrheniusParam::from_reference(8.0e-14, 25_000.0, t_ref),
                rate_constant: ArrheniusParam::from_reference(7.0e-11, 30_000.0, t_ref),
                thickness_m: 73.7e-6,
                porosity: 0.329,
                bruggeman: 1.5,
            },
            separator: SeparatorParams {
                thickness_m: 25.0e-6,
                porosity: 0.508,
                bruggeman: 1.5,
            },
            area_m2: 0.30,
            transference_number: 0.38,
            electrolyte_diffusivity: ArrheniusParam::from_reference(1.5e-10, 17_000.0, t_ref),
            volumes_per_section: 3,
            ageing: AgeingParams {
                molar_weight_kg_per_mol: 7.3e-2,
                density_kg_per_m3: 2_100.0,
                film_admittance: 3.3e-5,
                base_side_current_a_per_m2: 1.0,
                current_exponent: 1.0,
                sei_reference_potential_v: 0.4,
                one_c_current_a: 7.5,
            },
            ocp_positive: OcpCurve::Polynomial {
                coeffs: vec![4.571, 0.02414, -7.837, 8.07, 20.94, -40.7, 18.45],
            },
            ocp_negative: OcpCurve::Rational {
                numerator: vec![0.00694, 0.1261],
                denominator: vec![0.00405, 0.6995, 1.0],
            },
            conductivity: ConductivityParams {
                coeffs: [0.1726, 1.7919, -1.2983, 0.2667],
                activation_energy_j_per_mol: 1_000.0,
            },
            initial_electrolyte_mol_per_m3: 1_000.0,
        }
    }

    pub fn electrode(&self, electrode: super::Electrode) -> &ElectrodeParams {
        match electrode {
            super::Electrode::Positive => &self.positive,
            super::Electrode::Negative => &self.negative,
        }
    }

    /// Same parameters with ageing switched off.
    pub fn without_ageing(mut self) -> Self {
        self.ageing.base_side_current_a_per_m2 = 0.0;
        self
    }

    pub fn with_volumes(mut self, volumes_per_section: usize) -> Self {
        self.volumes_per_section = volumes_per_section;
        self
    }

    /// Length of the electrolyte concentration vector.
    pub fn electrolyte_len(&self) -> usize {
        3 * self.volumes_per_section
    }

    pub fn validate(&self) -> Result<()> {
        self.positive.validate("positive")?;
        self.negative.validate("negative")?;
        if !(self.positive.delta_theta() < 0.0) {
            return Err(ModelError::param(
                "positive.theta_100pct",
                "cathode stoichiometry must decrease on charge (theta_100pct < theta_0pct)",
            ));
        }
        if !(self.negative.delta_theta() > 0.0) {
            return Err(ModelError::param(
                "negative.theta_100pct",
                "anode stoichiometry must increase on charge (theta_100pct > theta_0pct)",
            ));
        }
        positive("separator.thickness_m", self.separator.thickness_m)?;
        positive("separator.bruggeman", self.separator.bruggeman)?;
        unit_open("separator.porosity", self.separator.porosity)?;
        positive("area_m2", self.area_m2)?;
        unit_open("transference_number", self.transference_number)?;
        self.electrolyte_diffusivity.validate("electrolyte_diffusivity")?;
        if self.volumes_per_section < 1 {
            return Err(ModelError::param("volumes_per_section", "need at least one volume per section"));
        }
        let a = &self.ageing;
        positive("ageing.molar_weight_kg_per_mol", a.molar_weight_kg_per_mol)?;
        positive("ageing.density_kg_per_m3", a.density_kg_per_m3)?;
        positive("ageing.film_admittance", a.film_admittance)?;
        positive("ageing.one_c_current_a", a.one_c_current_a)?;
        positive("ageing.current_exponent", a.current_exponent)?;
        if !(a.base_side_current_a_per_m2 >= 0.0) {
            return Err(ModelError::param("ageing.base_side_current_a_per_m2", "must be >= 0"));
        }
        if !(self.conductivity.activation_energy_j_per_mol >= 0.0) {
            return Err(ModelError::param("conductivity.activation_energy_j_per_mol", "must be >= 0"));
        }
        for (name, curve) in [("ocp_positive", &self.ocp_positive), ("ocp_negative", &self.ocp_negative)] {
            let ok = match curve {
                OcpCurve::Polynomial { coeffs } => !coeffs.is_empty(),
                OcpCurve::Rational {
                    numerator,
                    denominator,
                } => !numerator.is_empty() && !denominator.is_empty(),
            };
            if !ok {
                return Err(ModelError::param(name, "empty coefficient list"));
            }
        }
        positive("initial_electrolyte_mol_per_m3", self.initial_electrolyte_mol_per_m3)?;
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::param(name, format!("must be positive and finite, got {v}")))
    }
}

fn unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(ModelError::param(name, format!("must lie in (0, 1), got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_defaults_validate() {
        CellParameters::synthetic().validate().unwrap();
    }

    #[test]
    fn from_reference_round_trips() {
        let p = ArrheniusParam::from_reference(2.0e-14, 30_000.0, 298.15);
        let v = crate::cell::arrhenius(&p, 298.15).unwrap();
        assert!((v / 2.0e-14 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_stoichiometry_direction_is_rejected() {
        let mut p = CellParameters::synthetic();
        std::mem::swap(&mut p.positive.theta_0pct, &mut p.positive.theta_100pct);
        assert!(matches!(p.validate(), Err(ModelError::InvalidParameter { .. })));
    }

    #[test]
    fn zero_volumes_rejected() {
        let p = CellParameters::synthetic().with_volumes(0);
        assert!(p.validate().is_err());
    }
}
