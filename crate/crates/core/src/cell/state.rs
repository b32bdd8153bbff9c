use serde::{Deserialize, Serialize};

use super::{params::CellParameters, soc_from_theta_p, theta_p_from_soc};

/// Dynamic state of one cell.
///
/// Electrolyte volumes are ordered along x from the positive current
/// collector, through the separator, to the negative current collector:
/// `ce[0..M]` positive, `ce[M..2M]` separator, `ce[2M..3M]` negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    /// Cathodic average stoichiometry.
    pub theta_p: f64,
    /// Volume-averaged concentration flux, positive particle, mol/m^4.
    pub q_p: f64,
    /// Volume-averaged concentration flux, negative particle, mol/m^4.
    pub q_n: f64,
    pub ce: Vec<f64>,
    /// Available capacity in ampere-seconds.
    pub capacity_as: f64,
    pub r_sei_ohm: f64,
    pub temperature_k: f64,
}

impl CellState {
    /// A rested cell: no particle gradients, uniform electrolyte at the nominal concentration.
    pub fn rested(params: &CellParameters, capacity_as: f64, r_sei_ohm: f64, soc: f64, temperature_k: f64) -> Self {
        CellState {
            theta_p: theta_p_from_soc(soc, params),
            q_p: 0.0,
            q_n: 0.0,
            ce: vec![params.initial_electrolyte_mol_per_m3; params.electrolyte_len()],
            capacity_as,
            r_sei_ohm,
            temperature_k,
        }
    }

    /// A state with every field zero and the electrolyte sized for `params`; used as a derivative buffer.
    pub fn zeros_like(&self) -> Self {
        CellState {
            theta_p: 0.0,
            q_p: 0.0,
            q_n: 0.0,
            ce: vec![0.0; self.ce.len()],
            capacity_as: 0.0,
            r_sei_ohm: 0.0,
            temperature_k: 0.0,
        }
    }

    pub fn soc(&self, params: &CellParameters) -> f64 {
        soc_from_theta_p(self.theta_p, params)
    }

    pub fn capacity_ah(&self) -> f64 {
        self.capacity_as / 3600.0
    }

    /// Number of scalar state entries.
    pub fn len(&self) -> usize {
        6 + self.ce.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `self = base + h * rate`, reusing the electrolyte buffer.
    pub fn set_axpy(&mut self, base: &CellState, h: f64, rate: &CellState) {
        self.theta_p = base.theta_p + h * rate.theta_p;
        self.q_p = base.q_p + h * rate.q_p;
        self.q_n = base.q_n + h * rate.q_n;
        self.capacity_as = base.capacity_as + h * rate.capacity_as;
        self.r_sei_ohm = base.r_sei_ohm + h * rate.r_sei_ohm;
        self.temperature_k = base.temperature_k + h * rate.temperature_k;
        self.ce.clear();
        self.ce
            .extend(base.ce.iter().zip(&rate.ce).map(|(c, r)| c + h * r));
    }

    /// `self += h * rate`.
    pub fn add_scaled(&mut self, h: f64, rate: &CellState) {
        self.theta_p += h * rate.theta_p;
        self.q_p += h * rate.q_p;
        self.q_n += h * rate.q_n;
        self.capacity_as += h * rate.capacity_as;
        self.r_sei_ohm += h * rate.r_sei_ohm;
        self.temperature_k += h * rate.temperature_k;
        for (c, r) in self.ce.iter_mut().zip(&rate.ce) {
            *c += h * r;
        }
    }

    /// Flattened view in a fixed order, for norms and comparisons.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.theta_p,
            self.q_p,
            self.q_n,
            self.capacity_as,
            self.r_sei_ohm,
            self.temperature_k,
        ];
        v.extend_from_slice(&self.ce);
        v
    }
    /// The same state on `m` electrolyte volumes per section.
    ///
    /// Each new volume takes the overlap-weighted mean of the old volumes it
    /// covers, so every section keeps its salt content exactly.
    pub fn restricted(&self, m: usize) -> CellState {
        let from = self.ce.len() / 3;
        let mut ce = Vec::with_capacity(3 * m);
        for section in self.ce.chunks(from) {
            for j in 0..m {
                // widths in units of 1 / (m * from)
                let (lo, hi) = (j * from, (j + 1) * from);
                let mut acc = 0.0;
                for (i, c) in section.iter().enumerate() {
                    let overlap = hi.min((i + 1) * m).saturating_sub(lo.max(i * m));
                    acc += overlap as f64 * c;
                }
                ce.push(acc / from as f64);
            }
        }
        CellState { ce, ..self.clone() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn section_sums(ce: &[f64]) -> Vec<f64> {
        let m = ce.len() / 3;
        ce.chunks(m).map(|s| s.iter().sum::<f64>() / m as f64).collect()
    }

    #[test]
    fn restriction_keeps_section_content() {
        let p = CellParameters::synthetic().with_volumes(10);
        let mut s = CellState::rested(&p, 3.0e4, 1e-3, 0.4, 298.15);
        for (i, c) in s.ce.iter_mut().enumerate() {
            *c += 37.0 * (i as f64 * 0.7).sin();
        }
        let r = s.restricted(3);
        assert_eq!(r.ce.len(), 9);
        for (a, b) in section_sums(&s.ce).iter().zip(section_sums(&r.ce)) {
            assert_relative_eq!(*a, b, max_relative = 1e-14);
        }
        assert_eq!(r.theta_p, s.theta_p);
        // first coarse volume covers fine volumes 0, 1, 2 and a third of 3
        let expect = (s.ce[0] + s.ce[1] + s.ce[2] + s.ce[3] / 3.0) * 3.0 / 10.0;
        assert_relative_eq!(r.ce[0], expect, max_relative = 1e-14);
    }

    #[test]
    fn restriction_of_uniform_profile_is_uniform() {
        let p = CellParameters::synthetic().with_volumes(10);
        let s = CellState::rested(&p, 3.0e4, 1e-3, 0.4, 298.15);
        for c in s.restricted(3).ce {
            assert_relative_eq!(c, p.initial_electrolyte_mol_per_m3, max_relative = 1e-14);
        }
        assert_eq!(s.restricted(10), s);
    }
}
