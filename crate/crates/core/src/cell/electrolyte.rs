//! Finite-volume electrolyte diffusion and the ohmic electrolyte drop.

use super::params::CellParameters;
use super::state::CellState;
use super::arrhenius_unchecked;
use crate::constants::{FARADAY, GAS_CONSTANT};
use crate::error::{ModelError, Result};

/// `rho1 rho2 (lam1 + lam2) / (rho1 lam2 + rho2 lam1)`: the effective
/// coefficient across two adjacent cells of widths `lam1`, `lam2`.
pub fn harmonic_mean(rho1: f64, rho2: f64, lam1: f64, lam2: f64) -> Result<f64> {
    if !(rho1 > 0.0 && rho2 > 0.0 && lam1 > 0.0 && lam2 > 0.0) {
        return Err(ModelError::NonPositiveHarmonicInput);
    }
    Ok(harmonic_unchecked(rho1, rho2, lam1, lam2))
}

#[inline]
fn harmonic_unchecked(rho1: f64, rho2: f64, lam1: f64, lam2: f64) -> f64 {
    rho1 * rho2 * (lam1 + lam2) / (rho1 * lam2 + rho2 * lam1)
}

/// Conductivity of one volume, S/m.
pub fn electrolyte_conductivity(ce: f64, temperature_k: f64, params: &CellParameters) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(ModelError::NonPositiveTemperature(temperature_k));
    }
    let factor = (-params.conductivity.activation_energy_j_per_mol / (GAS_CONSTANT * temperature_k)).exp();
    conductivity_with_factor(ce, params, factor)
}

#[inline]
fn conductivity_with_factor(ce: f64, params: &CellParameters, factor: f64) -> Result<f64> {
    let [c0, c1, c2, c3] = params.conductivity.coeffs;
    let g = 1e-3 * ce;
    let kappa = (((c3 * g + c2) * g + c1) * g + c0) * factor;
    if kappa > 0.0 && kappa.is_finite() {
        Ok(kappa)
    } else {
        Err(conductivity_error(ce, kappa))
    }
}

#[cold]
fn conductivity_error(concentration: f64, value: f64) -> ModelError {
    ModelError::NonPositiveConductivity { concentration, value }
}

/// `eps^p`, with the common exponent 1.5 taken through a square root.
#[inline]
fn bruggeman_power(eps: f64, p: f64) -> f64 {
    if p == 1.5 {
        eps * eps.sqrt()
    } else {
        eps.powf(p)
    }
}

/// Geometry of the three sections, in positive, separator, negative order.
struct Sections {
    m: usize,
    dx: [f64; 3],
    eps: [f64; 3],
    eps_brug: [f64; 3],
}

impl Sections {
    fn new(params: &CellParameters) -> Self {
        let m = params.volumes_per_section;
        let mf = m as f64;
        let (p, s, n) = (&params.positive, &params.separator, &params.negative);
        Sections {
            m,
            dx: [p.thickness_m / mf, s.thickness_m / mf, n.thickness_m / mf],
            eps: [p.porosity, s.porosity, n.porosity],
            eps_brug: [
                bruggeman_power(p.porosity, p.bruggeman),
                bruggeman_power(s.porosity, s.bruggeman),
                bruggeman_power(n.porosity, n.bruggeman),
            ],
        }
    }
}

fn check_len(state: &CellState, params: &CellParameters) -> Result<()> {
    let want = params.electrolyte_len();
    if state.ce.len() != want {
        return Err(ModelError::Dimension(format!(
            "electrolyte vector has {} entries, parameters need {want}",
            state.ce.len()
        )));
    }
    Ok(())
}

/// Time derivative of every electrolyte volume concentration.
pub fn electrolyte_rhs(state: &CellState, current_a: f64, params: &CellParameters) -> Result<Vec<f64>> {
    let mut out = vec![0.0; state.ce.len()];
    electrolyte_rhs_into(state, current_a, params, &mut out)?;
    Ok(out)
}

/// As [`electrolyte_rhs`], writing into `out`.
pub fn electrolyte_rhs_into(state: &CellState, current_a: f64, params: &CellParameters, out: &mut [f64]) -> Result<()> {
    check_len(state, params)?;
    if out.len() != state.ce.len() {
        return Err(ModelError::Dimension("output buffer length differs from the electrolyte vector".into()));
    }
    if !(state.temperature_k > 0.0) {
        return Err(ModelError::NonPositiveTemperature(state.temperature_k));
    }
    let de = arrhenius_unchecked(&params.electrolyte_diffusivity, state.temperature_k);
    fill_rates(state, current_a, params, de, out);
    Ok(())
}

pub(crate) fn rates_with_diffusivity(
    state: &CellState,
    current_a: f64,
    params: &CellParameters,
    de: f64,
    out: &mut Vec<f64>,
) {
    out.resize(state.ce.len(), 0.0);
    fill_rates(state, current_a, params, de, out);
}

fn fill_rates(state: &CellState, current_a: f64, params: &CellParameters, de: f64, out: &mut [f64]) {
    let g = Sections::new(params);
    let m = g.m;
    let ce = &state.ce;
    let d_eff = [de * g.eps_brug[0], de * g.eps_brug[1], de * g.eps_brug[2]];
    let d_pos_sep = harmonic_unchecked(d_eff[0], d_eff[1], g.dx[0], g.dx[1]);
    let d_sep_neg = harmonic_unchecked(d_eff[1], d_eff[2], g.dx[1], g.dx[2]);

    let t = params.transference_number;
    let a = params.area_m2;
    let source = [
        -(1.0 - t) * current_a / (FARADAY * a * params.positive.thickness_m),
        0.0,
        (1.0 - t) * current_a / (FARADAY * a * params.negative.thickness_m),
    ];

    // Flux D dc/dx across the faces, left to right; zero at both collectors.
    let n = 3 * m;
    let mut left = 0.0;
    for sec in 0..3 {
        let inv_dx = 1.0 / g.dx[sec];
        let inner = d_eff[sec] * inv_dx;
        let scale = 1.0 / g.eps[sec];
        let interface = match sec {
            0 => d_pos_sep / (0.5 * (g.dx[0] + g.dx[1])),
            1 => d_sep_neg / (0.5 * (g.dx[1] + g.dx[2])),
            _ => 0.0,
        };
        for v in sec * m..(sec + 1) * m {
            let right = if v + 1 == (sec + 1) * m {
                if v + 1 < n {
                    interface * (ce[v + 1] - ce[v])
                } else {
                    0.0
                }
            } else {
                inner * (ce[v + 1] - ce[v])
            };
            out[v] = ((right - left) * inv_dx + source[sec]) * scale;
            left = right;
        }
    }
}

/// Largest RK4 substep, s, for which the electrolyte diffusion stays stable
/// at `temperature_k`.
///
/// Uses a Gershgorin bound on the diffusion operator and the real-axis
/// stability limit of classical RK4 (about 2.785), so it is conservative.
pub fn max_stable_substep(params: &CellParameters, temperature_k: f64) -> f64 {
    let g = Sections::new(params);
    let m = g.m;
    let de = arrhenius_unchecked(&params.electrolyte_diffusivity, temperature_k);
    let d_eff = [de * g.eps_brug[0], de * g.eps_brug[1], de * g.eps_brug[2]];
    let n = 3 * m;
    let conductance = |v: usize| -> f64 {
        let (sa, sb) = (v / m, (v + 1) / m);
        if sa == sb {
            d_eff[sa] / g.dx[sa]
        } else {
            harmonic_unchecked(d_eff[sa], d_eff[sb], g.dx[sa], g.dx[sb]) / (0.5 * (g.dx[sa] + g.dx[sb]))
        }
    };
    let lambda = (0..n)
        .map(|v| {
            let left = if v > 0 { conductance(v - 1) } else { 0.0 };
            let right = if v + 1 < n { conductance(v) } else { 0.0 };
            let s = v / m;
            2.0 * (left + right) / (g.eps[s] * g.dx[s])
        })
        .fold(0.0, f64::max);
    2.785 / lambda
}

/// Electrolyte lithium per unit plate area, `sum eps_j dx_j ce`, mol/m^2.
pub fn total_electrolyte_lithium(ce: &[f64], params: &CellParameters) -> f64 {
    let g = Sections::new(params);
    ce.iter()
        .enumerate()
        .map(|(v, c)| {
            let s = (v / g.m).min(2);
            g.eps[s] * g.dx[s] * c
        })
        .sum()
}

/// The weighted resistance sums `(phi_p, phi_s, phi_n)` of the trapezoidal
/// ionic-current approximation, m^2/S.
pub fn phi_sums(state: &CellState, params: &CellParameters) -> Result<(f64, f64, f64)> {
    check_len(state, params)?;
    if !(state.temperature_k > 0.0) {
        return Err(ModelError::NonPositiveTemperature(state.temperature_k));
    }
    let factor = (-params.conductivity.activation_energy_j_per_mol / (GAS_CONSTANT * state.temperature_k)).exp();
    phi_sums_with_factor(state, params, factor)
}

fn phi_sums_with_factor(state: &CellState, params: &CellParameters, factor: f64) -> Result<(f64, f64, f64)> {
    let g = Sections::new(params);
    let m = g.m;
    let mf = m as f64;
    let mut sums = [0.0; 3];
    for (sec, sum) in sums.iter_mut().enumerate() {
        for (k, &c) in state.ce[sec * m..(sec + 1) * m].iter().enumerate() {
            let k = (k + 1) as f64;
            let weight = match sec {
                0 => 2.0 * k - 1.0,
                1 => 1.0,
                _ => 2.0 * mf - 2.0 * k + 1.0,
            };
            *sum += weight / conductivity_with_factor(c, params, factor)?;
        }
    }
    Ok((
        g.dx[0] * sums[0] / g.eps_brug[0],
        g.dx[1] * sums[1] / g.eps_brug[1],
        g.dx[2] * sums[2] / g.eps_brug[2],
    ))
}

/// Ohmic potential drop across the electrolyte, V.
///
/// The sums carry units of m^2/S, so the current is divided by the plate area.
pub fn phi_drop(state: &CellState, current_a: f64, params: &CellParameters) -> Result<f64> {
    let (pp, ps, pn) = phi_sums(state, params)?;
    Ok(drop_from_sums(current_a, params, pp, ps, pn))
}

#[inline]
fn drop_from_sums(current_a: f64, params: &CellParameters, pp: f64, ps: f64, pn: f64) -> f64 {
    let m = params.volumes_per_section as f64;
    -current_a / (2.0 * m * params.area_m2) * (pp + 2.0 * ps + pn)
}

pub(crate) fn phi_drop_with_factor(
    state: &CellState,
    current_a: f64,
    params: &CellParameters,
    factor: f64,
) -> Result<f64> {
    let (pp, ps, pn) = phi_sums_with_factor(state, params, factor)?;
    Ok(drop_from_sums(current_a, params, pp, ps, pn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn state(p: &CellParameters) -> CellState {
        CellState::rested(p, 7.5 * 3600.0, 2e-3, 0.5, 298.15)
    }

    #[test]
    fn harmonic_mean_examples() {
        assert_relative_eq!(harmonic_mean(2.5, 2.5, 1.0, 3.0).unwrap(), 2.5, max_relative = 1e-15);
        assert_relative_eq!(harmonic_mean(2.0, 1.0, 1.0, 1.0).unwrap(), 4.0 / 3.0, max_relative = 1e-15);
        let a = harmonic_mean(2.0, 5.0, 0.3, 1.7).unwrap();
        let b = harmonic_mean(5.0, 2.0, 1.7, 0.3).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-15);
        assert_eq!(harmonic_mean(0.0, 1.0, 1.0, 1.0), Err(ModelError::NonPositiveHarmonicInput));
        assert!(harmonic_mean(1.0, 1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn conductivity_examples() {
        let mut p = CellParameters::synthetic();
        p.conductivity.activation_energy_j_per_mol = 0.0;
        assert_relative_eq!(electrolyte_conductivity(1000.0, 300.0, &p).unwrap(), 0.9329, max_relative = 1e-12);
        assert_relative_eq!(electrolyte_conductivity(1e-9, 300.0, &p).unwrap(), 0.1726, max_relative = 1e-6);
        p.conductivity.activation_energy_j_per_mol = 2000.0;
        let k1 = electrolyte_conductivity(1000.0, 300.0, &p).unwrap();
        p.conductivity.activation_energy_j_per_mol = 4000.0;
        let k2 = electrolyte_conductivity(1000.0, 300.0, &p).unwrap();
        assert!(k2 < k1);
    }

    #[test]
    fn conductivity_rejects_negative_cubic() {
        let mut p = CellParameters::synthetic();
        p.conductivity.coeffs = [1.0, -2.0, 0.0, 0.0];
        assert!(electrolyte_conductivity(400.0, 298.15, &p).is_ok());
        assert!(matches!(
            electrolyte_conductivity(1000.0, 298.15, &p),
            Err(ModelError::NonPositiveConductivity { .. })
        ));
    }

    #[test]
    fn uniform_rest_is_equilibrium() {
        let p = CellParameters::synthetic();
        let s = state(&p);
        assert!(electrolyte_rhs(&s, 0.0, &p).unwrap().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn conservation_of_rhs() {
        let p = CellParameters::synthetic().with_volumes(5);
        let mut s = state(&p);
        for (k, c) in s.ce.iter_mut().enumerate() {
            *c = 900.0 + 17.0 * k as f64 + (k as f64).sin() * 30.0;
        }
        for i in [-7.5, 0.0, 3.3] {
            let d = electrolyte_rhs(&s, i, &p).unwrap();
            let total = total_electrolyte_lithium(&d, &p);
            let scale = total_electrolyte_lithium(&d.iter().map(|x| x.abs()).collect::<Vec<_>>(), &p);
            assert!(total.abs() <= 1e-13 * scale.max(1e-30), "i = {i}: {total} vs {scale}");
        }
    }

    /// Independent assembly of the M = 1 system as an explicit 3x3 matrix.
    #[test]
    fn three_volume_oracle() {
        let p = CellParameters::synthetic().with_volumes(1);
        let mut s = state(&p);
        s.ce = vec![1100.0, 1000.0, 870.0];
        s.temperature_k = 305.0;
        let i = -5.0;

        let de = crate::cell::arrhenius(&p.electrolyte_diffusivity, 305.0).unwrap();
        let (lp, ls, ln) = (p.positive.thickness_m, p.separator.thickness_m, p.negative.thickness_m);
        let dp = de * p.positive.porosity.powf(p.positive.bruggeman);
        let ds = de * p.separator.porosity.powf(p.separator.bruggeman);
        let dn = de * p.negative.porosity.powf(p.negative.bruggeman);
        // series conductances between node centres
        let g1 = 1.0 / (0.5 * lp / dp + 0.5 * ls / ds);
        let g2 = 1.0 / (0.5 * ls / ds + 0.5 * ln / dn);
        let k = [[-g1, g1, 0.0], [g1, -g1 - g2, g2], [0.0, g2, -g2]];
        let w = [p.positive.porosity * lp, p.separator.porosity * ls, p.negative.porosity * ln];
        let t = p.transference_number;
        let src = [
            -(1.0 - t) * i / (FARADAY * p.area_m2),
            0.0,
            (1.0 - t) * i / (FARADAY * p.area_m2),
        ];
        let got = electrolyte_rhs(&s, i, &p).unwrap();
        for r in 0..3 {
            let expect = ((0..3).map(|c| k[r][c] * s.ce[c]).sum::<f64>() + src[r]) / w[r];
            assert_relative_eq!(got[r], expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn charging_enriches_positive_side() {
        let p = CellParameters::synthetic();
        let d = electrolyte_rhs(&state(&p), -7.5, &p).unwrap();
        assert!(d[0] > 0.0);
        assert!(*d.last().unwrap() < 0.0);
    }

    #[test]
    fn phi_drop_examples() {
        let p = CellParameters::synthetic().with_volumes(1);
        let s = state(&p);
        assert_eq!(phi_drop(&s, 0.0, &p).unwrap(), 0.0);
        let kappa = electrolyte_conductivity(1000.0, 298.15, &p).unwrap();
        let (pp, ps, pn) = phi_sums(&s, &p).unwrap();
        let e = |e: f64, b: f64| e.powf(b);
        assert_relative_eq!(pp, p.positive.thickness_m / (kappa * e(p.positive.porosity, 1.5)), max_relative = 1e-13);
        assert_relative_eq!(ps, p.separator.thickness_m / (kappa * e(p.separator.porosity, 1.5)), max_relative = 1e-13);
        assert_relative_eq!(pn, p.negative.thickness_m / (kappa * e(p.negative.porosity, 1.5)), max_relative = 1e-13);

        let p3 = CellParameters::synthetic();
        let s3 = state(&p3);
        let a = phi_drop(&s3, -2.0, &p3).unwrap();
        let b = phi_drop(&s3, -6.0, &p3).unwrap();
        assert_relative_eq!(b, 3.0 * a, max_relative = 1e-14);
        assert!(a > 0.0);
    }

    #[test]
    fn phi_weights_follow_volume_order() {
        // a low-conductivity volume at the positive collector weighs least in phi_p
        let p = CellParameters::synthetic();
        let base = state(&p);
        let mut near = base.clone();
        near.ce[0] = 200.0;
        let mut far = base.clone();
        far.ce[2] = 200.0;
        let (pn_near, _, _) = phi_sums(&near, &p).unwrap();
        let (pn_far, _, _) = phi_sums(&far, &p).unwrap();
        assert!(pn_near < pn_far);
    }

    #[test]
    fn wrong_length_is_a_dimension_error() {
        let p = CellParameters::synthetic();
        let mut s = state(&p);
        s.ce.pop();
        assert!(matches!(electrolyte_rhs(&s, 0.0, &p), Err(ModelError::Dimension(_))));
    }

    fn rk4_electrolyte(s: &mut CellState, p: &CellParameters, h: f64, steps: usize) {
        let f = |c: &[f64]| {
            let mut t = s.clone();
            t.ce = c.to_vec();
            electrolyte_rhs(&t, 0.0, p).unwrap()
        };
        let mut c = s.ce.clone();
        for _ in 0..steps {
            let axpy = |a: &[f64], k: &[f64], w: f64| a.iter().zip(k).map(|(x, y)| x + w * y).collect::<Vec<_>>();
            let k1 = f(&c);
            let k2 = f(&axpy(&c, &k1, h / 2.0));
            let k3 = f(&axpy(&c, &k2, h / 2.0));
            let k4 = f(&axpy(&c, &k3, h));
            for i in 0..c.len() {
                c[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        s.ce = c;
    }

    #[test]
    fn stable_substep_bound() {
        let p3 = CellParameters::synthetic();
        let p10 = CellParameters::synthetic().with_volumes(10);
        let (h3, h10) = (max_stable_substep(&p3, 298.15), max_stable_substep(&p10, 298.15));
        assert!(h10 < h3 / 8.0, "{h10} vs {h3}");
        assert!(max_stable_substep(&p3, 318.15) < h3);
        for (p, h) in [(p3, h3), (p10, h10)] {
            let mut s = state(&p);
            for (k, c) in s.ce.iter_mut().enumerate() {
                *c += if k % 2 == 0 { 50.0 } else { -50.0 };
            }
            rk4_electrolyte(&mut s, &p, 0.99 * h, 500);
            assert!(s.ce.iter().all(|c| (c - 1000.0).abs() <= 50.0), "{:?}", s.ce);
            rk4_electrolyte(&mut s, &p, 3.0 * h, 500);
            assert!(s.ce.iter().any(|c| (c - 1000.0).abs() > 50.0 || !c.is_finite()));
        }
    }
}
