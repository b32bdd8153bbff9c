use serde::Serialize;

use super::{ConstraintLimits, ControlInput, CostWeights, DecisionVector, Smoothing};

/// Predicted outputs at the step boundaries `k0 ..= k0 + H`.
///
/// `voltages[0]` is the measurement the prediction starts from; later
/// entries are the terminal voltages at the end of each predicted step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub socs: Vec<Vec<f64>>,
    pub temperatures_k: Vec<Vec<f64>>,
    pub voltages_v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn horizon(&self) -> usize {
        self.socs.len() - 1
    }
}

/// The seven cost terms, summed over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub terms: [f64; 7],
    /// Terms per step `k0 + j`.
    pub per_step: Vec<[f64; 7]>,
    /// Terminal imbalance cost of each cell, counted once.
    pub terminal_imbalance: Vec<f64>,
    pub total: f64,
}

/// Cost terms of a predicted trajectory. `previous` is the input applied
/// just before the horizon.
pub fn stage_costs(
    traj: &Trajectory,
    decision: &DecisionVector,
    previous: &ControlInput,
    weights: &CostWeights,
) -> CostBreakdown {
    let [a1, a2, a3, a4, a5, a6, a7] = weights.alpha;
    let horizon = traj.horizon();
    let n = traj.socs[0].len();
    let nf = n as f64;
    let terminal = &traj.socs[horizon];
    let mean = terminal.iter().sum::<f64>() / nf;
    let terminal_imbalance: Vec<f64> = terminal.iter().map(|z| a7 * (z - mean).powi(2)).collect();
    let j7: f64 = terminal_imbalance.iter().sum();

    let mut per_step = Vec::with_capacity(horizon + 1);
    for k in 0..=horizon {
        let u = &decision.inputs[k];
        let prev = if k == 0 { previous } else { &decision.inputs[k - 1] };
        let j1 = a1 * traj.socs[k].iter().map(|z| (z - weights.z_target).powi(2)).sum::<f64>();
        let j2 = a2 * traj.temperatures_k[k].iter().map(|t| (t / weights.t_env_k).powi(2)).sum::<f64>();
        let j3 = a3 * u.duty.iter().map(|d| d * d).sum::<f64>();
        let j4 = a4 * nf * (u.current_a / weights.i_max_a).powi(2);
        let j5 = a5 * u.duty.iter().zip(&prev.duty).map(|(d, p)| (d - p).powi(2)).sum::<f64>();
        let j6 = a6 * nf * ((u.current_a - prev.current_a) / weights.i_max_a).powi(2);
        per_step.push([j1, j2, j3, j4, j5, j6, j7]);
    }
    let mut terms = [0.0; 7];
    for s in &per_step {
        for (t, v) in terms.iter_mut().zip(s) {
            *t += v;
        }
    }
    CostBreakdown {
        total: terms.iter().sum(),
        terms,
        per_step,
        terminal_imbalance,
    }
}

/// Stage cost plus exact hinge penalties.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SoftCost {
    pub breakdown: CostBreakdown,
    /// Voltage (V), temperature (K) and power (W) excess per step.
    pub slacks: Vec<[f64; 3]>,
    pub slack_penalty: f64,
    /// Penalty on SOC outside [0, 1].
    pub soc_penalty: f64,
    /// Largest constraint excess, in the native unit of each constraint.
    pub max_violation: f64,
    pub total: f64,
}

fn power_residual(traj: &Trajectory, u: &ControlInput, k: usize, p_max: f64) -> f64 {
    // delivered power is negative while charging; the bound is -p_max
    let p: f64 = traj.voltages_v[k].iter().zip(&u.duty).map(|(v, d)| v * d * u.current_a).sum();
    -p_max - p
}

fn soc_excess(z: f64) -> f64 {
    (z - 1.0).max(0.0) + (-z).max(0.0)
}

/// Stage cost of a trajectory with the constraints as exact penalties.
///
/// Voltage and temperature count from the first predicted boundary on,
/// the power bound from the measured one. `k0` indexes time-varying power
/// limits.
pub fn soft_constrained_cost(
    traj: &Trajectory,
    decision: &DecisionVector,
    previous: &ControlInput,
    weights: &CostWeights,
    limits: &ConstraintLimits,
    k0: usize,
) -> SoftCost {
    let breakdown = stage_costs(traj, decision, previous, weights);
    let horizon = traj.horizon();
    let nf = traj.socs[0].len() as f64;
    let mut slacks = vec![[0.0; 3]; horizon + 1];
    let mut soc_penalty = 0.0;
    let mut worst: f64 = 0.0;
    for (k, s) in slacks.iter_mut().enumerate() {
        if k > 0 {
            let v = traj.voltages_v[k].iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            let t = traj.temperatures_k[k].iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            s[0] = (v - limits.v_max_v).max(0.0);
            s[1] = (t - limits.t_max_k).max(0.0);
            for z in &traj.socs[k] {
                let e = soc_excess(*z);
                soc_penalty += weights.alpha_soc * e;
                worst = worst.max(e);
            }
        }
        s[2] = power_residual(traj, &decision.inputs[k], k, limits.p_max_w.at(k0 + k)).max(0.0);
        worst = worst.max(s[0]).max(s[1]).max(s[2]);
    }
    let slack_penalty: f64 = slacks
        .iter()
        .map(|s| nf * s.iter().zip(&weights.alpha_slack).map(|(x, a)| a * x).sum::<f64>())
        .sum();
    SoftCost {
        total: breakdown.total + slack_penalty + soc_penalty,
        breakdown,
        slacks,
        slack_penalty,
        soc_penalty,
        max_violation: worst,
    }
}

/// `ln(1 + sum exp(k r_i)) / k`: a smooth `max(0, max r_i)`.
fn soft_max_plus(residuals: impl Iterator<Item = f64>, k: f64) -> f64 {
    let scaled: Vec<f64> = residuals.map(|r| k * r).collect();
    let m = scaled.iter().fold(0.0_f64, |a, b| a.max(*b));
    let sum = (-m).exp() + scaled.iter().map(|s| (s - m).exp()).sum::<f64>();
    (m + sum.ln()) / k
}

fn softplus(r: f64, k: f64) -> f64 {
    let x = k * r;
    if x > 30.0 {
        r + (-x).exp().ln_1p() / k
    } else {
        x.exp().ln_1p() / k
    }
}

/// Stage cost with every hinge replaced by a softplus. The power term can
/// be left out when the parametrization already enforces the bound.
#[allow(clippy::too_many_arguments)]
pub(crate) fn smoothed_cost(
    traj: &Trajectory,
    decision: &DecisionVector,
    previous: &ControlInput,
    weights: &CostWeights,
    limits: &ConstraintLimits,
    smoothing: &Smoothing,
    k0: usize,
    include_power: bool,
) -> f64 {
    let mut total = stage_costs(traj, decision, previous, weights).total;
    let nf = traj.socs[0].len() as f64;
    let [av, at, ap] = weights.alpha_slack;
    for k in 0..=traj.horizon() {
        if k > 0 {
            let v = soft_max_plus(traj.voltages_v[k].iter().map(|v| v - limits.v_max_v), smoothing.voltage_per_v);
            let t = soft_max_plus(
                traj.temperatures_k[k].iter().map(|t| t - limits.t_max_k),
                smoothing.temperature_per_k,
            );
            total += nf * (av * v + at * t);
            for z in &traj.socs[k] {
                total += weights.alpha_soc * (softplus(z - 1.0, smoothing.soc) + softplus(-z, smoothing.soc));
            }
        }
        if include_power {
            let r = power_residual(traj, &decision.inputs[k], k, limits.p_max_w.at(k0 + k));
            total += nf * ap * softplus(r, smoothing.power_per_w);
        }
    }
    total
}
