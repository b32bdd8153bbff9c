use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::problem::Problem;
use super::solver::Objective;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    /// `max |g - g_c| / max |g_c|` per sample point.
    pub relative_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub central_step: f64,
}

impl GradcheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares the solver gradient with central differences at random points.
///
/// Duties are uniform in [0, 1] and power fractions uniform in [0, 0.95];
/// points whose prediction touches a voltage, temperature or SOC bound are
/// redrawn, so the comparison probes the cost terms rather than a
/// saturated penalty.
pub fn gradcheck(problem: &mut Problem, points: usize, seed: u64, central_step: f64) -> GradcheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = problem.n_cells();
    let dim = problem.dim();
    let mut relative_errors = Vec::with_capacity(points);
    let mut draws = 0;
    while relative_errors.len() < points && draws < 100 * points {
        draws += 1;
        let x: Vec<f64> = (0..dim)
            .map(|i| {
                let hi = if i % (n + 1) == n { 0.95 } else { 1.0 };
                rng.gen_range(central_step..hi - central_step)
            })
            .collect();
        let clear = problem
            .decision(&x)
            .and_then(|d| Ok(problem.predict(&d)?))
            .map(|p| p.cost.soc_penalty == 0.0 && p.cost.slacks.iter().all(|s| s[0] == 0.0 && s[1] == 0.0))
            .unwrap_or(false);
        if !clear {
            continue;
        }
        let mut g = vec![0.0; dim];
        problem.gradient(&x, &mut g);
        let mut xp = x.clone();
        let mut err: f64 = 0.0;
        let mut scale: f64 = f64::MIN_POSITIVE;
        for i in 0..dim {
            xp[i] = x[i] + central_step;
            let fp = problem.value(&xp);
            xp[i] = x[i] - central_step;
            let fm = problem.value(&xp);
            xp[i] = x[i];
            let gc = (fp - fm) / (2.0 * central_step);
            err = err.max((g[i] - gc).abs());
            scale = scale.max(gc.abs());
        }
        relative_errors.push(err / scale);
    }
    GradcheckReport {
        max_relative_error: if relative_errors.len() < points {
            f64::INFINITY
        } else {
            relative_errors.iter().copied().fold(0.0, f64::max)
        },
        relative_errors,
        central_step,
    }
}
