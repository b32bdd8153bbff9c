use serde::Serialize;

/// A box-constrained objective.
pub trait Objective {
    fn dim(&self) -> usize;
    fn bounds(&self) -> (Vec<f64>, Vec<f64>);
    fn value(&mut self, x: &[f64]) -> f64;
    fn gradient(&mut self, x: &[f64], g: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    RelativeDecrease,
    ProjectedGradient,
    IterationLimit,
    /// No step along the search direction lowered the cost.
    LineSearch,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::IterationLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    pub iterations: usize,
    pub termination: Termination,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((v, l), h) in x.iter_mut().zip(lo).zip(hi) {
        *v = v.clamp(*l, *h);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projected BFGS with Armijo backtracking along the projected path.
///
/// Variables at a bound whose gradient points outward are held fixed for
/// the iteration. Steps are capped at 1 in the max norm. Every accepted
/// iterate lowers the cost, so the result is never worse than `x0`.
pub fn minimize_box(
    obj: &mut dyn Objective,
    x0: &[f64],
    max_iterations: usize,
    relative_tolerance: f64,
    gradient_tolerance: f64,
) -> SolverOutcome {
    let n = obj.dim();
    let (lo, hi) = obj.bounds();
    let mut x = x0.to_vec();
    project(&mut x, &lo, &hi);
    let mut f = obj.value(&x);
    let initial_value = f;
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let mut hinv = identity(n);
    let mut scaled = false;
    // a stall right after a curvature reset ends the run; otherwise reset and retry
    let mut fresh = true;
    let mut termination = Termination::IterationLimit;
    let mut iterations = 0;

    while iterations < max_iterations {
        let pg = (0..n)
            .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if pg < gradient_tolerance {
            termination = Termination::ProjectedGradient;
            break;
        }
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut d = direction(&hinv, &g, &free);
        if dot(&g, &d) >= 0.0 {
            hinv = identity(n);
            scaled = false;
            d = direction(&hinv, &g, &free);
        }
        let dmax = d.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if dmax > 1.0 {
            d.iter_mut().for_each(|v| *v /= dmax);
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xn, &lo, &hi);
            let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &s);
            if decrease < 0.0 {
                let fn_ = obj.value(&xn);
                if fn_ <= f + 1e-4 * decrease {
                    accepted = Some((xn, s, fn_));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, s, fn_)) = accepted else {
            if fresh {
                termination = Termination::LineSearch;
                break;
            }
            hinv = identity(n);
            scaled = false;
            fresh = true;
            continue;
        };
        iterations += 1;
        let mut gn = vec![0.0; n];
        obj.gradient(&xn, &mut gn);
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * yy.sqrt() {
            if !scaled {
                let gamma = sy / yy;
                hinv = identity(n);
                hinv.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v *= gamma));
                scaled = true;
            }
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let rel = (f - fn_) / f.abs().max(1.0);
        x = xn;
        f = fn_;
        g = gn;
        if rel < relative_tolerance {
            if fresh {
                termination = Termination::RelativeDecrease;
                break;
            }
            hinv = identity(n);
            scaled = false;
            fresh = true;
        } else {
            fresh = false;
        }
    }

    SolverOutcome {
        x,
        value: f,
        initial_value,
        iterations,
        termination,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn direction(hinv: &[Vec<f64>], g: &[f64], free: &[bool]) -> Vec<f64> {
    (0..g.len())
        .map(|i| {
            if !free[i] {
                return 0.0;
            }
            -(0..g.len()).filter(|&j| free[j]).map(|j| hinv[i][j] * g[j]).sum::<f64>()
        })
        .collect()
}

/// `H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    struct Quadratic {
        centre: Vec<f64>,
        scale: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.centre.len()
        }
        fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
            (vec![0.0; self.dim()], vec![1.0; self.dim()])
        }
        fn value(&mut self, x: &[f64]) -> f64 {
            x.iter()
                .zip(&self.centre)
                .zip(&self.scale)
                .map(|((x, c), s)| s * (x - c).powi(2))
                .sum::<f64>()
                + 0.3 * x[0] * x[1]
        }
        fn gradient(&mut self, x: &[f64], g: &mut [f64]) {
            for i in 0..x.len() {
                g[i] = 2.0 * self.scale[i] * (x[i] - self.centre[i]);
            }
            g[0] += 0.3 * x[1];
            g[1] += 0.3 * x[0];
        }
    }

    #[test]
    fn finds_interior_and_bound_optima() {
        let mut q = Quadratic {
            centre: vec![0.3, 0.6, 1.7, -0.4],
            scale: vec![1.0, 50.0, 3.0, 1e3],
        };
        let out = minimize_box(&mut q, &[0.5; 4], 200, 1e-14, 1e-10);
        assert!(out.termination.converged());
        // stationarity of the coupled pair: 2(x0 - 0.3) + 0.3 x1 = 0, 100(x1 - 0.6) + 0.3 x0 = 0
        let x1 = 59.91 / 99.955;
        let x0 = 0.3 - 0.15 * x1;
        assert_relative_eq!(out.x[0], x0, epsilon = 1e-6);
        assert_relative_eq!(out.x[1], x1, epsilon = 1e-6);
        assert_eq!(out.x[2], 1.0);
        assert_eq!(out.x[3], 0.0);
        assert!(out.value <= out.initial_value);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        struct Rosen;
        impl Objective for Rosen {
            fn dim(&self) -> usize {
                2
            }
            fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
                (vec![-2.0, -2.0], vec![2.0, 0.5])
            }
            fn value(&mut self, x: &[f64]) -> f64 {
                (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
            }
            fn gradient(&mut self, x: &[f64], g: &mut [f64]) {
                g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
                g[1] = 200.0 * (x[1] - x[0] * x[0]);
            }
        }
        let out = minimize_box(&mut Rosen, &[-1.2, 0.0], 500, 1e-15, 1e-9);
        // constrained optimum on x1 = 0.5: minimize (1-a)^2 + 100 (0.5 - a^2)^2
        assert_eq!(out.x[1], 0.5);
        let a = out.x[0];
        let da = -2.0 * (1.0 - a) - 400.0 * a * (0.5 - a * a);
        assert!(da.abs() < 1e-5, "a = {a}, slope {da}");
    }

    #[test]
    fn iteration_cap_is_honoured() {
        let mut q = Quadratic {
            centre: vec![0.3, 0.6],
            scale: vec![1.0, 1e4],
        };
        let out = minimize_box(&mut q, &[1.0, 0.0], 1, 0.0, 0.0);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.termination, Termination::IterationLimit);
        assert!(out.value < out.initial_value);
    }
}
