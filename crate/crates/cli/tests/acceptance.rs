//! Acceptance checks, one line each. Runs without the libtest harness so the
//! lines are always printed; exits non-zero if any check fails.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use balcharge_cli::analysis::{rk4_study, supply_study, varying_duty_schedule};
use balcharge_cli::run::{self, Comparison, Protocol};
use balcharge_cli::{load_scenario, Scenario};
use balcharge_core::cell::{evaluate, total_electrolyte_lithium, CellParameters, CellState};
use balcharge_core::nmpc::{minimize_box, ControlInput, DecisionVector, NmpcConfig, Problem};
use balcharge_core::pack::{thermal_rhs, PackParameters, PackState, ThermalNetwork};
use balcharge_core::simulator::{simulate, InputStep, IntegratorConfig, SimConfig, StopReason, SupplyMode};

const T_ENV: f64 = 298.15;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn testbed() -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/testbed_table1.toml");
    load_scenario(&path).expect("shipped scenario loads")
}

fn cfg(substeps: usize, mode: SupplyMode) -> SimConfig {
    SimConfig {
        integrator: IntegratorConfig {
            substeps,
            ..IntegratorConfig::default()
        },
        mode,
        ..SimConfig::default()
    }
}

fn single(params: CellParameters, capacity_ah: f64, soc: f64) -> (PackParameters, PackState) {
    let pack = PackParameters::uniform(params, ThermalNetwork::chain(1, 1.0, 3.0, 150.0, 400.0), T_ENV);
    let state = PackState {
        cells: vec![CellState::rested(&pack.cells[0], capacity_ah * 3600.0, 2e-3, soc, T_ENV)],
        t_sink_k: T_ENV,
    };
    (pack, state)
}

fn conservation() -> Verdict {
    let (pack, mut state) = single(CellParameters::synthetic().with_volumes(10), 7.5, 0.5);
    for (k, c) in state.cells[0].ce.iter_mut().enumerate() {
        *c = 1000.0 + 150.0 * (0.7 * k as f64).sin();
    }
    let total = |s: &PackState| total_electrolyte_lithium(&s.cells[0].ce, &pack.cells[0]);
    let mut drifts = Vec::new();
    for i in [0.0, -7.5] {
        let sched = vec![InputStep::uniform(i, 1, 10.0); 100];
        let tr = simulate(state.clone(), &sched, cfg(400, SupplyMode::Switched), &pack, &mut |_| None).unwrap();
        drifts.push((total(&tr.final_state) - total(&state)).abs() / total(&state));
    }
    verdict(
        drifts[0] < 1e-9 && drifts[1] < 1e-8,
        format!("drift {:.1e} at rest, {:.1e} at -7.5 A over 1000 s", drifts[0], drifts[1]),
    )
}

fn coulomb() -> Verdict {
    let params = CellParameters::synthetic().without_ageing();
    let i_1c = params.ageing.one_c_current_a;
    let capacity_ah = 7.5;
    let (pack, state) = single(params, capacity_ah, 0.2);
    let sched = vec![InputStep::uniform(-i_1c, 1, 10.0); 180];
    let tr = simulate(state.clone(), &sched, cfg(100, SupplyMode::Switched), &pack, &mut |_| None).unwrap();
    let dz = tr.final_soc(&pack)[0] - state.cells[0].soc(&pack.cells[0]);
    let expect = i_1c * 1800.0 / (capacity_ah * 3600.0);
    let err = (dz - expect).abs() / expect;
    verdict(err < 1e-6, format!("dz = {dz:.9}, expected {expect:.9}, relative error {err:.1e}"))
}

fn ageing_signs(seed: u64) -> Verdict {
    let scenario = testbed();
    let mut sc = scenario.clone();
    sc.cell.volumes_per_section = 3;
    let pack = sc.pack();
    let initial = sc.initial_state(&pack);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pack.len();
    let schedule = |rng: &mut ChaCha8Rng, charging: bool| -> Vec<InputStep> {
        (0..rng.gen_range(3..12))
            .map(|_| {
                let magnitude = rng.gen_range(0.0..10.0);
                InputStep {
                    i_branch_a: if charging { -magnitude } else { magnitude },
                    duty: (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(),
                    ts_s: 10.0,
                }
            })
            .collect()
    };
    let (mut bad_charge, mut bad_discharge) = (0, 0);
    for charging in [true, false] {
        for _ in 0..100 {
            let sched = schedule(&mut rng, charging);
            let tr = simulate(initial.clone(), &sched, cfg(40, SupplyMode::Switched), &pack, &mut |_| None).unwrap();
            let ok = tr.rows.windows(2).all(|w| {
                w[0].cells.iter().zip(&w[1].cells).all(|(a, b)| {
                    if charging {
                        b.capacity_as <= a.capacity_as && b.r_sei_ohm >= a.r_sei_ohm
                    } else {
                        b.capacity_as == a.capacity_as && b.r_sei_ohm == a.r_sei_ohm
                    }
                })
            });
            if !ok {
                if charging {
                    bad_charge += 1;
                } else {
                    bad_discharge += 1;
                }
            }
        }
    }
    verdict(
        bad_charge == 0 && bad_discharge == 0,
        format!("{bad_charge}/100 charging and {bad_discharge}/100 discharging schedules broke monotonicity (seed {seed})"),
    )
}

fn thermal_balance() -> Verdict {
    let mut network = ThermalNetwork::testbed();
    network.cooling_power_w = 0.0;
    let n = network.len();
    let cells = (0..n)
        .map(|i| CellState::rested(&CellParameters::synthetic(), 7.5 * 3600.0, 2e-3, 0.5, T_ENV + 1.5 * i as f64))
        .collect();
    let mut state = PackState { cells, t_sink_k: T_ENV };
    // arbitrary smooth injection with a closed-form integral
    let amp: Vec<f64> = (0..n).map(|i| 0.5 + 0.3 * i as f64).collect();
    let omega: Vec<f64> = (0..n).map(|i| 0.01 * (i + 1) as f64).collect();
    let q = |t: f64| -> Vec<f64> { (0..n).map(|i| amp[i] * (1.0 + 0.8 * (omega[i] * t).sin())).collect() };
    let q_integral = |t0: f64, t1: f64| -> f64 {
        (0..n)
            .map(|i| amp[i] * ((t1 - t0) - 0.8 / omega[i] * ((omega[i] * t1).cos() - (omega[i] * t0).cos())))
            .sum()
    };
    let rate = |s: &PackState, t: f64| thermal_rhs(s, &q(t), &network).unwrap();
    let energy = |s: &PackState| s.thermal_energy(&network);
    let shifted = |s: &PackState, h: f64, k: &(Vec<f64>, f64)| {
        let mut out = s.clone();
        for (c, d) in out.cells.iter_mut().zip(&k.0) {
            c.temperature_k += h * d;
        }
        out.t_sink_k += h * k.1;
        out
    };
    let h = 1.0;
    let mut worst: f64 = 0.0;
    for k in 0..600 {
        let t = k as f64 * h;
        let k1 = rate(&state, t);
        let k2 = rate(&shifted(&state, 0.5 * h, &k1), t + 0.5 * h);
        let k3 = rate(&shifted(&state, 0.5 * h, &k2), t + 0.5 * h);
        let k4 = rate(&shifted(&state, h, &k3), t + h);
        let e0 = energy(&state);
        for i in 0..n {
            state.cells[i].temperature_k += h / 6.0 * (k1.0[i] + 2.0 * k2.0[i] + 2.0 * k3.0[i] + k4.0[i]);
        }
        state.t_sink_k += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        let exact = q_integral(t, t + h);
        worst = worst.max(((energy(&state) - e0) - exact).abs() / exact);
    }
    verdict(worst < 1e-6, format!("worst per-step relative error {worst:.1e} over 600 RK4 steps"))
}

fn sigmoid_convergence() -> Verdict {
    let scenario = testbed();
    let pack = scenario.pack();
    let initial = scenario.initial_state(&pack);
    let i_1c = pack.cells[0].ageing.one_c_current_a;
    let schedule = varying_duty_schedule(pack.len(), 20, -i_1c, 10.0);
    let study = supply_study(&pack, &initial, &schedule, 400, &[5.0, 20.0, 50.0]).unwrap();
    let e: Vec<f64> = study.sigmoid.iter().map(|s| s.state).collect();
    let decreasing = e.windows(2).all(|w| w[1] < w[0]);
    let t_avg = study.average.temperature_k;
    let t_sig = study.sigmoid[2].temperature_k;
    verdict(
        decreasing && t_avg > t_sig,
        format!(
            "state error a=5/20/50: {:.2e} {:.2e} {:.2e}; T error average {:.2e} K vs a=50 {:.2e} K",
            e[0], e[1], e[2], t_avg, t_sig
        ),
    )
}

fn gradient_audit() -> Verdict {
    let report = run::run_gradcheck(&testbed(), 20, 11, 1e-4).unwrap();
    verdict(
        report.relative_errors.len() == 20 && report.passed(1e-4),
        format!("max relative error {:.2e} over 20 points", report.max_relative_error),
    )
}

fn solver_oracle() -> Verdict {
    let config = NmpcConfig {
        horizon: 1,
        ..NmpcConfig::default()
    };
    let cell = CellParameters::synthetic().with_volumes(config.model_volumes);
    let mut network = ThermalNetwork::chain(1, 1.0, 3.0, 150.0, 400.0);
    network.cooling_smoothing_k = config.model_cooling_smoothing_k;
    let pack = PackParameters::uniform(cell, network, T_ENV);
    let state = PackState {
        cells: vec![CellState::rested(&pack.cells[0], 7.5 * 3600.0, 2e-3, 0.5, T_ENV)],
        t_sink_k: T_ENV,
    };
    let v0 = vec![evaluate(&state.cells[0], 0.0, &pack.cells[0]).unwrap().voltage];
    let mut problem = Problem::new(&pack, &config, state, v0, ControlInput::zero(1), 0).unwrap();
    let x0 = problem.default_point();
    let out = minimize_box(&mut problem, &x0, 200, 1e-10, 1e-8);
    let best = problem.decision(&out.x).unwrap();
    let solver = problem.predict(&best).unwrap().cost.total;
    let w = &config.weights;
    let mut grid = f64::INFINITY;
    for a in 0..200 {
        let delta = a as f64 / 199.0;
        for b in 0..200 {
            let i0 = -w.i_max_a * b as f64 / 199.0;
            // the last input only enters algebraic terms, so its optimum is closed-form
            let i1 = w.alpha[5] * i0 / (w.alpha[3] + w.alpha[5]);
            let d = DecisionVector {
                inputs: vec![
                    ControlInput { current_a: i0, duty: vec![delta] },
                    ControlInput { current_a: i1, duty: vec![delta] },
                ],
                slacks: vec![[0.0; 3]; 2],
            };
            grid = grid.min(problem.predict(&d).unwrap().cost.total);
        }
    }
    verdict(
        solver <= grid + 0.01 * grid.abs(),
        format!("solver cost {solver:.6e}, 200x200 grid optimum {grid:.6e}"),
    )
}

fn end_to_end(cmp: &Comparison) -> Verdict {
    let r = cmp.get(Protocol::Nmpc);
    let s = &r.summary;
    let z_ok = s.final_soc.iter().all(|z| (0.99..=1.005).contains(z));
    let passed = z_ok
        && s.soc_spread < 0.01
        && s.peak_voltage_v <= 4.2 + 1e-3
        && s.peak_temperature_k <= 313.15 + 0.1
        && s.stop == StopReason::SocTarget
        && r.wall_s < 600.0;
    let z: Vec<String> = s.final_soc.iter().map(|z| format!("{z:.4}")).collect();
    verdict(
        passed,
        format!(
            "z = [{}], spread {:.4}, peak V {:.4}, peak T {:.2} K, stop {:?}, {:.0} s",
            z.join(" "),
            s.soc_spread,
            s.peak_voltage_v,
            s.peak_temperature_k,
            s.stop,
            r.wall_s
        ),
    )
}

fn ordering(cmp: &Comparison, elapsed: Duration) -> Verdict {
    let (c, v, m) = (
        &cmp.get(Protocol::Cccv).summary,
        &cmp.get(Protocol::VoltageBased).summary,
        &cmp.get(Protocol::Nmpc).summary,
    );
    let (ah_v, ah_m) = (v.extracted_ah.unwrap(), m.extracted_ah.unwrap());
    let gap = ah_m / ah_v - 1.0;
    let passed = gap >= 0.03
        && !c.overcharge_events.is_empty()
        && m.soc_spread < v.soc_spread
        && v.soc_spread < c.soc_spread
        && elapsed < Duration::from_secs(1200);
    verdict(
        passed,
        format!(
            "discharge NMPC {ah_m:.3} Ah vs voltage-based {ah_v:.3} Ah ({:+.1}%), CC-CV overcharge events {}, spreads {:.4} < {:.4} < {:.4}, compare {:.0} s",
            100.0 * gap,
            c.overcharge_events.len(),
            m.soc_spread,
            v.soc_spread,
            c.soc_spread,
            elapsed.as_secs_f64()
        ),
    )
}

fn rk4_order() -> Verdict {
    let scenario = testbed();
    let mut sc = scenario.clone();
    sc.cell.volumes_per_section = 3;
    sc.thermal.cooling_smoothing_k = 0.05;
    let pack = sc.pack();
    let initial = sc.initial_state(&pack);
    let step = InputStep {
        i_branch_a: -7.5,
        duty: vec![0.2, 0.35, 0.5, 0.65, 0.8, 0.95],
        ts_s: 10.0,
    };
    let study = rk4_study(&pack, &initial, &step, 40, 1).unwrap();
    let r = study.ratios[0];
    verdict(
        (12.0..=20.0).contains(&r),
        format!("error ratio {r:.2} on halving 40 -> 80 substeps (errors {:.2e}, {:.2e})", study.errors[0], study.errors[1]),
    )
}

fn main() {
    // libtest flags such as --nocapture or a filter are accepted and ignored
    let started = Instant::now();
    let mut results: Vec<(&str, Verdict, Duration, Duration)> = Vec::new();
    fn timed(name: &'static str, budget: u64, f: impl FnOnce() -> Verdict) -> (&'static str, Verdict, Duration, Duration) {
        let t = Instant::now();
        let v = f();
        (name, v, t.elapsed(), Duration::from_secs(budget))
    }
    results.push(timed("electrolyte conservation", 1, conservation));
    results.push(timed("coulomb consistency", 1, coulomb));
    results.push(timed("ageing signs", 10, || ageing_signs(2024)));
    results.push(timed("thermal energy balance", 1, thermal_balance));
    results.push(timed("sigmoid convergence", 30, sigmoid_convergence));
    results.push(timed("gradient audit", 30, gradient_audit));
    results.push(timed("solver oracle", 60, solver_oracle));

    let scenario = testbed();
    let t = Instant::now();
    let cmp = run::run_compare(&scenario, &run::plant_config(&scenario, None));
    let compare_time = t.elapsed();
    match cmp {
        Ok(cmp) => {
            let nmpc_time = Duration::from_secs_f64(cmp.get(Protocol::Nmpc).wall_s);
            results.push(("end-to-end nmpc", end_to_end(&cmp), nmpc_time, Duration::from_secs(600)));
            results.push(("three-way ordering", ordering(&cmp, compare_time), compare_time, Duration::from_secs(1200)));
        }
        Err(e) => {
            for name in ["end-to-end nmpc", "three-way ordering"] {
                results.push((name, verdict(false, format!("compare failed: {e}")), compare_time, Duration::ZERO));
            }
        }
    }
    results.push(timed("rk4 convergence", 1, rk4_order));

    println!();
    let mut failures = 0;
    for (name, v, took, budget) in &results {
        let ok = v.passed && took <= budget;
        failures += usize::from(!ok);
        println!(
            "{} {:<26} {:>8.2} s (budget {:>4} s)  {}",
            if ok { "PASS" } else { "FAIL" },
            name,
            took.as_secs_f64(),
            budget.as_secs(),
            v.detail
        );
    }
    println!(
        "\nacceptance: {} of {} criteria passed in {:.0} s",
        results.len() - failures,
        results.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
