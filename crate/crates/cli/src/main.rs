use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use balcharge_cli::analysis::{rk4_study, stable_base_substeps, supply_study, varying_duty_schedule};
use balcharge_cli::report::{self, create_dir, summary_table, write_json, write_text, write_trace};
use balcharge_cli::run::{self, Protocol};
use balcharge_cli::{load_scenario, CliResult, Scenario};
use balcharge_core::protocols::RunSummary;
use balcharge_core::simulator::{SimConfig, SupplyMode};

/// Balancing-aware charging of series battery packs: simulation, baseline
/// protocols and NMPC.
///
/// Log verbosity follows BALCHARGE_LOG (error, warn, info, debug, trace).
#[derive(Parser)]
#[command(name = "balcharge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; defaults to `<output_dir>/<command>` from the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for randomized audits and sweeps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Plant supply mode, overriding the scenario.
    #[arg(long, value_parser = parse_mode)]
    mode: Option<SupplyMode>,
}

fn parse_mode(s: &str) -> Result<SupplyMode, String> {
    s.parse()
}

#[derive(Subcommand)]
enum Command {
    /// Runs the scenario's fixed input schedule.
    Simulate(Common),
    /// CC-CV charge followed by the discharge-capacity test.
    ChargeCccv(Common),
    /// Constant current with per-cell voltage bypass, then the discharge test.
    ChargeVoltage(Common),
    /// Closed-loop NMPC charge, then the discharge test.
    ChargeNmpc(Common),
    /// Discharge-capacity test from the scenario's initial state.
    DischargeTest(Common),
    /// All three charging strategies from the same initial state.
    Compare(Common),
    /// Compares the controller's objective gradient with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// RK4 step-halving and supply-approximation sweeps.
    Convergence(Common),
}

struct Context {
    scenario: Scenario,
    out: PathBuf,
    plant: SimConfig,
}

fn prepare(common: &Common, command: &str) -> CliResult<Context> {
    let scenario = load_scenario(&common.scenario)?;
    let out = common.out.clone().unwrap_or_else(|| {
        scenario
            .output_dir
            .clone()
            .unwrap_or_else(|| Path::new("runs").join(&scenario.name))
            .join(command)
    });
    create_dir(&out)?;
    write_text(&out.join("scenario.toml"), &scenario.to_toml()?)?;
    let plant = run::plant_config(&scenario, common.mode);
    Ok(Context { scenario, out, plant })
}

fn charge(common: &Common, protocol: Protocol, command: &str) -> CliResult<()> {
    let ctx = prepare(common, command)?;
    let pack = ctx.scenario.pack();
    let initial = ctx.scenario.initial_state(&pack);
    let r = run::charge_and_discharge(protocol, &ctx.scenario, &pack, &initial, &ctx.plant)?;
    report::write_report(&ctx.out, &r, ctx.scenario.nmpc_config().ts_s)?;
    print!("{}", summary_table(std::slice::from_ref(&r.summary)));
    println!("results in {}", ctx.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DischargeSummary {
    extracted_ah: f64,
    duration_s: f64,
    stop: balcharge_core::simulator::StopReason,
}

#[derive(Serialize)]
struct ConvergenceReport {
    rk4: balcharge_cli::analysis::Rk4Study,
    supply: balcharge_cli::analysis::SupplyStudy,
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(c) => {
            let ctx = prepare(&c, "simulate")?;
            let trace = run::run_simulate(&ctx.scenario, &ctx.plant)?;
            write_trace(&ctx.out.join("trace.csv"), &trace)?;
            let pack = ctx.scenario.pack();
            let summary = RunSummary::from_trace("simulate", &ctx.scenario.initial_state(&pack), &trace, &pack);
            write_json(&ctx.out.join("summary.json"), &summary)?;
            print!("{}", summary_table(&[summary]));
            println!("results in {}", ctx.out.display());
        }
        Command::ChargeCccv(c) => charge(&c, Protocol::Cccv, "charge-cccv")?,
        Command::ChargeVoltage(c) => charge(&c, Protocol::VoltageBased, "charge-voltage")?,
        Command::ChargeNmpc(c) => charge(&c, Protocol::Nmpc, "charge-nmpc")?,
        Command::DischargeTest(c) => {
            let ctx = prepare(&c, "discharge-test")?;
            let d = run::run_discharge(&ctx.scenario, &ctx.plant)?;
            write_trace(&ctx.out.join("discharge.csv"), &d.trace)?;
            let summary = DischargeSummary {
                extracted_ah: d.extracted_ah,
                duration_s: d.trace.duration_s,
                stop: d.trace.stop,
            };
            write_json(&ctx.out.join("summary.json"), &summary)?;
            println!("extracted {:.4} Ah in {:.0} s", d.extracted_ah, d.trace.duration_s);
            println!("results in {}", ctx.out.display());
        }
        Command::Compare(c) => {
            let ctx = prepare(&c, "compare")?;
            let cmp = run::run_compare(&ctx.scenario, &ctx.plant)?;
            report::write_comparison(&ctx.out, &cmp, ctx.scenario.nmpc_config().ts_s)?;
            print!("{}", summary_table(&cmp.summaries()));
            println!("results in {}", ctx.out.display());
        }
        Command::Gradcheck {
            common,
            points,
            tolerance,
        } => {
            let ctx = prepare(&common, "gradcheck")?;
            let r = run::run_gradcheck(&ctx.scenario, points, common.seed, 1e-4)?;
            write_json(&ctx.out.join("gradcheck.json"), &r)?;
            println!(
                "max relative error {:.3e} over {} points (tolerance {tolerance:e})",
                r.max_relative_error,
                r.relative_errors.len()
            );
            run::check_gradient(&r, tolerance)?;
        }
        Command::Convergence(c) => {
            let ctx = prepare(&c, "convergence")?;
            let pack = ctx.scenario.pack();
            let initial = ctx.scenario.initial_state(&pack);
            let n = pack.len();
            let i_1c = pack.cells[0].ageing.one_c_current_a;
            let schedule = varying_duty_schedule(n, 20, -i_1c, 10.0);
            let mut smooth = pack.clone();
            // the hard cooling switch is not smooth; RK4 order needs a smooth step
            smooth.network.cooling_smoothing_k = smooth.network.cooling_smoothing_k.max(0.05);
            let base = stable_base_substeps(&smooth, ctx.scenario.ambient_temperature_k, 10.0);
            let rk4 = rk4_study(&smooth, &initial, &schedule[0], base, 1)?;
            let supply = supply_study(&pack, &initial, &schedule, ctx.plant.integrator.substeps, &[5.0, 20.0, 50.0])?;
            println!("RK4 substeps {:?}: error ratios {:?}", rk4.substeps, rk4.ratios);
            for e in &supply.sigmoid {
                println!(
                    "sigmoid a = {:>4}: state {:.3e}, T {:.3e} K",
                    e.slope.unwrap_or_default(),
                    e.state,
                    e.temperature_k
                );
            }
            println!("average       : state {:.3e}, T {:.3e} K", supply.average.state, supply.average.temperature_k);
            write_json(&ctx.out.join("convergence.json"), &ConvergenceReport { rk4, supply })?;
            println!("results in {}", ctx.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BALCHARGE_LOG", "info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
