//! Files a run leaves behind: CSV traces, JSON summaries and a text table.
//!
//! Layout of a run directory:
//!
//! ```text
//! <out>/charge.csv       plant trace of the charge
//! <out>/discharge.csv    trace of the chained discharge test
//! <out>/summary.json     one RunSummary record
//! <out>/solve_log.csv    NMPC only: k, cost, iterations, max_violation, wall_ms
//! <out>/inputs.csv       NMPC only: applied branch current and duty cycles
//! ```
//!
//! `compare` writes one such directory per protocol plus `summary.json`
//! (an array) and `summary.txt` at the top.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use balcharge_core::nmpc::ControlInput;
use balcharge_core::protocols::RunSummary;
use balcharge_core::simulator::SimTrace;

use crate::error::{CliError, CliResult};
use crate::run::{ChargeRun, Comparison, ProtocolReport};

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("creating {}", dir.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(CliError::io(format!("creating {}", path.display())))
}

pub fn write_trace(path: &Path, trace: &SimTrace) -> CliResult<()> {
    let mut w = create(path)?;
    trace
        .write_csv(&mut w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)
        .map_err(|e| CliError::io(format!("writing {}", path.display()))(e.into()))?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(CliError::io(format!("writing {}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(CliError::io(format!("writing {}", path.display())))
}

/// Applied inputs as CSV: `k, t, I_branch, delta_1..delta_N`.
pub fn write_inputs<W: Write>(mut w: W, inputs: &[ControlInput], ts_s: f64) -> std::io::Result<()> {
    let n = inputs.first().map_or(0, |u| u.duty.len());
    let mut header = vec!["k".to_string(), "t".into(), "I_branch".into()];
    header.extend((1..=n).map(|i| format!("delta_{i}")));
    writeln!(w, "# units: t [s], I_branch [A], delta [-]; t is the start of the step")?;
    writeln!(w, "{}", header.join(","))?;
    for (k, u) in inputs.iter().enumerate() {
        write!(w, "{},{},{}", k, k as f64 * ts_s, u.current_a)?;
        for d in &u.duty {
            write!(w, ",{d}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Writes one protocol's files into `dir`.
pub fn write_report(dir: &Path, report: &ProtocolReport, ts_s: f64) -> CliResult<()> {
    create_dir(dir)?;
    write_charge(dir, &report.charge, ts_s)?;
    write_trace(&dir.join("discharge.csv"), &report.discharge.trace)?;
    write_json(&dir.join("summary.json"), &report.summary)
}

/// Writes the charge trace, plus the solver log and inputs for NMPC runs.
pub fn write_charge(dir: &Path, run: &ChargeRun, ts_s: f64) -> CliResult<()> {
    create_dir(dir)?;
    write_trace(&dir.join("charge.csv"), run.trace())?;
    if let ChargeRun::Nmpc(r) = run {
        let path = dir.join("solve_log.csv");
        let mut w = create(&path)?;
        r.write_log_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(CliError::io(format!("writing {}", path.display())))?;
        let path = dir.join("inputs.csv");
        let mut w = create(&path)?;
        write_inputs(&mut w, &r.applied, ts_s)
            .and_then(|_| w.flush())
            .map_err(CliError::io(format!("writing {}", path.display())))?;
    }
    Ok(())
}

/// Writes a comparison and returns the per-protocol directories.
pub fn write_comparison(dir: &Path, cmp: &Comparison, ts_s: f64) -> CliResult<Vec<PathBuf>> {
    create_dir(dir)?;
    let mut dirs = Vec::new();
    for r in &cmp.runs {
        let sub = dir.join(r.charge.protocol().name());
        write_report(&sub, r, ts_s)?;
        dirs.push(sub);
    }
    let summaries = cmp.summaries();
    write_json(&dir.join("summary.json"), &summaries)?;
    write_text(&dir.join("summary.txt"), &summary_table(&summaries))?;
    Ok(dirs)
}

/// Human-readable table of run summaries.
pub fn summary_table(summaries: &[RunSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<14} {:>8} {:>8} {:>8} {:>8} {:>9} {:>9} {:>10} {:>10} {:>6}",
        "protocol", "spread", "peak V", "peak T", "time h", "disch Ah", "min z", "lost mAh", "dRsei uOhm", "overch"
    );
    for r in summaries {
        let min_z = r.final_soc.iter().cloned().fold(f64::INFINITY, f64::min);
        let lost: f64 = r.capacity_lost_ah.iter().sum::<f64>() * 1e3;
        let dr = r.r_sei_growth_ohm.iter().cloned().fold(0.0, f64::max) * 1e6;
        let extracted = r.extracted_ah.map_or("-".to_string(), |a| format!("{a:.4}"));
        let _ = writeln!(
            s,
            "{:<14} {:>8.4} {:>8.4} {:>8.2} {:>8.3} {:>9} {:>9.4} {:>10.3} {:>10.3} {:>6}",
            r.protocol,
            r.soc_spread,
            r.peak_voltage_v,
            r.peak_temperature_k,
            r.duration_s / 3600.0,
            extracted,
            min_z,
            lost,
            dr,
            r.overcharge_events.len()
        );
    }
    s.push('\n');
    for r in summaries {
        let z: Vec<String> = r.final_soc.iter().map(|z| format!("{z:.4}")).collect();
        let _ = writeln!(s, "{:<14} final z = [{}]", r.protocol, z.join(", "));
    }
    s
}
