//! Files written by a run.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ergodic_core::{RunOutcome, Scenario};

pub const TRAJECTORIES: &str = "trajectories.csv";
pub const METRICS: &str = "metrics.json";
pub const ITERATIONS: &str = "iterations.csv";
pub const EOPT: &str = "eopt.csv";
pub const SCENARIO: &str = "scenario.toml";

/// 17 significant digits, enough to round-trip any f64.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

/// Writes every artifact of `outcome` into `dir`, creating it if needed.
pub fn write_run(dir: &Path, scenario: &Scenario, outcome: &RunOutcome<3, 2>) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let record = &outcome.record;

    let mut w = csv_writer(&dir.join(TRAJECTORIES))?;
    w.write_record(["t", "agent", "x", "y", "theta", "v", "omega"])?;
    for (agent, traj) in outcome.trajectories.iter().enumerate() {
        for (i, (x, u)) in traj.states().iter().zip(traj.controls()).enumerate() {
            let t = traj.grid().time(i);
            w.write_record([real(t), agent.to_string(), real(x[0]), real(x[1]), real(x[2]), real(u[0]), real(u[1])])?;
        }
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(ITERATIONS))?;
    w.write_record(["round", "agent", "gamma", "exponent", "dd", "local_cost_before", "local_cost", "ergodic"])?;
    for r in &outcome.iterations {
        w.write_record([
            r.round.to_string(),
            r.agent.to_string(),
            real(r.gamma),
            r.exponent.map(|e| e.to_string()).unwrap_or_default(),
            real(r.dd),
            real(r.local_cost_before),
            real(r.local_cost),
            real(r.ergodic),
        ])?;
    }
    w.flush()?;

    let mut w = csv_writer(&dir.join(EOPT))?;
    w.write_record(["t", "eopt"])?;
    for (t, e) in record.eopt.times.iter().zip(&record.eopt.values) {
        w.write_record([real(*t), real(*e)])?;
    }
    w.flush()?;

    let json = serde_json::to_string_pretty(record)?;
    fs::write(dir.join(METRICS), json + "\n").context("writing metrics")?;
    fs::write(dir.join(SCENARIO), scenario.to_toml_string()?).context("writing scenario")?;
    Ok(())
}
