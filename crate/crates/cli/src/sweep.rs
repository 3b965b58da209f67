//! Batches of independent runs over team sizes and seeds.

use std::path::Path;

use anyhow::{Context, Result};
use ergodic_core::{run_scenario, Scenario};
use rayon::prelude::*;

use crate::artifacts::real;

/// One line of the batch table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub agents: usize,
    pub seed: u64,
    pub t_ctt: Option<f64>,
    pub energy: (f64, f64),
    pub distance: (f64, f64),
    pub ergodic_reduction: f64,
    pub rounds: usize,
    pub failure: Option<String>,
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

fn run_one(base: &Scenario, agents: usize, seed: u64) -> SweepRow {
    let mut s = base.clone();
    s.run.agents = agents;
    s.run.seed = seed;
    let empty = SweepRow {
        agents,
        seed,
        t_ctt: None,
        energy: (f64::NAN, f64::NAN),
        distance: (f64::NAN, f64::NAN),
        ergodic_reduction: f64::NAN,
        rounds: 0,
        failure: None,
    };
    match run_scenario(&s) {
        Ok(out) => {
            let r = out.record;
            SweepRow {
                t_ctt: r.t_ctt,
                energy: min_max(&r.control_energy),
                distance: min_max(&r.traveled_distance),
                ergodic_reduction: r.ergodic_reduction,
                rounds: r.rounds,
                failure: r.failure,
                ..empty
            }
        }
        Err(e) => SweepRow { failure: Some(e.to_string()), ..empty },
    }
}

/// Runs every `(agents, seed)` pair; rows come back in that nested order.
pub fn sweep(base: &Scenario, agents: &[usize], seeds: &[u64]) -> Vec<SweepRow> {
    let jobs: Vec<(usize, u64)> = agents.iter().flat_map(|&n| seeds.iter().map(move |&s| (n, s))).collect();
    jobs.par_iter().map(|&(n, s)| run_one(base, n, s)).collect()
}

pub fn write_rows(path: &Path, rows: &[SweepRow]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record([
        "agents",
        "seed",
        "t_ctt",
        "reached",
        "energy_min",
        "energy_max",
        "distance_min",
        "distance_max",
        "ergodic_reduction",
        "rounds",
        "failed",
        "failure",
    ])?;
    for r in rows {
        w.write_record([
            r.agents.to_string(),
            r.seed.to_string(),
            r.t_ctt.map(real).unwrap_or_default(),
            r.t_ctt.is_some().to_string(),
            real(r.energy.0),
            real(r.energy.1),
            real(r.distance.0),
            real(r.distance.1),
            real(r.ergodic_reduction),
            r.rounds.to_string(),
            r.failure.is_some().to_string(),
            r.failure.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_of_values() {
        assert_eq!(min_max(&[3.0, 1.0, 2.0]), (1.0, 3.0));
        assert_eq!(min_max(&[4.0]), (4.0, 4.0));
    }

    #[test]
    fn failures_become_rows() {
        let mut s = Scenario::volcano();
        s.run.steps = 20;
        s.weights.i_max = 1;
        s.graph = ergodic_core::GraphSpec::Edges(vec![(0, 1)]);
        let rows = sweep(&s, &[2, 3], &[0]);
        assert_eq!(rows.len(), 2);
        assert!(rows[0].failure.is_none());
        // The two-agent edge list cannot describe a team of three.
        assert!(rows[1].failure.is_some());
    }
}
