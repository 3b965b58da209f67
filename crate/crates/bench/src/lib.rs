//! Shared fixtures for the planner benchmarks.

use ergodic_core::scenario::random_initials;
use ergodic_core::{Problem, Scenario, Trajectory};

/// Builtin volcano problem with `agents` seeded initial circles.
pub fn volcano_team(agents: usize) -> (Problem, Vec<Trajectory<3, 2>>) {
    let mut s = Scenario::volcano();
    s.run.agents = agents;
    let problem = s.build().expect("builtin scenario is valid");
    let initials = problem.initial_trajectories(&random_initials(s.run.seed, agents)).expect("valid starts");
    (problem, initials)
}
