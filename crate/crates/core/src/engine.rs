//! The round loop tying agents, exchange and termination together.
//!
//! Each round: agents check their local stopping rule, every active agent
//! iterates from its round-start view (in parallel), estimates are exchanged
//! and termination flags flood one hop. The run ends once every agent holds
//! every flag.

use rayon::prelude::*;

use crate::basis::{Coefficients, SpectralSet};
use crate::dynamics::{Dynamics, Trajectory, Unicycle};
use crate::error::{Error, Result};
use crate::metrics::{ergodic_reduction, optimality_curve, plan_metrics, RunRecord, TrajectoryRecord, SCHEMA_VERSION};
use crate::network::{exchange, flood_termination, CommGraph};
use crate::objective::cost_terms;
use crate::planner::{agent_iteration, descent_at, local_termination, AgentView, IterationRecord, PlannerContext};
use crate::scenario::{random_initials, Problem, Scenario, RNG_NAME};

/// Run-level settings that are not part of the cost.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub scenario: String,
    pub seed: u64,
    pub epsilon_opt: f64,
    pub epsilon_r: Option<f64>,
}

/// Result of a run. A solver failure stops the loop early; `error` then
/// holds it and the record describes the trajectories reached so far.
#[derive(Debug, Clone)]
pub struct RunOutcome<const N: usize, const M: usize> {
    pub record: RunRecord,
    pub iterations: Vec<IterationRecord>,
    pub trajectories: Vec<Trajectory<N, M>>,
    pub error: Option<Error>,
}

fn shared_terms<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    ctx: &PlannerContext<'_, impl Dynamics<N, M>, N, M>,
) -> Result<(f64, f64)> {
    let t = cost_terms(trajs, ctx.weights, ctx.spectral, ctx.p)?;
    Ok((t.total(), t.ergodic / ctx.weights.q))
}

/// Runs the decentralized planner from `initials` over `graph`.
pub fn plan<D: Dynamics<N, M>, const N: usize, const M: usize>(
    ctx: &PlannerContext<'_, D, N, M>,
    graph: &CommGraph,
    initials: Vec<Trajectory<N, M>>,
    options: &RunOptions,
) -> Result<RunOutcome<N, M>> {
    let n = initials.len();
    if n != graph.len() {
        return Err(Error::Config(format!("{n} initial trajectories for a graph of {} agents", graph.len())));
    }
    ctx.weights.validate()?;
    let i_max = ctx.weights.max_iterations;

    let mut views = (0..n).map(|j| AgentView::new(j, initials.clone())).collect::<Result<Vec<_>>>()?;
    let initial_refs: Vec<_> = initials.iter().collect();
    let (j0, e0) = shared_terms(&initial_refs, ctx)?;
    let mut cost_curve = vec![j0];
    let mut ergodic_curve = vec![e0];
    let mut dd_rounds: Vec<Vec<f64>> = Vec::new();
    let mut iterations = Vec::new();
    let mut error = None;
    let mut round = 0;

    loop {
        for v in views.iter_mut().filter(|v| !v.locally_terminated()) {
            let reduction = match options.epsilon_r {
                Some(_) => {
                    let (_, e) = shared_terms(&v.trajectories(), ctx)?;
                    ergodic_reduction(e0, e).unwrap_or(f64::NEG_INFINITY)
                }
                None => f64::NEG_INFINITY,
            };
            if local_termination(round, i_max, options.epsilon_r, reduction) {
                v.terminate_locally();
            }
        }
        if views.iter().all(|v| v.holds_all_flags()) {
            break;
        }

        let results: Vec<Result<(AgentView<N, M>, Option<IterationRecord>)>> = views
            .par_iter()
            .map(|v| {
                if v.locally_terminated() {
                    Ok((v.clone(), None))
                } else {
                    agent_iteration(v.clone(), ctx).map(|(v, r)| (v, Some(r)))
                }
            })
            .collect();
        let mut next = Vec::with_capacity(n);
        let mut records = Vec::new();
        for r in results {
            match r {
                Ok((v, rec)) => {
                    next.push(v);
                    records.extend(rec);
                }
                Err(e) => {
                    error.get_or_insert(e);
                }
            }
        }
        if error.is_some() {
            break;
        }
        // Rounds of pure flooding leave the trajectories unchanged and add no samples.
        if !records.is_empty() {
            dd_rounds.push(records.iter().map(|r| r.dd).collect());
            let truth: Vec<_> = next.iter().map(|v| v.own()).collect();
            let (j, e) = shared_terms(&truth, ctx)?;
            cost_curve.push(j);
            ergodic_curve.push(e);
        }
        iterations.extend(records);

        views = exchange(graph, &next)?;
        flood_termination(graph, &mut views);
        round += 1;
    }

    let finals: Vec<Trajectory<N, M>> = views.iter().map(|v| v.own().clone()).collect();
    if error.is_none() {
        match views.par_iter().map(|v| descent_at(v, ctx).map(|(_, dd)| dd)).collect::<Result<Vec<_>>>() {
            Ok(dd) => dd_rounds.push(dd),
            Err(e) => error = Some(e),
        }
    }
    let refs: Vec<_> = finals.iter().collect();
    let (_, ef) = shared_terms(&refs, ctx)?;
    let metrics = plan_metrics(&refs, ctx.spectral, ctx.p, options.epsilon_opt)?;
    let grid = *finals[0].grid();
    let record = RunRecord {
        schema_version: SCHEMA_VERSION,
        scenario: options.scenario.clone(),
        seed: options.seed,
        agents: n,
        rng: RNG_NAME.to_string(),
        graph_edges: graph.edges(),
        diameter: graph.diameter(),
        rounds: round,
        horizon: grid.horizon(),
        steps: grid.steps(),
        epsilon_opt: options.epsilon_opt,
        pair_penalty: ctx.weights.pair_penalty,
        eopt: metrics.eopt,
        t_ctt: metrics.t_ctt,
        control_energy: metrics.control_energy,
        traveled_distance: metrics.traveled_distance,
        ergodic_initial: e0,
        ergodic_final: ef,
        ergodic_reduction: ergodic_reduction(e0, ef)?,
        optimality_curve: if dd_rounds.is_empty() { Vec::new() } else { optimality_curve(&dd_rounds).unwrap_or_default() },
        cost_curve,
        ergodic_curve,
        final_trajectories: refs.iter().map(|t| TrajectoryRecord::from(*t)).collect(),
        failure: error.as_ref().map(|e| e.to_string()),
    };
    Ok(RunOutcome { record, iterations, trajectories: finals, error })
}

/// Builds `scenario` and runs its unicycle team from seeded random starts.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome<3, 2>> {
    let problem = scenario.build()?;
    let graph = scenario.graph.build(scenario.run.agents)?;
    run_problem(&problem, &graph, scenario)
}

/// Like [`run_scenario`] with an already built problem and graph.
pub fn run_problem(problem: &Problem, graph: &CommGraph, scenario: &Scenario) -> Result<RunOutcome<3, 2>> {
    let starts = random_initials(scenario.run.seed, scenario.run.agents);
    let initials = problem.initial_trajectories(&starts)?;
    let ctx = PlannerContext::new(&Unicycle, &problem.spectral, &problem.p, &problem.weights);
    let options = RunOptions {
        scenario: scenario.name.clone(),
        seed: scenario.run.seed,
        epsilon_opt: scenario.run.epsilon_opt,
        epsilon_r: scenario.run.epsilon_r,
    };
    plan(&ctx, graph, initials, &options)
}

/// Shared ergodic metric of a team of trajectories.
pub fn team_ergodicity<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    spectral: &SpectralSet,
    p: &Coefficients,
) -> Result<f64> {
    let coefs = trajs.iter().map(|t| spectral.trajectory_coefficients(t)).collect::<Result<Vec<_>>>()?;
    crate::objective::ergodic_metric(&crate::basis::global_coefficients(&coefs)?, p, spectral)
}
