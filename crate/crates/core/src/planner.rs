//! One agent's iteration: descent direction, Armijo backtracking and
//! projection back onto the dynamics.

use crate::basis::{Coefficients, SpectralSet};
use crate::dynamics::{Direction, Dynamics, LinearizedDynamics, Trajectory};
use crate::error::{Error, Result};
use crate::lq::{descent_direction, DEFAULT_RICCATI_BOUND};
use crate::objective::{cost_gradients, directional_derivative, CostWeights, LocalCost};
use crate::projection::{project, ProjectionSettings};

/// Agent `agent`'s local picture of the team at a given round.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView<const N: usize, const M: usize> {
    agent: usize,
    round: usize,
    estimates: Vec<Trajectory<N, M>>,
    locally_terminated: bool,
    flags: Vec<bool>,
}

impl<const N: usize, const M: usize> AgentView<N, M> {
    /// Round-0 view seeded with everyone's initial trajectories.
    pub fn new(agent: usize, estimates: Vec<Trajectory<N, M>>) -> Result<Self> {
        let n = estimates.len();
        if agent >= n {
            return Err(Error::Config(format!("agent {agent} outside a team of {n}")));
        }
        if estimates.iter().any(|t| !t.same_grid(&estimates[0])) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { agent, round: 0, estimates, locally_terminated: false, flags: vec![false; n] })
    }

    pub fn agent(&self) -> usize {
        self.agent
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn team_size(&self) -> usize {
        self.estimates.len()
    }

    pub fn own(&self) -> &Trajectory<N, M> {
        &self.estimates[self.agent]
    }

    pub fn estimates(&self) -> &[Trajectory<N, M>] {
        &self.estimates
    }

    pub fn trajectories(&self) -> Vec<&Trajectory<N, M>> {
        self.estimates.iter().collect()
    }

    pub fn locally_terminated(&self) -> bool {
        self.locally_terminated
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn holds_all_flags(&self) -> bool {
        self.flags.iter().all(|&f| f)
    }

    /// Marks local termination and raises the agent's own flag.
    pub fn terminate_locally(&mut self) {
        self.locally_terminated = true;
        self.flags[self.agent] = true;
    }

    pub(crate) fn set_flags(&mut self, flags: Vec<bool>) {
        debug_assert_eq!(flags.len(), self.flags.len());
        self.flags = flags;
    }

    pub(crate) fn with_estimates(&self, estimates: Vec<Trajectory<N, M>>, round: usize) -> Self {
        Self {
            agent: self.agent,
            round,
            estimates,
            locally_terminated: self.locally_terminated,
            flags: self.flags.clone(),
        }
    }

    fn replace_own(&mut self, t: Trajectory<N, M>) {
        self.estimates[self.agent] = t;
    }
}

/// Result of a backtracking search.
#[derive(Debug, Clone, PartialEq)]
pub enum LineSearch<T> {
    Accepted { gamma: f64, exponent: u32, cost: f64, candidate: T },
    Rejected,
}

/// Armijo rule: the first `γ = β^h`, `h = 0..=max_exponent`, with
/// `cost(γ) − current ≤ ρ γ dd`. `eval` returns `None` for a trial that
/// cannot be evaluated (e.g. a failed projection); that trial is not accepted.
pub fn armijo_step<T>(
    current: f64,
    dd: f64,
    rho: f64,
    beta: f64,
    max_exponent: u32,
    mut eval: impl FnMut(f64) -> Option<(f64, T)>,
) -> Result<LineSearch<T>> {
    if !(dd < 0.0) {
        return Err(Error::NotDescent(dd));
    }
    let mut gamma = 1.0;
    for h in 0..=max_exponent {
        if let Some((cost, candidate)) = eval(gamma) {
            if cost - current <= rho * gamma * dd {
                return Ok(LineSearch::Accepted { gamma, exponent: h, cost, candidate });
            }
        }
        gamma *= beta;
    }
    Ok(LineSearch::Rejected)
}

/// Shared, read-only inputs to every agent iteration.
#[derive(Debug, Clone, Copy)]
pub struct PlannerContext<'a, D, const N: usize, const M: usize> {
    pub dynamics: &'a D,
    pub spectral: &'a SpectralSet,
    pub p: &'a Coefficients,
    pub weights: &'a CostWeights<N, M>,
    pub projection: ProjectionSettings<N, M>,
    pub riccati_bound: f64,
}

impl<'a, D: Dynamics<N, M>, const N: usize, const M: usize> PlannerContext<'a, D, N, M> {
    pub fn new(dynamics: &'a D, spectral: &'a SpectralSet, p: &'a Coefficients, weights: &'a CostWeights<N, M>) -> Self {
        Self {
            dynamics,
            spectral,
            p,
            weights,
            projection: ProjectionSettings::new(weights.q_lqr, weights.r_lqr),
            riccati_bound: DEFAULT_RICCATI_BOUND,
        }
    }
}

/// What happened during one agent iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub round: usize,
    pub agent: usize,
    /// Accepted step, or 0 when the trajectory was kept.
    pub gamma: f64,
    pub exponent: Option<u32>,
    pub dd: f64,
    pub local_cost_before: f64,
    pub local_cost: f64,
    /// Shared ergodic metric over the agent's view after the update.
    pub ergodic: f64,
}

/// Descent direction and its directional derivative at the agent's view.
pub fn descent_at<D: Dynamics<N, M>, const N: usize, const M: usize>(
    view: &AgentView<N, M>,
    ctx: &PlannerContext<'_, D, N, M>,
) -> Result<(Direction<N, M>, f64)> {
    let trajs = view.trajectories();
    let own = view.own();
    let g = cost_gradients(view.agent, &trajs, ctx.weights, ctx.spectral, ctx.p)?;
    let lin = LinearizedDynamics::along(ctx.dynamics, own);
    let (dir, _) = descent_direction(&g.a, &g.b, &lin, &ctx.weights.descent, ctx.riccati_bound)?;
    let dd = directional_derivative(&g.a, &g.b, &dir, own.grid());
    Ok((dir, dd))
}

/// Runs one iteration for the view's agent and replaces its own trajectory
/// with the accepted projected candidate. A non-descent direction or a
/// rejected line search leaves the trajectory unchanged.
pub fn agent_iteration<D: Dynamics<N, M>, const N: usize, const M: usize>(
    mut view: AgentView<N, M>,
    ctx: &PlannerContext<'_, D, N, M>,
) -> Result<(AgentView<N, M>, IterationRecord)> {
    let (dir, dd) = descent_at(&view, ctx)?;
    let (update, record) = {
        let trajs = view.trajectories();
        let local = LocalCost::new(view.agent, &trajs, ctx.weights, ctx.spectral, ctx.p)?;
        let own = view.own();
        let before = local.evaluate(own);
        let mut record = IterationRecord {
            round: view.round,
            agent: view.agent,
            gamma: 0.0,
            exponent: None,
            dd,
            local_cost_before: before,
            local_cost: before,
            ergodic: local.ergodic(own),
        };
        let mut update = None;
        if dd < 0.0 {
            let w = ctx.weights;
            let search = armijo_step(before, dd, w.rho, w.beta, w.max_backtracks, |gamma| {
                let candidate = project(ctx.dynamics, &own.perturbed(&dir, gamma), &ctx.projection).ok()?;
                Some((local.evaluate(&candidate), candidate))
            })?;
            if let LineSearch::Accepted { gamma, exponent, cost, candidate } = search {
                record.gamma = gamma;
                record.exponent = Some(exponent);
                record.local_cost = cost;
                record.ergodic = local.ergodic(&candidate);
                update = Some(candidate);
            }
        }
        (update, record)
    };
    if let Some(t) = update {
        view.replace_own(t);
    }
    Ok((view, record))
}

/// Local stopping rule: the iteration cap, or an optional threshold on the
/// agent's own estimate of the ergodic reduction.
pub fn local_termination(round: usize, max_iterations: usize, epsilon_r: Option<f64>, local_reduction: f64) -> bool {
    round >= max_iterations || epsilon_r.is_some_and(|e| local_reduction >= e)
}
