//! Evaluation metrics of finished plans.

use serde::{Deserialize, Serialize};

use crate::basis::{Coefficients, SpectralSet};
use crate::dynamics::{TimeGrid, Trajectory};
use crate::error::{Error, Result};

/// Version of the [`RunRecord`] JSON layout.
pub const SCHEMA_VERSION: u32 = 1;

/// `E_opt(t)` sampled at grid times `t_1..t_N` (the time average is undefined at 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErgodicityCurve {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ErgodicityCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }
}

/// Temporal ergodicity over the team, computed in one pass: the cumulative
/// trapezoid integral of the mean basis values is extended one interval at a
/// time and divided by the elapsed time.
pub fn temporal_ergodicity<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    spectral: &SpectralSet,
    p: &Coefficients,
) -> Result<ErgodicityCurve> {
    let first = trajs.first().ok_or(Error::EmptyTrajectory)?;
    if trajs.iter().any(|t| !t.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    spectral.ensure_matches(p)?;
    let grid = *first.grid();
    let k = spectral.len();
    let inv_n = 1.0 / trajs.len() as f64;
    let domain = spectral.domain();
    let mut scratch = spectral.scratch();
    let mut point = vec![0.0; domain.dims()];
    let mut sample = |i: usize| {
        let mut f = vec![0.0; k];
        for t in trajs {
            domain.explore_into(t.states()[i].as_slice(), &mut point);
            spectral.accumulate(&point, inv_n, &mut f, &mut scratch);
        }
        f
    };

    let half_dt = 0.5 * grid.dt();
    let mut integral = vec![0.0; k];
    let mut prev = sample(0);
    let mut times = Vec::with_capacity(grid.steps());
    let mut values = Vec::with_capacity(grid.steps());
    for i in 1..grid.len() {
        let next = sample(i);
        for ((s, a), b) in integral.iter_mut().zip(&prev).zip(&next) {
            *s += half_dt * (a + b);
        }
        let t = grid.time(i);
        let e = integral
            .iter()
            .zip(p.values())
            .zip(spectral.weights())
            .map(|((s, p), w)| w * (s / t - p).powi(2))
            .sum();
        times.push(t);
        values.push(e);
        prev = next;
    }
    Ok(ErgodicityCurve { times, values })
}

/// Index of the first sample whose reduction relative to the first sample
/// reaches `epsilon_opt` percent.
pub fn completion_index(curve: &ErgodicityCurve, epsilon_opt: f64) -> Result<Option<usize>> {
    if !(epsilon_opt > 0.0 && epsilon_opt <= 100.0) {
        return Err(Error::Config(format!("epsilon_opt {epsilon_opt} outside (0, 100]")));
    }
    let e0 = *curve.values.first().ok_or(Error::EmptyTrajectory)?;
    if e0 == 0.0 {
        return Err(Error::ZeroReference("completion task time"));
    }
    Ok(curve.values.iter().position(|e| 100.0 * (e0 - e) / e0 >= epsilon_opt))
}

/// Completion task time `t_CTT` in seconds, `None` when never reached.
pub fn completion_task_time(curve: &ErgodicityCurve, epsilon_opt: f64) -> Result<Option<f64>> {
    Ok(completion_index(curve, epsilon_opt)?.map(|i| curve.times[i]))
}

/// Sample index of a grid time, rounding to the nearest node.
fn index_of(grid: &TimeGrid, t: f64) -> usize {
    ((t / grid.dt()).round().max(0.0) as usize).min(grid.steps())
}

fn trapezoid_until(grid: &TimeGrid, values: &[f64], end: usize) -> f64 {
    let dt = grid.dt();
    (0..end).map(|i| 0.5 * dt * (values[i] + values[i + 1])).sum()
}

/// `sqrt(∫_0^t ‖u‖² dτ)`; `until = None` integrates over the whole horizon.
pub fn control_energy<const N: usize, const M: usize>(traj: &Trajectory<N, M>, until: Option<f64>) -> f64 {
    let grid = traj.grid();
    let end = until.map_or(grid.steps(), |t| index_of(grid, t));
    let sq: Vec<f64> = traj.controls().iter().map(|u| u.norm_squared()).collect();
    trapezoid_until(grid, &sq, end).sqrt()
}

/// `∫_0^t |ν| dτ` where the first control channel is the forward speed.
pub fn traveled_distance<const N: usize, const M: usize>(traj: &Trajectory<N, M>, until: Option<f64>) -> f64 {
    let grid = traj.grid();
    let end = until.map_or(grid.steps(), |t| index_of(grid, t));
    let speed: Vec<f64> = traj.controls().iter().map(|u| u[0].abs()).collect();
    trapezoid_until(grid, &speed, end)
}

/// `100 (E_0 − E_f) / E_0`.
pub fn ergodic_reduction(initial: f64, final_: f64) -> Result<f64> {
    if initial == 0.0 {
        return Err(Error::ZeroReference("ergodic reduction"));
    }
    Ok(100.0 * (initial - final_) / initial)
}

/// Per round `max_j |dd_i^(j)| / max_j |dd_0^(j)|`.
pub fn optimality_curve(per_round: &[Vec<f64>]) -> Result<Vec<f64>> {
    let peak = |dd: &Vec<f64>| dd.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let first = per_round.first().ok_or(Error::EmptyTrajectory)?;
    let d0 = peak(first);
    if d0 == 0.0 {
        return Err(Error::ZeroReference("optimality curve"));
    }
    Ok(per_round.iter().map(|dd| peak(dd) / d0).collect())
}

/// Largest rise of the curve above its running minimum, counted from the
/// first sample that decreases.
pub fn upward_excursion(values: &[f64]) -> f64 {
    let Some(start) = values.windows(2).position(|w| w[1] < w[0]) else {
        return 0.0;
    };
    let mut low = values[start];
    let mut worst = 0.0f64;
    for &v in &values[start..] {
        low = low.min(v);
        worst = worst.max(v - low);
    }
    worst
}

/// Per-agent states and controls as plain rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl<const N: usize, const M: usize> From<&Trajectory<N, M>> for TrajectoryRecord {
    fn from(t: &Trajectory<N, M>) -> Self {
        Self {
            states: t.states().iter().map(|x| x.as_slice().to_vec()).collect(),
            controls: t.controls().iter().map(|u| u.as_slice().to_vec()).collect(),
        }
    }
}

/// Everything persisted about one planning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub agents: usize,
    /// Generator used for the random initial conditions.
    pub rng: String,
    pub graph_edges: Vec<(usize, usize)>,
    pub diameter: usize,
    /// Rounds executed, including the termination flooding tail.
    pub rounds: usize,
    pub horizon: f64,
    pub steps: usize,
    pub epsilon_opt: f64,
    pub pair_penalty: f64,
    pub eopt: ErgodicityCurve,
    pub t_ctt: Option<f64>,
    /// Energy and distance are integrated over `[0, t_ctt]`, or the whole
    /// horizon when `t_ctt` is not reached.
    pub control_energy: Vec<f64>,
    pub traveled_distance: Vec<f64>,
    pub ergodic_initial: f64,
    pub ergodic_final: f64,
    pub ergodic_reduction: f64,
    pub optimality_curve: Vec<f64>,
    /// Global `J` of the true trajectories at the start of every round.
    pub cost_curve: Vec<f64>,
    /// Shared `E` of the true trajectories at the start of every round.
    pub ergodic_curve: Vec<f64>,
    pub final_trajectories: Vec<TrajectoryRecord>,
    pub failure: Option<String>,
}

/// The metric block of a [`RunRecord`] derived from final trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanMetrics {
    pub eopt: ErgodicityCurve,
    pub t_ctt: Option<f64>,
    pub control_energy: Vec<f64>,
    pub traveled_distance: Vec<f64>,
}

pub fn plan_metrics<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    spectral: &SpectralSet,
    p: &Coefficients,
    epsilon_opt: f64,
) -> Result<PlanMetrics> {
    let eopt = temporal_ergodicity(trajs, spectral, p)?;
    let t_ctt = completion_task_time(&eopt, epsilon_opt)?;
    Ok(PlanMetrics {
        control_energy: trajs.iter().map(|t| control_energy(t, t_ctt)).collect(),
        traveled_distance: trajs.iter().map(|t| traveled_distance(t, t_ctt)).collect(),
        eopt,
        t_ctt,
    })
}
