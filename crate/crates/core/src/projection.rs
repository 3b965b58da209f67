//! Projection of planning trajectories onto the dynamics.
//!
//! The operator tracks the planning pair `(α, μ)` with a time-varying LQR
//! controller designed on the linearization about `(α, μ)`:
//! `u = μ + K (α − x)`, `ẋ = f(x, u)`, `x(0) = α(0)`. The weights `Q_LQR`,
//! `R_LQR` should keep the projected trajectory close to its input so that
//! the linearization stays accurate.

use nalgebra::SMatrix;

use crate::dynamics::{feedback_rollout, step, Dynamics, LinearizedDynamics, Trajectory, TrajectoryKind};
use crate::error::{Error, Result};
use crate::lq::{lqr_gain, DEFAULT_RICCATI_BOUND};

/// Projection fails once the state norm exceeds this bound.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionSettings<const N: usize, const M: usize> {
    pub q: SMatrix<f64, N, N>,
    pub r: SMatrix<f64, M, M>,
    pub riccati_bound: f64,
    pub divergence_bound: f64,
}

impl<const N: usize, const M: usize> ProjectionSettings<N, M> {
    pub fn new(q: SMatrix<f64, N, N>, r: SMatrix<f64, M, M>) -> Self {
        Self { q, r, riccati_bound: DEFAULT_RICCATI_BOUND, divergence_bound: DEFAULT_DIVERGENCE_BOUND }
    }
}

/// Maps `planning` to a feasible trajectory on the same grid.
pub fn project<D: Dynamics<N, M>, const N: usize, const M: usize>(
    dynamics: &D,
    planning: &Trajectory<N, M>,
    settings: &ProjectionSettings<N, M>,
) -> Result<Trajectory<N, M>> {
    let grid = *planning.grid();
    let lin = LinearizedDynamics::along(dynamics, planning);
    let gain = lqr_gain(&lin, &settings.q, &settings.r, settings.riccati_bound)?;
    let (alpha, mu) = (planning.states(), planning.controls());
    let dt = grid.dt();
    let bound = settings.divergence_bound;

    let (states, controls) = feedback_rollout(
        alpha[0],
        grid.steps(),
        |_, x, u0, u1| step(dynamics, x, u0, u1, dt),
        |i, x| mu[i] + gain[i] * (alpha[i] - x),
        // Predict the next state by carrying the current tracking error forward.
        |i, x| x + (alpha[i + 1] - alpha[i]),
    )
    .map_err(|i| Error::ProjectionDiverged { time: grid.time(i), norm: f64::NAN })?;

    if let Some((i, x)) = states.iter().enumerate().find(|(_, x)| !(x.amax() <= bound)) {
        return Err(Error::ProjectionDiverged { time: grid.time(i), norm: x.amax() });
    }
    Trajectory::new(grid, states, controls, TrajectoryKind::Feasible)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{defect, initial_circle, Unicycle, FEASIBILITY_TOLERANCE};
    use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

    fn settings() -> ProjectionSettings<3, 2> {
        ProjectionSettings::new(Matrix3::identity(), Matrix2::identity())
    }

    #[test]
    fn feasible_input_is_a_fixed_point() {
        let c = initial_circle(&Unicycle, Vector3::new(0.4, 0.3, 0.8), 0.05, 3.5, 350).unwrap();
        let p = project(&Unicycle, &c, &settings()).unwrap();
        assert!(p.max_deviation(&c) <= 1e-8);
        let pp = project(&Unicycle, &p, &settings()).unwrap();
        assert!(pp.max_deviation(&p) <= 1e-8);
    }

    #[test]
    fn perturbed_controls_are_tracked() {
        let c = initial_circle(&Unicycle, Vector3::new(0.4, 0.3, 0.8), 0.05, 3.5, 350).unwrap();
        let controls: Vec<_> = c.controls().iter().map(|u| u + Vector2::new(0.01, 0.0)).collect();
        let planning = Trajectory::new(*c.grid(), c.states().to_vec(), controls, TrajectoryKind::Planning).unwrap();
        let p = project(&Unicycle, &planning, &settings()).unwrap();
        assert!(defect(&Unicycle, &p) <= FEASIBILITY_TOLERANCE);
        assert_eq!(p.kind(), TrajectoryKind::Feasible);
        assert_eq!(p.initial_state(), planning.initial_state());

        // Open-loop rollout of the perturbed controls drifts further than the
        // feedback-tracked projection.
        let open = crate::dynamics::integrate(&Unicycle, *c.initial_state(), planning.controls().to_vec(), *c.grid())
            .unwrap();
        let drift = |t: &Trajectory<3, 2>| {
            t.states().iter().zip(c.states()).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
        };
        assert!(drift(&p) < drift(&open));
    }

    #[test]
    fn divergence_is_reported() {
        let c = initial_circle(&Unicycle, Vector3::new(0.4, 0.3, 0.8), 0.05, 3.5, 35).unwrap();
        let controls: Vec<_> = c.controls().iter().map(|_| Vector2::new(1e9, 0.0)).collect();
        let planning = Trajectory::new(*c.grid(), c.states().to_vec(), controls, TrajectoryKind::Planning).unwrap();
        assert!(matches!(
            project(&Unicycle, &planning, &settings()),
            Err(Error::ProjectionDiverged { .. } | Error::RiccatiBlowUp { .. })
        ));
    }
}
