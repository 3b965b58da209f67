//! Vehicle model, sampled trajectories and their integration.
//!
//! Controls are sampled on a uniform grid and held piecewise-linearly
//! between samples. Each grid interval is advanced with one classical RK4
//! step; that step is the integrator `Φ` against which feasibility defects
//! are measured.

use nalgebra::{SMatrix, SVector, Vector2, Vector3};

use crate::error::{Error, Result};

pub type State<const N: usize> = SVector<f64, N>;
pub type Control<const M: usize> = SVector<f64, M>;

/// Default number of grid intervals over the horizon.
pub const DEFAULT_STEPS: usize = 350;

/// Uniform time grid `t_i = i * T / steps`, `i = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Config(format!("horizon {horizon} must be positive")));
        }
        if steps == 0 {
            return Err(Error::Config("time grid needs at least one interval".into()));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of samples, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    /// Trapezoidal quadrature weight of sample `i`.
    pub fn trapezoid_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.steps {
            0.5 * self.dt()
        } else {
            self.dt()
        }
    }

    /// Trapezoidal integral of sampled scalar values.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        values.into_iter().enumerate().map(|(i, v)| self.trapezoid_weight(i) * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    /// Satisfies the dynamics under the grid integrator.
    Feasible,
    /// Arbitrary state/control pair.
    Planning,
}

/// State and control samples on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize, const M: usize> {
    grid: TimeGrid,
    states: Vec<State<N>>,
    controls: Vec<Control<M>>,
    kind: TrajectoryKind,
}

impl<const N: usize, const M: usize> Trajectory<N, M> {
    pub fn new(
        grid: TimeGrid,
        states: Vec<State<N>>,
        controls: Vec<Control<M>>,
        kind: TrajectoryKind,
    ) -> Result<Self> {
        if states.len() != grid.len() || controls.len() != grid.len() {
            return Err(Error::Config(format!(
                "trajectory has {} states and {} controls for {} grid samples",
                states.len(),
                controls.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, states, controls, kind })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[State<N>] {
        &self.states
    }

    pub fn controls(&self) -> &[Control<M>] {
        &self.controls
    }

    pub fn kind(&self) -> TrajectoryKind {
        self.kind
    }

    pub fn initial_state(&self) -> &State<N> {
        &self.states[0]
    }

    pub fn final_state(&self) -> &State<N> {
        &self.states[self.states.len() - 1]
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid == other.grid
    }

    /// `self + gamma * direction`, tagged as a planning trajectory.
    pub fn perturbed(&self, direction: &Direction<N, M>, gamma: f64) -> Self {
        let states = self.states.iter().zip(&direction.z).map(|(x, z)| x + z * gamma).collect();
        let controls = self.controls.iter().zip(&direction.v).map(|(u, v)| u + v * gamma).collect();
        Self { grid: self.grid, states, controls, kind: TrajectoryKind::Planning }
    }

    /// Pointwise mean of trajectories sharing a grid, tagged as planning.
    pub fn average<'a>(items: impl IntoIterator<Item = &'a Self>) -> Result<Self> {
        let mut iter = items.into_iter();
        let first = iter.next().ok_or(Error::EmptyTrajectory)?;
        let mut states = first.states.clone();
        let mut controls = first.controls.clone();
        let mut count = 1.0;
        for t in iter {
            if !t.same_grid(first) {
                return Err(Error::GridMismatch);
            }
            states.iter_mut().zip(&t.states).for_each(|(a, b)| *a += b);
            controls.iter_mut().zip(&t.controls).for_each(|(a, b)| *a += b);
            count += 1.0;
        }
        let inv = 1.0 / count;
        states.iter_mut().for_each(|s| *s *= inv);
        controls.iter_mut().for_each(|u| *u *= inv);
        Ok(Self { grid: first.grid, states, controls, kind: TrajectoryKind::Planning })
    }

    /// Largest per-sample deviation in states and controls.
    pub fn max_deviation(&self, other: &Self) -> f64 {
        let ds = self.states.iter().zip(&other.states).map(|(a, b)| (a - b).amax());
        let du = self.controls.iter().zip(&other.controls).map(|(a, b)| (a - b).amax());
        ds.chain(du).fold(0.0, f64::max)
    }
}

/// Tangent direction `ζ = (z, v)` sampled on a trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction<const N: usize, const M: usize> {
    pub z: Vec<State<N>>,
    pub v: Vec<Control<M>>,
}

impl<const N: usize, const M: usize> Direction<N, M> {
    pub fn zeros(len: usize) -> Self {
        Self { z: vec![State::zeros(); len], v: vec![Control::zeros(); len] }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { z: self.z.iter().map(|z| z * s).collect(), v: self.v.iter().map(|v| v * s).collect() }
    }

    /// Discrete L2 norm over all samples of z and v.
    pub fn norm(&self) -> f64 {
        let zs: f64 = self.z.iter().map(|z| z.norm_squared()).sum();
        let vs: f64 = self.v.iter().map(|v| v.norm_squared()).sum();
        (zs + vs).sqrt()
    }
}

/// Continuous-time control-affine vehicle model `ẋ = f(x, u)`.
pub trait Dynamics<const N: usize, const M: usize>: Sync {
    fn flow(&self, x: &State<N>, u: &Control<M>) -> State<N>;

    /// Jacobians `(∂f/∂x, ∂f/∂u)` at `(x, u)`.
    fn linearize(&self, x: &State<N>, u: &Control<M>) -> (SMatrix<f64, N, N>, SMatrix<f64, N, M>);
}

/// Planar unicycle: state `(X, Y, θ)`, control `(ν, ω)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Unicycle;

impl Dynamics<3, 2> for Unicycle {
    fn flow(&self, x: &Vector3<f64>, u: &Vector2<f64>) -> Vector3<f64> {
        let (s, c) = x[2].sin_cos();
        Vector3::new(u[0] * c, u[0] * s, u[1])
    }

    fn linearize(&self, x: &Vector3<f64>, u: &Vector2<f64>) -> (SMatrix<f64, 3, 3>, SMatrix<f64, 3, 2>) {
        let (s, c) = x[2].sin_cos();
        let mut a = SMatrix::<f64, 3, 3>::zeros();
        a[(0, 2)] = -u[0] * s;
        a[(1, 2)] = u[0] * c;
        let b = SMatrix::<f64, 3, 2>::new(c, 0.0, s, 0.0, 0.0, 1.0);
        (a, b)
    }
}

/// One classical RK4 step of length `dt`; `f` takes the fraction of the
/// interval elapsed (0, ½, ½, 1) and the state.
pub(crate) fn rk4<const N: usize, const C: usize>(
    x: &SMatrix<f64, N, C>,
    dt: f64,
    f: impl Fn(f64, &SMatrix<f64, N, C>) -> SMatrix<f64, N, C>,
) -> SMatrix<f64, N, C> {
    let k1 = f(0.0, x);
    let k2 = f(0.5, &(x + k1 * (0.5 * dt)));
    let k3 = f(0.5, &(x + k2 * (0.5 * dt)));
    let k4 = f(1.0, &(x + k3 * dt));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// The grid integrator `Φ`: advances `x` over one interval with the control
/// interpolated linearly from `u0` to `u1`.
pub fn step<D: Dynamics<N, M>, const N: usize, const M: usize>(
    dynamics: &D,
    x: &State<N>,
    u0: &Control<M>,
    u1: &Control<M>,
    dt: f64,
) -> State<N> {
    let du = u1 - u0;
    rk4(x, dt, |s, xs| dynamics.flow(xs, &(u0 + du * s)))
}

/// Integrates sampled controls from `x0`; the result is feasible by
/// construction.
pub fn integrate<D: Dynamics<N, M>, const N: usize, const M: usize>(
    dynamics: &D,
    x0: State<N>,
    controls: Vec<Control<M>>,
    grid: TimeGrid,
) -> Result<Trajectory<N, M>> {
    if controls.len() != grid.len() {
        return Err(Error::Config(format!(
            "{} control samples for {} grid samples",
            controls.len(),
            grid.len()
        )));
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.len());
    states.push(x0);
    for i in 0..grid.steps() {
        let next = step(dynamics, &states[i], &controls[i], &controls[i + 1], dt);
        states.push(next);
    }
    Trajectory::new(grid, states, controls, TrajectoryKind::Feasible)
}

/// Largest integration defect `‖x_{i+1} − Φ(x_i, u_i, u_{i+1})‖∞`.
pub fn defect<D: Dynamics<N, M>, const N: usize, const M: usize>(dynamics: &D, traj: &Trajectory<N, M>) -> f64 {
    let dt = traj.grid().dt();
    let (x, u) = (traj.states(), traj.controls());
    (0..traj.grid().steps())
        .map(|i| (x[i + 1] - step(dynamics, &x[i], &u[i], &u[i + 1], dt)).amax())
        .fold(0.0, f64::max)
}

/// Tolerance on a feasible trajectory's integration defect.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

/// One full counter-clockwise circle of `radius` starting at `x0`, tangent
/// to the initial heading, with constant controls `ω = 2π/T`, `ν = ω·radius`.
pub fn initial_circle(
    dynamics: &Unicycle,
    x0: Vector3<f64>,
    radius: f64,
    horizon: f64,
    steps: usize,
) -> Result<Trajectory<3, 2>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::Config(format!("circle radius {radius} must be positive")));
    }
    let grid = TimeGrid::new(horizon, steps)?;
    let omega = 2.0 * std::f64::consts::PI / horizon;
    let u = Vector2::new(omega * radius, omega);
    integrate(dynamics, x0, vec![u; grid.len()], grid)
}

/// Rolls out a feedback law `u_i = law(i, x_i)` under the grid integrator.
///
/// With first-order hold the control at the end of an interval depends on the
/// state it produces, so each interval is solved by fixed-point iteration on
/// `u_{i+1}`. States are always produced by `advance`, so the rollout has
/// zero defect regardless of how tightly the law is met.
pub(crate) fn feedback_rollout<const N: usize, const M: usize>(
    x0: State<N>,
    steps: usize,
    advance: impl Fn(usize, &State<N>, &Control<M>, &Control<M>) -> State<N>,
    law: impl Fn(usize, &State<N>) -> Control<M>,
    predict: impl Fn(usize, &State<N>) -> State<N>,
) -> std::result::Result<(Vec<State<N>>, Vec<Control<M>>), usize> {
    const MAX_ITER: usize = 100;
    let mut states = Vec::with_capacity(steps + 1);
    let mut controls = Vec::with_capacity(steps + 1);
    states.push(x0);
    controls.push(law(0, &x0));
    for i in 0..steps {
        let (x, u) = (states[i], controls[i]);
        let mut u1 = law(i + 1, &predict(i, &x));
        let mut converged = false;
        for _ in 0..MAX_ITER {
            let next = law(i + 1, &advance(i, &x, &u, &u1));
            let change = (next - u1).amax();
            u1 = next;
            if !change.is_finite() {
                return Err(i);
            }
            if change <= 1e-14 * (1.0 + u1.amax()) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(i);
        }
        states.push(advance(i, &x, &u, &u1));
        controls.push(u1);
    }
    Ok((states, controls))
}

/// Jacobians sampled along a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics<const N: usize, const M: usize> {
    grid: TimeGrid,
    pub a: Vec<SMatrix<f64, N, N>>,
    pub b: Vec<SMatrix<f64, N, M>>,
}

impl<const N: usize, const M: usize> LinearizedDynamics<N, M> {
    pub fn new(grid: TimeGrid, a: Vec<SMatrix<f64, N, N>>, b: Vec<SMatrix<f64, N, M>>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() {
            return Err(Error::Config("linearization length does not match the grid".into()));
        }
        Ok(Self { grid, a, b })
    }

    /// Time-invariant system `(a, b)` on `grid`.
    pub fn constant(grid: TimeGrid, a: SMatrix<f64, N, N>, b: SMatrix<f64, N, M>) -> Self {
        Self { grid, a: vec![a; grid.len()], b: vec![b; grid.len()] }
    }

    pub fn along<D: Dynamics<N, M>>(dynamics: &D, traj: &Trajectory<N, M>) -> Self {
        let (a, b) = traj.states().iter().zip(traj.controls()).map(|(x, u)| dynamics.linearize(x, u)).unzip();
        Self { grid: *traj.grid(), a, b }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub(crate) fn a_at(&self, i: usize, s: f64) -> SMatrix<f64, N, N> {
        if s == 0.0 {
            self.a[i]
        } else if s == 1.0 {
            self.a[i + 1]
        } else {
            self.a[i] * (1.0 - s) + self.a[i + 1] * s
        }
    }

    pub(crate) fn b_at(&self, i: usize, s: f64) -> SMatrix<f64, N, M> {
        if s == 0.0 {
            self.b[i]
        } else if s == 1.0 {
            self.b[i + 1]
        } else {
            self.b[i] * (1.0 - s) + self.b[i + 1] * s
        }
    }

    /// Advances `ż = A z + B v` over interval `i` with `v` interpolated
    /// linearly from `v0` to `v1`.
    pub fn step(&self, i: usize, z: &State<N>, v0: &Control<M>, v1: &Control<M>) -> State<N> {
        let dv = v1 - v0;
        rk4(z, self.grid.dt(), |s, zs| self.a_at(i, s) * zs + self.b_at(i, s) * (v0 + dv * s))
    }

    /// State perturbation produced by the control perturbation `v` from `z0`.
    pub fn propagate(&self, z0: State<N>, v: &[Control<M>]) -> Vec<State<N>> {
        let mut z = Vec::with_capacity(v.len());
        z.push(z0);
        for i in 0..self.grid.steps() {
            let next = self.step(i, &z[i], &v[i], &v[i + 1]);
            z.push(next);
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn flow_examples() {
        let f = Unicycle;
        assert_eq!(f.flow(&Vector3::new(0.3, 0.1, 0.0), &Vector2::new(1.0, 0.0)), Vector3::new(1.0, 0.0, 0.0));
        let v = f.flow(&Vector3::new(0.0, 0.0, PI / 2.0), &Vector2::new(2.0, 0.0));
        assert!((v - Vector3::new(0.0, 2.0, 0.0)).amax() < 1e-12);
        assert_eq!(f.flow(&Vector3::new(0.2, 0.2, 0.7), &Vector2::new(0.0, 3.0)), Vector3::new(0.0, 0.0, 3.0));
    }

    #[test]
    fn linearize_examples() {
        let (a, b) = Unicycle.linearize(&Vector3::new(0.0, 0.0, 0.0), &Vector2::new(1.0, 0.0));
        assert_eq!(a.column(2).into_owned(), Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(b.row(0).into_owned(), SMatrix::<f64, 1, 2>::new(1.0, 0.0));
        let (a0, _) = Unicycle.linearize(&Vector3::new(0.4, 0.1, 1.3), &Vector2::new(0.0, 2.0));
        assert_eq!(a0, SMatrix::<f64, 3, 3>::zeros());
    }

    proptest! {
        #[test]
        fn jacobians_match_finite_differences(
            x in prop::array::uniform3(-3.0f64..3.0),
            u in prop::array::uniform2(-2.0f64..2.0),
        ) {
            let (x, u) = (Vector3::from(x), Vector2::from(u));
            let (a, b) = Unicycle.linearize(&x, &u);
            let h = 1e-6;
            for j in 0..3 {
                let mut e = Vector3::zeros();
                e[j] = h;
                let col = (Unicycle.flow(&(x + e), &u) - Unicycle.flow(&(x - e), &u)) / (2.0 * h);
                prop_assert!((col - a.column(j)).amax() <= 1e-6);
            }
            for j in 0..2 {
                let mut e = Vector2::zeros();
                e[j] = h;
                let col = (Unicycle.flow(&x, &(u + e)) - Unicycle.flow(&x, &(u - e))) / (2.0 * h);
                prop_assert!((col - b.column(j)).amax() <= 1e-6);
            }
        }
    }

    #[test]
    fn zero_control_is_equilibrium() {
        let grid = TimeGrid::new(2.0, 50).unwrap();
        let x0 = Vector3::new(0.2, 0.3, 0.4);
        let t = integrate(&Unicycle, x0, vec![Vector2::zeros(); 51], grid).unwrap();
        assert!(t.states().iter().all(|x| *x == x0));
        assert_eq!(t.kind(), TrajectoryKind::Feasible);
    }

    #[test]
    fn straight_line() {
        let grid = TimeGrid::new(3.5, 350).unwrap();
        let x0 = Vector3::new(0.1, 0.2, 0.0);
        let t = integrate(&Unicycle, x0, vec![Vector2::new(0.3, 0.0); 351], grid).unwrap();
        for (i, x) in t.states().iter().enumerate() {
            assert!((x[0] - (0.1 + 0.3 * grid.time(i))).abs() < 1e-12);
            assert!((x[1] - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_turn_is_a_circle() {
        let grid = TimeGrid::new(3.5, 350).unwrap();
        let (r, w) = (0.1, 1.3);
        let t = integrate(&Unicycle, Vector3::new(0.5, 0.4, 0.0), vec![Vector2::new(w * r, w); 351], grid).unwrap();
        for x in t.states() {
            let d = ((x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2)).sqrt();
            assert!((d - r).abs() < 1e-6);
        }
        assert!(defect(&Unicycle, &t) <= FEASIBILITY_TOLERANCE);
    }

    #[test]
    fn circle_initialization() {
        let x0 = Vector3::new(0.3, 0.7, 1.1);
        let t = initial_circle(&Unicycle, x0, 0.05, 3.5, 350).unwrap();
        let u = t.controls()[0];
        assert!((u[0] - 0.089_759_79).abs() < 1e-7);
        assert!((u[1] - 1.795_195_8).abs() < 1e-6);
        assert!((t.final_state().xy() - x0.xy()).norm() < 1e-4);
        assert!(t.states().iter().all(|x| (x.xy() - x0.xy()).norm() <= 0.1 + 1e-9));
        assert!(initial_circle(&Unicycle, x0, 0.0, 3.5, 350).is_err());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let controls = |steps: usize| vec![Vector2::new(0.5, 1.0); steps + 1];
        let x0 = Vector3::new(0.0, 0.0, 0.3);
        let run = |steps| integrate(&Unicycle, x0, controls(steps), TimeGrid::new(2.0, steps).unwrap()).unwrap();
        let reference = *run(2000).final_state();
        let e1 = (run(20).final_state() - reference).norm();
        let e2 = (run(40).final_state() - reference).norm();
        let ratio = e1 / e2;
        assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
    }

    #[test]
    fn linearized_propagation_of_zero_is_zero() {
        let t = initial_circle(&Unicycle, Vector3::new(0.5, 0.5, 0.0), 0.05, 3.5, 100).unwrap();
        let lin = LinearizedDynamics::along(&Unicycle, &t);
        let z = lin.propagate(Vector3::zeros(), &vec![Vector2::zeros(); 101]);
        assert!(z.iter().all(|z| *z == Vector3::zeros()));
    }

    #[test]
    fn average_and_perturb() {
        let a = initial_circle(&Unicycle, Vector3::new(0.2, 0.2, 0.0), 0.05, 1.0, 10).unwrap();
        let b = initial_circle(&Unicycle, Vector3::new(0.6, 0.2, 0.0), 0.05, 1.0, 10).unwrap();
        let m = Trajectory::average([&a, &b]).unwrap();
        assert_eq!(m.kind(), TrajectoryKind::Planning);
        assert!((m.initial_state()[0] - 0.4).abs() < 1e-15);
        let d = Direction::zeros(11);
        assert_eq!(a.perturbed(&d, 0.7).states(), a.states());
        let c = initial_circle(&Unicycle, Vector3::new(0.6, 0.2, 0.0), 0.05, 1.0, 12).unwrap();
        assert!(matches!(Trajectory::average([&a, &c]), Err(Error::GridMismatch)));
    }
}
