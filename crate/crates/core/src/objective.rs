//! Three-term planning cost and its first variation.
//!
//! ```text
//! J = q Σ_k Λ_k (C_k − p_k)²
//!   + Σ_j ∫ ½‖u_j‖²_R dτ
//!   + Σ_j Σ_{ℓ>j} ∫ 1 / (r_jℓ + ½‖x_j − x_ℓ‖²_W) dτ
//! ```
//!
//! All time integrals use the trapezoidal rule on the shared grid, and the
//! gradients below are the exact derivatives of that discretization.

use nalgebra::SMatrix;

use crate::basis::{Coefficients, SpectralSet};
use crate::dynamics::{Control, Direction, State, TimeGrid, Trajectory};
use crate::error::{Error, Result};
use crate::lq::QuadraticModel;

/// Per-pair replacement of the inter-agent penalty `r` and/or distance map `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOverride<const N: usize> {
    pub agents: (usize, usize),
    pub r: Option<f64>,
    pub w: Option<SMatrix<f64, N, N>>,
}

/// Every tuning parameter of the planner.
#[derive(Debug, Clone, PartialEq)]
pub struct CostWeights<const N: usize, const M: usize> {
    /// Ergodicity weight `q`.
    pub q: f64,
    /// Control penalty `R`.
    pub control: SMatrix<f64, M, M>,
    /// Default inter-agent penalty `r`.
    pub pair_penalty: f64,
    /// Default distance transform `W`.
    pub distance: SMatrix<f64, N, N>,
    pub pair_overrides: Vec<PairOverride<N>>,
    /// `Q_n`, `R_n`, `P_1n` of the descent subproblem.
    pub descent: QuadraticModel<N, M>,
    pub q_lqr: SMatrix<f64, N, N>,
    pub r_lqr: SMatrix<f64, M, M>,
    /// Armijo sufficient-decrease factor `ρ`.
    pub rho: f64,
    /// Armijo backtracking base `β`.
    pub beta: f64,
    /// Largest backtracking exponent tried before rejecting a step.
    pub max_backtracks: u32,
    /// Iteration cap `i_max`.
    pub max_iterations: usize,
}

fn is_symmetric<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
}

fn is_psd<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    // Const-generic eigen-decomposition needs dimension bounds; go through a dynamic copy.
    let dynamic = nalgebra::DMatrix::from_column_slice(N, N, m.as_slice());
    is_symmetric(m) && dynamic.symmetric_eigenvalues().iter().all(|&l| l >= -1e-12 * m.amax().max(1.0))
}

fn is_pd<const N: usize>(m: &SMatrix<f64, N, N>) -> bool {
    is_symmetric(m) && m.cholesky().is_some()
}

impl<const N: usize, const M: usize> CostWeights<N, M> {
    pub fn validate(&self) -> Result<()> {
        let fail = |what: &str| Err(Error::Config(what.to_string()));
        if !(self.q.is_finite() && self.q > 0.0) {
            return fail("q must be positive");
        }
        if !is_psd(&self.control) {
            return fail("R must be symmetric positive semi-definite");
        }
        if !(self.pair_penalty.is_finite() && self.pair_penalty > 0.0) {
            return fail("inter-agent penalty r must be positive");
        }
        if !is_psd(&self.distance) {
            return fail("W must be symmetric positive semi-definite");
        }
        for o in &self.pair_overrides {
            if o.agents.0 == o.agents.1 {
                return fail("pair override names the same agent twice");
            }
            if o.r.is_some_and(|r| !(r.is_finite() && r > 0.0)) {
                return fail("pair override r must be positive");
            }
            if o.w.as_ref().is_some_and(|w| !is_psd(w)) {
                return fail("pair override W must be symmetric positive semi-definite");
            }
        }
        if !is_psd(&self.descent.q) || !is_psd(&self.descent.terminal) {
            return fail("Q_n and P_1n must be symmetric positive semi-definite");
        }
        if !is_pd(&self.descent.r) {
            return fail("R_n must be positive definite");
        }
        if !is_psd(&self.q_lqr) {
            return fail("Q_LQR must be symmetric positive semi-definite");
        }
        if !is_pd(&self.r_lqr) {
            return fail("R_LQR must be positive definite");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return fail("rho must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return fail("beta must lie in (0, 1)");
        }
        if self.max_iterations == 0 {
            return fail("i_max must be at least 1");
        }
        Ok(())
    }

    /// `(r_jℓ, W_jℓ)` for an unordered agent pair.
    pub fn pair(&self, j: usize, l: usize) -> (f64, &SMatrix<f64, N, N>) {
        let key = if j < l { (j, l) } else { (l, j) };
        let mut r = self.pair_penalty;
        let mut w = &self.distance;
        for o in &self.pair_overrides {
            let ok = if o.agents.0 < o.agents.1 { o.agents } else { (o.agents.1, o.agents.0) };
            if ok == key {
                if let Some(rv) = o.r {
                    r = rv;
                }
                if let Some(wv) = &o.w {
                    w = wv;
                }
            }
        }
        (r, w)
    }
}

/// `Σ_k Λ_k (C_k − p_k)²`.
pub fn ergodic_metric(c: &Coefficients, p: &Coefficients, spectral: &SpectralSet) -> Result<f64> {
    spectral.ensure_matches(c)?;
    spectral.ensure_matches(p)?;
    Ok(weighted_distance(c.values(), p.values(), spectral.weights()))
}

fn weighted_distance(c: &[f64], p: &[f64], weights: &[f64]) -> f64 {
    c.iter().zip(p).zip(weights).map(|((c, p), w)| w * (c - p).powi(2)).sum()
}

/// The three contributions to `J`, unweighted by nothing further (the
/// ergodic entry already includes `q`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTerms {
    pub ergodic: f64,
    pub control: f64,
    pub interagent: f64,
}

impl CostTerms {
    pub fn total(&self) -> f64 {
        self.ergodic + self.control + self.interagent
    }
}

fn check_grids<const N: usize, const M: usize>(trajs: &[&Trajectory<N, M>]) -> Result<TimeGrid> {
    let first = trajs.first().ok_or(Error::EmptyTrajectory)?;
    if trajs.iter().any(|t| !t.same_grid(first)) {
        return Err(Error::GridMismatch);
    }
    Ok(*first.grid())
}

fn control_energy<const N: usize, const M: usize>(t: &Trajectory<N, M>, r: &SMatrix<f64, M, M>) -> f64 {
    t.grid().integrate(t.controls().iter().map(|u| 0.5 * u.dot(&(r * u))))
}

fn pair_cost<const N: usize, const M: usize>(
    a: &Trajectory<N, M>,
    b: &Trajectory<N, M>,
    r: f64,
    w: &SMatrix<f64, N, N>,
) -> f64 {
    a.grid().integrate(a.states().iter().zip(b.states()).map(|(xa, xb)| {
        let d = xa - xb;
        1.0 / (r + 0.5 * d.dot(&(w * d)))
    }))
}

/// Evaluates each term of `J` over `trajs` (agent `j` is `trajs[j]`).
pub fn cost_terms<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    weights: &CostWeights<N, M>,
    spectral: &SpectralSet,
    p: &Coefficients,
) -> Result<CostTerms> {
    check_grids(trajs)?;
    spectral.ensure_matches(p)?;
    let n = trajs.len();
    let mut c = vec![0.0; spectral.len()];
    for t in trajs {
        spectral.accumulate_trajectory(t, 1.0 / n as f64, &mut c);
    }
    let ergodic = weights.q * weighted_distance(&c, p.values(), spectral.weights());
    let control = trajs.iter().map(|t| control_energy(t, &weights.control)).sum();
    let mut interagent = 0.0;
    for j in 0..n {
        for l in j + 1..n {
            let (r, w) = weights.pair(j, l);
            interagent += pair_cost(trajs[j], trajs[l], r, w);
        }
    }
    Ok(CostTerms { ergodic, control, interagent })
}

pub fn total_cost<const N: usize, const M: usize>(
    trajs: &[&Trajectory<N, M>],
    weights: &CostWeights<N, M>,
    spectral: &SpectralSet,
    p: &Coefficients,
) -> Result<f64> {
    cost_terms(trajs, weights, spectral, p).map(|t| t.total())
}

/// Gradient signals `a_j(t_i)` and `b_j(t_i)` of `J` with respect to agent
/// `j`'s state and control samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<const N: usize, const M: usize> {
    pub a: Vec<State<N>>,
    pub b: Vec<Control<M>>,
}

/// First variation of `J` in agent `j`'s trajectory, with every other
/// trajectory taken from `trajs` (the agent's current view).
pub fn cost_gradients<const N: usize, const M: usize>(
    j: usize,
    trajs: &[&Trajectory<N, M>],
    weights: &CostWeights<N, M>,
    spectral: &SpectralSet,
    p: &Coefficients,
) -> Result<Gradients<N, M>> {
    let grid = check_grids(trajs)?;
    spectral.ensure_matches(p)?;
    let n = trajs.len();
    if j >= n {
        return Err(Error::Config(format!("agent {j} outside a view of {n} trajectories")));
    }
    let mut c = vec![0.0; spectral.len()];
    for t in trajs {
        spectral.accumulate_trajectory(t, 1.0 / n as f64, &mut c);
    }
    let scale = 2.0 * weights.q / (n as f64 * grid.horizon());
    let coef: Vec<f64> = c
        .iter()
        .zip(p.values())
        .zip(spectral.weights())
        .map(|((c, p), w)| scale * w * (c - p))
        .collect();

    let domain = spectral.domain();
    let selector = domain.selector();
    let mut scratch = spectral.scratch();
    let mut point = vec![0.0; domain.dims()];
    let mut grad = vec![0.0; domain.dims()];
    let own = trajs[j];
    let mut a = Vec::with_capacity(grid.len());
    for (i, x) in own.states().iter().enumerate() {
        domain.explore_into(x.as_slice(), &mut point);
        spectral.weighted_gradient(&point, &coef, &mut grad, &mut scratch);
        let mut ai = State::<N>::zeros();
        for (g, &s) in grad.iter().zip(selector) {
            ai[s] += g;
        }
        for (l, other) in trajs.iter().enumerate() {
            if l == j {
                continue;
            }
            let (r, w) = weights.pair(j, l);
            let d = x - other.states()[i];
            let wd = w * d;
            let denom = r + 0.5 * d.dot(&wd);
            ai -= wd / (denom * denom);
        }
        a.push(ai);
    }
    let b = own.controls().iter().map(|u| weights.control * u).collect();
    Ok(Gradients { a, b })
}

/// `∫ aᵀz dτ + ∫ bᵀv dτ` by the trapezoidal rule.
pub fn directional_derivative<const N: usize, const M: usize>(
    a: &[State<N>],
    b: &[Control<M>],
    direction: &Direction<N, M>,
    grid: &TimeGrid,
) -> f64 {
    grid.integrate((0..grid.len()).map(|i| a[i].dot(&direction.z[i]) + b[i].dot(&direction.v[i])))
}

/// `J` as a function of agent `j`'s trajectory alone, the rest held fixed.
///
/// Contributions that do not involve agent `j` are computed once.
#[derive(Debug, Clone)]
pub struct LocalCost<'a, const N: usize, const M: usize> {
    agent: usize,
    others: Vec<&'a Trajectory<N, M>>,
    weights: &'a CostWeights<N, M>,
    spectral: &'a SpectralSet,
    p: &'a Coefficients,
    fixed_coefficients: Vec<f64>,
    fixed_cost: f64,
    inv_n: f64,
}

impl<'a, const N: usize, const M: usize> LocalCost<'a, N, M> {
    pub fn new(
        agent: usize,
        trajs: &[&'a Trajectory<N, M>],
        weights: &'a CostWeights<N, M>,
        spectral: &'a SpectralSet,
        p: &'a Coefficients,
    ) -> Result<Self> {
        check_grids(trajs)?;
        spectral.ensure_matches(p)?;
        let n = trajs.len();
        if agent >= n {
            return Err(Error::Config(format!("agent {agent} outside a view of {n} trajectories")));
        }
        let inv_n = 1.0 / n as f64;
        let mut fixed_coefficients = vec![0.0; spectral.len()];
        let mut fixed_cost = 0.0;
        for (l, t) in trajs.iter().enumerate() {
            if l == agent {
                continue;
            }
            spectral.accumulate_trajectory(t, inv_n, &mut fixed_coefficients);
            fixed_cost += control_energy(t, &weights.control);
            for m in l + 1..n {
                if m != agent {
                    let (r, w) = weights.pair(l, m);
                    fixed_cost += pair_cost(t, trajs[m], r, w);
                }
            }
        }
        Ok(Self {
            agent,
            others: trajs.to_vec(),
            weights,
            spectral,
            p,
            fixed_coefficients,
            fixed_cost,
            inv_n,
        })
    }

    /// `J` with agent `j`'s entry replaced by `candidate`.
    pub fn evaluate(&self, candidate: &Trajectory<N, M>) -> f64 {
        let mut c = self.fixed_coefficients.clone();
        self.spectral.accumulate_trajectory(candidate, self.inv_n, &mut c);
        let mut cost = self.fixed_cost
            + self.weights.q * weighted_distance(&c, self.p.values(), self.spectral.weights())
            + control_energy(candidate, &self.weights.control);
        for (l, t) in self.others.iter().enumerate() {
            if l != self.agent {
                let (r, w) = self.weights.pair(self.agent, l);
                cost += pair_cost(candidate, t, r, w);
            }
        }
        cost
    }

    /// Shared ergodic metric `E` (without `q`) with `candidate` in place.
    pub fn ergodic(&self, candidate: &Trajectory<N, M>) -> f64 {
        let mut c = self.fixed_coefficients.clone();
        self.spectral.accumulate_trajectory(candidate, self.inv_n, &mut c);
        weighted_distance(&c, self.p.values(), self.spectral.weights())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{initial_circle, Unicycle};
    use crate::field::Domain;
    use crate::scenario::Scenario;
    use nalgebra::{Vector2, Vector3};

    fn setup() -> (SpectralSet, Coefficients, CostWeights<3, 2>) {
        let sc = Scenario::volcano();
        let problem = sc.build().unwrap();
        (problem.spectral.clone(), problem.p.clone(), problem.weights.clone())
    }

    fn circle(x: f64, y: f64, th: f64) -> Trajectory<3, 2> {
        initial_circle(&Unicycle, Vector3::new(x, y, th), 0.05, 3.5, 70).unwrap()
    }

    #[test]
    fn metric_examples() {
        let s = SpectralSet::new(&Domain::unit_square(3), vec![3, 3]).unwrap();
        let p = s.coefficients((0..16).map(|i| i as f64 * 0.01).collect());
        assert_eq!(ergodic_metric(&p, &p, &s).unwrap(), 0.0);
        let mut shifted = p.values().to_vec();
        shifted[0] += 0.3;
        let c = s.coefficients(shifted);
        assert!((ergodic_metric(&c, &p, &s).unwrap() - 0.09).abs() < 1e-15);
        let other = SpectralSet::new(&Domain::unit_square(3), vec![2, 2]).unwrap();
        assert!(ergodic_metric(&other.coefficients(vec![0.0; 9]), &p, &s).is_err());
        let brute: f64 = (0..16).map(|i| s.weight(i) * (c.values()[i] - p.values()[i]).powi(2)).sum();
        assert_eq!(ergodic_metric(&c, &p, &s).unwrap(), brute);
    }

    #[test]
    fn single_agent_has_no_pair_term() {
        let (s, p, w) = setup();
        let t = circle(0.3, 0.3, 0.0);
        assert_eq!(cost_terms(&[&t], &w, &s, &p).unwrap().interagent, 0.0);
    }

    #[test]
    fn coincident_agents_pay_horizon_over_r() {
        let (s, p, mut w) = setup();
        w.pair_penalty = 1.0;
        let t = circle(0.3, 0.3, 0.0);
        let terms = cost_terms(&[&t, &t], &w, &s, &p).unwrap();
        assert!((terms.interagent - 3.5).abs() < 1e-12);
    }

    #[test]
    fn zero_controls_cost_nothing() {
        let (s, p, w) = setup();
        let grid = TimeGrid::new(3.5, 70).unwrap();
        let t = crate::dynamics::integrate(&Unicycle, Vector3::new(0.4, 0.4, 0.0), vec![Vector2::zeros(); 71], grid)
            .unwrap();
        assert_eq!(cost_terms(&[&t, &t], &w, &s, &p).unwrap().control, 0.0);
    }

    #[test]
    fn control_gradient_is_r_times_u() {
        let (s, p, w) = setup();
        let grid = TimeGrid::new(3.5, 70).unwrap();
        let t = crate::dynamics::integrate(&Unicycle, Vector3::new(0.4, 0.4, 0.0), vec![Vector2::new(1.0, 2.0); 71], grid)
            .unwrap();
        let g = cost_gradients(0, &[&t], &w, &s, &p).unwrap();
        assert!((g.b[5] - Vector2::new(0.03, 0.06)).amax() < 1e-15);
    }

    #[test]
    fn directional_derivative_basics() {
        let grid = TimeGrid::new(2.0, 10).unwrap();
        let a = vec![Vector3::new(1.0, -2.0, 0.5); 11];
        let b = vec![Vector2::new(0.3, 0.1); 11];
        let zero = Direction::<3, 2>::zeros(11);
        assert_eq!(directional_derivative(&a, &b, &zero, &grid), 0.0);
        let d = Direction { z: vec![Vector3::new(0.2, 0.1, 1.0); 11], v: vec![Vector2::new(1.0, -1.0); 11] };
        let expect = 2.0 * (0.2 - 0.2 + 0.5 + 0.3 - 0.1);
        let got = directional_derivative(&a, &b, &d, &grid);
        assert!((got - expect).abs() < 1e-12);
        let twice = directional_derivative(&a, &b, &d.scaled(2.0), &grid);
        assert!((twice - 2.0 * got).abs() < 1e-12);
    }

    #[test]
    fn relabeling_agents_keeps_cost() {
        let (s, p, w) = setup();
        let (a, b, c) = (circle(0.3, 0.3, 0.0), circle(0.6, 0.4, 1.0), circle(0.5, 0.7, 2.0));
        let j1 = total_cost(&[&a, &b, &c], &w, &s, &p).unwrap();
        let j2 = total_cost(&[&c, &a, &b], &w, &s, &p).unwrap();
        assert!((j1 - j2).abs() < 1e-12 * j1.abs());
    }

    #[test]
    fn pair_term_bounds() {
        let (s, p, w) = setup();
        let ts = [circle(0.3, 0.3, 0.0), circle(0.6, 0.4, 1.0), circle(0.5, 0.7, 2.0)];
        let refs: Vec<_> = ts.iter().collect();
        let inter = cost_terms(&refs, &w, &s, &p).unwrap().interagent;
        assert!(inter > 0.0 && inter <= 3.5 * 3.0 * 2.0 / (2.0 * w.pair_penalty));
    }

    #[test]
    fn local_cost_matches_total() {
        let (s, p, w) = setup();
        let ts = [circle(0.3, 0.3, 0.0), circle(0.6, 0.4, 1.0), circle(0.5, 0.7, 2.0)];
        let refs: Vec<_> = ts.iter().collect();
        let local = LocalCost::new(1, &refs, &w, &s, &p).unwrap();
        let replacement = circle(0.2, 0.8, 0.3);
        let swapped = [&ts[0], &replacement, &ts[2]];
        let direct = total_cost(&swapped, &w, &s, &p).unwrap();
        assert!((local.evaluate(&replacement) - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn pair_overrides_apply_to_unordered_pairs() {
        let (_, _, mut w) = setup();
        w.pair_overrides.push(PairOverride { agents: (2, 0), r: Some(5.0), w: None });
        assert_eq!(w.pair(0, 2).0, 5.0);
        assert_eq!(w.pair(2, 0).0, 5.0);
        assert_eq!(w.pair(0, 1).0, w.pair_penalty);
        assert!(w.validate().is_ok());
        w.rho = 1.0;
        assert!(w.validate().is_err());
    }
}
