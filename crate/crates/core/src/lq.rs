//! Finite-horizon linear-quadratic problems solved by backward Riccati sweeps.
//!
//! Two consumers: the descent-direction subproblem (LQ tracking with affine
//! cost terms `a`, `b`) and the time-varying LQR gain used by the projection.
//! Sweeps use the same RK4 scheme as the vehicle integrator with the
//! linearization and cost signals interpolated linearly inside each interval.

use nalgebra::{SMatrix, SVector};

use crate::dynamics::{feedback_rollout, Control, Direction, LinearizedDynamics, State, TimeGrid};
use crate::error::{Error, Result};

/// Riccati sweeps fail once any entry of `P` exceeds this magnitude.
pub const DEFAULT_RICCATI_BOUND: f64 = 1e10;

/// Riccati matrix and affine co-state on the trajectory grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution<const N: usize> {
    pub p: Vec<SMatrix<f64, N, N>>,
    pub s: Vec<SVector<f64, N>>,
}

/// Weights of the quadratic model `½‖z‖²_Q + ½‖v‖²_R` plus terminal `½‖z(T)‖²_P1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticModel<const N: usize, const M: usize> {
    pub q: SMatrix<f64, N, N>,
    pub r: SMatrix<f64, M, M>,
    pub terminal: SMatrix<f64, N, N>,
}

fn inverse_pd<const M: usize>(r: &SMatrix<f64, M, M>, what: &str) -> Result<SMatrix<f64, M, M>> {
    r.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Config(format!("{what} must be positive definite")))
}

fn symmetrize<const N: usize>(p: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (p + p.transpose()) * 0.5
}

fn lerp<const R: usize, const C: usize>(v: &[SMatrix<f64, R, C>], i: usize, s: f64) -> SMatrix<f64, R, C> {
    if s == 0.0 {
        v[i]
    } else if s == 1.0 {
        v[i + 1]
    } else {
        v[i] * (1.0 - s) + v[i + 1] * s
    }
}

/// Backward sweep of `Ṗ = −AᵀP − PA + PBR⁻¹BᵀP − Q` from `P(T) = terminal`,
/// optionally with the affine co-state
/// `ṡ = −(A − BR⁻¹BᵀP)ᵀ s + PBR⁻¹b − a`, `s(T) = 0`.
fn riccati_sweep<const N: usize, const M: usize>(
    lin: &LinearizedDynamics<N, M>,
    q: &SMatrix<f64, N, N>,
    r_inv: &SMatrix<f64, M, M>,
    terminal: &SMatrix<f64, N, N>,
    affine: Option<(&[State<N>], &[Control<M>])>,
    bound: f64,
) -> Result<RiccatiSolution<N>> {
    let grid = *lin.grid();
    let len = grid.len();
    let dt = grid.dt();
    let mut p = vec![SMatrix::<f64, N, N>::zeros(); len];
    let mut s = vec![SVector::<f64, N>::zeros(); len];
    p[len - 1] = symmetrize(terminal);
    check_bound(&p[len - 1], grid.time(len - 1), bound)?;

    let rhs = |i: usize, frac: f64, pm: &SMatrix<f64, N, N>, sv: &SVector<f64, N>| {
        let a = lin.a_at(i, frac);
        let b = lin.b_at(i, frac);
        let pb = pm * b;
        let pbr = pb * r_inv;
        let dp = -a.transpose() * pm - pm * a + pbr * pb.transpose() - q;
        let ds = match affine {
            Some((ca, cb)) => {
                let closed = a - b * r_inv * pb.transpose();
                -closed.transpose() * sv + pbr * lerp(cb, i, frac) - lerp(ca, i, frac)
            }
            None => SVector::zeros(),
        };
        (dp, ds)
    };

    for i in (0..grid.steps()).rev() {
        // Integrate from t_{i+1} back to t_i: step -dt, fractions 1, ½, ½, 0.
        let h = -dt;
        let (p0, s0) = (p[i + 1], s[i + 1]);
        let (k1p, k1s) = rhs(i, 1.0, &p0, &s0);
        let (k2p, k2s) = rhs(i, 0.5, &(p0 + k1p * (0.5 * h)), &(s0 + k1s * (0.5 * h)));
        let (k3p, k3s) = rhs(i, 0.5, &(p0 + k2p * (0.5 * h)), &(s0 + k2s * (0.5 * h)));
        let (k4p, k4s) = rhs(i, 0.0, &(p0 + k3p * h), &(s0 + k3s * h));
        p[i] = symmetrize(&(p0 + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0)));
        s[i] = s0 + (k1s + k2s * 2.0 + k3s * 2.0 + k4s) * (h / 6.0);
        check_bound(&p[i], grid.time(i), bound)?;
        if !s[i].iter().all(|x| x.is_finite()) {
            return Err(Error::RiccatiBlowUp { time: grid.time(i), norm: f64::INFINITY });
        }
    }
    Ok(RiccatiSolution { p, s })
}

fn check_bound<const N: usize>(p: &SMatrix<f64, N, N>, time: f64, bound: f64) -> Result<()> {
    let norm = p.amax();
    if !norm.is_finite() || norm > bound {
        return Err(Error::RiccatiBlowUp { time, norm });
    }
    Ok(())
}

/// Minimizes `∫ aᵀz + bᵀv + ½‖z‖²_Q + ½‖v‖²_R dτ + ½‖z(T)‖²_P1` subject to
/// `ż = Az + Bv`, `z(0) = 0`.
pub fn descent_direction<const N: usize, const M: usize>(
    a: &[State<N>],
    b: &[Control<M>],
    lin: &LinearizedDynamics<N, M>,
    model: &QuadraticModel<N, M>,
    bound: f64,
) -> Result<(Direction<N, M>, RiccatiSolution<N>)> {
    let grid = *lin.grid();
    if a.len() != grid.len() || b.len() != grid.len() {
        return Err(Error::GridMismatch);
    }
    let r_inv = inverse_pd(&model.r, "R_n")?;
    let ric = riccati_sweep(lin, &model.q, &r_inv, &model.terminal, Some((a, b)), bound)?;
    let law = |i: usize, z: &State<N>| -> Control<M> { -(r_inv * (lin.b[i].transpose() * (ric.p[i] * z + ric.s[i]) + b[i])) };
    let (z, v) = feedback_rollout(
        State::zeros(),
        grid.steps(),
        |i, z, v0, v1| lin.step(i, z, v0, v1),
        law,
        |_, z| *z,
    )
    .map_err(|i| Error::RiccatiBlowUp { time: grid.time(i), norm: f64::NAN })?;
    Ok((Direction { z, v }, ric))
}

/// Value of the descent subproblem's objective for a given direction.
pub fn lq_objective<const N: usize, const M: usize>(
    a: &[State<N>],
    b: &[Control<M>],
    direction: &Direction<N, M>,
    model: &QuadraticModel<N, M>,
    grid: &TimeGrid,
) -> f64 {
    let running = grid.integrate((0..grid.len()).map(|i| {
        let (z, v) = (&direction.z[i], &direction.v[i]);
        a[i].dot(z) + b[i].dot(v) + 0.5 * z.dot(&(model.q * z)) + 0.5 * v.dot(&(model.r * v))
    }));
    let zt = direction.z[grid.len() - 1];
    running + 0.5 * zt.dot(&(model.terminal * zt))
}

/// Time-varying LQR gain `K = R⁻¹BᵀP` from a sweep with `P(T) = Q`.
pub fn lqr_gain<const N: usize, const M: usize>(
    lin: &LinearizedDynamics<N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    bound: f64,
) -> Result<Vec<SMatrix<f64, M, N>>> {
    let r_inv = inverse_pd(r, "R_LQR")?;
    let ric = riccati_sweep(lin, q, &r_inv, q, None, bound)?;
    Ok(ric.p.iter().zip(&lin.b).map(|(p, b)| r_inv * b.transpose() * p).collect())
}

/// Riccati matrices of the LQR sweep, exposed for residual checks.
pub fn lqr_riccati<const N: usize, const M: usize>(
    lin: &LinearizedDynamics<N, M>,
    q: &SMatrix<f64, N, N>,
    r: &SMatrix<f64, M, M>,
    bound: f64,
) -> Result<Vec<SMatrix<f64, N, N>>> {
    let r_inv = inverse_pd(r, "R_LQR")?;
    Ok(riccati_sweep(lin, q, &r_inv, q, None, bound)?.p)
}
