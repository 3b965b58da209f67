//! Cosine Fourier basis over the exploration rectangle.
//!
//! `F_k(χ) = (1/h_k) Π_d cos(k_d π χ_d / L_d)` with `h_k` chosen so every
//! basis function has unit L2 norm. Multi-indices are stored flattened in
//! row-major order (last exploratory dimension varies fastest).

use std::f64::consts::PI;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::field::Domain;

/// The multi-index set `{k : 0 <= k_d <= K_d}` with its norms and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSet {
    domain: Domain,
    harmonics: Vec<usize>,
    indices: Vec<usize>,
    offsets: Vec<usize>,
    norms: Vec<f64>,
    inv_norms: Vec<f64>,
    weights: Vec<f64>,
}

/// Coefficient array tied to the harmonic limits it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficients {
    harmonics: Vec<usize>,
    values: Vec<f64>,
}

impl Coefficients {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn harmonics(&self) -> &[usize] {
        &self.harmonics
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub(crate) fn ensure_compatible(&self, other: &Coefficients) -> Result<()> {
        if self.harmonics != other.harmonics || self.values.len() != other.values.len() {
            return Err(Error::SpectralMismatch(format!(
                "harmonics {:?} vs {:?}",
                self.harmonics, other.harmonics
            )));
        }
        Ok(())
    }
}

/// Per-point cosine/sine tables reused across calls.
#[derive(Debug, Clone)]
pub struct BasisScratch {
    cos: Vec<f64>,
    sin: Vec<f64>,
    point: Vec<f64>,
}

/// h_k for multi-index `k` over `domain`.
pub fn normalization(k: &[usize], domain: &Domain) -> f64 {
    k.iter()
        .zip(domain.bounds())
        .map(|(&ki, &l)| if ki == 0 { l } else { 0.5 * l })
        .product::<f64>()
        .sqrt()
}

/// Λ_k = (1 + ‖k‖²)^(-(λ+1)/2).
pub fn lambda_weight(k: &[usize], dims: usize) -> f64 {
    let norm2: f64 = k.iter().map(|&ki| (ki * ki) as f64).sum();
    (1.0 + norm2).powf(-(dims as f64 + 1.0) / 2.0)
}

impl SpectralSet {
    pub fn new(domain: &Domain, harmonics: Vec<usize>) -> Result<Self> {
        let dims = domain.dims();
        if harmonics.len() != dims {
            return Err(Error::Config(format!(
                "{} harmonic limits given for {dims} exploratory dimensions",
                harmonics.len()
            )));
        }
        let count: usize = harmonics.iter().map(|k| k + 1).product();
        let mut indices = Vec::with_capacity(count * dims);
        let mut norms = Vec::with_capacity(count);
        let mut weights = Vec::with_capacity(count);
        let mut k = vec![0usize; dims];
        for _ in 0..count {
            indices.extend_from_slice(&k);
            norms.push(normalization(&k, domain));
            weights.push(lambda_weight(&k, dims));
            for d in (0..dims).rev() {
                k[d] += 1;
                if k[d] <= harmonics[d] {
                    break;
                }
                k[d] = 0;
            }
        }
        let mut offsets = Vec::with_capacity(dims);
        let mut acc = 0;
        for h in &harmonics {
            offsets.push(acc);
            acc += h + 1;
        }
        let inv_norms = norms.iter().map(|h| 1.0 / h).collect();
        Ok(Self { domain: domain.clone(), harmonics, indices, offsets, norms, inv_norms, weights })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn harmonics(&self) -> &[usize] {
        &self.harmonics
    }

    /// Number of multi-indices, `Π (K_d + 1)`.
    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    pub fn multi_index(&self, i: usize) -> &[usize] {
        let d = self.harmonics.len();
        &self.indices[i * d..(i + 1) * d]
    }

    pub fn index_of(&self, k: &[usize]) -> Option<usize> {
        if k.len() != self.harmonics.len() {
            return None;
        }
        let mut idx = 0;
        for (&ki, &kmax) in k.iter().zip(&self.harmonics) {
            if ki > kmax {
                return None;
            }
            idx = idx * (kmax + 1) + ki;
        }
        Some(idx)
    }

    pub fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coefficients(&self, values: Vec<f64>) -> Coefficients {
        assert_eq!(values.len(), self.len(), "coefficient array length");
        Coefficients { harmonics: self.harmonics.clone(), values }
    }

    pub(crate) fn ensure_matches(&self, c: &Coefficients) -> Result<()> {
        if c.harmonics != self.harmonics || c.values.len() != self.len() {
            return Err(Error::SpectralMismatch(format!(
                "set {:?} vs coefficients {:?}",
                self.harmonics, c.harmonics
            )));
        }
        Ok(())
    }

    pub fn scratch(&self) -> BasisScratch {
        let total: usize = self.harmonics.iter().map(|k| k + 1).sum();
        BasisScratch { cos: vec![0.0; total], sin: vec![0.0; total], point: vec![0.0; self.harmonics.len()] }
    }

    fn fill_tables(&self, point: &[f64], scratch: &mut BasisScratch, with_sin: bool) {
        for (d, (&kmax, &l)) in self.harmonics.iter().zip(self.domain.bounds()).enumerate() {
            let off = self.offsets[d];
            let base = PI * point[d] / l;
            for k in 0..=kmax {
                let arg = k as f64 * base;
                if with_sin {
                    let (s, c) = arg.sin_cos();
                    scratch.cos[off + k] = c;
                    scratch.sin[off + k] = s;
                } else {
                    scratch.cos[off + k] = arg.cos();
                }
            }
        }
    }

    /// F_k(χ) for a single multi-index.
    pub fn basis_eval(&self, k: &[usize], point: &[f64]) -> f64 {
        let prod: f64 = k
            .iter()
            .zip(point)
            .zip(self.domain.bounds())
            .map(|((&ki, &x), &l)| (ki as f64 * PI * x / l).cos())
            .product();
        prod / normalization(k, &self.domain)
    }

    /// ∇F_k(χ) in exploration coordinates.
    pub fn basis_grad(&self, k: &[usize], point: &[f64]) -> Vec<f64> {
        let h = normalization(k, &self.domain);
        let bounds = self.domain.bounds();
        (0..k.len())
            .map(|d| {
                let mut g = 1.0 / h;
                for e in 0..k.len() {
                    let w = k[e] as f64 * PI / bounds[e];
                    if e == d {
                        g *= -w * (w * point[e]).sin();
                    } else {
                        g *= (w * point[e]).cos();
                    }
                }
                g
            })
            .collect()
    }

    /// `out[i] += scale * F_i(χ)` for every multi-index.
    pub fn accumulate(&self, point: &[f64], scale: f64, out: &mut [f64], scratch: &mut BasisScratch) {
        self.fill_tables(point, scratch, false);
        let dims = self.harmonics.len();
        for (i, o) in out.iter_mut().enumerate() {
            let k = &self.indices[i * dims..(i + 1) * dims];
            let mut v = self.inv_norms[i];
            for d in 0..dims {
                v *= scratch.cos[self.offsets[d] + k[d]];
            }
            *o += scale * v;
        }
    }

    /// Writes `Σ_i coef[i] ∇F_i(χ)` into `grad` (exploration coordinates).
    pub fn weighted_gradient(&self, point: &[f64], coef: &[f64], grad: &mut [f64], scratch: &mut BasisScratch) {
        self.fill_tables(point, scratch, true);
        let dims = self.harmonics.len();
        let bounds = self.domain.bounds();
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (i, &c) in coef.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let k = &self.indices[i * dims..(i + 1) * dims];
            let scale = c * self.inv_norms[i];
            for d in 0..dims {
                if k[d] == 0 {
                    continue;
                }
                let mut v = -scale * (k[d] as f64 * PI / bounds[d]) * scratch.sin[self.offsets[d] + k[d]];
                for e in 0..dims {
                    if e != d {
                        v *= scratch.cos[self.offsets[e] + k[e]];
                    }
                }
                grad[d] += v;
            }
        }
    }

    /// c_k = (1/T) ∫ F_k(M x(τ)) dτ by the trapezoidal rule on the trajectory grid.
    pub fn trajectory_coefficients<const N: usize, const M: usize>(
        &self,
        traj: &Trajectory<N, M>,
    ) -> Result<Coefficients> {
        if traj.is_empty() || traj.horizon() <= 0.0 {
            return Err(Error::EmptyTrajectory);
        }
        let mut values = vec![0.0; self.len()];
        self.accumulate_trajectory(traj, 1.0, &mut values);
        Ok(self.coefficients(values))
    }

    /// Adds `scale * c_k(traj)` into `out`.
    pub(crate) fn accumulate_trajectory<const N: usize, const M: usize>(
        &self,
        traj: &Trajectory<N, M>,
        scale: f64,
        out: &mut [f64],
    ) {
        let mut scratch = self.scratch();
        let mut point = std::mem::take(&mut scratch.point);
        let inv_t = scale / traj.horizon();
        for (i, x) in traj.states().iter().enumerate() {
            self.domain.explore_into(x.as_slice(), &mut point);
            self.accumulate(&point, inv_t * traj.grid().trapezoid_weight(i), out, &mut scratch);
        }
    }
}

/// C_k = (1/N) Σ_j c_k(x_j).
pub fn global_coefficients(per_agent: &[Coefficients]) -> Result<Coefficients> {
    let first = per_agent.first().ok_or(Error::EmptyTrajectory)?;
    let mut values = vec![0.0; first.len()];
    for c in per_agent {
        first.ensure_compatible(c)?;
        for (v, x) in values.iter_mut().zip(&c.values) {
            *v += x;
        }
    }
    let inv = 1.0 / per_agent.len() as f64;
    values.iter_mut().for_each(|v| *v *= inv);
    Ok(Coefficients { harmonics: first.harmonics.clone(), values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{initial_circle, integrate, TimeGrid, Unicycle};
    use crate::field::density_coefficients;
    use nalgebra::{Vector2, Vector3};
    use proptest::prelude::*;

    fn unit() -> SpectralSet {
        SpectralSet::new(&Domain::unit_square(3), vec![10, 10]).unwrap()
    }

    #[test]
    fn set_cardinality_and_weights() {
        let s = unit();
        assert_eq!(s.len(), 121);
        assert_eq!(s.weight(0), 1.0);
        for i in 0..s.len() {
            assert!(s.norm(i) > 0.0);
            assert!(s.weight(i) > 0.0 && s.weight(i) <= 1.0);
            assert_eq!(s.index_of(s.multi_index(i)), Some(i));
        }
        let s3 = SpectralSet::new(&Domain::new(vec![1.0, 2.0, 3.0], vec![0, 1, 2], 3).unwrap(), vec![2, 0, 4]).unwrap();
        assert_eq!(s3.len(), 15);
    }

    #[test]
    fn normalization_values() {
        let d = Domain::unit_square(3);
        assert_eq!(normalization(&[0, 0], &d), 1.0);
        assert!((normalization(&[1, 0], &d) - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((normalization(&[3, 7], &d) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_values() {
        assert_eq!(lambda_weight(&[0, 0], 2), 1.0);
        assert!((lambda_weight(&[1, 0], 2) - 0.353_553_390_593_273_8).abs() < 1e-12);
        assert!((lambda_weight(&[1, 1], 2) - 0.192_450_089_729_875_25).abs() < 1e-12);
    }

    #[test]
    fn eval_values() {
        let s = unit();
        assert_eq!(s.basis_eval(&[0, 0], &[0.3, 0.9]), 1.0);
        assert!((s.basis_eval(&[1, 1], &[0.0, 0.0]) - 2.0).abs() < 1e-12);
        assert!(s.basis_eval(&[2, 0], &[0.25, 0.7]).abs() < 1e-15);
    }

    #[test]
    fn grad_values() {
        let s = unit();
        assert_eq!(s.basis_grad(&[0, 0], &[0.3, 0.4]), vec![0.0, 0.0]);
        let g = s.basis_grad(&[1, 0], &[0.5, 0.2]);
        assert!((g[0] + PI / 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn table_paths_agree_with_direct_eval() {
        let s = unit();
        let p = [0.31, 0.77];
        let mut out = vec![0.0; s.len()];
        let mut scratch = s.scratch();
        s.accumulate(&p, 1.0, &mut out, &mut scratch);
        let coef: Vec<f64> = (0..s.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut g = [0.0; 2];
        s.weighted_gradient(&p, &coef, &mut g, &mut scratch);
        let mut expect = [0.0; 2];
        for i in 0..s.len() {
            let k = s.multi_index(i);
            assert!((out[i] - s.basis_eval(k, &p)).abs() < 1e-12);
            let gk = s.basis_grad(k, &p);
            expect[0] += coef[i] * gk[0];
            expect[1] += coef[i] * gk[1];
        }
        assert!((g[0] - expect[0]).abs() < 1e-9 && (g[1] - expect[1]).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn grad_matches_finite_differences(k1 in 0usize..=10, k2 in 0usize..=10, x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let s = unit();
            let k = [k1, k2];
            let g = s.basis_grad(&k, &[x, y]);
            let h = 1e-6;
            let gx = (s.basis_eval(&k, &[x + h, y]) - s.basis_eval(&k, &[x - h, y])) / (2.0 * h);
            let gy = (s.basis_eval(&k, &[x, y + h]) - s.basis_eval(&k, &[x, y - h])) / (2.0 * h);
            prop_assert!((g[0] - gx).abs() <= 1e-6);
            prop_assert!((g[1] - gy).abs() <= 1e-6);
        }
    }

    #[test]
    fn uniform_density_is_constant_mode_only() {
        let s = unit();
        let p = density_coefficients(|_| 1.0, &s, 200).unwrap();
        assert!((p.values()[0] - 1.0).abs() <= 1e-10);
        for v in &p.values()[1..] {
            assert!(v.abs() <= 1e-10);
        }
    }

    #[test]
    fn constant_trajectory_coefficients() {
        let s = unit();
        let x0 = Vector3::new(0.3, 0.6, 1.0);
        let grid = TimeGrid::new(2.0, 40).unwrap();
        let traj = integrate(&Unicycle, x0, vec![Vector2::zeros(); 41], grid).unwrap();
        let c = s.trajectory_coefficients(&traj).unwrap();
        for i in 0..s.len() {
            let expect = s.basis_eval(s.multi_index(i), &[0.3, 0.6]);
            assert!((c.values()[i] - expect).abs() < 1e-12);
        }
        assert!((c.values()[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn circle_coefficients_match_oversampled_oracle() {
        let s = unit();
        let x0 = Vector3::new(0.5, 0.45, 0.0);
        let coarse = initial_circle(&Unicycle, x0, 0.05, 3.5, 350).unwrap();
        // Closed-form circle sampled 10x finer.
        let fine_steps = 3500;
        let grid = TimeGrid::new(3.5, fine_steps).unwrap();
        let omega = 2.0 * PI / 3.5;
        let mut oracle = vec![0.0; s.len()];
        for i in 0..=fine_steps {
            let t = grid.time(i);
            let p = [0.5 + 0.05 * (omega * t).sin(), 0.5 - 0.05 * (omega * t).cos()];
            for (j, o) in oracle.iter_mut().enumerate() {
                *o += grid.trapezoid_weight(i) / 3.5 * s.basis_eval(s.multi_index(j), &p);
            }
        }
        let c = s.trajectory_coefficients(&coarse).unwrap();
        for j in 0..s.len() {
            assert!((c.values()[j] - oracle[j]).abs() < 1e-4, "k index {j}");
        }
    }

    #[test]
    fn global_average() {
        let s = unit();
        let mk = |v: f64| s.coefficients(vec![v; 121]);
        let a = mk(1.0);
        assert_eq!(global_coefficients(std::slice::from_ref(&a)).unwrap(), a);
        assert_eq!(global_coefficients(&[a.clone(), a.clone()]).unwrap(), a);
        let arrays: Vec<Coefficients> = (0..3)
            .map(|j| s.coefficients((0..121).map(|i| (i as f64).sin() * (j as f64 + 1.0)).collect()))
            .collect();
        let g = global_coefficients(&arrays).unwrap();
        for i in 0..121 {
            let direct = (arrays[0].values()[i] + arrays[1].values()[i] + arrays[2].values()[i]) / 3.0;
            assert!((g.values()[i] - direct).abs() < 1e-15);
        }
        let other = SpectralSet::new(&Domain::unit_square(3), vec![3, 3]).unwrap();
        let bad = other.coefficients(vec![0.0; 16]);
        assert!(matches!(global_coefficients(&[a, bad]), Err(Error::SpectralMismatch(_))));
    }

    #[test]
    fn unit_norm_and_orthogonality() {
        let s = SpectralSet::new(&Domain::unit_square(3), vec![6, 6]).unwrap();
        let res = 200;
        let n = s.len();
        let mut gram = vec![0.0; n * n];
        let mut row = vec![0.0; n];
        let mut scratch = s.scratch();
        s.domain().midpoint_grid(res, |p, w| {
            row.iter_mut().for_each(|r| *r = 0.0);
            s.accumulate(p, 1.0, &mut row, &mut scratch);
            for a in 0..n {
                for b in 0..n {
                    gram[a * n + b] += w * row[a] * row[b];
                }
            }
        });
        for a in 0..n {
            for b in 0..n {
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((gram[a * n + b] - expect).abs() <= 1e-4);
            }
        }
    }
}
