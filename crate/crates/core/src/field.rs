//! Exploration domain and information density.
//!
//! The domain is the rectangle `[0, L_1] x ... x [0, L_λ]` spanned by the
//! exploratory state variables. The target density is a Gaussian mixture
//! truncated to that rectangle and renormalized so it integrates to one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::basis::{Coefficients, SpectralSet};
use crate::error::{Error, Result};

/// Default number of midpoint-rule nodes per exploratory dimension.
pub const DEFAULT_QUADRATURE: usize = 600;

/// Minimum nodes per dimension relative to the highest harmonic.
pub const MIN_NODES_PER_HARMONIC: usize = 10;

/// Rectangular exploration domain plus the map from states to exploration
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    bounds: Vec<f64>,
    selector: Vec<usize>,
    state_dim: usize,
}

impl Domain {
    /// `bounds[d]` is the side length along exploration coordinate `d`, which
    /// reads state entry `selector[d]`.
    pub fn new(bounds: Vec<f64>, selector: Vec<usize>, state_dim: usize) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::Config("domain needs at least one exploratory dimension".into()));
        }
        if bounds.len() != selector.len() {
            return Err(Error::Config(format!(
                "domain has {} bounds but {} selected state entries",
                bounds.len(),
                selector.len()
            )));
        }
        if selector.len() > state_dim {
            return Err(Error::Config("more exploratory dimensions than state entries".into()));
        }
        if let Some(l) = bounds.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::Config(format!("domain bound {l} must be positive")));
        }
        for (i, &s) in selector.iter().enumerate() {
            if s >= state_dim {
                return Err(Error::Config(format!("selector entry {s} is not a state index")));
            }
            if selector[..i].contains(&s) {
                return Err(Error::Config(format!("selector entry {s} repeated")));
            }
        }
        Ok(Self { bounds, selector, state_dim })
    }

    /// The unit square over the first two state entries of a planar vehicle.
    pub fn unit_square(state_dim: usize) -> Self {
        Self::new(vec![1.0, 1.0], vec![0, 1], state_dim).expect("unit square is valid")
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn selector(&self) -> &[usize] {
        &self.selector
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    /// Number of exploratory variables (λ).
    pub fn dims(&self) -> usize {
        self.bounds.len()
    }

    /// Writes the exploration coordinates of `state` into `out`.
    pub fn explore_into(&self, state: &[f64], out: &mut [f64]) {
        for (o, &s) in out.iter_mut().zip(&self.selector) {
            *o = state[s];
        }
    }

    pub fn explore(&self, state: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dims()];
        self.explore_into(state, &mut out);
        out
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.iter().zip(&self.bounds).all(|(&x, &l)| (0.0..=l).contains(&x))
    }

    /// Visits every node of the midpoint tensor grid with `res` nodes per
    /// dimension, passing the node and its quadrature weight.
    pub fn midpoint_grid(&self, res: usize, mut visit: impl FnMut(&[f64], f64)) {
        let dims = self.dims();
        let steps: Vec<f64> = self.bounds.iter().map(|l| l / res as f64).collect();
        let weight: f64 = steps.iter().product();
        let mut counter = vec![0usize; dims];
        let mut point: Vec<f64> = steps.iter().map(|h| 0.5 * h).collect();
        loop {
            visit(&point, weight);
            let mut d = dims;
            loop {
                if d == 0 {
                    return;
                }
                d -= 1;
                counter[d] += 1;
                if counter[d] < res {
                    point[d] = (counter[d] as f64 + 0.5) * steps[d];
                    break;
                }
                counter[d] = 0;
                point[d] = 0.5 * steps[d];
            }
        }
    }
}

/// One mixture component as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMode {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl GaussianMode {
    /// Isotropic mode with covariance `variance * I`.
    pub fn isotropic(weight: f64, mean: Vec<f64>, variance: f64) -> Self {
        let n = mean.len();
        let covariance = (0..n)
            .map(|i| (0..n).map(|j| if i == j { variance } else { 0.0 }).collect())
            .collect();
        Self { weight, mean, covariance }
    }
}

#[derive(Debug, Clone)]
struct PreparedMode {
    weight: f64,
    mean: DVector<f64>,
    precision: DMatrix<f64>,
    scale: f64,
}

/// Gaussian mixture density renormalized over a [`Domain`].
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    modes: Vec<PreparedMode>,
    source: Vec<GaussianMode>,
    normalization: f64,
}

impl GaussianMixture {
    /// Validates the modes and computes the truncation normalization with a
    /// midpoint rule of `resolution` nodes per dimension.
    pub fn new(modes: Vec<GaussianMode>, domain: &Domain, resolution: usize) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::Config("mixture has no modes".into()));
        }
        if resolution == 0 {
            return Err(Error::Config("quadrature resolution must be positive".into()));
        }
        let dims = domain.dims();
        let mut prepared = Vec::with_capacity(modes.len());
        for (i, mode) in modes.iter().enumerate() {
            if !(0.0..=1.0).contains(&mode.weight) {
                return Err(Error::Config(format!("mode {i}: weight {} outside [0, 1]", mode.weight)));
            }
            if mode.mean.len() != dims {
                return Err(Error::Config(format!("mode {i}: mean must have {dims} entries")));
            }
            if mode.covariance.len() != dims || mode.covariance.iter().any(|r| r.len() != dims) {
                return Err(Error::Config(format!("mode {i}: covariance must be {dims}x{dims}")));
            }
            let cov = DMatrix::from_fn(dims, dims, |r, c| mode.covariance[r][c]);
            let asym = (&cov - cov.transpose()).abs().max();
            if asym > 1e-12 * cov.abs().max().max(1.0) {
                return Err(Error::Config(format!("mode {i}: covariance is not symmetric")));
            }
            let chol = cov
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Config(format!("mode {i}: covariance is not positive definite")))?;
            let det = chol.l().diagonal().iter().map(|d| d * d).product::<f64>();
            let scale = 1.0 / ((2.0 * std::f64::consts::PI).powf(dims as f64 / 2.0) * det.sqrt());
            prepared.push(PreparedMode {
                weight: mode.weight,
                mean: DVector::from_column_slice(&mode.mean),
                precision: chol.inverse(),
                scale,
            });
        }
        let mut mixture = Self { modes: prepared, source: modes, normalization: 1.0 };
        let mut mass = 0.0;
        domain.midpoint_grid(resolution, |p, w| mass += w * mixture.raw_density(p));
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Config("mixture has no mass inside the domain".into()));
        }
        mixture.normalization = mass;
        Ok(mixture)
    }

    /// Weighted sum of the mode densities before truncation renormalization.
    pub fn raw_density(&self, point: &[f64]) -> f64 {
        let x = DVector::from_column_slice(point);
        self.modes
            .iter()
            .map(|m| {
                let d = &x - &m.mean;
                let quad = d.dot(&(&m.precision * &d));
                m.weight * m.scale * (-0.5 * quad).exp()
            })
            .sum()
    }

    /// Density rescaled to unit mass over the domain.
    pub fn density_at(&self, point: &[f64]) -> f64 {
        self.raw_density(point) / self.normalization
    }

    /// Mass of the untruncated mixture that falls inside the domain.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn modes(&self) -> &[GaussianMode] {
        &self.source
    }
}

/// Computes p_k by midpoint tensor quadrature of the normalized density
/// against every basis function of `spectral`.
pub fn spatial_coefficients(
    mixture: &GaussianMixture,
    spectral: &SpectralSet,
    resolution: usize,
) -> Result<Coefficients> {
    density_coefficients(|p| mixture.density_at(p), spectral, resolution)
}

/// Same quadrature as [`spatial_coefficients`] for an arbitrary density.
pub fn density_coefficients(
    density: impl Fn(&[f64]) -> f64,
    spectral: &SpectralSet,
    resolution: usize,
) -> Result<Coefficients> {
    let max_k = spectral.harmonics().iter().copied().max().unwrap_or(0);
    let min_res = (MIN_NODES_PER_HARMONIC * max_k).max(1);
    if resolution < min_res {
        return Err(Error::Config(format!(
            "quadrature resolution {resolution} below minimum {min_res} for harmonic {max_k}"
        )));
    }
    let mut values = vec![0.0; spectral.len()];
    let mut scratch = spectral.scratch();
    spectral.domain().midpoint_grid(resolution, |p, w| {
        spectral.accumulate(p, w * density(p), &mut values, &mut scratch);
    });
    Ok(spectral.coefficients(values))
}
