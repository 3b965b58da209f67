//! Scenario files, the two built-in information maps and random
//! initialization of the unicycle team.

use nalgebra::{SMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{Coefficients, SpectralSet};
use crate::dynamics::{initial_circle, TimeGrid, Trajectory, Unicycle, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::field::{spatial_coefficients, Domain, GaussianMixture, GaussianMode, DEFAULT_QUADRATURE};
use crate::lq::QuadraticModel;
use crate::network::GraphSpec;
use crate::objective::{CostWeights, PairOverride};

/// Name and version of the generator behind [`random_initials`].
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64";

/// Seed of the default random communication graph.
pub const DEFAULT_GRAPH_SEED: u64 = 2024;

/// Row-major square matrix as written in a scenario file.
pub type MatrixRows = Vec<Vec<f64>>;

fn diag(values: &[f64]) -> MatrixRows {
    let n = values.len();
    (0..n).map(|i| (0..n).map(|j| if i == j { values[i] } else { 0.0 }).collect()).collect()
}

fn matrix<const R: usize>(rows: &MatrixRows, name: &str) -> Result<SMatrix<f64, R, R>> {
    if rows.len() != R || rows.iter().any(|r| r.len() != R) {
        return Err(Error::Config(format!("{name} must be a {R}x{R} matrix")));
    }
    Ok(SMatrix::from_fn(|i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// Side lengths `L_i` of the exploration rectangle.
    pub bounds: Vec<f64>,
    /// Highest harmonic per exploratory dimension.
    pub harmonics: Vec<usize>,
    /// Midpoint nodes per dimension for the density quadrature.
    pub quadrature: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureConfig {
    pub modes: Vec<GaussianMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairOverrideConfig {
    pub agents: (usize, usize),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<MatrixRows>,
}

/// Tuning parameters, named after the symbols of the method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub q: f64,
    /// Control penalty `R`.
    pub r_control: MatrixRows,
    /// Inter-agent penalty `r`.
    pub r: f64,
    /// Distance transform `W`.
    pub w: MatrixRows,
    pub q_n: MatrixRows,
    pub r_n: MatrixRows,
    pub p1_n: MatrixRows,
    pub q_lqr: MatrixRows,
    pub r_lqr: MatrixRows,
    pub rho: f64,
    pub beta: f64,
    pub h_max: u32,
    pub i_max: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pair_overrides: Vec<PairOverrideConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Horizon `T` in seconds.
    pub horizon: f64,
    pub steps: usize,
    /// Radius of the circular initial trajectories.
    pub radius: f64,
    pub agents: usize,
    pub seed: u64,
    pub epsilon_opt: f64,
    /// Optional local stopping threshold on the ergodic reduction (percent).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_r: Option<f64>,
}

/// A complete scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub domain: DomainConfig,
    pub mixture: MixtureConfig,
    pub weights: WeightsConfig,
    pub graph: GraphSpec,
    pub run: RunConfig,
}

/// Validated numerical objects built from a [`Scenario`].
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub domain: Domain,
    pub mixture: GaussianMixture,
    pub spectral: SpectralSet,
    pub p: Coefficients,
    pub weights: CostWeights<3, 2>,
    pub grid: TimeGrid,
    pub radius: f64,
}

impl Problem {
    /// Circular initial trajectories starting at `starts`.
    pub fn initial_trajectories(&self, starts: &[Vector3<f64>]) -> Result<Vec<Trajectory<3, 2>>> {
        starts
            .iter()
            .map(|x0| initial_circle(&Unicycle, *x0, self.radius, self.grid.horizon(), self.grid.steps()))
            .collect()
    }
}

impl Scenario {
    fn with_modes(name: &str, modes: Vec<GaussianMode>) -> Self {
        Self {
            name: name.to_string(),
            domain: DomainConfig { bounds: vec![1.0, 1.0], harmonics: vec![10, 10], quadrature: DEFAULT_QUADRATURE },
            mixture: MixtureConfig { modes },
            weights: WeightsConfig {
                q: 100.0,
                r_control: diag(&[0.03, 0.03]),
                r: 1.0,
                w: diag(&[1.0, 1.0, 0.0]),
                q_n: diag(&[450.0; 3]),
                r_n: diag(&[14.5; 2]),
                p1_n: diag(&[50.0; 3]),
                q_lqr: diag(&[1.0; 3]),
                r_lqr: diag(&[1.0; 2]),
                rho: 1e-4,
                beta: 0.99,
                h_max: 1000,
                i_max: 70,
                pair_overrides: Vec::new(),
            },
            graph: GraphSpec::Random { n: None, p: 0.4, seed: DEFAULT_GRAPH_SEED },
            run: RunConfig {
                horizon: 3.5,
                steps: DEFAULT_STEPS,
                radius: 0.05,
                agents: 5,
                seed: 0,
                epsilon_opt: 99.5,
                epsilon_r: None,
            },
        }
    }

    /// Dominant central mode ringed by four minor ones.
    pub fn volcano() -> Self {
        let mut modes = vec![GaussianMode::isotropic(0.6, vec![0.5, 0.5], 0.014)];
        for mean in [[0.75, 0.5], [0.25, 0.5], [0.5, 0.75], [0.5, 0.25]] {
            modes.push(GaussianMode::isotropic(0.1, mean.to_vec(), 0.004));
        }
        Self::with_modes("volcano", modes)
    }

    /// Four equal islands.
    pub fn archipelago() -> Self {
        let modes = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]]
            .into_iter()
            .map(|mean| GaussianMode::isotropic(0.25, mean.to_vec(), 0.006))
            .collect();
        Self::with_modes("archipelago", modes)
    }

    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "volcano" => Ok(Self::volcano()),
            "archipelago" => Ok(Self::archipelago()),
            other => Err(Error::UnknownScenario(other.to_string())),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("scenario file: {e}")))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("scenario serialization: {e}")))
    }

    /// Validates the configuration and assembles every numerical input.
    pub fn build(&self) -> Result<Problem> {
        let d = &self.domain;
        let domain = Domain::new(d.bounds.clone(), (0..d.bounds.len()).collect(), 3)?;
        let mixture = GaussianMixture::new(self.mixture.modes.clone(), &domain, d.quadrature)?;
        let spectral = SpectralSet::new(&domain, d.harmonics.clone())?;
        let p = spatial_coefficients(&mixture, &spectral, d.quadrature)?;
        let weights = self.cost_weights()?;
        let grid = TimeGrid::new(self.run.horizon, self.run.steps)?;
        if !(self.run.radius.is_finite() && self.run.radius > 0.0) {
            return Err(Error::Config("initial circle radius must be positive".into()));
        }
        if self.run.agents == 0 {
            return Err(Error::Config("at least one agent is required".into()));
        }
        if !(self.run.epsilon_opt > 0.0 && self.run.epsilon_opt <= 100.0) {
            return Err(Error::Config(format!("epsilon_opt {} outside (0, 100]", self.run.epsilon_opt)));
        }
        Ok(Problem { name: self.name.clone(), domain, mixture, spectral, p, weights, grid, radius: self.run.radius })
    }

    pub fn cost_weights(&self) -> Result<CostWeights<3, 2>> {
        let w = &self.weights;
        let pair_overrides = w
            .pair_overrides
            .iter()
            .map(|o| {
                Ok(PairOverride {
                    agents: o.agents,
                    r: o.r,
                    w: o.w.as_ref().map(|m| matrix::<3>(m, "pair override w")).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let weights = CostWeights {
            q: w.q,
            control: matrix::<2>(&w.r_control, "r_control")?,
            pair_penalty: w.r,
            distance: matrix::<3>(&w.w, "w")?,
            pair_overrides,
            descent: QuadraticModel {
                q: matrix::<3>(&w.q_n, "q_n")?,
                r: matrix::<2>(&w.r_n, "r_n")?,
                terminal: matrix::<3>(&w.p1_n, "p1_n")?,
            },
            q_lqr: matrix::<3>(&w.q_lqr, "q_lqr")?,
            r_lqr: matrix::<2>(&w.r_lqr, "r_lqr")?,
            rho: w.rho,
            beta: w.beta,
            max_backtracks: w.h_max,
            max_iterations: w.i_max,
        };
        weights.validate()?;
        Ok(weights)
    }
}

/// `n` initial unicycle states with `X, Y ~ U[0.05, 0.95]` and `θ ~ U[0, 2π]`.
pub fn random_initials(seed: u64, n: usize) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = rng.random_range(0.05..=0.95);
            let y = rng.random_range(0.05..=0.95);
            let th = rng.random_range(0.0..=std::f64::consts::TAU);
            Vector3::new(x, y, th)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_parameters() {
        let v = Scenario::volcano();
        assert_eq!(v.weights.q, 100.0);
        assert_eq!(v.mixture.modes.len(), 5);
        assert_eq!(v.mixture.modes[0].weight, 0.6);
        assert!(v.mixture.modes[1..].iter().all(|m| m.weight == 0.1 && m.covariance[0][0] == 0.004));
        let total: f64 = v.mixture.modes.iter().map(|m| m.weight).sum();
        assert!((total - 1.0).abs() < 1e-15);

        let a = Scenario::archipelago();
        let means: Vec<_> = a.mixture.modes.iter().map(|m| m.mean.clone()).collect();
        assert_eq!(means, vec![vec![0.25, 0.25], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.75, 0.75]]);
        assert!(a.mixture.modes.iter().all(|m| m.covariance[1][1] == 0.006));
        assert!(matches!(Scenario::builtin("plateau"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn builtin_weights() {
        let w = Scenario::volcano().cost_weights().unwrap();
        assert_eq!(w.control, nalgebra::Matrix2::identity() * 0.03);
        assert_eq!(w.distance, nalgebra::Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)));
        assert_eq!(w.descent.q, nalgebra::Matrix3::identity() * 450.0);
        assert_eq!(w.descent.r, nalgebra::Matrix2::identity() * 14.5);
        assert_eq!(w.descent.terminal, nalgebra::Matrix3::identity() * 50.0);
        assert_eq!((w.rho, w.beta, w.max_iterations), (1e-4, 0.99, 70));
    }

    #[test]
    fn toml_round_trip() {
        for s in [Scenario::volcano(), Scenario::archipelago()] {
            let text = s.to_toml_string().unwrap();
            let back = Scenario::from_toml_str(&text).unwrap();
            assert_eq!(back, s);
        }
        let mut s = Scenario::volcano();
        s.graph = GraphSpec::Edges(vec![(0, 1), (1, 2)]);
        s.weights.pair_overrides.push(PairOverrideConfig { agents: (0, 2), r: Some(2.0), w: None });
        s.run.epsilon_r = Some(95.0);
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap(), s);
        s.graph = GraphSpec::Complete;
        assert_eq!(Scenario::from_toml_str(&s.to_toml_string().unwrap()).unwrap(), s);
    }

    #[test]
    fn integers_are_accepted_for_reals() {
        let text = Scenario::volcano().to_toml_string().unwrap().replace("q = 100.0", "q = 100");
        assert_eq!(Scenario::from_toml_str(&text).unwrap().weights.q, 100.0);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(Scenario::from_toml_str("name = 3").is_err());
        let text = Scenario::volcano().to_toml_string().unwrap().replace("i_max = 70", "i_max = 70\nbogus = 1");
        assert!(Scenario::from_toml_str(&text).is_err());
        let mut s = Scenario::volcano();
        s.weights.r_n = diag(&[1.0; 3]);
        assert!(s.build().is_err());
        let mut s = Scenario::volcano();
        s.domain.quadrature = 50;
        assert!(s.build().is_err());
    }

    #[test]
    fn initials_are_reproducible_and_bounded() {
        assert_eq!(random_initials(7, 5), random_initials(7, 5));
        assert_ne!(random_initials(7, 1)[0], random_initials(8, 1)[0]);
        let draws = random_initials(1, 10_000);
        for x in &draws {
            assert!((0.05..=0.95).contains(&x[0]) && (0.05..=0.95).contains(&x[1]));
            assert!((0.0..=std::f64::consts::TAU).contains(&x[2]));
        }
        let min = draws.iter().map(|x| x[0]).fold(f64::INFINITY, f64::min);
        let max = draws.iter().map(|x| x[0]).fold(f64::NEG_INFINITY, f64::max);
        assert!(min < 0.06 && max > 0.94);
    }
}
