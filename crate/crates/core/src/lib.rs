//! Decentralized multi-agent ergodic trajectory planning.
//!
//! A team of agents plans trajectories whose time-averaged occupancy matches
//! an information density, measured by a weighted distance between Fourier
//! cosine coefficients. Each agent improves its own plan by projection-operator
//! descent (LQ descent direction, Armijo backtracking, LQR projection) while
//! only exchanging trajectory estimates with its graph neighbours.

pub mod basis;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod field;
pub mod lq;
pub mod metrics;
pub mod network;
pub mod objective;
pub mod planner;
pub mod projection;
pub mod scenario;

pub use basis::{Coefficients, SpectralSet};
pub use dynamics::{Direction, Dynamics, LinearizedDynamics, TimeGrid, Trajectory, TrajectoryKind, Unicycle};
pub use engine::{plan, run_problem, run_scenario, team_ergodicity, RunOptions, RunOutcome};
pub use error::{Error, Result};
pub use field::{Domain, GaussianMixture, GaussianMode};
pub use metrics::{ErgodicityCurve, RunRecord};
pub use network::{CommGraph, GraphSpec};
pub use objective::CostWeights;
pub use planner::{AgentView, IterationRecord, PlannerContext};
pub use scenario::{Problem, Scenario};
