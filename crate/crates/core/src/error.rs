use thiserror::Error;

/// Errors raised by the planning library.
///
/// Variants split into configuration problems (bad input, detected before any
/// optimization work) and solver failures (numerical trouble mid-run).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("spectral sets do not match ({0})")]
    SpectralMismatch(String),

    #[error("trajectories do not share a time grid")]
    GridMismatch,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("riccati sweep diverged at t = {time:.6} s (norm {norm:e})")]
    RiccatiBlowUp { time: f64, norm: f64 },

    #[error("projection diverged at t = {time:.6} s (state norm {norm:e})")]
    ProjectionDiverged { time: f64, norm: f64 },

    #[error("line search precondition violated: directional derivative {0} is not negative")]
    NotDescent(f64),

    #[error("{0} is undefined for a zero reference value")]
    ZeroReference(&'static str),

    #[error("communication graph is disconnected")]
    Disconnected,

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
}

impl Error {
    /// True for errors caused by invalid input rather than numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::SpectralMismatch(_)
                | Error::GridMismatch
                | Error::EmptyTrajectory
                | Error::Disconnected
                | Error::UnknownScenario(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
