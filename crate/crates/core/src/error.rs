use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The logarithm was requested at (or too close to) the cut locus, tr(R) = -1.
    #[error("rotation angle too close to pi (trace = {trace})")]
    AngleNearPi { trace: f64 },

    #[error("rotation invariant violated: {0}")]
    InvalidRotation(String),

    #[error("inertia tensor invalid: {0}")]
    InvalidInertia(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("(A, B) is not controllable")]
    NotControllable,

    #[error("no stabilizing Riccati solution (Hamiltonian eigenvalue on the imaginary axis)")]
    NoStabilizingSolution,

    #[error("Riccati integration escaped at t = {t} (|K| > 1e9)")]
    StepTooLarge { t: f64 },

    #[error("simulation diverged at t = {t} (|omega| = {norm})")]
    NumericalDivergence { t: f64, norm: f64 },

    #[error("trajectory entered obstacle {index} at t = {t}")]
    ObstacleContact { index: usize, t: f64 },

    #[error("shooting did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("line search stalled for {stalled} consecutive iterations")]
    NoDescent { stalled: usize },
}

impl Error {
    /// Short machine-readable tag for the error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::AngleNearPi { .. } => "angle_near_pi",
            Error::InvalidRotation(_) => "invalid_rotation",
            Error::InvalidInertia(_) => "invalid_inertia",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotControllable => "not_controllable",
            Error::NoStabilizingSolution => "no_stabilizing_solution",
            Error::StepTooLarge { .. } => "step_too_large",
            Error::NumericalDivergence { .. } => "numerical_divergence",
            Error::ObstacleContact { .. } => "obstacle_contact",
            Error::NoConvergence { .. } => "no_convergence",
            Error::NoDescent { .. } => "no_descent",
        }
    }
}
