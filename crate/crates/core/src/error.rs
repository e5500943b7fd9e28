use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("ambient dimension N = {0} is not supported (N >= 7 required)")]
    InvalidDimension(u32),

    #[error("adaptive quadrature did not converge: estimated error {estimate:e} exceeds target {target:e}")]
    QuadratureNotConverged { estimate: f64, target: f64 },

    #[error("points {0} and {1} coincide")]
    DuplicatePoints(usize, usize),

    #[error("kernel rank is numerically ambiguous: singular value {sigma:e} lies within a factor 10 of the cutoff {cutoff:e}")]
    IllConditioned { sigma: f64, cutoff: f64 },

    #[error("J = {0} exceeds the enumeration limit of 12 bubbles")]
    TooManyBubbles(usize),

    #[error("no sign change of the bracketing function on ({lo}, {hi})")]
    RootNotBracketed { lo: f64, hi: f64 },

    #[error("block count L = {l} must lie in 1..={max}")]
    LOutOfRange { l: usize, max: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("centers {i} and {j} collided at distance {distance:e}")]
    CollisionSingularity { i: usize, j: usize, distance: f64 },

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("trajectory covers {available:.3} decades, fit window needs {requested:.3}")]
    WindowTooShort { requested: f64, available: f64 },

    #[error("Newton iteration diverged after {iterations} iterations (|grad| = {grad_norm:e})")]
    NewtonDiverged { iterations: usize, grad_norm: f64 },

    #[error("trajectory is not in the self-similar regime: {0}")]
    RegimeMismatch(String),

    #[error("shooting failed: {reason}")]
    ShootingFailed {
        reason: String,
        exit_time: Option<f64>,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),
}

impl Error {
    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::QuadratureNotConverged { .. } => "quadrature_not_converged",
            Error::DuplicatePoints(..) => "duplicate_points",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::TooManyBubbles(_) => "too_many_bubbles",
            Error::RootNotBracketed { .. } => "root_not_bracketed",
            Error::LOutOfRange { .. } => "l_out_of_range",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::CollisionSingularity { .. } => "collision_singularity",
            Error::StepSizeUnderflow { .. } => "step_size_underflow",
            Error::WindowTooShort { .. } => "window_too_short",
            Error::NewtonDiverged { .. } => "newton_diverged",
            Error::RegimeMismatch(_) => "regime_mismatch",
            Error::ShootingFailed { .. } => "shooting_failed",
            Error::Parse { .. } => "parse_error",
            Error::Validation(_) => "validation_error",
        }
    }
}
