use thiserror::Error;

/// Errors raised by analysis and synthesis routines.
///
/// Admissibility problems of a model are *reported* by [`crate::model::validate`]
/// rather than raised; the variants here cover preconditions that make an
/// operation meaningless.
#[derive(Debug, Error)]
pub enum NetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("system is not well-posed: sigma_min(I - Phi*A_SS) = {sigma_min:e} <= {tol:e}")]
    IllPosed { sigma_min: f64, tol: f64 },

    #[error("interconnection entry ({row}, {col}) = {value} is not 0 or 1; normalize first")]
    NonBinary { row: usize, col: usize, value: f64 },

    #[error("non-finite entry in {0}")]
    NonFinite(String),

    #[error("zeros of non-FCNR block are ill-defined here")]
    NotFcnr,

    #[error("{lambda} is not a zero of the block (sigma_min = {sigma_min:e}, threshold {threshold:e})")]
    NotAZero {
        lambda: nalgebra::Complex<f64>,
        sigma_min: f64,
        threshold: f64,
    },

    #[error("Theta singular on subsystem {subsystem}; controllability weighting undefined")]
    SingularTheta { subsystem: usize },

    #[error("subsystem {subsystem}: budget {budget} below p_max = {p_max}")]
    BudgetBelowPmax {
        subsystem: usize,
        budget: usize,
        p_max: usize,
    },

    #[error("no observing matrix found after {0} draws; tolerance settings look degenerate")]
    RetriesExhausted(usize),

    #[error("construction did not converge within {0} iterations")]
    NotConverged(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("document error: {0}")]
    Document(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;
