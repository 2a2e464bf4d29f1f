use thiserror::Error;

/// Errors raised across fitting, sampling and I/O.
#[derive(Debug, Error)]
pub enum NappError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("linear predictor {eta:.3e} outside the certified range")]
    PredictorOutOfRange { eta: f64 },

    #[error("bounds not certifiable: {0}")]
    NotCertifiable(String),

    #[error("pseudo-outcome {e_y} gives l'(0) = 0 and cannot carry DP noise")]
    IncompatiblePseudoOutcome { e_y: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("Gaussian mechanism requires delta in (0, 1), got {0}")]
    GaussianNeedsDelta(f64),

    #[error("truncation at c = {c} is infeasible for p = {p}: acceptance rate below 1e-6")]
    InfeasibleTruncation { c: f64, p: usize },

    #[error("odd number of noise rows ({0}); antithetic pairing needs an even count")]
    OddNoiseRows(usize),

    #[error("Hessian numerically singular; increase n_e or check the variance schedule")]
    SingularHessian,

    #[error("no descent after {0} step halvings")]
    Divergence(usize),

    #[error("fit did not converge; budget retrieval requires a converged fit")]
    NotConverged,

    #[error("bound undefined: {0}")]
    BoundUndefined(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, NappError>;
