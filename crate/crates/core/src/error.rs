use thiserror::Error;

/// Errors produced by the greenwalk pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("aliasing violation: boundary density {boundary:.3e} exceeds {threshold:.0e}; enlarge the box")]
    AliasingViolation { boundary: f64, threshold: f64 },

    #[error("negative sample {value:.3e} at index {index}")]
    NegativeSample { index: usize, value: f64 },

    #[error("table is not even under x -> -x (max deviation {deviation:.3e})")]
    AsymmetricTable { deviation: f64 },

    #[error("table has zero total mass")]
    ZeroMass,

    #[error("1 - a_hat(k) <= 0 at probe k = {k:.3e}; probe window is not usable")]
    DegenerateProbe { k: f64 },

    #[error("Green measure diverges: d = {dim} <= alpha = {alpha}")]
    DivergentGreenMeasure { dim: usize, alpha: f64 },

    #[error("tail exponent alpha unknown; attach fitted tail parameters to the kernel")]
    UnknownTailExponent,

    #[error("quadrature did not converge: estimate {estimate:.6e}, error {error:.3e}")]
    QuadratureNonConvergence { estimate: f64, error: f64 },

    #[error("series truncated after {terms} terms: {reason}")]
    SeriesTruncated { terms: usize, reason: String },

    #[error("kernel '{0}' has no jump sampler")]
    NoJumpSampler(String),

    #[error("subordinator '{0}' has no increment sampler")]
    NoIncrementSampler(String),

    #[error("point {0:?} lies outside the binned box")]
    PointOutsideBins(Vec<f64>),

    #[error("first passage over level {level} not reached within {steps} steps")]
    StepCapExceeded { level: f64, steps: u64 },

    #[error("Laplace inversion unstable at (t = {t}, tau = {tau}): orders disagree ({low:.6e} vs {high:.6e})")]
    InversionInstability { t: f64, tau: f64, low: f64, high: f64 },

    #[error("function is not in CL: {0}")]
    NotInCl(String),

    #[error("subordinator rejected: {0}")]
    Inadmissible(String),

    #[error("truncation tail bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TailBound { bound: f64, tol: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown experiment '{0}'")]
    UnknownExperiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable tag used in error JSON and exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidDimension(_) => "invalid_dimension",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::AliasingViolation { .. } => "aliasing_violation",
            Error::NegativeSample { .. } => "negative_sample",
            Error::AsymmetricTable { .. } => "asymmetric_table",
            Error::ZeroMass => "zero_mass",
            Error::DegenerateProbe { .. } => "degenerate_probe",
            Error::DivergentGreenMeasure { .. } => "divergent_green_measure",
            Error::UnknownTailExponent => "unknown_tail_exponent",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::SeriesTruncated { .. } => "series_truncated",
            Error::NoJumpSampler(_) => "no_jump_sampler",
            Error::NoIncrementSampler(_) => "no_increment_sampler",
            Error::PointOutsideBins(_) => "point_outside_bins",
            Error::StepCapExceeded { .. } => "step_cap_exceeded",
            Error::InversionInstability { .. } => "inversion_instability",
            Error::NotInCl(_) => "not_in_cl",
            Error::Inadmissible(_) => "inadmissible",
            Error::TailBound { .. } => "tail_bound",
            Error::Unsupported(_) => "unsupported",
            Error::Config(_) => "config",
            Error::UnknownExperiment(_) => "unknown_experiment",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
