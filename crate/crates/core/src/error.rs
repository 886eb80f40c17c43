use thiserror::Error;

/// Errors raised by every stage of the slow-manifold pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix is not diagonalizable (smallest eigenvector singular value {sigma_min:.3e})")]
    NonDiagonalizable { sigma_min: f64 },
    #[error("singular linear system (condition estimate {cond:.3e})")]
    Singular { cond: f64 },
    #[error("integrator exceeded {steps} steps at t = {t}")]
    StepLimitExceeded { steps: usize, t: f64 },
    #[error("solution norm {norm:.3e} exceeded the blow-up bound at t = {t}")]
    BlowUp { t: f64, norm: f64 },

    #[error("unknown model `{0}`")]
    UnknownModel(String),
    #[error("model `{model}` has no parameter `{name}`")]
    UnknownParameter { model: String, name: String },
    #[error("derivative tensor of order {order} is not available")]
    OrderUnavailable { order: usize },
    #[error("finite-difference tensor of order {order} is unreliable (relative disagreement {rel_diff:.3e})")]
    FdUnreliable { order: usize, rel_diff: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("fixed point is not stable (eigenvalue real part {re:.3e})")]
    UnstableFixedPoint { re: f64 },
    #[error("slow-mode count {beta} splits a complex-conjugate pair")]
    PairSplit { beta: usize },
    #[error("slow-mode count {beta} is outside 1..{dim}")]
    OutOfRange { beta: usize, dim: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("trajectory left the basin of attraction at t = {t}")]
    BasinEscape { t: f64 },
    #[error("trajectory did not reach the linear regime within horizon {horizon}")]
    HorizonExceeded { horizon: f64 },

    #[error("resonant multi-index {tuple:?}: shifted matrix condition {cond:.3e}")]
    Resonance { tuple: Vec<usize>, cond: f64 },
    #[error("expansion order {order} too expensive (estimate {estimate:.3e} entries)")]
    OrderTooHigh { order: usize, estimate: f64 },

    #[error("ill-conditioned backward-time system (condition {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("fast eigenvector basis is degenerate (sigma_min {sigma_min:.3e})")]
    DegenerateFastBasis { sigma_min: f64 },
    #[error("correction magnitude ratio {ratio:.3e} exceeded the abort threshold at backward time {t_back}")]
    AbortOnDivergence { t_back: f64, ratio: f64 },
    #[error("only {succeeded} of {total} rays were traced successfully")]
    InsufficientRays { succeeded: usize, total: usize },

    #[error("manifold does not cover any radius beyond the seed set")]
    InsufficientCoverage,
    #[error("reduced model left its tabulated domain at t = {t} (|psi| = {radius:.4})")]
    DomainExit { t: f64, radius: f64 },
    #[error("forced response did not settle (cycle maxima {maxima:?})")]
    NotSettled { maxima: Vec<f64> },
    #[error("no period doubling found in the amplitude range")]
    NoBifurcationInRange,

    #[error("missing column: {0}")]
    MissingColumn(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable identifier, used in CLI diagnostics.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite(_) => "non_finite",
            Error::NonDiagonalizable { .. } => "non_diagonalizable",
            Error::Singular { .. } => "singular",
            Error::StepLimitExceeded { .. } => "step_limit_exceeded",
            Error::BlowUp { .. } => "blow_up",
            Error::UnknownModel(_) => "unknown_model",
            Error::UnknownParameter { .. } => "unknown_parameter",
            Error::OrderUnavailable { .. } => "order_unavailable",
            Error::FdUnreliable { .. } => "fd_unreliable",
            Error::NoConvergence { .. } => "no_convergence",
            Error::UnstableFixedPoint { .. } => "unstable_fixed_point",
            Error::PairSplit { .. } => "pair_split",
            Error::OutOfRange { .. } => "out_of_range",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::BasinEscape { .. } => "basin_escape",
            Error::HorizonExceeded { .. } => "horizon_exceeded",
            Error::Resonance { .. } => "resonance",
            Error::OrderTooHigh { .. } => "order_too_high",
            Error::IllConditioned { .. } => "ill_conditioned",
            Error::DegenerateFastBasis { .. } => "degenerate_fast_basis",
            Error::AbortOnDivergence { .. } => "abort_on_divergence",
            Error::InsufficientRays { .. } => "insufficient_rays",
            Error::InsufficientCoverage => "insufficient_coverage",
            Error::DomainExit { .. } => "domain_exit",
            Error::NotSettled { .. } => "not_settled",
            Error::NoBifurcationInRange => "no_bifurcation_in_range",
            Error::MissingColumn(_) => "missing_column",
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// True for errors caused by bad input or the environment rather than
    /// numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::UnknownModel(_)
                | Error::UnknownParameter { .. }
                | Error::PairSplit { .. }
                | Error::OutOfRange { .. }
                | Error::GridMismatch(_)
                | Error::InvalidConfig(_)
                | Error::MissingColumn(_)
                | Error::OrderTooHigh { .. }
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
