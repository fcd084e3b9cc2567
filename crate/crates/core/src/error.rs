use thiserror::Error;

/// Errors raised by the solvers and model constructors.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The loss or cost function fails one of its structural requirements.
    #[error("invalid loss function: {0}")]
    InvalidLoss(String),

    /// A candidate value function lies outside the order interval [phi, psi].
    #[error(
        "function leaves the order interval at x = {x}: value {value}, bounds [{lower}, {upper}]"
    )]
    OutsideOrderInterval {
        x: f64,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// Value-function iteration stopped before the successive change fell below tolerance.
    #[error("no convergence after {iterations} iterations (last sup-norm change {last_change:e})")]
    NotConverged { iterations: usize, last_change: f64 },

    /// A rolled-out action sequence increased, which means the grid is too coarse.
    #[error("action sequence increases at step {step}: {previous} -> {next}")]
    IncreasingActions {
        step: usize,
        previous: f64,
        next: f64,
    },

    /// Bisection could not bracket a root.
    #[error("bisection failed to bracket a root: {0}")]
    Bracketing(String),

    /// The closed-form city hierarchy requires theta < 1/k.
    #[error("infeasible city hierarchy: theta = {theta} must be below 1/k = {bound} (needs tau > {min_tau})")]
    InfeasibleCity {
        theta: f64,
        bound: f64,
        min_tau: f64,
    },

    /// Too few points for a regression.
    #[error("need at least {needed} layers, got {got}")]
    TooFewLayers { needed: usize, got: usize },

    /// The assembly cost grows too slowly to cap the supplier count.
    #[error("supplier bound exceeds {limit}; assembly cost grows too slowly")]
    UnboundedSuppliers { limit: u32 },

    /// A rollout hit its length limit before the residual mass fell below the cut.
    #[error("{what} exceeded the limit of {limit}")]
    TruncationLimit { what: &'static str, limit: usize },

    /// An exhaustive search would exceed its evaluation budget.
    #[error("search budget exceeded: {paths} paths > {limit}")]
    BudgetExceeded { paths: u128, limit: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
