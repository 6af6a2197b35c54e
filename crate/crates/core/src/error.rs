use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("closed-form solutions require c0 = 0 (got c0 = {0})")]
    NonzeroInitialComplex(f64),

    #[error("time must be nonnegative (got t = {0})")]
    NegativeTime(f64),

    /// The H comparison matrix has a nonnegative eigenvalue once s0 >= K, so
    /// the upper estimates no longer decay.
    #[error("upper bound invalid: s0 = {s0} must be below K = k2/k1 = {k} (upper estimates become useless)")]
    UpperBoundUnusable { s0: f64, k: f64 },

    #[error("integrator exhausted {steps} steps at t = {t}; reduce the horizon or loosen the tolerances")]
    StepLimit { steps: usize, t: f64 },

    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("only {got} successful points, need at least {need}")]
    InsufficientPoints { got: usize, need: usize },

    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("normal equations are rank deficient")]
    RankDeficient,

    #[error("malformed observation table: {0}")]
    Table(String),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepLimit { .. }
                | Error::StepSizeUnderflow { .. }
                | Error::InsufficientPoints { .. }
                | Error::RankDeficient
        )
    }
}
