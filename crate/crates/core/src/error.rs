use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("terminal {terminal} was scheduled with an empty buffer")]
    EmptyBuffer { terminal: usize },

    #[error("decision names terminal {terminal} but only {count} terminals exist")]
    UnknownTerminal { terminal: usize, count: usize },

    #[error("horizon must be at least one slot")]
    ZeroHorizon,

    #[error(
        "no consistent (D1, J) pair for lambda={lambda}, m={charge} within {searched} candidates"
    )]
    NoConsistentThreshold {
        lambda: f64,
        charge: f64,
        searched: u64,
    },

    #[error("value iteration did not converge after {iterations} iterations (span residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("state space of {states} states exceeds the limit of {limit}")]
    StateSpaceTooLarge { states: usize, limit: usize },

    #[error("optimal action at (a={a}, d={d}) does not flip for charges in [0, {upper}]")]
    NoFlip { a: u64, d: u64, upper: f64 },

    #[error("deadline spec is infeasible: Pr{{h > {deadline}}} = {tail:e} > {epsilon:e} even at interval 1")]
    Infeasible {
        deadline: u64,
        epsilon: f64,
        tail: f64,
    },

    #[error("no free slot left for terminal {terminal} in a hyperperiod of {hyperperiod}")]
    ScheduleOverflow { terminal: usize, hyperperiod: u64 },

    #[error("search grid is degenerate: {0}")]
    DegenerateGrid(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
