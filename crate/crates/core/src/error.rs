use thiserror::Error;

/// Errors raised across scenario handling, the allocators and the tracker.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("failed to parse scenario: {0}")]
    Parse(String),

    #[error("invalid scenario field `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("{subchannels} subchannels are not divisible by a comm block size of {block}")]
    Divisibility { subchannels: usize, block: usize },

    #[error("{users} macro users cannot be given disjoint blocks out of {blocks}")]
    TooManyUsers { users: usize, blocks: usize },

    #[error("target coincides with radar position; range is zero")]
    DegenerateGeometry,

    #[error("matrix is singular or not positive definite ({0})")]
    Singular(&'static str),

    #[error("power-dwell product is zero; measurement variance is unbounded")]
    InfiniteVariance,

    #[error("iterated least squares did not converge in {0} iterations")]
    NoConvergence(usize),

    #[error("macro user {user} has no feasible frequency block")]
    UserInfeasible { user: usize },

    #[error("frequency assignment problem too large for exhaustive search ({0} assignments)")]
    TooLarge(f64),

    #[error("constraint set is empty: {0}")]
    InfeasiblePolytope(String),

    #[error("allocation is infeasible: {0}")]
    Infeasible(String),

    #[error("non-finite objective value")]
    NonFinite,

    #[error("random allocation rejected {0} draws without finding a feasible one")]
    RejectionLimit(usize),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for errors that mean a constraint set could not be satisfied.
    pub fn is_infeasibility(&self) -> bool {
        matches!(
            self,
            Error::UserInfeasible { .. }
                | Error::InfeasiblePolytope(_)
                | Error::Infeasible(_)
                | Error::RejectionLimit(_)
                | Error::TooManyUsers { .. }
        )
    }
}
