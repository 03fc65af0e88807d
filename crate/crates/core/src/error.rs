use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Two half-lines with the same speed never meet at a single point.
    #[error("equal speeds {speed} on two trajectories")]
    EqualSpeeds { speed: String },

    /// A bullet would take part in two simultaneous collisions, or three
    /// trajectories meet in one point.
    #[error("singular parameter: {detail}")]
    SingularParameter { detail: String },

    #[error("dimension mismatch: {detail}")]
    DimensionMismatch { detail: String },

    #[error("invalid {field}: {reason}")]
    InvalidInput { field: String, reason: String },

    #[error("parameter is not generic ({patterns} critical pattern(s))")]
    NotGeneric { patterns: usize },

    #[error("size limit exceeded: n = {n} > {max}")]
    SizeLimit { n: usize, max: usize },

    #[error("TCS recursion stuck on bullet set {set:?}")]
    RecursionStuck { set: Vec<usize> },

    #[error("degenerate constraint: {detail}")]
    DegenerateConstraint { detail: String },

    #[error("empty sample")]
    EmptySample,
}

impl Error {
    pub(crate) fn invalid(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidInput {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn singular(detail: impl Into<String>) -> Self {
        Error::SingularParameter {
            detail: detail.into(),
        }
    }
}
