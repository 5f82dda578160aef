use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which physical bound makes a power-design problem infeasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingBound {
    /// The mean intertransmission time is too long for any power vector.
    TransmissionInterval,
    /// Stabilising powers exist but exceed the power cap.
    PowerCap,
    /// The slack `delta` swallows the whole stability requirement.
    Delta,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("state matrix is not Hurwitz (max real part {max_real:.6e}); gain is infinite")]
    NotHurwitz { max_real: f64 },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("{what}: {value} violates bound {bound}")]
    Domain {
        what: &'static str,
        value: f64,
        bound: f64,
    },

    #[error("a node has zero success probability; cover time is infinite")]
    InfiniteCover,

    #[error("series diverges: {0}")]
    Divergent(String),

    #[error("protocol is not a.s. UGES: kappa_bar = {kappa_bar} >= 1")]
    NotAsUges { kappa_bar: f64 },

    #[error("no rate up to {limit:e} satisfies the small-gain condition")]
    UnboundedRate { limit: f64 },

    #[error("infeasible ({bound:?}): {detail}")]
    Infeasible { bound: BindingBound, detail: String },

    #[error("degenerate pivot: {0}")]
    DegeneratePivot(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. }
            | Error::UnboundedRate { .. }
            | Error::NotAsUges { .. }
            | Error::InfiniteCover => 2,
            Error::NotHurwitz { .. }
            | Error::NoConvergence(_)
            | Error::Bracket(_)
            | Error::NonFinite(_)
            | Error::Divergent(_)
            | Error::DegeneratePivot(_) => 3,
            Error::Dimension(_)
            | Error::InvalidParameter(_)
            | Error::Domain { .. }
            | Error::Config(_)
            | Error::Json(_) => 4,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
