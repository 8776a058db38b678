use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bandwidth {0}: must be positive and finite")]
    InvalidBandwidth(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {value} in coordinate {coord} lies outside [{lo}, {hi}]")]
    OutOfDomain {
        coord: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("ill-conditioned Gram matrix (k = {k}, n = {n}, h = {h}): min eigenvalue {min_eig:.3e} below floor {floor:.1e}")]
    IllConditionedGram {
        k: usize,
        n: usize,
        h: f64,
        min_eig: f64,
        floor: f64,
    },

    #[error("positivity violation: density {value:.3e} below floor {floor:.1e} at observation {index}")]
    PositivityViolation { index: usize, value: f64, floor: f64 },

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("invalid tuple {0:?}: indices must be distinct and in range")]
    InvalidTuple(Vec<usize>),

    #[error("quadrature did not converge at t = {t}: |I({coarse}) - I({fine})| = {diff:.3e}")]
    QuadratureNotConverged {
        t: f64,
        coarse: usize,
        fine: usize,
        diff: f64,
    },

    #[error("quantile regression did not converge after {iterations} iterations (last change {last_change:.3e})")]
    QuantileNotConverged { iterations: usize, last_change: f64 },

    #[error("cross-fitting rotation {rotation} failed: {source}")]
    Rotation {
        rotation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{failed} of {total} replications failed at alpha = {alpha} (limit is 1%)")]
    TooManyFailures {
        alpha: f64,
        failed: usize,
        total: usize,
    },

    #[error("malformed input at line {line}: {message}")]
    MalformedInput { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad user input rather than numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidBandwidth(_)
                | Error::InvalidParameter(_)
                | Error::OutOfDomain { .. }
                | Error::MalformedInput { .. }
                | Error::Io(_)
                | Error::Csv(_)
        )
    }
}
