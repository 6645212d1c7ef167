use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration {config:#b} is not in the constrained basis")]
    Lookup { config: u64 },

    #[error("dimension {dim} exceeds the dense capacity limit {limit}")]
    Capacity { dim: usize, limit: usize },

    #[error("Krylov propagation did not converge (achieved residual {residual:e}, requested {tol:e})")]
    Convergence { residual: f64, tol: f64 },

    #[error("outcome {outcome} at site {site} has probability {probability:e}")]
    ImpossibleOutcome {
        site: usize,
        outcome: crate::measurement::Outcome,
        probability: f64,
    },

    #[error("ambiguous scar selection in rung {rung}: candidates (energy, entropy) {candidates:?}")]
    AmbiguousScar {
        rung: i32,
        candidates: Vec<(f64, f64)>,
    },

    #[error("no scar candidate found in rung {rung} around energy {center}")]
    MissingScar { rung: i32, center: f64 },

    #[error("degenerate collapse objective: {0}")]
    Objective(String),

    #[error("gamma_c = {gamma_c} lies outside the sampled range [{lo}, {hi}] for N = {n}")]
    Extrapolation { n: usize, gamma_c: f64, lo: f64, hi: f64 },

    #[error("simplex search did not converge after {iterations} iterations (best {best:?}, objective {objective})")]
    Optimizer {
        iterations: usize,
        best: (f64, f64),
        objective: f64,
        trace: Vec<f64>,
    },

    #[error("trajectory {index}: {source}")]
    Trajectory { index: usize, source: Box<Error> },

    #[error("linear algebra backend failure: {0}")]
    Linalg(String),
}

impl Error {
    /// The underlying error with trajectory context removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trajectory { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
