use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no fiber root: P(u) = {potential} is not negative")]
    NoRoot { potential: f64 },
    #[error("no convergence after {iterations} iterations (last relative decrease {last_decrease:e})")]
    NonConvergence {
        iterations: usize,
        last_decrease: f64,
    },
    #[error("rescaled field is under-resolved: spectral tail {tail:e}")]
    Resample { tail: f64 },
    #[error("time step too large: sup|V| dt = {phase} >= pi")]
    Stability { phase: f64 },
    #[error("gradient growth sentinel at t = {time}: |grad u| grew by {factor:.1}x")]
    BlowupSentinel { time: f64, factor: f64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("wrap-around window violated: {0}")]
    Window(String),
    #[error("profile does not fit the box: {0}")]
    BoxOverflow(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("malformed snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Numerical failures as opposed to callers breaking an operation's contract.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::Resample { .. }
                | Error::Stability { .. }
                | Error::BlowupSentinel { .. }
                | Error::Window(_)
                | Error::NoRoot { .. }
        )
    }
}
