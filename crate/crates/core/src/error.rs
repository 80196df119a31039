use thiserror::Error;

/// Every failure the library reports. Variants carry enough context to print
/// a useful message from the CLI.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("zero order undetermined at t = {t}: derivatives up to order {max_order} vanish")]
    ZeroOrderUndetermined { t: f64, max_order: usize },
    #[error("bracketing failed: {0}")]
    BracketingFailed(String),
    #[error("quadrature tolerance exceeded (estimate {estimate:e}, tol {tol:e})")]
    QuadratureTolExceeded { estimate: f64, tol: f64 },
    #[error("anchor {anchor} lies inside the crossing region")]
    AnchorInsideCrossings { anchor: f64 },
    #[error("tail integral vanishes at anchor {anchor}; move the anchor")]
    TailIntegralVanishes { anchor: f64 },
    #[error("Newton iteration diverged for crossing {k} (residual {residual:e})")]
    NewtonDiverged { k: usize, residual: f64 },
    #[error("branch ambiguity on the action path for crossing {k}")]
    BranchAmbiguity { k: usize },
    #[error("step size underflow at t = {t} (dt = {dt:e})")]
    StepUnderflow { t: f64, dt: f64 },
    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudgetExhausted { t: f64, max_steps: u64 },
    #[error("tail integral not converged (bound {bound:e})")]
    TailNotConverged { bound: f64 },
    #[error("series not contracting (term ratio {ratio:.3} at depth {depth})")]
    SeriesNotContracting { ratio: f64, depth: usize },
    #[error("regime violation at crossing {k}: mu = {mu:.4e} ({detail})")]
    RegimeViolation { k: usize, mu: f64, detail: String },
    #[error("turning point failure at crossing {k}: {detail}")]
    TurningPointFailure { k: usize, detail: String },
    #[error("maximal order m_* = 1; use the Landau-Zener expansion instead")]
    MStarTooSmall,
    #[error("insufficient data for a rate fit ({usable} usable rows, need {needed})")]
    InsufficientData { usable: usize, needed: usize },
    #[error("no local minima found in the scanned range")]
    NoMinimaFound,
    #[error("path crosses the forbidden band everywhere")]
    PathCrossesForbiddenBand,
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidModel(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
