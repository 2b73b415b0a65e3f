use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension for {what}: expected {expected}, got {got}")]
    InvalidDimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("normal form inconsistent with the plant: max residual {residual:.3e}")]
    InconsistentNormalForm { residual: f64 },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid horizon: {0}")]
    InvalidHorizon(String),
    #[error("cost evaluation produced a non-finite value")]
    NonFiniteCost,
    #[error("Riccati integration blew up even after step refinement")]
    StepTooLarge,
    #[error("no stabilizing solution found (pair not stabilizable)")]
    NotStabilizable,
    #[error("solver failed at closed-loop step {step}: {source}")]
    SolverFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("degenerate constants: {0}")]
    DegenerateConstants(String),
    #[error("sample set is empty")]
    EmptySamples,
    #[error("zero dynamics are not exponentially minimum-phase")]
    NotMinimumPhase,
    #[error("decrement inequality violated: worst normalized slack {worst:.3e}")]
    DecrementViolated { worst: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::InvalidDimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

pub(crate) fn check_epsilon(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::NonPositiveEpsilon(eps));
    }
    Ok(())
}
