use thiserror::Error;

/// Errors shared across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("measure has zero or non-finite total mass{0}")]
    ZeroMass(String),
    #[error("measures live on different supports")]
    SupportMismatch,
    #[error("models live in different ambient dimensions")]
    DimensionMismatch,
    #[error("expectation is not finite")]
    NonFinite,
    #[error("dataset rows do not match the schema expected by this risk: {0}")]
    SchemaMismatch(String),
    #[error("weight matrix V is not positive definite")]
    NotPositiveDefinite,
    #[error("active-set projection exceeded {0} iterations")]
    ProjectionNotConverged(usize),
    #[error("grid cell budget exceeded: {got} cells > budget {budget}")]
    BudgetExceeded { got: usize, budget: usize },
    #[error("unknown scenario id: {0}")]
    UnknownScenario(String),
    #[error("no compatible models; cannot regroup a mixture true model")]
    EmptyCompatibleSet,
    #[error("prior mass of (R - inf R < a) is zero for every a in the grid")]
    AllMassExcluded,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("sampler acceptance rate {0:.6} below 0.001; proposal misconfigured")]
    ChainNotMoved(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
