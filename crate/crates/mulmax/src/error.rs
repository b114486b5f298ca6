use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid configuration: {0}")]
    InvalidGrid(String),

    #[error("ancestor level {requested} above the root of a cube at level {level}")]
    OutOfRoot { level: u32, requested: u32 },

    #[error("no in-domain shifted-grid cover for cube at {0:?}")]
    CoverUnavailable(String),

    #[error("cube is not aligned to the lattice: {0}")]
    Misaligned(String),

    #[error("validation failed: {field}: {message}")]
    Validation { field: String, message: String },

    #[error("brute-force scope too large: {cost} cube-cell evaluations exceed budget {budget}")]
    BudgetExceeded { cost: u64, budget: u64 },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("internal invariant violated: {0}")]
    InvariantViolated(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
