use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("structure relations violated: {relation} residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    ValidationFailed {
        relation: String,
        residual: f64,
        tolerance: f64,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("integration step failure at t = {t}: {reason}")]
    StepFailure { t: f64, reason: String },

    #[error("orbit trapped: no boundary exit within horizon {horizon}")]
    TrappedOrbit { horizon: f64 },

    #[error("Riccati solution blows up inside the window at t = {t}")]
    BlowupInsideWindow { t: f64 },

    #[error("limit did not converge: {0}")]
    NoConvergence(String),

    #[error("Riccati bound violated: |r| = {value} > {bound}")]
    BoundViolated { value: f64, bound: f64 },

    #[error("Riccati field unavailable: {0}")]
    RiccatiUnavailable(String),

    #[error("ill-conditioned operator: {measure} {value:.3e} is below {required:e}")]
    IllConditioned { measure: String, value: f64, required: f64 },

    #[error("least-squares solver diverged after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code: 1 for configuration or validation problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Parse { .. }
            | LabError::UnknownIdentifier { .. }
            | LabError::ValidationFailed { .. }
            | LabError::Domain(_)
            | LabError::Config(_)
            | LabError::Io(_)
            | LabError::Json(_) => 1,
            LabError::StepFailure { .. }
            | LabError::TrappedOrbit { .. }
            | LabError::BlowupInsideWindow { .. }
            | LabError::NoConvergence(_)
            | LabError::BoundViolated { .. }
            | LabError::RiccatiUnavailable(_)
            | LabError::IllConditioned { .. }
            | LabError::SolverDiverged { .. } => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
