use thiserror::Error;

/// Errors shared across the crate's numerical operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Latitude outside the open interval (-pi/2, pi/2), or not finite.
    #[error("latitude {0} is outside the open interval (-pi/2, pi/2)")]
    InvalidLatitude(f64),

    /// A point or finite-difference stencil reached into the polar puncture.
    #[error("operation at latitude {latitude} needs clearance {needed} from the pole")]
    PoleProximity { latitude: f64, needed: f64 },

    /// A quantity that must be finite evaluated to NaN or infinity.
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },

    /// Invalid quadrature or grid geometry.
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    /// Refinement or iteration hit its cap without meeting tolerance.
    #[error("{what} did not converge: {detail}")]
    NonConvergence { what: &'static str, detail: String },

    /// Adaptive step size underflowed near the pole.
    #[error("step size collapsed to {step} at latitude {latitude}")]
    StepCollapse { step: f64, latitude: f64 },

    /// Backtracking line search could not find a decrease.
    #[error("line search failed at iteration {iteration} (step {step})")]
    LineSearchFailure { iteration: usize, step: f64 },

    /// Malformed checkpoint or grid data.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
