use num_complex::Complex64;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("jet order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("too close to a singularity at x = {x} (distance {distance:.3e})")]
    PoleProximity { x: Complex64, distance: f64 },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("step size {h:.3e} fell below h_min at t = {t}")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("exceeded {max_steps} integration steps")]
    MaxStepsExceeded { max_steps: usize },

    #[error("amplitude overflow: -Im(S)/hbar = {log_amplitude:.3e}")]
    Overflow { log_amplitude: f64 },

    #[error("Newton iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence { iters: usize, residual: f64 },

    #[error("Newton iterate {x0} left the search region")]
    LeftRegion { x0: Complex64 },

    #[error("degenerate Jacobian |M| = {modulus:.3e} (focal point)")]
    DegenerateJacobian { modulus: f64 },

    #[error("wavefunction grids do not match")]
    GridMismatch,

    #[error("comparison region [{lo}, {hi}] contains no grid points")]
    EmptyRegion { lo: f64, hi: f64 },

    #[error("grid cannot resolve momentum {required:.3e} (Nyquist limit {limit:.3e})")]
    NyquistViolation { required: f64, limit: f64 },

    #[error("edge amplitude {amplitude:.3e} exceeds tolerance {tol:.3e}")]
    EdgeContamination { amplitude: f64, tol: f64 },

    #[error("wavefunction at split point is {amplitude:.3e}; packet has not separated")]
    SplitPointContaminated { amplitude: f64 },

    #[error("invalid configuration at `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("pipeline failed: {0}")]
    Pipeline(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
