use thiserror::Error;

/// Errors raised by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the closed domain (signed distance {signed_distance:e})")]
    DomainViolation {
        point: Vec<f64>,
        signed_distance: f64,
    },

    #[error("nearest boundary point of {point:?} is not unique")]
    AmbiguousProjection { point: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("function is not finite at atom {atom} (location {location:?}, value {value})")]
    Evaluation {
        atom: usize,
        location: Vec<f64>,
        value: f64,
    },

    #[error("non-finite {what} for particle {particle} at time {time}")]
    Numeric {
        particle: usize,
        time: f64,
        what: &'static str,
    },

    #[error("grid spacing {spacing} is coarser than the unit ball radius")]
    Resolution { spacing: f64 },

    #[error("Picard iteration did not converge within {iterations} iterations (last distance {last_distance:e})")]
    NonConvergence {
        iterations: usize,
        last_distance: f64,
        trace: Vec<f64>,
    },

    #[error("ratio is indeterminate: denominator {denominator:e} below threshold {threshold:e}")]
    Indeterminate { denominator: f64, threshold: f64 },

    #[error("diffusion matrix a = σσ* is singular at {point:?}")]
    Singular { point: Vec<f64> },

    #[error("invalid test function: {0}")]
    InvalidTestFunction(String),

    #[error("expression error at column {column}: {message}")]
    Expression { column: usize, message: String },

    #[error("internal solver error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
