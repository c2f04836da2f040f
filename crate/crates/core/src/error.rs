use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{coord} = {value} lies outside the branch domain {domain}")]
    Domain {
        coord: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("singular point: electron coincides with nucleus {nucleus}")]
    SingularPoint { nucleus: u8 },

    #[error("shape-function construction failed: {0}")]
    Construction(String),

    #[error("assembly integrity: {0}")]
    AssemblyIntegrity(String),

    #[error("factorization of A - sigma*S failed for every trial shift (last sigma = {last_shift})")]
    Factorization { last_shift: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (best energy {best_energy}, residual {residual})")]
    NoConvergence {
        iterations: usize,
        best_energy: f64,
        residual: f64,
        best_vector: Vec<f64>,
    },

    #[error("minmax iteration: {0}")]
    Iteration(String),

    #[error("energy {energy} outside the electronic window (-2c^2, 0)")]
    Window { energy: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid pairing: {0}")]
    InvalidPairing(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
