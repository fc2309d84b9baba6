use thiserror::Error;

/// Errors produced by the noise model, the search and the file layer.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the formula it is fed to.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested idler bandwidth cannot be produced by any SRC phase.
    #[error("bandwidth {target:.6e} rad/s is unreachable (achievable range [{min:.6e}, {max:.6e}] rad/s)")]
    UnreachableBandwidth { target: f64, min: f64, max: f64 },

    /// The measured idler quadrature carries no fluctuations to condition on.
    #[error("singular conditioning: measured quadrature variance {0:.3e}")]
    Singular(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("no working point available: {0}")]
    NoWorkingPoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
