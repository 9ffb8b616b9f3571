use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested tolerance could not be met within the subdivision budget.
    #[error("quadrature did not converge: best estimate {estimate:e}, error estimate {error:e}")]
    Convergence { estimate: f64, error: f64 },

    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("post-selection infeasible: exceedance {exceedance:e} at t_min = {t_min}")]
    InfeasiblePostSelection { t_min: f64, exceedance: f64 },

    #[error("correlation undefined: no coincidences at angles ({theta_a}, {theta_b})")]
    UndefinedCorrelation { theta_a: f64, theta_b: f64 },

    #[error("Fock truncation too small: retained norm {norm:.3e} below 1 - 1e-10, increase nmax beyond {nmax}")]
    Truncation { nmax: usize, norm: f64 },

    #[error("not supported: {0}")]
    NotSupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
