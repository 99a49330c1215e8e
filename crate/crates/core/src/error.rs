use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {what} = {value} outside [{lo}, {hi}]")]
    Domain {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("quadrature did not converge: estimated error {achieved:e} > requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("ill-conditioned: {0}")]
    IllConditioned(String),

    #[error("root not found: {0}")]
    RootNotFound(String),

    #[error("persistence violated: no sign change of the regularized gradient on [{lo}, {hi}] at eps = {eps:e}")]
    PersistenceViolated { lo: f64, hi: f64, eps: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate density estimate: rho_hat(B) + rho_hat(B') = {0:e} below floor")]
    DegenerateKde(f64),

    #[error("preliminary phase did not enter the target basin after {iterations} iterations (final K = {k})")]
    PhaseFailure { iterations: usize, k: f64 },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
