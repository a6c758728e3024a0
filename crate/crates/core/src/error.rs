use thiserror::Error;

/// Errors raised by the analytic and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// An iterative method stopped before meeting its tolerance.
    #[error("{what} did not converge: best estimate {estimate:e}, error bound {error_bound:e}")]
    NotConverged {
        what: &'static str,
        estimate: f64,
        error_bound: f64,
    },

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo:e}, f(hi) = {f_hi:e})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// A simulation hit one of its safety caps.
    #[error("runtime error: {0}")]
    Runtime(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("replicate {index}: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
