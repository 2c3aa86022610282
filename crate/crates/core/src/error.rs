use thiserror::Error;

/// Errors surfaced by the model, solvers and configuration loader.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("{0}")]
    Domain(String),

    #[error("lambert W did not converge for x = {0}")]
    NoConvergence(f64),

    #[error("empty feasible set: {0}")]
    EmptyFeasibleSet(&'static str),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_range(what: &'static str, value: f64, lo: f64, hi: f64) -> Result<()> {
    if value.is_nan() || value < lo || value > hi {
        return Err(Error::OutOfRange { what, value, lo, hi });
    }
    Ok(())
}
