//! Error type shared by every module of the crate.

use crate::gridfn::Interval;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A query or window fell outside the domain of a grid function.
    #[error("domain error in {context}: needed [{needed}], available [{available}]")]
    Domain {
        context: String,
        needed: Interval,
        available: Interval,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The Metropolis chain hit a non-finite log-likelihood and aborted.
    #[error(
        "chain aborted at iteration {iter} (w_id {w_id}): non-finite log-likelihood {log_lhd}; \
         beta {beta}, state norm {state_norm}"
    )]
    ChainAbort {
        w_id: u64,
        iter: usize,
        log_lhd: f64,
        beta: f64,
        state_norm: f64,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn domain(context: impl Into<String>, needed: Interval, available: Interval) -> Self {
        Error::Domain {
            context: context.into(),
            needed,
            available,
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
