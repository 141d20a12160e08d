use alloc::string::String;
use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("weighting scheme does not match the sample design: {0}")]
    SchemeMismatch(String),
    #[error("non-finite value in {component}")]
    NonFinite { component: &'static str },
    #[error("sampler diverged at iteration {iteration}: {state}")]
    Divergence { iteration: usize, state: String },
    #[error("no tabulated marginal truth for {0} groups; compute it with the oracle")]
    UnsupportedTruth(usize),
    #[error("optimizer did not converge: {0}")]
    NoConvergence(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
