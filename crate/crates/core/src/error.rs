use thiserror::Error;

use crate::mechanism::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("{name} = {value} is outside the domain of {op}")]
    Domain {
        op: &'static str,
        name: &'static str,
        value: f64,
    },

    #[error("invalid mechanism parameters: {0}")]
    InvalidMechanism(String),

    #[error("{op} is not defined in the {regime:?} regime")]
    UnsupportedRegime { op: &'static str, regime: Regime },

    /// A caller broke an ordering or index precondition (e.g. a birth query with m <= n).
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("non-finite value evaluating derivative order {order} at lambda = {lambda}")]
    Evaluation { order: usize, lambda: f64 },

    #[error("quadrature did not converge: estimate {estimate}, error bound {error_bound}")]
    Quadrature { estimate: f64, error_bound: f64 },

    #[error("dominating rate violated at k = {k}, m = {m}, t = {t}")]
    DominatingRate { k: usize, m: usize, t: f64 },

    #[error("statistical test failed: {0}")]
    Test(String),
}

impl Error {
    pub(crate) fn domain(op: &'static str, name: &'static str, value: f64) -> Self {
        Error::Domain { op, name, value }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }
}
