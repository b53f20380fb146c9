//! Genealogy of stable continuous-state branching processes with immigration.
//!
//! The crate splits into deterministic pieces ([`mechanism`], [`rates`],
//! [`analytics`]), random generation ([`simulate`], [`coalescent`]) and the
//! Monte Carlo test harness ([`stats`], [`acceptance`]) that checks each
//! closed form against simulation.

// Guards like `!(x > 0.0)` are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod analytics;
pub mod coalescent;
pub mod error;
pub mod mechanism;
pub mod quadrature;
pub mod rates;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use mechanism::{DerivativeTable, DerivativeTerm, Regime, StableMechanism};
pub use rng::RandomSource;
