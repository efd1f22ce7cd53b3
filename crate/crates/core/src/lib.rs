//! Killed McKean–Vlasov diffusions on open domains: particle Picard
//! iteration, sub-probability transport distances, projection couplings and
//! Girsanov reweighting.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coefficients;
pub mod coupling;
pub mod error;
pub mod geometry;
pub mod girsanov;
pub mod killed_sde;
pub mod measures;
pub mod picard;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
pub use geometry::{Domain, DomainKind};
pub use measures::{LyapunovV, MeasureFlow, SubProbMeasure, TimeGrid};

/// Crate version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
