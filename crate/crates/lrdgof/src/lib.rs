//! Simulation lab for long-range dependent (LRD) linear processes and the
//! goodness-of-fit statistics that arise when the location parameter is
//! estimated from the same sample.
//!
//! The crate simulates truncated moving averages with regularly varying
//! coefficients, computes the multilinear forms and exact normalizations
//! that govern their partial-sum behaviour, evaluates Kolmogorov-Smirnov
//! and Cramer-von Mises statistics with estimated parameters, and runs a
//! seeded Monte Carlo harness that turns the asymptotic statements into
//! reproducible distributional checks.

pub mod empirical;
pub mod error;
pub mod estimators;
pub mod gof;
pub mod harness;
pub mod multilinear;
pub mod numerics;
pub mod process;
pub mod report;
pub mod schema;
pub mod scalings;

pub use error::{Error, Result};
