//! Tools for studying extremal quantum correlations in the scenario of N
//! parties with two dichotomic observables per site.
//!
//! The crate covers the full workflow: evaluating quantum measurement
//! strategies into behaviors ([`quantum`]), testing membership in the
//! classical polytope with certificates ([`classical`]), decomposing
//! non-projective measurements into projective ones ([`projectivize`]),
//! stripping locally deterministic directions ([`reduction`]), compressing
//! balanced projective strategies onto two-dimensional blocks ([`blocks`]),
//! extracting local filters that concentrate a violation ([`blocks`]), and
//! see-saw optimization of Bell functionals ([`seesaw`]). The [`pipeline`]
//! module chains these steps, and [`json`] fixes the file formats used by
//! the `bellkit` command-line tool.

pub mod blocks;
pub mod classical;
pub mod error;
pub mod json;
pub mod linalg;
pub mod pipeline;
pub mod projectivize;
pub mod quantum;
pub mod reduction;
pub mod scenario;
pub mod seesaw;
pub mod simplex;

pub use error::{Error, Result};
pub use scenario::{
    bell_value, correlators, deterministic_behavior, Behavior, BellFunctional,
    DeterministicStrategy, FullCorrelation, Scenario, ValidationReport,
};
