//! Asymptotic power of Wald tests for interaction in normal-error regression
//! when the fitted alternative may be misspecified.
//!
//! The crate is `no_std` (with `alloc`). Everything here is a pure function of
//! its inputs; IO, configuration and thread pools live in the `ipower` crate.
//!
//! Module map:
//! - [`models`]: additive, diffuse (DIM) and pairwise (PIM) interaction models.
//! - [`expectation`]: covariate laws, Fisher information and cross-score moments.
//! - [`asymptotics`]: KL-projection derivative, noncentrality, power.
//! - [`scenarios`]: constraint matrices, interaction directions, power curves.
//! - [`mcvalidate`]: finite-sample simulation, ML fitting and Wald statistics.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod linalg;
pub mod optim;
pub mod projection;
pub mod special;

pub mod asymptotics;
pub mod expectation;
pub mod mcvalidate;
pub mod models;
pub mod scenarios;

pub use error::{Error, Result};
pub use expectation::{CovariateDistribution, Generator, MomentSet, Support};
pub use models::{DimParams, Family, ModelParams, NullParams, ParamIndexMap, PimParams};
