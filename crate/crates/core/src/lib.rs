//! Semiparametric estimation of dyadic network formation models with
//! nontransferable utility and unobserved degree heterogeneity.
//!
//! The estimator runs in two steps. Each node's popularity function
//! `ρ_i(x)` is fitted by series regression ([`sieve`]); the index direction
//! is then recovered by minimizing a tetrad criterion ([`criterion`]) over
//! the unit sphere ([`search`]). [`dgp`], [`idset`] and [`montecarlo`]
//! provide synthetic worlds, population identified sets and replication
//! studies; [`io`] holds configuration, ingestion and output formats.

pub mod criterion;
pub mod dgp;
pub mod error;
pub mod fixture;
pub mod idset;
pub mod io;
pub mod model;
pub mod montecarlo;
pub mod search;
pub mod sieve;

pub use error::{Error, Result};
