//! Deterministic discrete-time simulator of a labour market coupled to
//! oligopoly pricing games.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: shared parameters, household and aggregate records, utility.
//! - [`firm`]: production, marginal revenue product, the hiring rule and
//!   technology shocks.
//! - [`bargaining`]: search values, Nash wage bargaining, staggered wages
//!   and effort punishment.
//! - [`pricing`]: repeated Bertrand games, strategy machines, critical
//!   discount factors and limit pricing.
//! - [`spatial`]: circular-city competition and coalition evaluation.
//! - [`mobility`]: point scores, vacancy bands, knowledge growth and job
//!   protection.
//! - [`sim`]: the period loop, steady states, Beveridge points and the
//!   balanced-growth solver.
//! - [`scenario`] and [`cli`]: scenario files, runs, sweeps and CSV output.

pub mod bargaining;
pub mod cli;
pub mod error;
pub mod firm;
pub mod mobility;
pub mod model;
pub mod pricing;
pub mod scenario;
pub mod sim;
pub mod spatial;

pub use error::{Error, Result};
