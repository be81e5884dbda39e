//! Numerical laboratory for quasi-posteriors over finite model spaces.
//!
//! A quasi-posterior puts weight proportional to exp(-lambda * R_n) times a
//! prior on a grid-discretized union of parameter boxes, one box per model.
//! This crate builds those measures exactly (up to f64), evaluates the
//! oracle-property identities and mis-selection bounds that govern them,
//! compares log marginals to their BIC-style approximations, and packages
//! five ready-made simulation scenarios.

pub mod error;
pub mod num;

pub mod bic;
pub mod bounds;
pub mod measure;
pub mod quasiposterior;
pub mod risks;
pub mod scenarios;

pub use error::{Error, Result};
pub use measure::{ids, Axis, GridMeasure, Model, ModelSpace, ParameterBox, PriorDensity};
pub use risks::{Dataset, RiskPair, Rows, TheoreticalTag, VMatrix};
