//! Threshold-exceedance modelling with the generalised Pareto distribution and
//! its extended (EGP) forms.

pub mod cli;
pub mod error;
pub mod fitting;
pub mod inference;
pub mod io;
pub mod models;
pub mod penultimate;
pub mod quadrature;
pub mod rng;
pub mod simulation;
pub mod special;

pub use error::{Error, Result};
pub use models::{ModelFamily, ModelParams, SupportBound};
