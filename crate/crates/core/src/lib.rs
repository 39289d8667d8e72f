//! Spatial Poisson model of fatigue crack initiation on specimen surfaces.
//!
//! The pipeline runs from a parametric specimen geometry through a plane-stress finite
//! element solve for unit end traction, to surface quadrature of the (optionally
//! averaged) maximum principal stress, and finally to censored likelihoods that are
//! maximised or sampled to calibrate a fatigue-limit S-N model.

pub mod error;
pub mod geometry;
pub mod mesh;
pub mod solver;
pub mod fem;
pub mod sn;
pub mod stress;
pub mod poisson;
pub mod optim;
pub mod calibrate;
pub mod bayes;
pub mod io;
pub mod config;
pub mod cli;

pub use error::{Error, Result};
