//! Measurements on orbits and on the derivative cocycle.

pub mod basin;
pub mod cones;
pub mod da;
pub mod lyapunov;
pub mod sampling;
pub mod stats;
pub mod trapping;

use thiserror::Error;

use crate::maps::Family;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("{op} is not defined for {family}")]
    NotApplicable { op: &'static str, family: Family },
    #[error("{0}")]
    Precondition(String),
}
