//! Network structure, log-space parameterization and the decision rule.

pub mod io;
mod network;
mod params;

pub use network::{validate_structure, CptIndex, LabelIter, Network, Variable};
pub use params::{ParamVector, LOG_ZERO, NORMALIZATION_TOL};
