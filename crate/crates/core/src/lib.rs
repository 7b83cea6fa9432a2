//! Maximum-margin parameter learning for Bayesian-network classifiers.
//!
//! The relaxed soft-margin problem over log-space CPT weights is solved by a
//! log-barrier interior-point method ([`barrier`]); solutions on suitable
//! structures are mapped back to proper CPTs by [`renorm`]. Vector-valued
//! labels are handled by constraint generation ([`multivariate`]), and two
//! reference trainers live in [`baselines`].

pub mod barrier;
pub mod baselines;
pub mod data;
pub mod error;
pub mod experiment;
pub mod margin;
pub mod model;
pub mod multivariate;
pub mod renorm;
pub mod synth;

pub use data::Dataset;
pub use error::{Error, Result};
pub use model::{Network, ParamVector};
