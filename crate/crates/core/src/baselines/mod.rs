//! Comparison trainers: max-margin Markov networks and maximum conditional
//! likelihood.

mod mcl;
mod m3n;

pub use m3n::{equivalent_c, m3n_kkt_residuals, solve_m3n, solve_m3n_multivariate, KktResiduals, M3nConfig, M3nSolution};
pub use mcl::{
    conditional_log_likelihood, joint_log_likelihood, mcl_objective, solve_mcl, softmax_params, MclConfig,
    MclResult,
};
