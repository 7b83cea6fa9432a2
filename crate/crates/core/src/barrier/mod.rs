//! Path-following log-barrier solver for the relaxed soft-margin problem
//!
//! ```text
//! min 1/(2γ²) + B·Σε   s.t.  Δw ≥ γδ − Sε,  γ ≥ 0,  Σ_a exp(w_ab) ≤ 1 per CPT column
//! ```
//!
//! and for the Euclidean-ball variant (`‖w‖ ≤ 1` in place of the column
//! constraints) used by the Markov-network baseline. Each outer round
//! minimizes the barrier function for the current `μ` with damped Newton
//! steps on the joint block `(w, γ, ε)`, warm-started from the previous
//! round, then divides `μ` by `mu_shrink`.

mod newton;
mod objective;

use log::debug;
use serde::{Deserialize, Serialize};

pub use newton::{damped_newton, newton_direction, LineSearch, NewtonObjective, NewtonOutcome};
pub use objective::{barrier_gradient_hessian, barrier_objective, BarrierObjective, SolverState};

use crate::error::{Error, Result};
use crate::margin::{margin_feasibility, MarginProblem};
use crate::model::{Network, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintSet {
    /// `Σ_a exp(w_{j,ab}) ≤ 1` for every CPT column.
    Subnormalization,
    /// `w·w ≤ 1`.
    EuclideanBall,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarrierConfig {
    pub mu_initial: f64,
    /// Divisor applied to `μ` after each outer round.
    pub mu_shrink: f64,
    pub outer_iters: usize,
    /// Gradient-norm threshold of the inner Newton solve.
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub line_search: LineSearch,
    pub w_floor: f64,
    /// When set, keep running outer rounds past `outer_iters` until the
    /// barrier gap bound `m·μ` is at most this fraction of the objective
    /// (capped at `max_outer_iters`).
    pub gap_tol: Option<f64>,
    pub max_outer_iters: usize,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        Self {
            mu_initial: 1.0,
            mu_shrink: 10.0,
            outer_iters: 7,
            newton_tol: 1e-8,
            max_newton_iters: 20,
            line_search: LineSearch::default(),
            w_floor: -30.0,
            gap_tol: None,
            max_outer_iters: 16,
        }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.mu_initial > 0.0) {
            return bad("mu_initial must be positive");
        }
        if !(self.mu_shrink > 1.0) {
            return bad("mu_shrink must exceed 1");
        }
        if self.outer_iters == 0 {
            return bad("outer_iters must be at least 1");
        }
        if !(self.w_floor < 0.0) {
            return bad("w_floor must be negative");
        }
        if !(self.line_search.shrink > 0.0 && self.line_search.shrink < 1.0) {
            return bad("line-search shrink must lie in (0, 1)");
        }
        Ok(())
    }
}

/// Diagnostics of one outer (fixed-`μ`) round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRound {
    pub mu: f64,
    pub newton_iters: usize,
    pub objective: f64,
    pub max_margin_violation: f64,
    pub max_norm_residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub w: ParamVector,
    pub gamma: f64,
    pub eps: Vec<f64>,
    /// `1/(2γ²) + B·Σε` at the returned point.
    pub objective: f64,
    /// `max_r (γδ_r − ε_i − Δ_r·w)`; non-positive when feasible.
    pub max_margin_violation: f64,
    /// Largest `Σ_a exp(w) − 1` over columns (or `w·w − 1` for the ball).
    pub max_norm_residual: f64,
    pub rounds: Vec<OuterRound>,
    pub converged: bool,
    pub set: ConstraintSet,
    /// Final `μ`, kept for warm starts.
    pub mu: f64,
}

impl Solution {
    pub fn outer_iters(&self) -> usize {
        self.rounds.len()
    }

    pub fn inner_iters(&self) -> usize {
        self.rounds.iter().map(|r| r.newton_iters).sum()
    }

    pub fn state(&self) -> SolverState {
        SolverState {
            w: self.w.as_slice().to_vec(),
            gamma: self.gamma,
            eps: self.eps.clone(),
            mu: self.mu,
        }
    }

    /// Per-round text report.
    pub fn report(&self) -> String {
        let mut out = String::from("round        mu  newton      objective  margin_viol   norm_resid\n");
        for (k, r) in self.rounds.iter().enumerate() {
            out.push_str(&format!(
                "{:>5} {:>9.1e} {:>7} {:>14.8e} {:>12.3e} {:>12.3e}{}\n",
                k + 1,
                r.mu,
                r.newton_iters,
                r.objective,
                r.max_margin_violation,
                r.max_norm_residual,
                if r.converged { "" } else { "  (not converged)" }
            ));
        }
        out
    }
}

fn norm_residual(net: &Network, w: &[f64], set: ConstraintSet) -> f64 {
    match set {
        ConstraintSet::Subnormalization => net
            .columns()
            .map(|(_, _, r)| w[r].iter().map(|v| v.exp()).sum::<f64>() - 1.0)
            .fold(f64::NEG_INFINITY, f64::max),
        ConstraintSet::EuclideanBall => w.iter().map(|v| v * v).sum::<f64>() - 1.0,
    }
}

fn check_problem(problem: &MarginProblem, net: &Network) -> Result<()> {
    if problem.dim() != net.dim() {
        return Err(Error::DimensionMismatch { expected: net.dim(), got: problem.dim() });
    }
    Ok(())
}

/// Margin of the default starting point. Smaller values put the first
/// Newton round far from its minimizer (the `1/(2γ²)` term dominates).
pub const INITIAL_GAMMA: f64 = 1.0;

/// Strictly feasible starting point.
///
/// Subnormalization: `w_{j,ab} = ln(1/(arity_j + 1))`. Ball: `w = 0`. Both use
/// `γ = INITIAL_GAMMA` and `ε_i = max(0, γ·δ_max − min_r Δ_r·w) + 1`, which
/// leaves every margin slack at least 1.
pub fn initial_point(
    problem: &MarginProblem,
    net: &Network,
    config: &BarrierConfig,
    set: ConstraintSet,
) -> Result<SolverState> {
    check_problem(problem, net)?;
    let mut w = vec![0.0; net.dim()];
    if set == ConstraintSet::Subnormalization {
        for j in 0..net.num_nodes() {
            let v = (1.0 / (net.arity(j) as f64 + 1.0)).ln();
            w[net.node_range(j)].fill(v);
        }
    }
    let gamma = INITIAL_GAMMA;
    let delta_max = problem.max_margin();
    let mut eps = vec![0.0; problem.num_examples()];
    for (i, e) in eps.iter_mut().enumerate() {
        let min_dot = problem
            .rows_of(i)
            .iter()
            .map(|&r| problem.rows()[r].dot(&w))
            .fold(f64::INFINITY, f64::min);
        let min_dot = if min_dot.is_finite() { min_dot } else { 0.0 };
        *e = (gamma * delta_max - min_dot).max(0.0) + 1.0;
    }
    let state = SolverState { w, gamma, eps, mu: config.mu_initial };
    let obj = BarrierObjective {
        problem,
        net,
        set,
        mu: config.mu_initial,
        w_floor: Some(config.w_floor),
    };
    if obj.value(&state.stack()).is_none() {
        return Err(Error::NoFeasibleStart);
    }
    Ok(state)
}

/// Minimizes the barrier function at `state.mu` from `state`.
pub fn newton_solve(
    state: &SolverState,
    problem: &MarginProblem,
    net: &Network,
    config: &BarrierConfig,
    set: ConstraintSet,
) -> Result<(SolverState, NewtonOutcome)> {
    objective::check_state(state, problem)?;
    let obj = BarrierObjective { problem, net, set, mu: state.mu, w_floor: Some(config.w_floor) };
    let out = damped_newton(
        &obj,
        &state.stack(),
        config.newton_tol,
        config.max_newton_iters,
        &config.line_search,
    )?;
    assert!(
        obj.min_slack(&out.z) > 0.0,
        "Newton iterate left the strict interior"
    );
    Ok((SolverState::unstack(&out.z, problem.dim(), state.mu), out))
}

/// Runs the full `μ` schedule from the default starting point.
pub fn solve(
    problem: &MarginProblem,
    net: &Network,
    config: &BarrierConfig,
    set: ConstraintSet,
) -> Result<Solution> {
    config.validate()?;
    let start = initial_point(problem, net, config, set)?;
    solve_from(problem, net, config, set, start, config.mu_initial)
}

/// Runs the `μ` schedule from a given strictly feasible point, starting at
/// `mu_start`.
pub fn solve_from(
    problem: &MarginProblem,
    net: &Network,
    config: &BarrierConfig,
    set: ConstraintSet,
    start: SolverState,
    mu_start: f64,
) -> Result<Solution> {
    config.validate()?;
    check_problem(problem, net)?;
    objective::check_state(&start, problem)?;
    let m = BarrierObjective { problem, net, set, mu: 1.0, w_floor: Some(config.w_floor) }
        .num_barrier_terms() as f64;
    let mut state = SolverState { mu: mu_start, ..start };
    let mut rounds = Vec::new();
    let mut converged = false;
    for k in 0.. {
        let past_schedule = k >= config.outer_iters;
        if past_schedule {
            let objective = state.primal_objective(problem.reg());
            let gap_open = config
                .gap_tol
                .is_some_and(|tol| m * state.mu > tol * objective.abs().max(1e-300));
            if !gap_open || k >= config.max_outer_iters.max(config.outer_iters) {
                break;
            }
        }
        if k > 0 {
            state.mu /= config.mu_shrink;
        }
        let (next, out) = newton_solve(&state, problem, net, config, set)?;
        state = next;
        converged = out.converged;
        let round = OuterRound {
            mu: state.mu,
            newton_iters: out.iterations,
            objective: state.primal_objective(problem.reg()),
            max_margin_violation: margin_feasibility(problem, &state.w, state.gamma, &state.eps)?,
            max_norm_residual: norm_residual(net, &state.w, set),
            converged: out.converged,
        };
        debug!(
            "barrier round {}: mu={:.1e} newton={} obj={:.10e} grad={:.2e}",
            k + 1,
            round.mu,
            round.newton_iters,
            round.objective,
            out.grad_norm
        );
        rounds.push(round);
    }
    let objective = state.primal_objective(problem.reg());
    Ok(Solution {
        max_margin_violation: margin_feasibility(problem, &state.w, state.gamma, &state.eps)?,
        max_norm_residual: norm_residual(net, &state.w, set),
        w: ParamVector::new(state.w)?,
        gamma: state.gamma,
        eps: state.eps,
        objective,
        rounds,
        converged,
        set,
        mu: state.mu,
    })
}
