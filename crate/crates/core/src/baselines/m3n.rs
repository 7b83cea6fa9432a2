use log::debug;

use crate::barrier::{self, BarrierConfig, ConstraintSet, Solution};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::margin::MarginProblem;
use crate::model::{Network, ParamVector};
use crate::multivariate::{cutting_plane_solve, CuttingPlaneConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct M3nConfig {
    pub barrier: BarrierConfig,
    /// Accepted `|ln C(B) − ln C|` when matching the slack penalty.
    pub c_tol: f64,
    pub max_search_iters: usize,
}

impl Default for M3nConfig {
    fn default() -> Self {
        Self {
            // The ball-constrained problem can need a few more damped steps
            // per round than the column-constrained one.
            barrier: BarrierConfig {
                gap_tol: Some(1e-8),
                max_newton_iters: 100,
                ..BarrierConfig::default()
            },
            c_tol: 1e-6,
            max_search_iters: 80,
        }
    }
}

/// A Markov-network solution in both parameterizations.
#[derive(Debug, Clone)]
pub struct M3nSolution {
    /// The `‖w‖ ≤ 1` margin-maximizing form.
    pub ball: Solution,
    /// Margin-form penalty `B` matched to `C`.
    pub reg_b: f64,
    pub c: f64,
    /// `w / γ`.
    pub w: ParamVector,
    /// `ε / γ`.
    pub xi: Vec<f64>,
    /// `½‖w‖² + C·Σξ`.
    pub objective: f64,
    pub search_iters: usize,
    pub converged: bool,
    /// `w = 0` beat the rescaled margin solution (the margin form only
    /// reaches it as `γ → ∞`); `ball` is then the last margin-form iterate.
    pub zero_solution: bool,
}

fn convert(ball: Solution, reg_b: f64, c: f64, iters: usize) -> M3nSolution {
    let g = ball.gamma;
    let w: Vec<f64> = ball.w.as_slice().iter().map(|v| v / g).collect();
    let xi: Vec<f64> = ball.eps.iter().map(|e| e / g).collect();
    let objective = 0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * xi.iter().sum::<f64>();
    M3nSolution {
        converged: ball.converged,
        ball,
        reg_b,
        c,
        w: ParamVector::new(w).expect("finite weights"),
        xi,
        objective,
        search_iters: iters,
        zero_solution: false,
    }
}

/// Keeps `sol` unless `w = 0` with `ξ_i = max_y δ(i,y)` scores at least as
/// well.
fn prefer_zero(sol: M3nSolution, zero_slacks: Vec<f64>) -> M3nSolution {
    let objective = sol.c * zero_slacks.iter().sum::<f64>();
    if objective > sol.objective {
        return sol;
    }
    M3nSolution {
        w: ParamVector::new(vec![0.0; sol.w.len()]).expect("finite weights"),
        xi: zero_slacks,
        objective,
        converged: true,
        zero_solution: true,
        ..sol
    }
}

/// `min ½‖w‖² + C·Σξ  s.t.  Δw ≥ δ − Sξ`, solved through the
/// ball-constrained margin problem with penalty `B`: its optimum `(w, γ, ε)`
/// rescales to `(w/γ, ε/γ)`, which is optimal for
///
/// ```text
/// C = B / (2νγ) = B·γ / (1 − B·γ²·Σε)
/// ```
///
/// where `ν` is the multiplier of `‖w‖ ≤ 1`. `B` is searched until this
/// matches the requested `C`. (`C = B·γ` is the special case `Σε = 0`.)
pub fn solve_m3n(problem: &MarginProblem, net: &Network, c: f64, config: &M3nConfig) -> Result<M3nSolution> {
    if problem.num_examples() == 0 {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    let sol = match_penalty(c, config, |b| {
        let p = problem.with_reg(b)?;
        barrier::solve(&p, net, &config.barrier, ConstraintSet::EuclideanBall)
    })?;
    let mut zero = vec![0.0f64; problem.num_examples()];
    for r in problem.rows() {
        zero[r.example] = zero[r.example].max(r.margin);
    }
    Ok(prefer_zero(sol, zero))
}

/// [`solve_m3n`] over the full Hamming-margin label space of `data`, with
/// the inner ball-constrained problems solved by constraint generation.
pub fn solve_m3n_multivariate(
    net: &Network,
    data: &Dataset,
    c: f64,
    config: &M3nConfig,
    cp: &CuttingPlaneConfig,
) -> Result<M3nSolution> {
    if data.is_empty() {
        return Err(Error::InvalidConfig("no training examples".into()));
    }
    let cp = CuttingPlaneConfig { set: ConstraintSet::EuclideanBall, ..cp.clone() };
    let sol = match_penalty(c, config, |b| {
        let out = cutting_plane_solve(net, data, b, &config.barrier, &cp)?;
        let mut sol = out.solution;
        sol.converged &= out.completed;
        Ok(sol)
    })?;
    let zero = vec![net.class_vars().len() as f64; data.len()];
    Ok(prefer_zero(sol, zero))
}

/// The quadratic-norm penalty matched by a ball-constrained barrier solution
/// with penalty `b`, using the barrier multiplier `ν = μ / (1 − ‖w‖²)`.
pub fn equivalent_c(sol: &Solution, b: f64) -> f64 {
    let w = sol.w.as_slice();
    let slack = 1.0 - w.iter().map(|v| v * v).sum::<f64>();
    b * slack / (2.0 * sol.gamma * sol.mu)
}

/// Regula falsi with the Illinois modification on `ln B` for
/// `ln C(B) = ln C`; `C(B)` increases with `B`.
fn match_penalty(c: f64, config: &M3nConfig, mut run: impl FnMut(f64) -> Result<Solution>) -> Result<M3nSolution> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::InvalidConfig(format!("C must be positive, got {c}")));
    }
    let target = c.ln();
    let mut eval = |log_b: f64| -> Result<(Solution, f64)> {
        let sol = run(log_b.exp())?;
        let f = equivalent_c(&sol, log_b.exp()).ln() - target;
        Ok((sol, f))
    };
    let mut iters = 1;
    let mut a = target;
    let (sol_a, mut fa) = eval(a)?;
    if fa.abs() <= config.c_tol {
        return Ok(convert(sol_a, a.exp(), c, iters));
    }
    let mut best = (fa.abs(), a, sol_a);
    let mut step = if fa > 0.0 { -std::f64::consts::LN_10 } else { std::f64::consts::LN_10 };
    let (mut b, mut fb) = loop {
        let x = a + step;
        let (sol, fx) = eval(x)?;
        iters += 1;
        if fx.abs() < best.0 {
            best = (fx.abs(), x, sol);
        }
        if fx.signum() != fa.signum() || fx == 0.0 {
            break (x, fx);
        }
        if iters >= config.max_search_iters {
            debug!("m3n: no bracket for C = {c} after {iters} solves");
            let mut out = convert(best.2, best.1.exp(), c, iters);
            out.converged = false;
            return Ok(out);
        }
        a = x;
        fa = fx;
        step *= 2.0;
    };
    let mut side = 0;
    while best.0 > config.c_tol && iters < config.max_search_iters {
        let x = (a * fb - b * fa) / (fb - fa);
        let (sol, fx) = eval(x)?;
        iters += 1;
        if fx.abs() < best.0 {
            best = (fx.abs(), x, sol);
        }
        if fx.signum() == fb.signum() {
            b = x;
            fb = fx;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = x;
            fa = fx;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
    }
    debug!("m3n: C = {c} matched with B = {:.6e} after {iters} solves (|residual| {:.2e})", best.1.exp(), best.0);
    let matched = best.0 <= config.c_tol;
    let mut out = convert(best.2, best.1.exp(), c, iters);
    out.converged &= matched;
    Ok(out)
}

/// Optimality residuals of the rescaled solution for the quadratic-norm
/// problem, using multipliers recovered from the final barrier iterate
/// (`α_r = λ_r / (2νγ)` with `λ_r = μ / slack_r`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖w − Σ α_r Δ_r‖∞ / max(1, ‖w‖∞)`.
    pub stationarity_w: f64,
    /// `max_i |C − Σ_{r∈i} α_r| / C`.
    pub stationarity_xi: f64,
    /// `max_r α_r·(Δ_r w − δ_r + ξ_i)`.
    pub complementarity: f64,
    /// `max_r max(0, δ_r − ξ_i − Δ_r w)`.
    pub primal: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity_w
            .max(self.stationarity_xi)
            .max(self.complementarity)
            .max(self.primal)
    }
}

/// Not meaningful for a [`M3nSolution::zero_solution`].
pub fn m3n_kkt_residuals(problem: &MarginProblem, sol: &M3nSolution) -> KktResiduals {
    let gamma = sol.ball.gamma;
    let w = sol.w.as_slice();
    let wb = sol.ball.w.as_slice();
    let ball_slack = 1.0 - wb.iter().map(|v| v * v).sum::<f64>();
    let mut combo = vec![0.0; w.len()];
    let mut alpha_sum = vec![0.0; problem.num_examples()];
    let mut complementarity: f64 = 0.0;
    let mut primal: f64 = 0.0;
    for row in problem.rows() {
        let i = row.example;
        let slack_ball = row.dot(wb) - gamma * row.margin + sol.ball.eps[i];
        let alpha = ball_slack / (2.0 * gamma * slack_ball);
        for &(k, v) in &row.entries {
            combo[k] += alpha * v;
        }
        alpha_sum[i] += alpha;
        let slack = row.dot(w) - row.margin + sol.xi[i];
        complementarity = complementarity.max((alpha * slack).abs());
        primal = primal.max(-slack);
    }
    KktResiduals {
        stationarity_w: w
            .iter()
            .zip(&combo)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
            / w.iter().fold(1.0_f64, |m, v| m.max(v.abs())),
        stationarity_xi: alpha_sum.iter().map(|s| (sol.c - s).abs()).fold(0.0, f64::max) / sol.c,
        complementarity,
        primal,
    }
}
